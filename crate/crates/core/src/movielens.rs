//! Next-item evaluation on MovieLens-style rating logs.
//!
//! Each user's ratings, restricted to the `top_n` most rated items and sorted
//! by time, are cut into sliding triples `(m_{t-2}, m_{t-1}, m_t)`. Every
//! triple is a merging event `{m_{t-2}, m_{t-1}} -> m_t`. Events before a
//! global timestamp quantile form the training set; a merging kernel fit on
//! them ranks candidates for the remaining events.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{AdjacencyLayers, Orientation};
use crate::merge::{infer_merge, MergeKernel, MergeOptions, StationarityTarget};
use crate::tensor::{CanonicalKey, SymSparseTensor, Symmetry};

/// One rating record.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: i64,
}

/// Parses `user \t item \t rating \t timestamp` lines. Blank lines are
/// skipped; any other malformed line is an error naming its line number.
pub fn parse_ratings(text: &str) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "line {line_no}: expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Parse(format!("line {line_no}: invalid {what} {:?}", line));
        let timestamp: i64 = fields[3].parse().map_err(|_| bad("timestamp"))?;
        if timestamp < 0 {
            return Err(bad("timestamp"));
        }
        out.push(Interaction {
            user: fields[0].parse().map_err(|_| bad("user id"))?,
            item: fields[1].parse().map_err(|_| bad("item id"))?,
            rating: fields[2].parse().map_err(|_| bad("rating"))?,
            timestamp,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse("no ratings found".into()));
    }
    Ok(out)
}

pub fn load_ratings(path: &Path) -> Result<Vec<Interaction>> {
    parse_ratings(&std::fs::read_to_string(path)?)
}

/// A merging event with dense item indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    /// Sorted context pair.
    pub context: [u32; 2],
    /// The more recent context item (`m_{t-1}`).
    pub last: u32,
    pub next: u32,
    pub timestamp: i64,
    pub train: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventCorpus {
    pub events: Vec<Event>,
    /// Raw item id of each dense index (ascending raw ids).
    pub items: Vec<u64>,
    /// Events with `timestamp < threshold` are training events.
    pub threshold: i64,
}

impl EventCorpus {
    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn train(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| !e.train)
    }

    /// Raw id to dense index.
    pub fn index_of(&self, raw: u64) -> Option<u32> {
        self.items.binary_search(&raw).ok().map(|i| i as u32)
    }
}

/// Filters to the `top_n` most rated items (ties by smaller raw id), windows
/// each user's filtered history, and splits at the `train_fraction` quantile
/// of event timestamps.
pub fn build_events(interactions: &[Interaction], top_n: usize, train_fraction: f64) -> Result<EventCorpus> {
    if top_n < 3 {
        return Err(Error::InvalidInput(format!("top_n must be at least 3, got {top_n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for r in interactions {
        *counts.entry(r.item).or_insert(0) += 1;
    }
    let mut ranked: Vec<(u64, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    let mut items: Vec<u64> = ranked.into_iter().map(|(id, _)| id).collect();
    items.sort_unstable();
    let index: HashMap<u64, u32> = items.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();

    let mut histories: BTreeMap<u64, Vec<(i64, u64)>> = BTreeMap::new();
    for r in interactions {
        if index.contains_key(&r.item) {
            histories.entry(r.user).or_default().push((r.timestamp, r.item));
        }
    }
    let mut events = Vec::new();
    for history in histories.values_mut() {
        history.sort_unstable();
        for w in history.windows(3) {
            let (a, b, c) = (index[&w[0].1], index[&w[1].1], index[&w[2].1]);
            events.push(Event {
                context: [a.min(b), a.max(b)],
                last: b,
                next: c,
                timestamp: w[2].0,
                train: false,
            });
        }
    }
    if events.is_empty() {
        return Err(Error::InvalidInput("no events after filtering".into()));
    }
    let mut stamps: Vec<i64> = events.iter().map(|e| e.timestamp).collect();
    stamps.sort_unstable();
    let cut = ((train_fraction * stamps.len() as f64).floor() as usize).min(stamps.len() - 1);
    let threshold = stamps[cut];
    for e in &mut events {
        e.train = e.timestamp < threshold;
    }
    Ok(EventCorpus {
        events,
        items,
        threshold,
    })
}

/// How the reference tensor is built from training events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Per-context empirical frequencies of the next item.
    #[default]
    Counts,
    /// Uniform over the observed next items of each context.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub reference: ReferenceKind,
    /// Prescribed distribution; add-one smoothed next-item frequencies when
    /// `None`.
    pub stationary: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 20_000,
            reference: ReferenceKind::Counts,
            stationary: None,
        }
    }
}

/// Per-context next-item counts from training events.
pub fn context_counts(corpus: &EventCorpus) -> BTreeMap<[u32; 2], BTreeMap<u32, usize>> {
    let mut out: BTreeMap<[u32; 2], BTreeMap<u32, usize>> = BTreeMap::new();
    for e in corpus.train() {
        *out.entry(e.context).or_default().entry(e.next).or_insert(0) += 1;
    }
    out
}

/// Add-one smoothed training next-item frequencies.
pub fn smoothed_next_frequencies(corpus: &EventCorpus) -> Vec<f64> {
    let mut counts = vec![1.0; corpus.n()];
    for e in corpus.train() {
        counts[e.next as usize] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Fits a `k = 3` merging kernel on the training events.
///
/// The support is the set of observed `(context, next)` pairs. Exact
/// stationarity is out of reach on such data (contexts only cover part of
/// the pair mass, and some items are never a next item), so the solver uses
/// [`StationarityTarget::MassAdjusted`] and returns its best iterate when the
/// iteration cap is hit; `report.converged` tells which happened.
pub fn fit_merw(corpus: &EventCorpus, opts: &FitOptions) -> Result<MergeKernel> {
    let counts = context_counts(corpus);
    if counts.is_empty() {
        return Err(Error::InvalidInput("no training events".into()));
    }
    let n = corpus.n();
    let mut tensor = SymSparseTensor::new(3, n, Symmetry::BackSym);
    for (ctx, nexts) in &counts {
        let total: usize = nexts.values().sum();
        for (&j, &c) in nexts {
            let v = match opts.reference {
                ReferenceKind::Counts => c as f64 / total as f64,
                ReferenceKind::Uniform => 1.0 / nexts.len() as f64,
            };
            tensor.insert(CanonicalKey::new(j, ctx.to_vec()), v)?;
        }
    }
    let layers = AdjacencyLayers::from_layers(Orientation::OneHead, n, [(3, tensor)].into())?;
    let p = match &opts.stationary {
        Some(p) => p.clone(),
        None => smoothed_next_frequencies(corpus),
    };
    infer_merge(
        &layers,
        &p,
        &[(3, 1.0)].into(),
        &MergeOptions {
            tolerance: opts.tolerance,
            max_iter: opts.max_iter,
            target: StationarityTarget::MassAdjusted,
            best_effort: true,
            ..Default::default()
        },
    )
}

/// Items of `context` by descending conditional probability, ties by index,
/// at most `limit`. Unknown contexts give an empty list.
pub fn rank_candidates(kernel: &MergeKernel, context: [u32; 2], limit: usize) -> Vec<u32> {
    let mut law = kernel.conditional(&context);
    sort_law(&mut law);
    law.into_iter().take(limit).map(|(j, _)| j).collect()
}

fn sort_law(law: &mut [(u32, f64)]) {
    law.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// A next-item scorer.
pub trait Ranker: Sync {
    fn name(&self) -> &str;
    /// Up to `limit` candidates, best first.
    fn rank(&self, event: &Event, limit: usize) -> Vec<u32>;
}

/// Ranks by the merging kernel's conditional law of the event context.
pub struct MerwRanker {
    rankings: HashMap<[u32; 2], Vec<u32>>,
}

impl MerwRanker {
    pub fn new(kernel: &MergeKernel) -> Self {
        let mut laws: HashMap<[u32; 2], Vec<(u32, f64)>> = HashMap::new();
        if let Some(t) = kernel.layers.get(&3) {
            for (key, v) in t.iter() {
                let g = key.group();
                laws.entry([g[0], g[1]]).or_default().push((key.distinguished(), v));
            }
        }
        let rankings = laws
            .into_iter()
            .map(|(ctx, mut law)| {
                sort_law(&mut law);
                (ctx, law.into_iter().map(|(j, _)| j).collect())
            })
            .collect();
        Self { rankings }
    }

    pub fn knows(&self, context: &[u32; 2]) -> bool {
        self.rankings.contains_key(context)
    }
}

impl Ranker for MerwRanker {
    fn name(&self) -> &str {
        "MERW"
    }

    fn rank(&self, event: &Event, limit: usize) -> Vec<u32> {
        self.rankings
            .get(&event.context)
            .map(|r| r.iter().take(limit).copied().collect())
            .unwrap_or_default()
    }
}

/// Ranks by training next-item frequency, ignoring the context.
pub struct PopularityRanker {
    order: Vec<u32>,
}

impl PopularityRanker {
    pub fn new(corpus: &EventCorpus) -> Self {
        let mut counts = vec![0usize; corpus.n()];
        for e in corpus.train() {
            counts[e.next as usize] += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn from_counts(counts: &[usize]) -> Self {
        let mut order: Vec<u32> = (0..counts.len() as u32).collect();
        order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        Self { order }
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }
}

impl Ranker for PopularityRanker {
    fn name(&self) -> &str {
        "Popularity"
    }

    fn rank(&self, _event: &Event, limit: usize) -> Vec<u32> {
        self.order.iter().take(limit).copied().collect()
    }
}

/// Row weighting of the pairwise successor kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SuccessorWeighting {
    /// Rows proportional to observed transition counts.
    #[default]
    Counts,
    /// Rows uniform over observed successors.
    Uniform,
}

/// Pairwise random walk on consecutive training items, scored from the last
/// context item. Items outside the row follow in popularity order; an unseen
/// last item falls back to popularity entirely.
pub struct LazyRwRanker {
    rows: HashMap<u32, Vec<u32>>,
    popularity: PopularityRanker,
}

impl LazyRwRanker {
    pub fn new(corpus: &EventCorpus, weighting: SuccessorWeighting) -> Self {
        let mut counts: HashMap<u32, BTreeMap<u32, usize>> = HashMap::new();
        for e in corpus.train() {
            *counts.entry(e.last).or_default().entry(e.next).or_insert(0) += 1;
        }
        let rows = counts
            .into_iter()
            .map(|(from, succ)| {
                let degree = succ.len() as f64;
                let total: usize = succ.values().sum();
                let mut law: Vec<(u32, f64)> = succ
                    .into_iter()
                    .map(|(j, c)| {
                        let w = match weighting {
                            SuccessorWeighting::Counts => c as f64 / total as f64,
                            SuccessorWeighting::Uniform => 1.0 / degree,
                        };
                        (j, w)
                    })
                    .collect();
                sort_law(&mut law);
                (from, law.into_iter().map(|(j, _)| j).collect())
            })
            .collect();
        Self {
            rows,
            popularity: PopularityRanker::new(corpus),
        }
    }
}

impl Ranker for LazyRwRanker {
    fn name(&self) -> &str {
        "Lazy RW"
    }

    fn rank(&self, event: &Event, limit: usize) -> Vec<u32> {
        let Some(row) = self.rows.get(&event.last) else {
            return self.popularity.rank(event, limit);
        };
        let mut out: Vec<u32> = row.iter().take(limit).copied().collect();
        if out.len() < limit {
            let seen: std::collections::HashSet<u32> = row.iter().copied().collect();
            out.extend(
                self.popularity
                    .order()
                    .iter()
                    .filter(|j| !seen.contains(j))
                    .take(limit - out.len()),
            );
        }
        out
    }
}

/// Evaluation subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    SeenEdge,
    SeenContext,
}

impl Subset {
    pub fn label(self) -> &'static str {
        match self {
            Subset::SeenEdge => "seen-edge",
            Subset::SeenContext => "seen-context",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub subset: Subset,
    pub limit: usize,
    pub hit_rate: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub n_seen_context: usize,
    pub n_seen_edge: usize,
}

impl EvalReport {
    pub fn hit_rate(&self, method: &str, subset: Subset, limit: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.subset == subset && r.limit == limit)
            .map(|r| r.hit_rate)
    }

    /// `method,subset,L,hit_rate,N`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,subset,L,hit_rate,N\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{:.6},{}", r.method, r.subset.label(), r.limit, r.hit_rate, r.n).unwrap();
        }
        out
    }

    /// One table per subset, methods as rows and `H@L` as columns.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut limits: Vec<usize> = self.rows.iter().map(|r| r.limit).collect();
        limits.sort_unstable();
        limits.dedup();
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for subset in [Subset::SeenEdge, Subset::SeenContext] {
            let n = match subset {
                Subset::SeenEdge => self.n_seen_edge,
                Subset::SeenContext => self.n_seen_context,
            };
            writeln!(out, "{} test events (N={n})", subset.label()).unwrap();
            write!(out, "{:<12}", "Method").unwrap();
            for l in &limits {
                write!(out, " {:>8}", format!("H@{l}")).unwrap();
            }
            out.push('\n');
            for m in &methods {
                write!(out, "{m:<12}").unwrap();
                for &l in &limits {
                    let h = self.hit_rate(m, subset, l).unwrap_or(f64::NAN);
                    write!(out, " {h:>8.4}").unwrap();
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Hit rates of each ranker on the test events of both subsets.
///
/// `support` decides membership: seen-context events have a context in the
/// map, seen-edge events additionally have their next item in its set.
pub fn evaluate(
    corpus: &EventCorpus,
    support: &BTreeMap<[u32; 2], BTreeMap<u32, usize>>,
    rankers: &[&dyn Ranker],
    limits: &[usize],
) -> Result<EvalReport> {
    let test: Vec<&Event> = corpus.test().collect();
    if test.is_empty() {
        return Err(Error::InvalidInput("no test events".into()));
    }
    if limits.is_empty() || limits.contains(&0) {
        return Err(Error::InvalidInput("list lengths must be positive".into()));
    }
    let ctx: Vec<&Event> = test.iter().copied().filter(|e| support.contains_key(&e.context)).collect();
    let edge: Vec<&Event> = ctx
        .iter()
        .copied()
        .filter(|e| support[&e.context].contains_key(&e.next))
        .collect();
    let max_l = *limits.iter().max().unwrap();
    let mut rows = Vec::new();
    for ranker in rankers {
        for (subset, events) in [(Subset::SeenEdge, &edge), (Subset::SeenContext, &ctx)] {
            // position of the true item in the ranking, if within max_l
            let positions: Vec<Option<usize>> = events
                .par_iter()
                .map(|e| ranker.rank(e, max_l).iter().position(|&j| j == e.next))
                .collect();
            for &l in limits {
                let hits = positions.iter().filter(|p| matches!(p, Some(i) if *i < l)).count();
                rows.push(EvalRow {
                    method: ranker.name().to_string(),
                    subset,
                    limit: l,
                    hit_rate: if events.is_empty() { 0.0 } else { hits as f64 / events.len() as f64 },
                    n: events.len(),
                });
            }
        }
    }
    Ok(EvalReport {
        rows,
        n_seen_context: ctx.len(),
        n_seen_edge: edge.len(),
    })
}
