//! Directed hypergraphs and their degree-normalized adjacency tensors.
//!
//! A directed hyperedge is a pair `(tail, head)`. Broadcasting graphs have a
//! single tail node per edge (the pivot), merging graphs a single head node
//! (the receiver).
//!
//! By default tail and head must be disjoint and neither side may repeat a
//! node. A graph marked `relaxed` lifts both restrictions, which is what you
//! need to express self-loops and multiset contexts such as `{a, a} -> b`, or
//! fully supported dense tensors.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{orderings, CanonicalKey, SymSparseTensor, Symmetry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// One tail node per edge: broadcasting.
    OneTail,
    /// One head node per edge: merging.
    OneHead,
}

impl Orientation {
    pub fn symmetry(self) -> Symmetry {
        match self {
            Orientation::OneTail => Symmetry::FrontSym,
            Orientation::OneHead => Symmetry::BackSym,
        }
    }
}

/// A hyperedge with 0-based, sorted node lists.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hyperedge {
    pub tail: Vec<u32>,
    pub head: Vec<u32>,
}

impl Hyperedge {
    pub fn size(&self) -> usize {
        self.tail.len() + self.head.len()
    }
}

/// How pivot degrees are counted when a graph mixes edge sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeMode {
    /// Count outgoing edges of all sizes; the layers jointly are row-stochastic.
    #[default]
    Global,
    /// Count per size; every layer is row-stochastic on its own.
    PerLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectedHypergraph {
    n: usize,
    edges: Vec<Hyperedge>,
    orientation: Orientation,
    relaxed: bool,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    tail: Vec<i64>,
    head: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    n: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    relaxed: bool,
    edges: Vec<EdgeDoc>,
}

impl DirectedHypergraph {
    /// Validates and builds a hypergraph from 0-based edges.
    ///
    /// The orientation is inferred from edge shapes unless `orientation` is
    /// given. Graphs made only of pairwise edges default to [`Orientation::OneTail`].
    /// Duplicate edges are merged.
    pub fn new(
        n: usize,
        edges: Vec<Hyperedge>,
        orientation: Option<Orientation>,
        relaxed: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parse("node count must be positive".into()));
        }
        let mut inferred: Option<Orientation> = None;
        let mut clean = BTreeSet::new();
        for (idx, mut e) in edges.into_iter().enumerate() {
            let label = idx + 1;
            if e.tail.is_empty() || e.head.is_empty() {
                return Err(Error::Parse(format!("edge {label}: tail and head must be nonempty")));
            }
            if let Some(&j) = e.tail.iter().chain(&e.head).find(|&&j| j as usize >= n) {
                return Err(Error::Parse(format!(
                    "edge {label}: node {} out of range 1..={n}",
                    j + 1
                )));
            }
            e.tail.sort_unstable();
            e.head.sort_unstable();
            let shape = match (e.tail.len(), e.head.len()) {
                (1, 1) => None,
                (1, _) => Some(Orientation::OneTail),
                (_, 1) => Some(Orientation::OneHead),
                _ => {
                    return Err(Error::Parse(format!(
                        "edge {label}: many-to-many edges are not supported"
                    )))
                }
            };
            if let Some(s) = shape {
                match inferred {
                    Some(o) if o != s => {
                        return Err(Error::Parse(format!(
                            "edge {label}: mixed orientations (graph is {o:?}, edge is {s:?})"
                        )))
                    }
                    _ => inferred = Some(s),
                }
            }
            if !relaxed {
                if let Some(d) = first_repeat(&e.tail).or_else(|| first_repeat(&e.head)) {
                    return Err(Error::Parse(format!(
                        "edge {label}: node {} repeated within a set",
                        d + 1
                    )));
                }
                if let Some(&j) = e.tail.iter().find(|j| e.head.binary_search(j).is_ok()) {
                    return Err(Error::Parse(format!(
                        "edge {label}: tail and head intersect at node {}",
                        j + 1
                    )));
                }
            }
            clean.insert(e);
        }
        let orientation = match (orientation, inferred) {
            (Some(given), Some(found)) if given != found => {
                return Err(Error::Parse(format!(
                    "declared orientation {given:?} contradicts edge shapes ({found:?})"
                )))
            }
            (Some(given), _) => given,
            (None, Some(found)) => found,
            (None, None) => Orientation::OneTail,
        };
        Ok(Self {
            n,
            edges: clean.into_iter().collect(),
            orientation,
            relaxed,
        })
    }

    /// Parses the JSON format: `{"n": 3, "edges": [{"tail": [1], "head": [2, 3]}]}`
    /// with 1-based node indices. Optional fields: `"orientation"`
    /// (`"one-tail"` or `"one-head"`) and `"relaxed"` (boolean).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.n <= 0 {
            return Err(Error::Parse(format!("node count must be positive, got {}", doc.n)));
        }
        let n = doc.n as usize;
        let convert = |side: &[i64], label: usize| -> Result<Vec<u32>> {
            side.iter()
                .map(|&j| {
                    if j < 1 || j > doc.n {
                        Err(Error::Parse(format!("edge {label}: node {j} out of range 1..={n}")))
                    } else {
                        Ok((j - 1) as u32)
                    }
                })
                .collect()
        };
        let mut edges = Vec::with_capacity(doc.edges.len());
        for (i, e) in doc.edges.iter().enumerate() {
            edges.push(Hyperedge {
                tail: convert(&e.tail, i + 1)?,
                head: convert(&e.head, i + 1)?,
            });
        }
        Self::new(n, edges, doc.orientation, doc.relaxed)
    }

    /// Serializes with edges in sorted order. The orientation is written only
    /// when edge shapes alone would not recover it.
    pub fn to_json(&self) -> String {
        let all_pairwise = self.edges.iter().all(|e| e.size() == 2);
        let orientation = (all_pairwise && self.orientation == Orientation::OneHead).then_some(self.orientation);
        let doc = GraphDoc {
            n: self.n as i64,
            orientation,
            relaxed: self.relaxed,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    tail: e.tail.iter().map(|&j| j as i64 + 1).collect(),
                    head: e.head.iter().map(|&j| j as i64 + 1).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    /// Degree-normalized adjacency tensors, one per edge size.
    ///
    /// Broadcasting: entry `(pivot, receivers)` holds `1 / (d * orderings)`,
    /// so each pivot row sums to one over all sizes (or per size with
    /// [`DegreeMode::PerLayer`]). Merging: entry `(tails, receiver)` holds
    /// `1 / d_S` where `d_S` counts edges sharing the tail multiset, so every
    /// ordered context has a unit receiver mass.
    pub fn adjacency_layers(&self, mode: DegreeMode) -> AdjacencyLayers {
        let mut degree: BTreeMap<(usize, &[u32]), usize> = BTreeMap::new();
        for e in &self.edges {
            let key = match (self.orientation, mode) {
                (Orientation::OneTail, DegreeMode::Global) => (0, e.tail.as_slice()),
                (Orientation::OneTail, DegreeMode::PerLayer) => (e.size(), e.tail.as_slice()),
                (Orientation::OneHead, _) => (e.size(), e.tail.as_slice()),
            };
            *degree.entry(key).or_insert(0) += 1;
        }
        let mut layers: BTreeMap<usize, SymSparseTensor> = BTreeMap::new();
        for e in &self.edges {
            let k = e.size();
            let layer = layers
                .entry(k)
                .or_insert_with(|| SymSparseTensor::new(k, self.n, self.orientation.symmetry()));
            let (key, value) = match self.orientation {
                Orientation::OneTail => {
                    let d = degree[&(if mode == DegreeMode::Global { 0 } else { k }, e.tail.as_slice())];
                    (
                        CanonicalKey::new(e.tail[0], e.head.clone()),
                        1.0 / (d as f64 * orderings(&e.head)),
                    )
                }
                Orientation::OneHead => {
                    let d = degree[&(k, e.tail.as_slice())];
                    (CanonicalKey::new(e.head[0], e.tail.clone()), 1.0 / d as f64)
                }
            };
            layer.insert(key, value).expect("validated edge yields a valid key");
        }
        AdjacencyLayers {
            orientation: self.orientation,
            n: self.n,
            layers,
        }
    }

    /// Structural problems that make inference with a strictly positive
    /// stationary distribution impossible or the walk reducible.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut sends = vec![false; self.n];
        let mut receives = vec![false; self.n];
        let mut adj = vec![BTreeSet::new(); self.n];
        for e in &self.edges {
            for &t in &e.tail {
                sends[t as usize] = true;
                for &h in &e.head {
                    adj[t as usize].insert(h as usize);
                }
            }
            for &h in &e.head {
                receives[h as usize] = true;
            }
        }
        if self.orientation == Orientation::OneTail {
            for (j, _) in sends.iter().enumerate().filter(|(_, s)| !**s) {
                out.push(Diagnostic::IsolatedPivot { node: j });
            }
        }
        for (j, _) in receives.iter().enumerate().filter(|(_, r)| !**r) {
            out.push(Diagnostic::NeverReceives { node: j });
        }
        if out.is_empty() {
            let forward = reach(&adj, 0);
            let mut rev = vec![BTreeSet::new(); self.n];
            for (i, row) in adj.iter().enumerate() {
                for &j in row {
                    rev[j].insert(i);
                }
            }
            let backward = reach(&rev, 0);
            let nodes: Vec<usize> = (0..self.n).filter(|&j| !(forward[j] && backward[j])).collect();
            if !nodes.is_empty() {
                out.push(Diagnostic::NotStronglyConnected { nodes });
            }
        }
        out
    }
}

fn first_repeat(sorted: &[u32]) -> Option<u32> {
    sorted.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
}

fn reach(adj: &[BTreeSet<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// A structural warning about a hypergraph. Node indices are 0-based;
/// `Display` prints them 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// Broadcasting pivot with no outgoing edge.
    IsolatedPivot { node: usize },
    /// Node that is never a head, so it cannot hold stationary mass.
    NeverReceives { node: usize },
    /// Nodes outside the strongly connected component of node 1 in the
    /// tail-to-head support graph.
    NotStronglyConnected { nodes: Vec<usize> },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::IsolatedPivot { node } => write!(
                f,
                "node {} has no outgoing hyperedge: row constraint with p_{} > 0 infeasible",
                node + 1,
                node + 1
            ),
            Diagnostic::NeverReceives { node } => write!(
                f,
                "node {} unreachable: stationary constraint with p_{} > 0 infeasible",
                node + 1,
                node + 1
            ),
            Diagnostic::NotStronglyConnected { nodes } => {
                let list: Vec<String> = nodes.iter().map(|j| (j + 1).to_string()).collect();
                write!(
                    f,
                    "support graph not strongly connected: nodes [{}] outside the component of node 1",
                    list.join(", ")
                )
            }
        }
    }
}

/// Adjacency tensors keyed by edge size.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyLayers {
    orientation: Orientation,
    n: usize,
    layers: BTreeMap<usize, SymSparseTensor>,
}

impl AdjacencyLayers {
    /// Wraps explicitly built tensors (e.g. count-weighted references).
    /// All tensors must share dimension and the orientation's symmetry, and be
    /// keyed by their own order.
    pub fn from_layers(
        orientation: Orientation,
        n: usize,
        layers: BTreeMap<usize, SymSparseTensor>,
    ) -> Result<Self> {
        for (&k, t) in &layers {
            if t.order() != k || t.dim() != n || t.symmetry() != orientation.symmetry() {
                return Err(Error::InvalidInput(format!(
                    "layer k={k} has order {}, dimension {}, symmetry {:?}",
                    t.order(),
                    t.dim(),
                    t.symmetry()
                )));
            }
        }
        Ok(Self {
            orientation,
            n,
            layers,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> &BTreeMap<usize, SymSparseTensor> {
        &self.layers
    }

    pub fn get(&self, k: usize) -> Option<&SymSparseTensor> {
        self.layers.get(&k)
    }

    /// Edge sizes present.
    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.keys().copied()
    }
}
