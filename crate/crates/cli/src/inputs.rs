//! Parsing of vector sources, layer weights and kernel files.

use std::fs;
use std::path::Path;

use hypermerw::broadcast::BroadcastKernel;
use hypermerw::merge::MergeKernel;
use hypermerw::Weights;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::Failure;

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Numbers from a JSON array or a comma/whitespace separated list.
fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| Failure::Usage(format!("{what}: {e}")));
    }
    trimmed
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("{what}: {s:?} is not a number")))
        })
        .collect()
}

fn looks_inline(spec: &str) -> bool {
    let t = spec.trim();
    t.starts_with('[') || t.contains(',') || t.parse::<f64>().is_ok()
}

/// `uniform`, an inline list (`0.2,0.3,0.5` or `[0.2, 0.3, 0.5]`), or a file
/// holding such a list. The result must be strictly positive.
pub fn distribution(spec: &str, n: usize, what: &str) -> Result<Vec<f64>, Failure> {
    let values = if spec == "uniform" {
        vec![1.0 / n as f64; n]
    } else if looks_inline(spec) {
        parse_numbers(spec, what)?
    } else {
        parse_numbers(&read_text(Path::new(spec))?, what)?
    };
    if values.len() != n {
        return Err(Failure::Usage(format!("{what} has {} entries, graph has {n} nodes", values.len())));
    }
    if let Some(j) = values.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Failure::Usage(format!(
            "{what} must be strictly positive; entry {} is {}",
            j + 1,
            values[j]
        )));
    }
    Ok(values)
}

/// Starting distribution for simulation: `delta:J` (1-based), `uniform`,
/// `random` (seeded), or a list as in [`distribution`]. Zeros are allowed.
pub fn start_distribution(spec: &str, n: usize, seed: u64) -> Result<Vec<f64>, Failure> {
    if let Some(j) = spec.strip_prefix("delta:") {
        let j: usize = j
            .parse()
            .map_err(|_| Failure::Usage(format!("p0: bad node in {spec:?}")))?;
        if j == 0 || j > n {
            return Err(Failure::Usage(format!("p0: node {j} out of range 1..={n}")));
        }
        let mut p = vec![0.0; n];
        p[j - 1] = 1.0;
        return Ok(p);
    }
    let values = match spec {
        "uniform" => vec![1.0 / n as f64; n],
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect()
        }
        s if looks_inline(s) => parse_numbers(s, "p0")?,
        s => parse_numbers(&read_text(Path::new(s))?, "p0")?,
    };
    if values.len() != n {
        return Err(Failure::Usage(format!("p0 has {} entries, kernel has {n} nodes", values.len())));
    }
    if values.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Failure::Usage("p0 entries must be finite and nonnegative".into()));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Failure::Usage("p0 has no mass".into()));
    }
    Ok(values.iter().map(|x| x / total).collect())
}

/// `3=1.0`, `2=0.4,3=0.6`, possibly repeated. Empty input gives equal
/// weights over `sizes`.
pub fn layer_weights(specs: &[String], sizes: &[usize]) -> Result<Weights, Failure> {
    if specs.is_empty() {
        if sizes.is_empty() {
            return Err(Failure::Usage("graph has no edges".into()));
        }
        let w = 1.0 / sizes.len() as f64;
        return Ok(sizes.iter().map(|&k| (k, w)).collect());
    }
    let mut weights = Weights::new();
    for part in specs.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let (k, w) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("lambda: expected K=WEIGHT, got {part:?}")))?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("lambda: bad edge size {k:?}")))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("lambda: bad weight {w:?}")))?;
        if weights.insert(k, w).is_some() {
            return Err(Failure::Usage(format!("lambda: edge size {k} given twice")));
        }
    }
    Ok(weights)
}

pub fn number_list(spec: &str, what: &str) -> Result<Vec<f64>, Failure> {
    parse_numbers(spec, what)
}

pub enum Kernel {
    Broadcast(BroadcastKernel),
    Merge(MergeKernel),
}

impl Kernel {
    pub fn n(&self) -> usize {
        match self {
            Kernel::Broadcast(k) => k.n,
            Kernel::Merge(k) => k.n,
        }
    }

    pub fn stationary(&self) -> &[f64] {
        match self {
            Kernel::Broadcast(k) => &k.stationary,
            Kernel::Merge(k) => &k.stationary,
        }
    }
}

/// Reads a kernel file and dispatches on its `kind` field.
pub fn kernel(path: &Path) -> Result<Kernel, Failure> {
    let text = read_text(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let tag = |e: hypermerw::Error| Failure::Usage(format!("{}: {e}", path.display()));
    match doc.get("kind").and_then(Value::as_str) {
        Some("broadcast") => Ok(Kernel::Broadcast(BroadcastKernel::from_json(&text).map_err(tag)?)),
        Some("merge") => Ok(Kernel::Merge(MergeKernel::from_json(&text).map_err(tag)?)),
        other => Err(Failure::Usage(format!(
            "{}: unknown kernel kind {other:?}",
            path.display()
        ))),
    }
}
