//! Similarity and summary statistics over runs.

use std::collections::BTreeMap;

use crate::engine::{replay, Action, GameDescription, GameState};
use crate::interaction::FeatureKey;

/// Smoothing added to every agent bin.
pub const EPSILON: f64 = 1e-6;

/// Interaction frequencies keyed by (η0, η1, type, avatar state).
pub type Bins = BTreeMap<FeatureKey, usize>;

pub fn interaction_bins(desc: &GameDescription, initial: &GameState, actions: &[Action]) -> Bins {
    let mut bins = Bins::new();
    for z in replay(desc, initial, actions).interactions() {
        *bins.entry(FeatureKey::of(desc, z)).or_default() += 1;
    }
    bins
}

fn normalized(b: &Bins) -> BTreeMap<&FeatureKey, f64> {
    let total: usize = b.values().sum();
    b.iter().map(|(k, &v)| (k, v as f64 / total as f64)).collect()
}

/// `H(p, q) = −Σ p(b) log q(b)` in nats, with `q` smoothed by `eps` over the
/// union of bins and renormalized. `None` when `p` is empty.
pub fn cross_entropy(p: &Bins, q: &Bins, eps: f64) -> Option<f64> {
    if p.values().sum::<usize>() == 0 {
        return None;
    }
    let pn = normalized(p);
    let q_total: usize = q.values().sum();
    let support: std::collections::BTreeSet<&FeatureKey> = p.keys().chain(q.keys()).collect();
    let z = 1.0 + eps * support.len() as f64;
    let qs = |k: &FeatureKey| {
        let raw = if q_total == 0 { 0.0 } else { q.get(k).copied().unwrap_or(0) as f64 / q_total as f64 };
        (raw + eps) / z
    };
    Some(-pn.iter().map(|(k, pk)| pk * qs(k).ln()).sum::<f64>())
}

/// Shannon entropy of `p` in nats.
pub fn entropy(p: &Bins) -> f64 {
    -normalized(p).values().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// `D(p ‖ q) = H(p, q) − H(p)`.
pub fn kl_divergence(p: &Bins, q: &Bins, eps: f64) -> Option<f64> {
    cross_entropy(p, q, eps).map(|h| h - entropy(p))
}

/// Five-number summary plus mean.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Summary {
        n: v.len(),
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}

/// Histogram of split counts (goals − 1) over extracted sequences.
pub fn summarize_splits(goal_counts: &[usize]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for &g in goal_counts {
        *out.entry(g.saturating_sub(1)).or_default() += 1;
    }
    out
}
