//! Nested univariate node sequences on `[-1, 1]`.
//!
//! A node family is a sequence `y_(0), y_(1), ...` together with a growth
//! function `m`; the level-`k` node set is `Y_k = { y_(i) : i ≤ m(k) }`, so
//! the sets are nested by construction. Three families are provided:
//!
//! * **Leja**: `y_(0) = -1`, each further node maximizes the product of
//!   distances to the previous ones; unit growth `m(k) = k`.
//! * **R-Leja**: the Leja sequence on the complex unit circle started at
//!   `z = 1`, projected to the real axis with repeated projections dropped;
//!   unit growth.
//! * **Clenshaw–Curtis**: Chebyshev extrema with the doubling rule
//!   `m(k) = 2^k` for `k ≥ 1`, `m(0) = 0`.
//!
//! Sequences are memoized per family and only ever extended, so a node value
//! is computed once and every level sees bitwise identical coordinates.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Leja,
    #[serde(alias = "rleja")]
    RLeja,
    #[serde(alias = "cc")]
    ClenshawCurtis,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Leja, NodeKind::RLeja, NodeKind::ClenshawCurtis];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Leja => "leja",
            NodeKind::RLeja => "r_leja",
            NodeKind::ClenshawCurtis => "clenshaw_curtis",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "leja" => Ok(NodeKind::Leja),
            "r_leja" | "rleja" => Ok(NodeKind::RLeja),
            "clenshaw_curtis" | "cc" => Ok(NodeKind::ClenshawCurtis),
            other => Err(Error::Config(format!(
                "unknown node family `{other}` (expected leja, rleja or cc)"
            ))),
        }
    }
}

/// Growth function `m(k)`.
pub fn growth(kind: NodeKind, k: usize) -> usize {
    match kind {
        NodeKind::Leja | NodeKind::RLeja => k,
        NodeKind::ClenshawCurtis => {
            if k == 0 {
                0
            } else {
                1usize << k
            }
        }
    }
}

/// Generalized inverse `m^{-1}(i) = min { k : i ≤ m(k) }`.
pub fn growth_inverse(kind: NodeKind, i: usize) -> usize {
    match kind {
        NodeKind::Leja | NodeKind::RLeja => i,
        NodeKind::ClenshawCurtis => {
            let mut k = 0;
            while growth(kind, k) < i {
                k += 1;
            }
            k
        }
    }
}

/// Node indices introduced at level `k`: `m(k-1)+1 ..= m(k)`, with `m(-1) := -1`.
pub fn level_range(kind: NodeKind, k: usize) -> Range<usize> {
    let start = if k == 0 { 0 } else { growth(kind, k - 1) + 1 };
    start..growth(kind, k) + 1
}

/// `m(k) - m(k-1)`, the number of nodes added at level `k` (1 at `k = 0`).
pub fn level_width(kind: NodeKind, k: usize) -> usize {
    level_range(kind, k).len()
}

/// The first `n` Leja points with `y_(0) = -1`.
pub fn leja_nodes(n: usize) -> Vec<f64> {
    let mut seq = Vec::with_capacity(n);
    extend_leja(&mut seq, n);
    seq
}

fn extend_leja(seq: &mut Vec<f64>, n: usize) {
    if n == 0 {
        return;
    }
    if seq.is_empty() {
        seq.push(-1.0);
    }
    while seq.len() < n {
        let next = leja_argmax(seq);
        seq.push(next);
    }
}

fn log_distance_product(nodes: &[f64], y: f64) -> f64 {
    nodes.iter().map(|&t| (y - t).abs().ln()).sum()
}

/// Maximizer of `Π |y - y_i|` over `[-1, 1]`.
///
/// The log-product is strictly concave between consecutive nodes, so each
/// gap holds exactly one local maximum: the root of `Σ 1/(y - y_i)`.
/// Segments beyond the extreme nodes are monotone and peak at `±1`.
/// Ties go to the smaller `y`.
fn leja_argmax(nodes: &[f64]) -> f64 {
    let mut sorted = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut candidates = Vec::with_capacity(sorted.len() + 1);
    if sorted[0] > -1.0 {
        candidates.push(-1.0);
    }
    for w in sorted.windows(2) {
        let slope = |y: f64| nodes.iter().map(|&t| 1.0 / (y - t)).sum::<f64>();
        candidates.push(bisect_decreasing(slope, w[0], w[1]));
    }
    if sorted[sorted.len() - 1] < 1.0 {
        candidates.push(1.0);
    }
    select_max(&candidates, |y| log_distance_product(nodes, y))
}

/// Root of a function decreasing from +inf to -inf on the open interval `(lo, hi)`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Candidates are in increasing order; returns the first maximizer up to a
/// relative tie tolerance of 1e-12.
fn select_max(candidates: &[f64], objective: impl Fn(f64) -> f64) -> f64 {
    let mut best = (objective(candidates[0]), candidates[0]);
    for &c in &candidates[1..] {
        let v = objective(c);
        if v > best.0 + 1e-12 * best.0.abs().max(1.0) {
            best = (v, c);
        }
    }
    best.1
}

/// Angles (as fractions of a full turn) of the Leja sequence on the unit
/// circle started at `z = 1`: `t_{2n} = t_n / 2`, `t_{2n+1} = t_{2n} + 1/2`.
/// All values are dyadic, hence exact in `f64`.
pub fn circle_leja_turns(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n);
    for k in 0..n {
        let v = match k {
            0 => 0.0,
            _ if k % 2 == 0 => t[k / 2] * 0.5,
            _ => t[k - 1] + 0.5,
        };
        t.push(v);
    }
    t
}

/// The first `n` R-Leja points: real projections of the circle Leja sequence,
/// keeping the first occurrence of each projected value.
pub fn rleja_nodes(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let mut len = 2 * n + 2;
    while out.len() < n {
        out.clear();
        seen.clear();
        for t in circle_leja_turns(len) {
            // angle folded into [0, pi] as a fraction s of a full turn
            let s = if t > 0.5 { 1.0 - t } else { t };
            if seen.insert(s.to_bits()) {
                // cos(2 pi s) written so that s = 1/4 gives exactly 0 and
                // mirrored angles give exactly negated values
                out.push((PI * (0.5 - 2.0 * s)).sin());
                if out.len() == n {
                    break;
                }
            }
        }
        len *= 2;
    }
    out
}

/// `Y_k` for Clenshaw–Curtis in hierarchical order: `0`, then `-1, 1`, then
/// per level the odd numerators `-cos(pi i / 2^k)` in increasing `i`.
pub fn clenshaw_curtis_nodes(k: usize) -> Vec<f64> {
    let count = growth(NodeKind::ClenshawCurtis, k) + 1;
    let mut seq = Vec::with_capacity(count);
    for level in 0..=k {
        push_cc_level(&mut seq, level);
    }
    seq
}

fn push_cc_level(seq: &mut Vec<f64>, level: usize) {
    match level {
        0 => seq.push(0.0),
        1 => {
            seq.push(-1.0);
            seq.push(1.0);
        }
        _ => {
            let m = 1u64 << level;
            for i in (1..m).step_by(2) {
                // -cos(pi i / m) = sin(pi (2i - m) / (2m)), exactly antisymmetric
                let num = 2.0 * i as f64 - m as f64;
                seq.push((PI * num / (2 * m) as f64).sin());
            }
        }
    }
}

/// First `n` nodes of the sequence of `kind`.
pub fn node_sequence(kind: NodeKind, n: usize) -> Vec<f64> {
    match kind {
        NodeKind::Leja => leja_nodes(n),
        NodeKind::RLeja => rleja_nodes(n),
        NodeKind::ClenshawCurtis => {
            let mut seq = Vec::new();
            let mut level = 0;
            while seq.len() < n {
                push_cc_level(&mut seq, level);
                level += 1;
            }
            seq.truncate(n);
            seq
        }
    }
}

/// A node family with a lazily extended, shared node cache.
#[derive(Clone)]
pub struct NodeFamily {
    kind: NodeKind,
    cache: Arc<RwLock<Vec<f64>>>,
}

impl fmt::Debug for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeFamily")
            .field("kind", &self.kind)
            .field("cached", &self.cache.read().unwrap().len())
            .finish()
    }
}

impl NodeFamily {
    pub fn new(kind: NodeKind) -> Self {
        NodeFamily {
            kind,
            cache: Arc::new(RwLock::new(Vec::new())),
        }
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn growth(&self, k: usize) -> usize {
        growth(self.kind, k)
    }

    pub fn growth_inverse(&self, i: usize) -> usize {
        growth_inverse(self.kind, i)
    }

    pub fn level_range(&self, k: usize) -> Range<usize> {
        level_range(self.kind, k)
    }

    /// Makes sure at least `count` nodes are cached.
    pub fn ensure(&self, count: usize) {
        if self.cache.read().unwrap().len() >= count {
            return;
        }
        let mut cache = self.cache.write().unwrap();
        if cache.len() >= count {
            return;
        }
        match self.kind {
            NodeKind::Leja => extend_leja(&mut cache, count),
            NodeKind::RLeja | NodeKind::ClenshawCurtis => {
                // closed-form sequences: regenerate and append the new tail
                let fresh = node_sequence(self.kind, count);
                let have = cache.len();
                debug_assert!(fresh[..have] == cache[..]);
                cache.extend_from_slice(&fresh[have..]);
            }
        }
    }

    pub fn ensure_level(&self, k: usize) {
        self.ensure(self.growth(k) + 1);
    }

    /// The first `count` nodes.
    pub fn nodes(&self, count: usize) -> Vec<f64> {
        self.ensure(count);
        self.cache.read().unwrap()[..count].to_vec()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.ensure(i + 1);
        self.cache.read().unwrap()[i]
    }

    /// `Y_k` in sequence order.
    pub fn level_nodes(&self, k: usize) -> Vec<f64> {
        self.nodes(self.growth(k) + 1)
    }
}

/// Values `ℓ_i(y)` of all Lagrange basis polynomials on `nodes`, by direct product.
pub fn lagrange_basis(nodes: &[f64], y: f64, out: &mut [f64]) {
    debug_assert_eq!(nodes.len(), out.len());
    for (i, (&xi, o)) in nodes.iter().zip(out.iter_mut()).enumerate() {
        let mut v = 1.0;
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i {
                v *= (y - xj) / (xi - xj);
            }
        }
        *o = v;
    }
}

/// Coefficients of the univariate detail operator at `y`:
/// `Δ_k f(y) = Σ_j c_j(y) f(y_(j))` over `j ≤ m(k)`, with
/// `c_j = ℓ_j^{(m(k))} - ℓ_j^{(m(k-1))}` (the second term absent for `k = 0`).
pub fn detail_weights(family: &NodeFamily, k: usize, y: f64, out: &mut [f64]) {
    let fine = family.level_nodes(k);
    lagrange_basis(&fine, y, out);
    if k > 0 {
        let coarse_len = family.growth(k - 1) + 1;
        let mut coarse = vec![0.0; coarse_len];
        lagrange_basis(&fine[..coarse_len], y, &mut coarse);
        for (o, c) in out.iter_mut().zip(&coarse) {
            *o -= c;
        }
    }
}

pub fn equispaced(samples: usize) -> Vec<f64> {
    if samples == 1 {
        return vec![0.0];
    }
    (0..samples)
        .map(|s| -1.0 + 2.0 * s as f64 / (samples - 1) as f64)
        .collect()
}

/// Estimate of `‖I_k‖_∞`: maximum of the Lebesgue function of `Y_k` over an
/// equispaced grid of at least 1000 samples. A lower bound of the true norm.
pub fn lebesgue_constant(kind: NodeKind, k: usize, samples: usize) -> f64 {
    let nodes = node_sequence(kind, growth(kind, k) + 1);
    let mut basis = vec![0.0; nodes.len()];
    equispaced(samples.max(1000))
        .into_iter()
        .map(|y| {
            lagrange_basis(&nodes, y, &mut basis);
            basis.iter().map(|v| v.abs()).sum::<f64>()
        })
        .fold(1.0, f64::max)
}

/// Estimate of `‖Δ_k‖_∞` as the maximum of `Σ_j |c_j(y)|` over `points`.
pub fn detail_norm_on(family: &NodeFamily, k: usize, points: &[f64]) -> f64 {
    let mut w = vec![0.0; family.growth(k) + 1];
    points
        .iter()
        .map(|&y| {
            detail_weights(family, k, y, &mut w);
            w.iter().map(|v| v.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn detail_norm(kind: NodeKind, k: usize, samples: usize) -> f64 {
    detail_norm_on(&NodeFamily::new(kind), k, &equispaced(samples.max(1000)))
}

/// Per-level operator-norm estimates and the smallest exponent `θ` such that
/// `‖Δ_k‖_∞ ≤ (1 + c k)^θ` on the sampled levels for the given `c`.
#[derive(Clone, Debug, Serialize)]
pub struct LebesgueDiagnostics {
    pub kind: NodeKind,
    pub interpolation_norms: Vec<f64>,
    pub detail_norms: Vec<f64>,
    pub c: f64,
    pub theta: f64,
}

impl LebesgueDiagnostics {
    pub fn compute(kind: NodeKind, max_level: usize, samples: usize, c: f64) -> Self {
        let interpolation_norms: Vec<f64> = (0..=max_level)
            .map(|k| lebesgue_constant(kind, k, samples))
            .collect();
        let detail_norms: Vec<f64> = (0..=max_level)
            .map(|k| detail_norm(kind, k, samples))
            .collect();
        let theta = detail_norms
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &d)| d.max(1.0).ln() / (1.0 + c * k as f64).ln())
            .fold(0.0, f64::max);
        LebesgueDiagnostics {
            kind,
            interpolation_norms,
            detail_norms,
            c,
            theta,
        }
    }
}

/// Writes `i,y_i` rows with 17 significant digits.
pub fn write_node_table<W: Write>(out: W, nodes: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "y_i"])?;
    for (i, y) in nodes.iter().enumerate() {
        w.write_record([i.to_string(), format!("{y:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}
