//! Error functionals over margin indices.
//!
//! * `η(k) = ‖Δ_k(a∇u_n)‖_{L^p_μ(Γ;L²(D))}`: the residual estimator, computed
//!   from the current interpolant only. With `a_min` the ellipticity
//!   constant, `‖u - u_n‖ ≤ a_min^{-1} Σ_{k ∈ Marg(Λ)} η(k)`.
//! * `‖Δ_k u‖_{L^p_μ(Γ;H¹_0)}`: the hierarchical surplus indicator, which
//!   needs PDE solves at the new points of `k`.
//! * profits, parametric norms and reference errors.
//!
//! Spatial norms are taken in a Euclidean representation: element data is
//! scaled by `√h`, so `‖v‖_{L²(D)}` is the 2-norm of the stored vector.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Discretization, SolveCache};
use crate::interp::{
    increment_node_indices, tensor_grid_node_indices, work, CtDetail, GridPoint,
    HierarchicalDetail, ParametricField, SparseInterpolant,
};
use crate::multiindex::{MonotoneIndexSet, MultiIndex};
use crate::nodes::{equispaced, NodeFamily, NodeKind};
use crate::quadrature::gauss_legendre;
use crate::tensor::TensorIter;

/// Total sample budget of a sup-norm grid.
pub const MAX_SUP_POINTS: usize = 40_000;

/// Largest dimension for which tensor reference grids are built.
pub const MAX_REFERENCE_DIM: usize = 4;

/// Which `L^p_μ` norm to take over the parameter domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    /// Exponent in `[1, ∞]`; written as a number or `"inf"`.
    #[serde(with = "p_value", default = "default_p")]
    pub p: f64,
    /// Gauss order per dimension for `p ∉ {2, ∞}`.
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    /// Points per dimension of the sample grid for `p = ∞`.
    #[serde(default = "default_sup_samples")]
    pub sup_samples: usize,
}

fn default_p() -> f64 {
    2.0
}

fn default_quad_order() -> usize {
    20
}

fn default_sup_samples() -> usize {
    33
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec {
            p: 2.0,
            quad_order: default_quad_order(),
            sup_samples: default_sup_samples(),
        }
    }
}

impl NormSpec {
    pub fn l2() -> Self {
        Self::default()
    }

    pub fn sup() -> Self {
        NormSpec {
            p: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn with_p(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::Config(format!(
                "norm exponent must lie in [1, inf], got {p}"
            )));
        }
        Ok(NormSpec {
            p,
            ..Self::default()
        })
    }

    pub fn is_sup(&self) -> bool {
        self.p.is_infinite()
    }

    /// Equispaced sample axis of the sup-norm grid in dimension `dim`,
    /// thinned so that the full grid has at most [`MAX_SUP_POINTS`] points.
    pub fn sup_axis(&self, dim: usize) -> Vec<f64> {
        let mut s = self.sup_samples.max(2);
        while s > 2 && (s as f64).powi(dim as i32) > MAX_SUP_POINTS as f64 {
            s -= 1;
        }
        equispaced(s)
    }

    /// Evaluation axes and per-axis weights for a field of the given degrees.
    /// Weights are empty for `p = ∞`.
    fn rule(&self, degrees: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        if self.is_sup() {
            let axis = self.sup_axis(degrees.len());
            return (vec![axis; degrees.len()], Vec::new());
        }
        let orders: Vec<usize> = degrees
            .iter()
            .map(|&d| {
                if self.p == 2.0 {
                    d + 1
                } else {
                    self.quad_order.max(d + 1)
                }
            })
            .collect();
        let rules: Vec<_> = orders.iter().map(|&n| gauss_legendre(n)).collect();
        (
            rules.iter().map(|r| r.nodes.clone()).collect(),
            rules
                .iter()
                .map(|r| r.weights.iter().map(|w| 0.5 * w).collect())
                .collect(),
        )
    }

    /// Combines pointwise spatial norms on a tensor grid into the `L^p_μ` norm.
    fn aggregate(&self, norms: &[f64], weights: &[Vec<f64>]) -> f64 {
        if self.is_sup() {
            return norms.iter().copied().fold(0.0, f64::max);
        }
        let shape: Vec<usize> = weights.iter().map(|w| w.len()).collect();
        let mut acc = 0.0;
        for (q, pos) in TensorIter::new(&shape).enumerate() {
            let w: f64 = pos.iter().zip(weights).map(|(&i, w)| w[i]).product();
            acc += w * norms[q].powf(self.p);
        }
        acc.powf(1.0 / self.p)
    }
}

/// Serde for `p`: a number, or `"inf"` for infinity.
pub mod p_value {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Inf") => f64::INFINITY,
            Raw::Text(t) => return Err(de::Error::custom(format!("invalid norm exponent {t:?}"))),
        };
        if p >= 1.0 {
            Ok(p)
        } else {
            Err(de::Error::custom(format!(
                "norm exponent must lie in [1, inf], got {p}"
            )))
        }
    }
}

/// `‖F‖_{L^p_μ(Γ;X)}` where the spatial norm of a value vector is `spatial`.
pub fn parametric_norm<F: ParametricField + ?Sized>(
    field: &F,
    norm: &NormSpec,
    spatial: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let (axes, weights) = norm.rule(&field.degrees());
    let values = field.evaluate_tensor_grid(&axes);
    let len = field.value_len();
    let norms: Vec<f64> = if len == 0 {
        vec![0.0; values.len().max(1)]
    } else {
        values.chunks(len).map(spatial).collect()
    };
    norm.aggregate(&norms, &weights)
}

pub fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Replaces `count` vectors of length `len` (stored consecutively) by their
/// coordinates in an orthonormal basis of their span, via Householder QR.
/// Euclidean norms of all linear combinations are preserved. Returns the
/// new vectors and their length.
pub fn compress_columns(values: &[f64], count: usize, len: usize) -> (Vec<f64>, usize) {
    if count >= len || count == 0 {
        return (values.to_vec(), len);
    }
    let a = DMatrix::from_column_slice(len, count, values);
    let r = a.qr().r();
    let rank = r.nrows();
    let mut out = Vec::with_capacity(count * rank);
    for j in 0..count {
        out.extend(r.column(j).iter());
    }
    (out, rank)
}

fn sqrt_h_scale(disc: &Discretization, v: &mut [f64]) {
    let s = disc.h().sqrt();
    v.iter_mut().for_each(|x| *x *= s);
}

/// `√h · a(·,y) ∇u` for a solution vector `u`.
pub fn scaled_flux(disc: &Discretization, y: &[f64], u: &[f64]) -> Vec<f64> {
    let mut g = disc.flux(y, u);
    sqrt_h_scale(disc, &mut g);
    g
}

/// `√h · ∇u`, whose 2-norm is the `H¹_0` seminorm of `u`.
pub fn scaled_gradient(disc: &Discretization, u: &[f64]) -> Vec<f64> {
    let mut g = disc.gradient(u);
    sqrt_h_scale(disc, &mut g);
    g
}

/// `‖Δ_k g‖_{L^p_μ(Γ; ℓ²)}` for `g` given on the tensor grid `Y_k`
/// (row-major, value vector innermost).
pub fn ct_detail_norm(
    family: &NodeFamily,
    k: &MultiIndex,
    values: Vec<f64>,
    len: usize,
    norm: &NormSpec,
) -> f64 {
    let count = values.len() / len.max(1);
    // the p = 2 rule has exactly as many points as Y_k; compression only
    // pays off on larger sample grids
    let (values, len) = if norm.p == 2.0 {
        (values, len)
    } else {
        compress_columns(&values, count, len)
    };
    let detail = CtDetail::from_values(family.clone(), k.clone(), len, values);
    parametric_norm(&detail, norm, &euclidean)
}

/// Per-index values of one estimator evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorEntry {
    pub index: MultiIndex,
    pub eta: f64,
    pub work: usize,
    pub profit: f64,
    pub reduced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorReport {
    /// Sorted by index.
    pub entries: Vec<EstimatorEntry>,
    /// Sum of all `η`.
    pub total: f64,
    pub max: f64,
    /// Largest `η` over the full margin divided by the largest over the
    /// reduced margin; `None` when the latter is zero or not computed.
    pub margin_ratio: Option<f64>,
}

impl EstimatorReport {
    /// Builds a report, filling in work and profit over monotone envelopes.
    pub fn new(
        set: &MonotoneIndexSet,
        kind: NodeKind,
        etas: BTreeMap<MultiIndex, f64>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(etas.len());
        for (k, &eta) in &etas {
            let reduced = set.is_empty() || set.in_reduced_margin(k);
            let profit = if set.is_empty() || !set.in_margin(k) {
                eta / work(kind, k) as f64
            } else {
                let envelope = set.monotone_envelope(k)?;
                if envelope.iter().all(|i| etas.contains_key(i)) {
                    profit(kind, &envelope, &etas)
                } else {
                    eta / work(kind, k) as f64
                }
            };
            entries.push(EstimatorEntry {
                index: k.clone(),
                eta,
                work: work(kind, k),
                profit,
                reduced,
            });
        }
        let total = entries.iter().map(|e| e.eta).sum();
        let max = entries.iter().map(|e| e.eta).fold(0.0, f64::max);
        let reduced_max = entries
            .iter()
            .filter(|e| e.reduced)
            .map(|e| e.eta)
            .fold(0.0, f64::max);
        let margin_ratio = (reduced_max > 0.0).then(|| max / reduced_max);
        Ok(EstimatorReport {
            entries,
            total,
            max,
            margin_ratio,
        })
    }

    pub fn eta(&self, k: &MultiIndex) -> Option<f64> {
        self.entries
            .binary_search_by(|e| e.index.cmp(k))
            .ok()
            .map(|p| self.entries[p].eta)
    }

    /// First index (lexicographically) attaining the maximum of `key`.
    pub fn argmax_by(&self, key: impl Fn(&EstimatorEntry) -> f64) -> Option<&EstimatorEntry> {
        let mut best: Option<&EstimatorEntry> = None;
        for e in &self.entries {
            if best.map_or(true, |b| key(e) > key(b)) {
                best = Some(e);
            }
        }
        best
    }
}

/// `π(k) = Σ_{i∈E} η(i) / Σ_{i∈E} W(i)` over an envelope `E`.
pub fn profit(
    kind: NodeKind,
    envelope: &BTreeSet<MultiIndex>,
    etas: &BTreeMap<MultiIndex, f64>,
) -> f64 {
    let eta: f64 = envelope
        .iter()
        .map(|i| etas.get(i).copied().unwrap_or(0.0))
        .sum();
    let w: usize = envelope.iter().map(|i| work(kind, i)).sum();
    eta / w as f64
}

/// Scaled fluxes `√h a(·,y) ∇u_n(·,y)` of the current interpolant, memoized
/// at grid points by node index.
pub struct FluxTable<'a> {
    interp: &'a SparseInterpolant,
    disc: &'a Discretization,
    values: HashMap<MultiIndex, Vec<f64>>,
}

impl<'a> FluxTable<'a> {
    pub fn new(interp: &'a SparseInterpolant, disc: &'a Discretization) -> Self {
        FluxTable {
            interp,
            disc,
            values: HashMap::new(),
        }
    }

    /// Makes sure the fluxes on `Y_k` are available for every `k` in `levels`.
    pub fn prepare<'b>(&mut self, levels: impl IntoIterator<Item = &'b MultiIndex>) {
        let family = self.interp.family();
        let mut needed = BTreeSet::new();
        for k in levels {
            for j in tensor_grid_node_indices(family, k) {
                if !self.values.contains_key(&j) {
                    needed.insert(j);
                }
            }
        }
        if needed.is_empty() {
            return;
        }
        let needed: Vec<MultiIndex> = needed.into_iter().collect();
        let chunk = 64;
        let dofs = self.interp.value_len();
        let fluxes: Vec<Vec<Vec<f64>>> = needed
            .par_chunks(chunk)
            .map(|pts| {
                let u = self.interp.evaluate_at_nodes(pts);
                pts.iter()
                    .zip(u.chunks(dofs))
                    .map(|(j, uj)| {
                        let y = GridPoint::new(family, j.clone()).coords;
                        scaled_flux(self.disc, &y, uj)
                    })
                    .collect()
            })
            .collect();
        for (j, g) in needed.into_iter().zip(fluxes.into_iter().flatten()) {
            self.values.insert(j, g);
        }
    }

    /// Flux values on `Y_k`, row-major. [`prepare`](Self::prepare) must have
    /// covered `k`.
    pub fn grid_values(&self, k: &MultiIndex) -> Vec<f64> {
        let family = self.interp.family();
        let mut out = Vec::new();
        for j in tensor_grid_node_indices(family, k) {
            out.extend_from_slice(&self.values[&j]);
        }
        out
    }
}

/// `η(k)` for `k` in the margin of the interpolant's index set.
pub fn residual_estimator(
    interp: &SparseInterpolant,
    disc: &Discretization,
    k: &MultiIndex,
    norm: &NormSpec,
) -> Result<f64> {
    let set = interp.index_set();
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if !set.in_margin(k) {
        return Err(Error::NotInMargin(k.clone()));
    }
    Ok(detail_flux_norm(interp, disc, k, norm))
}

/// `‖Δ_k(a∇u_n)‖` for any `k`, without the margin check.
pub fn detail_flux_norm(
    interp: &SparseInterpolant,
    disc: &Discretization,
    k: &MultiIndex,
    norm: &NormSpec,
) -> f64 {
    let mut table = FluxTable::new(interp, disc);
    table.prepare([k]);
    ct_detail_norm(
        interp.family(),
        k,
        table.grid_values(k),
        disc.elements(),
        norm,
    )
}

/// `η(k)` for every `k ∈ Marg(Λ)`, computed in parallel and collected in
/// index order.
pub fn residual_report(
    interp: &SparseInterpolant,
    disc: &Discretization,
    norm: &NormSpec,
) -> Result<EstimatorReport> {
    let set = interp.index_set();
    let margin: Vec<MultiIndex> = set.margin()?.iter().cloned().collect();
    let mut table = FluxTable::new(interp, disc);
    table.prepare(&margin);
    let family = interp.family();
    let etas: Vec<f64> = margin
        .par_iter()
        .map(|k| ct_detail_norm(family, k, table.grid_values(k), disc.elements(), norm))
        .collect();
    EstimatorReport::new(set, family.kind(), margin.into_iter().zip(etas).collect())
}

/// Solves the PDE at `Y_k^+` (through the cache) and returns the values in
/// [`increment_node_indices`] order.
pub fn increment_solutions(
    family: &NodeFamily,
    disc: &Discretization,
    cache: &SolveCache,
    k: &MultiIndex,
) -> Result<Vec<Arc<Vec<f64>>>> {
    increment_node_indices(family, k)
        .par_iter()
        .map(|j| {
            cache.get_or_solve(j, || {
                let y = GridPoint::new(family, j.clone()).coords;
                disc.solve_at(&y)
            })
        })
        .collect()
}

/// `‖Δ_k u‖_{L^p_μ(Γ;H¹_0)}` for `k` in the reduced margin, from hierarchical
/// surpluses at `Y_k^+`. The solves go through `cache` so that adding `k`
/// later costs nothing.
pub fn surplus_indicator(
    interp: &SparseInterpolant,
    disc: &Discretization,
    cache: &SolveCache,
    k: &MultiIndex,
    norm: &NormSpec,
) -> Result<f64> {
    let set = interp.index_set();
    if !set.is_admissible(k) {
        return Err(Error::NotAdmissible(k.clone()));
    }
    let family = interp.family();
    let nodes = increment_node_indices(family, k);
    let sols = increment_solutions(family, disc, cache, k)?;
    let current = interp.evaluate_at_nodes(&nodes);
    let dofs = interp.value_len();
    let mut grads = Vec::with_capacity(nodes.len() * disc.elements());
    let mut diff = vec![0.0; dofs];
    for (s, c) in sols.iter().zip(current.chunks(dofs.max(1))) {
        for ((d, a), b) in diff.iter_mut().zip(s.iter()).zip(c) {
            *d = a - b;
        }
        grads.extend(scaled_gradient(disc, &diff));
    }
    let count = nodes.len();
    let (grads, len) = if norm.p == 2.0 {
        (grads, disc.elements())
    } else {
        compress_columns(&grads, count, disc.elements())
    };
    let detail = HierarchicalDetail::new(family.clone(), k.clone(), len, grads);
    Ok(parametric_norm(&detail, norm, &euclidean))
}

/// Tensor grid with precomputed PDE solutions for measuring
/// `‖u - S_Λ u‖_{L^p_μ(Γ;H¹_0)}`: Gauss–Legendre of order `Q` per dimension
/// for `p < ∞`, the sup-norm sample grid for `p = ∞`.
pub struct ReferenceGrid {
    norm: NormSpec,
    axes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    /// `√h ∇u_h(y)` per grid point, row-major.
    gradients: Vec<f64>,
    elements: usize,
}

impl ReferenceGrid {
    pub fn new(disc: &Discretization, norm: &NormSpec, order: usize) -> Result<Self> {
        let dim = disc.dim();
        if dim > MAX_REFERENCE_DIM {
            return Err(Error::ReferenceInfeasible { dim });
        }
        let (axes, weights) = if norm.is_sup() {
            (vec![norm.sup_axis(dim); dim], Vec::new())
        } else {
            let rule = gauss_legendre(order.max(1));
            (
                vec![rule.nodes.clone(); dim],
                vec![rule.weights.iter().map(|w| 0.5 * w).collect(); dim],
            )
        };
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let points: Vec<Vec<usize>> = TensorIter::new(&shape).collect();
        let gradients: Vec<Vec<f64>> = points
            .par_iter()
            .map(|pos| {
                let y: Vec<f64> = pos.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
                disc.solve_at(&y).map(|u| scaled_gradient(disc, &u))
            })
            .collect::<Result<_>>()?;
        Ok(ReferenceGrid {
            norm: *norm,
            axes,
            weights,
            gradients: gradients.concat(),
            elements: disc.elements(),
        })
    }

    pub fn num_points(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// `‖u - S_Λ u‖` with `S_Λ u` evaluated on slabs of the first axis.
    pub fn error(&self, interp: &SparseInterpolant, disc: &Discretization) -> f64 {
        let first = &self.axes[0];
        let rest: usize = self.axes[1..].iter().map(|a| a.len()).product();
        let slab = (4096 / rest.max(1)).clamp(1, first.len());
        let e = self.elements;
        let starts: Vec<usize> = (0..first.len()).step_by(slab).collect();
        let norms: Vec<f64> = starts
            .par_iter()
            .flat_map_iter(|&s| {
                let end = (s + slab).min(first.len());
                let mut axes = self.axes.clone();
                axes[0] = first[s..end].to_vec();
                let values = interp.evaluate_tensor_grid(&axes);
                let dofs = interp.value_len();
                let offset = s * rest;
                values
                    .chunks(dofs)
                    .enumerate()
                    .map(|(q, v)| {
                        let g = scaled_gradient(disc, v);
                        let r = &self.gradients[(offset + q) * e..(offset + q + 1) * e];
                        g.iter()
                            .zip(r)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        self.norm.aggregate(&norms, &self.weights)
    }
}

/// One-shot reference error; builds a fresh [`ReferenceGrid`].
pub fn reference_error(
    interp: &SparseInterpolant,
    disc: &Discretization,
    norm: &NormSpec,
    order: usize,
) -> Result<f64> {
    Ok(ReferenceGrid::new(disc, norm, order)?.error(interp, disc))
}
