//! Hierarchical sparse-grid interpolation over nested node families.
//!
//! The sparse operator `S_Λ = Σ_{i∈Λ} Δ_i` is stored in hierarchical form:
//! each grid point `y_(j)` carries a surplus vector, and
//! `S_Λ f(y) = Σ_j surplus_j · Π_m h_{j_m}(y_m)` with `h_j` the hierarchical
//! Lagrange polynomials. Values are vectors (FEM coefficient vectors in the
//! diffusion setting); every operation acts componentwise.
//!
//! [`CtDetail`] evaluates a single detail `Δ_k g` by the combination
//! technique from values of `g` on the full tensor grid `Y_k`, independently
//! of the surplus bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{MonotoneIndexSet, MultiIndex};
use crate::nodes::{lagrange_basis, level_width, NodeFamily, NodeKind};
use crate::tensor::{contract, Matrix, TensorIter};

/// A sparse-grid point: per-dimension node indices and coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub node_index: MultiIndex,
    pub coords: Vec<f64>,
}

impl GridPoint {
    pub fn new(family: &NodeFamily, node_index: MultiIndex) -> Self {
        let coords = node_index
            .as_slice()
            .iter()
            .map(|&j| family.node(j as usize))
            .collect();
        GridPoint { node_index, coords }
    }
}

/// `W(i) = Π_m (m(i_m) - m(i_m - 1))`, the number of points in `Y_i^+`.
pub fn work(kind: NodeKind, i: &MultiIndex) -> usize {
    i.as_slice()
        .iter()
        .map(|&v| level_width(kind, v as usize))
        .product()
}

/// Node indices of `Y_i^+ = Π_m {m(i_m-1)+1, ..., m(i_m)}` in row-major order.
pub fn increment_node_indices(family: &NodeFamily, i: &MultiIndex) -> Vec<MultiIndex> {
    let ranges: Vec<Range<usize>> = i
        .as_slice()
        .iter()
        .map(|&v| family.level_range(v as usize))
        .collect();
    let shape: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
    TensorIter::new(&shape)
        .map(|pos| {
            MultiIndex::new(
                pos.iter()
                    .zip(&ranges)
                    .map(|(p, r)| (r.start + p) as u32)
                    .collect(),
            )
        })
        .collect()
}

/// Node indices of the full tensor grid `Y_k` (`j ≤ m(k)`) in row-major order.
pub fn tensor_grid_node_indices(family: &NodeFamily, k: &MultiIndex) -> Vec<MultiIndex> {
    let shape: Vec<usize> = k
        .as_slice()
        .iter()
        .map(|&v| family.growth(v as usize) + 1)
        .collect();
    TensorIter::new(&shape)
        .map(|pos| MultiIndex::new(pos.iter().map(|&p| p as u32).collect()))
        .collect()
}

/// `Y_Λ` as the disjoint union of the increments `Y_i^+`, `i ∈ Λ`.
pub fn grid_points(family: &NodeFamily, set: &MonotoneIndexSet) -> Vec<GridPoint> {
    set.iter()
        .flat_map(|i| increment_node_indices(family, i))
        .map(|j| GridPoint::new(family, j))
        .collect()
}

/// Hierarchical Lagrange polynomial `h_i(y)`: the Lagrange polynomial of
/// `y_(i)` on the first level set containing it.
pub fn hierarchical_basis_eval(family: &NodeFamily, i: usize, y: f64) -> f64 {
    let level = family.growth_inverse(i);
    let nodes = family.level_nodes(level);
    let xi = nodes[i];
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| (y - xj) / (xi - xj))
        .product()
}

/// Table `T[q][j] = h_j(points[q])` for `j ≤ max_index`.
pub fn hierarchical_table(family: &NodeFamily, max_index: usize, points: &[f64]) -> Matrix {
    let cols = max_index + 1;
    let mut table = Matrix::zeros(points.len(), cols);
    let top = family.growth_inverse(max_index);
    family.ensure_level(top);
    for level in 0..=top {
        let nodes = family.level_nodes(level);
        let range = family.level_range(level);
        let mut basis = vec![0.0; nodes.len()];
        for (q, &y) in points.iter().enumerate() {
            lagrange_basis(&nodes, y, &mut basis);
            let row = table.row_mut(q);
            for j in range.clone().filter(|&j| j < cols) {
                row[j] = basis[j];
            }
        }
    }
    table
}

/// Table `T[q][j] = h_j(y_(q))` at the nodes themselves, `q ≤ max_eval`.
/// Uses the exact Lagrange property where it applies.
fn hierarchical_node_table(family: &NodeFamily, max_index: usize, max_eval: usize) -> Matrix {
    let points = family.nodes(max_eval + 1);
    let mut table = hierarchical_table(family, max_index, &points);
    for j in 0..=max_index {
        let own = family.growth(family.growth_inverse(j));
        for q in 0..=max_eval.min(own) {
            table.row_mut(q)[j] = if q == j { 1.0 } else { 0.0 };
        }
    }
    table
}

fn check_domain(y: &[f64], dim: usize) -> Result<()> {
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::OutOfDomain(y.to_vec()));
    }
    Ok(())
}

/// A function of `y ∈ [-1,1]^M` with vector values that is a polynomial of
/// known per-dimension degree and can be evaluated on tensor grids.
pub trait ParametricField {
    fn dim(&self) -> usize;
    fn value_len(&self) -> usize;
    /// Per-dimension degree bound.
    fn degrees(&self) -> Vec<usize>;
    /// Values on the tensor grid `axes[0] × ... × axes[M-1]`, row-major with
    /// the value vector innermost.
    fn evaluate_tensor_grid(&self, axes: &[Vec<f64>]) -> Vec<f64>;
}

/// Points added when inserting one multi-index.
#[derive(Clone, Debug)]
pub struct AddReport {
    pub index: MultiIndex,
    pub new_points: Vec<MultiIndex>,
}

/// `S_Λ f` in hierarchical form.
#[derive(Clone, Debug)]
pub struct SparseInterpolant {
    family: NodeFamily,
    dim: usize,
    value_len: usize,
    set: MonotoneIndexSet,
    points: Vec<MultiIndex>,
    surpluses: Vec<f64>,
    lookup: HashMap<MultiIndex, usize>,
    increments: BTreeMap<MultiIndex, Range<usize>>,
    max_node: Vec<usize>,
}

impl SparseInterpolant {
    /// An empty interpolant (`Λ = ∅`).
    pub fn new(family: NodeFamily, dim: usize, value_len: usize) -> Self {
        SparseInterpolant {
            family,
            dim,
            value_len,
            set: MonotoneIndexSet::empty(dim),
            points: Vec::new(),
            surpluses: Vec::new(),
            lookup: HashMap::new(),
            increments: BTreeMap::new(),
            max_node: vec![0; dim],
        }
    }

    pub fn family(&self) -> &NodeFamily {
        &self.family
    }

    pub fn kind(&self) -> NodeKind {
        self.family.kind()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value_len(&self) -> usize {
        self.value_len
    }

    pub fn index_set(&self) -> &MonotoneIndexSet {
        &self.set
    }

    /// `|Y_Λ|`
    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node indices of the stored grid points, in insertion order.
    pub fn point_indices(&self) -> &[MultiIndex] {
        &self.points
    }

    pub fn grid_points(&self) -> Vec<GridPoint> {
        self.points
            .iter()
            .map(|j| GridPoint::new(&self.family, j.clone()))
            .collect()
    }

    pub fn surplus(&self, node_index: &MultiIndex) -> Option<&[f64]> {
        self.lookup
            .get(node_index)
            .map(|&p| &self.surpluses[p * self.value_len..(p + 1) * self.value_len])
    }

    /// Node indices introduced by `i ∈ Λ`.
    pub fn increment(&self, i: &MultiIndex) -> Option<&[MultiIndex]> {
        self.increments.get(i).map(|r| &self.points[r.clone()])
    }

    /// Largest node index per dimension among stored points.
    pub fn max_node_index(&self) -> &[usize] {
        &self.max_node
    }

    /// Grid points `Y_i^+` that `add_index(i)` would introduce.
    pub fn new_points(&self, i: &MultiIndex) -> Result<Vec<GridPoint>> {
        self.check_admissible(i)?;
        Ok(increment_node_indices(&self.family, i)
            .into_iter()
            .map(|j| GridPoint::new(&self.family, j))
            .collect())
    }

    fn check_admissible(&self, i: &MultiIndex) -> Result<()> {
        if i.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: i.dim(),
            });
        }
        if !self.set.is_admissible(i) {
            return Err(Error::NotAdmissible(i.clone()));
        }
        Ok(())
    }

    /// Adds `i` (which must keep `Λ` monotone), evaluating `f` at `Y_i^+`.
    pub fn add_index<F>(&mut self, i: &MultiIndex, mut f: F) -> Result<AddReport>
    where
        F: FnMut(&GridPoint) -> Vec<f64>,
    {
        let pts = self.new_points(i)?;
        let values: Vec<Vec<f64>> = pts.iter().map(&mut f).collect();
        self.add_index_with_values(i, &values)
    }

    /// Adds `i` given the function values at `Y_i^+` (in the order of
    /// [`increment_node_indices`]). Surpluses are `f(y_j) - S_Λ f(y_j)` with
    /// `S_Λ` taken before the insertion.
    pub fn add_index_with_values(
        &mut self,
        i: &MultiIndex,
        values: &[Vec<f64>],
    ) -> Result<AddReport> {
        self.check_admissible(i)?;
        let new_points = increment_node_indices(&self.family, i);
        if values.len() != new_points.len() {
            return Err(Error::DimensionMismatch {
                expected: new_points.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| v.len() != self.value_len) {
            return Err(Error::DimensionMismatch {
                expected: self.value_len,
                found: v.len(),
            });
        }
        let current = self.evaluate_at_nodes(&new_points);
        let start = self.points.len();
        for ((j, f), s) in new_points
            .iter()
            .zip(values)
            .zip(current.chunks(self.value_len.max(1)))
        {
            self.lookup.insert(j.clone(), self.points.len());
            self.points.push(j.clone());
            if self.value_len > 0 {
                self.surpluses.extend(f.iter().zip(s).map(|(a, b)| a - b));
            }
            for m in 0..self.dim {
                self.max_node[m] = self.max_node[m].max(j.get(m));
            }
        }
        self.increments.insert(i.clone(), start..self.points.len());
        self.set.insert(i.clone())?;
        Ok(AddReport {
            index: i.clone(),
            new_points,
        })
    }

    /// `S_Λ f(y)`.
    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_domain(y, self.dim)?;
        if self.is_empty() {
            return Err(Error::EmptySet);
        }
        let tables: Vec<Matrix> = (0..self.dim)
            .map(|m| hierarchical_table(&self.family, self.max_node[m], &[y[m]]))
            .collect();
        let mut out = vec![0.0; self.value_len];
        self.accumulate(&mut out, |m, j| tables[m].data[j]);
        Ok(out)
    }

    fn accumulate(&self, out: &mut [f64], basis: impl Fn(usize, usize) -> f64) {
        let v = self.value_len;
        for (p, j) in self.points.iter().enumerate() {
            let mut w = 1.0;
            for (m, &jm) in j.as_slice().iter().enumerate() {
                w *= basis(m, jm as usize);
                if w == 0.0 {
                    break;
                }
            }
            if w == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(&self.surpluses[p * v..(p + 1) * v]) {
                *o += w * s;
            }
        }
    }

    /// `S_Λ f` at grid points given by node indices; flat, one vector per point.
    pub fn evaluate_at_nodes(&self, nodes: &[MultiIndex]) -> Vec<f64> {
        let mut out = vec![0.0; nodes.len() * self.value_len];
        if self.is_empty() || nodes.is_empty() {
            return out;
        }
        let tables: Vec<Matrix> = (0..self.dim)
            .map(|m| {
                let max_eval = nodes.iter().map(|j| j.get(m)).max().unwrap_or(0);
                hierarchical_node_table(&self.family, self.max_node[m], max_eval)
            })
            .collect();
        for (j, o) in nodes.iter().zip(out.chunks_mut(self.value_len.max(1))) {
            self.accumulate(o, |m, b| tables[m].row(j.get(m))[b]);
        }
        out
    }

    /// Stored surpluses as a dense array over the node-index box.
    fn dense_surpluses(&self) -> (Vec<f64>, Vec<usize>) {
        let shape: Vec<usize> = self.max_node.iter().map(|&j| j + 1).collect();
        let v = self.value_len;
        let mut dense = vec![0.0; shape.iter().product::<usize>() * v];
        for (p, j) in self.points.iter().enumerate() {
            let mut flat = 0;
            for (m, &jm) in j.as_slice().iter().enumerate() {
                flat = flat * shape[m] + jm as usize;
            }
            dense[flat * v..(flat + 1) * v].copy_from_slice(&self.surpluses[p * v..(p + 1) * v]);
        }
        (dense, shape)
    }

    /// The detail `Δ_i f` of an index `i ∈ Λ`, from its stored surpluses.
    pub fn detail(&self, i: &MultiIndex) -> Option<HierarchicalDetail> {
        let range = self.increments.get(i)?;
        let surpluses =
            self.surpluses[range.start * self.value_len..range.end * self.value_len].to_vec();
        Some(HierarchicalDetail::new(
            self.family.clone(),
            i.clone(),
            self.value_len,
            surpluses,
        ))
    }

    pub fn to_snapshot(&self) -> InterpolantSnapshot {
        InterpolantSnapshot {
            kind: self.kind(),
            dim: self.dim,
            value_len: self.value_len,
            index_set: self.set.to_sorted_vec(),
            points: self
                .points
                .iter()
                .enumerate()
                .map(|(p, j)| SnapshotPoint {
                    node_index: j.clone(),
                    surplus: self.surpluses[p * self.value_len..(p + 1) * self.value_len].to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds an interpolant from a snapshot; points must be exactly `Y_Λ`.
    pub fn from_snapshot(snap: &InterpolantSnapshot) -> Result<Self> {
        let family = NodeFamily::new(snap.kind);
        let set = MonotoneIndexSet::from_indices(snap.dim, snap.index_set.iter().cloned())?;
        let mut interp = SparseInterpolant::new(family, snap.dim, snap.value_len);
        let by_node: HashMap<&MultiIndex, &SnapshotPoint> =
            snap.points.iter().map(|p| (&p.node_index, p)).collect();
        if by_node.len() != snap.points.len() {
            return Err(Error::Config(
                "snapshot contains duplicate grid points".into(),
            ));
        }
        let mut seen = 0;
        // replay insertion order so evaluation sums terms in the same order
        let mut order: Vec<&MultiIndex> = Vec::new();
        for p in &snap.points {
            let level: Vec<u32> = p
                .node_index
                .as_slice()
                .iter()
                .map(|&j| interp.family.growth_inverse(j as usize) as u32)
                .collect();
            let level = MultiIndex::new(level);
            if !set.contains(&level) {
                return Err(Error::Config(format!(
                    "snapshot grid point {} does not belong to the index set",
                    p.node_index
                )));
            }
            if order.last() != Some(&&level) && !order.contains(&&level) {
                order.push(set.members().get(&level).unwrap());
            }
        }
        for i in order {
            let nodes = increment_node_indices(&interp.family, i);
            let start = interp.points.len();
            for j in &nodes {
                let p = by_node.get(j).ok_or_else(|| {
                    Error::Config(format!("snapshot is missing grid point {j} of index {i}"))
                })?;
                if p.surplus.len() != snap.value_len {
                    return Err(Error::DimensionMismatch {
                        expected: snap.value_len,
                        found: p.surplus.len(),
                    });
                }
                interp.lookup.insert(j.clone(), interp.points.len());
                interp.points.push(j.clone());
                interp.surpluses.extend_from_slice(&p.surplus);
                for m in 0..snap.dim {
                    interp.max_node[m] = interp.max_node[m].max(j.get(m));
                }
                seen += 1;
            }
            interp
                .increments
                .insert(i.clone(), start..interp.points.len());
            interp.set.insert(i.clone())?;
        }
        if seen != snap.points.len() || interp.set.len() != set.len() {
            return Err(Error::Config(
                "snapshot grid points do not match the index set".into(),
            ));
        }
        Ok(interp)
    }
}

impl ParametricField for SparseInterpolant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_len(&self) -> usize {
        self.value_len
    }

    fn degrees(&self) -> Vec<usize> {
        self.max_node.clone()
    }

    fn evaluate_tensor_grid(&self, axes: &[Vec<f64>]) -> Vec<f64> {
        let (dense, shape) = self.dense_surpluses();
        let tables: Vec<Matrix> = (0..self.dim)
            .map(|m| hierarchical_table(&self.family, self.max_node[m], &axes[m]))
            .collect();
        let refs: Vec<&Matrix> = tables.iter().collect();
        contract(&dense, &shape, self.value_len, &refs)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotPoint {
    pub node_index: MultiIndex,
    pub surplus: Vec<f64>,
}

/// Serializable form of a [`SparseInterpolant`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpolantSnapshot {
    pub kind: NodeKind,
    pub dim: usize,
    pub value_len: usize,
    pub index_set: Vec<MultiIndex>,
    pub points: Vec<SnapshotPoint>,
}

/// `Δ_i f = Σ_{j ∈ Y_i^+} s_j h_j` from hierarchical surpluses `s_j`.
#[derive(Clone, Debug)]
pub struct HierarchicalDetail {
    family: NodeFamily,
    level: MultiIndex,
    value_len: usize,
    /// Row-major over `Y_i^+`, value vector innermost.
    surpluses: Vec<f64>,
}

impl HierarchicalDetail {
    pub fn new(
        family: NodeFamily,
        level: MultiIndex,
        value_len: usize,
        surpluses: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(surpluses.len(), work(family.kind(), &level) * value_len);
        HierarchicalDetail {
            family,
            level,
            value_len,
            surpluses,
        }
    }

    pub fn level(&self) -> &MultiIndex {
        &self.level
    }

    fn tables(&self, axes: &[Vec<f64>]) -> Vec<Matrix> {
        self.level
            .as_slice()
            .iter()
            .zip(axes)
            .map(|(&k, pts)| {
                let range = self.family.level_range(k as usize);
                let full = hierarchical_table(&self.family, range.end - 1, pts);
                Matrix::from_fn(pts.len(), range.len(), |q, c| full.row(q)[range.start + c])
            })
            .collect()
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_domain(y, self.level.dim())?;
        let axes: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
        Ok(self.evaluate_tensor_grid(&axes))
    }
}

impl ParametricField for HierarchicalDetail {
    fn dim(&self) -> usize {
        self.level.dim()
    }

    fn value_len(&self) -> usize {
        self.value_len
    }

    fn degrees(&self) -> Vec<usize> {
        self.level
            .as_slice()
            .iter()
            .map(|&k| self.family.growth(k as usize))
            .collect()
    }

    fn evaluate_tensor_grid(&self, axes: &[Vec<f64>]) -> Vec<f64> {
        let shape: Vec<usize> = self
            .level
            .as_slice()
            .iter()
            .map(|&k| level_width(self.family.kind(), k as usize))
            .collect();
        let tables = self.tables(axes);
        let refs: Vec<&Matrix> = tables.iter().collect();
        contract(&self.surpluses, &shape, self.value_len, &refs)
    }
}

/// `Δ_k g` by the combination technique,
/// `Δ_k = Σ_{j ∈ {0,1}^M} (-1)^{|j|} ⊗_m I_{k_m - j_m}` with `I_{-1} := 0`,
/// built from values of `g` on the full tensor grid `Y_k`.
#[derive(Clone, Debug)]
pub struct CtDetail {
    family: NodeFamily,
    level: MultiIndex,
    value_len: usize,
    shape: Vec<usize>,
    /// Row-major over `Y_k`, value vector innermost.
    values: Vec<f64>,
}

/// Applies `Δ_k` to `g` via the combination technique.
pub fn detail_apply_ct<G>(
    family: &NodeFamily,
    k: &MultiIndex,
    value_len: usize,
    mut g: G,
) -> CtDetail
where
    G: FnMut(&GridPoint) -> Vec<f64>,
{
    let mut values = Vec::new();
    for j in tensor_grid_node_indices(family, k) {
        let v = g(&GridPoint::new(family, j));
        assert_eq!(
            v.len(),
            value_len,
            "evaluator returned a vector of the wrong length"
        );
        values.extend(v);
    }
    CtDetail::from_values(family.clone(), k.clone(), value_len, values)
}

impl CtDetail {
    /// `values` must be row-major over [`tensor_grid_node_indices`]`(k)`.
    pub fn from_values(
        family: NodeFamily,
        level: MultiIndex,
        value_len: usize,
        values: Vec<f64>,
    ) -> Self {
        let shape: Vec<usize> = level
            .as_slice()
            .iter()
            .map(|&v| family.growth(v as usize) + 1)
            .collect();
        assert_eq!(values.len(), shape.iter().product::<usize>() * value_len);
        CtDetail {
            family,
            level,
            value_len,
            shape,
            values,
        }
    }

    pub fn level(&self) -> &MultiIndex {
        &self.level
    }

    /// Signed terms `((-1)^{|j|}, k - j)` with `k - j ≥ 0`.
    pub fn terms(&self) -> Vec<(f64, MultiIndex)> {
        let dim = self.level.dim();
        let mut out = Vec::new();
        for pattern in TensorIter::new(&vec![2; dim]) {
            if pattern
                .iter()
                .zip(self.level.as_slice())
                .any(|(&j, &k)| j as u32 > k)
            {
                continue;
            }
            let sign = if pattern.iter().sum::<usize>() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let sub = self
                .level
                .as_slice()
                .iter()
                .zip(&pattern)
                .map(|(&k, &j)| k - j as u32)
                .collect();
            out.push((sign, MultiIndex::new(sub)));
        }
        out
    }

    /// Lagrange weights of level `l` at `y`, zero-padded to the `Y_k` axis.
    fn lagrange_row(&self, m: usize, l: usize, y: f64) -> Vec<f64> {
        let nodes = self.family.level_nodes(l);
        let mut row = vec![0.0; self.shape[m]];
        lagrange_basis(&nodes, y, &mut row[..nodes.len()]);
        row
    }

    /// Explicit signed sum of full tensor Lagrange interpolants at `y`.
    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_domain(y, self.level.dim())?;
        let mut out = vec![0.0; self.value_len];
        for (sign, sub) in self.terms() {
            let rows: Vec<Matrix> = (0..self.shape.len())
                .map(|m| {
                    let r = self.lagrange_row(m, sub.get(m), y[m]);
                    Matrix {
                        rows: 1,
                        cols: r.len(),
                        data: r,
                    }
                })
                .collect();
            let refs: Vec<&Matrix> = rows.iter().collect();
            let term = contract(&self.values, &self.shape, self.value_len, &refs);
            for (o, t) in out.iter_mut().zip(term) {
                *o += sign * t;
            }
        }
        Ok(out)
    }
}

impl ParametricField for CtDetail {
    fn dim(&self) -> usize {
        self.level.dim()
    }

    fn value_len(&self) -> usize {
        self.value_len
    }

    fn degrees(&self) -> Vec<usize> {
        self.shape.iter().map(|&s| s - 1).collect()
    }

    /// The signed sum factors per dimension into `⊗_m (ℓ^{(k_m)} - ℓ^{(k_m-1)})`,
    /// so the whole combination is one contraction.
    fn evaluate_tensor_grid(&self, axes: &[Vec<f64>]) -> Vec<f64> {
        let mats: Vec<Matrix> = self
            .level
            .as_slice()
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                let k = k as usize;
                let fine = self.family.level_nodes(k);
                let coarse_len = if k > 0 {
                    self.family.growth(k - 1) + 1
                } else {
                    0
                };
                let mut mat = Matrix::zeros(axes[m].len(), self.shape[m]);
                let mut coarse = vec![0.0; coarse_len];
                for (q, &y) in axes[m].iter().enumerate() {
                    let row = mat.row_mut(q);
                    lagrange_basis(&fine, y, row);
                    if coarse_len > 0 {
                        lagrange_basis(&fine[..coarse_len], y, &mut coarse);
                        for (r, c) in row.iter_mut().zip(&coarse) {
                            *r -= c;
                        }
                    }
                }
                mat
            })
            .collect();
        let refs: Vec<&Matrix> = mats.iter().collect();
        contract(&self.values, &self.shape, self.value_len, &refs)
    }
}

/// `Σ_e c_e y^{e}` with vector coefficients; a test and diagnostic helper.
#[derive(Clone, Debug)]
pub struct PolynomialField {
    pub dim: usize,
    pub terms: Vec<(MultiIndex, Vec<f64>)>,
}

impl PolynomialField {
    pub fn evaluate(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.value_len()];
        for (e, c) in &self.terms {
            let w: f64 = e
                .as_slice()
                .iter()
                .zip(y)
                .map(|(&p, &v)| v.powi(p as i32))
                .product();
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        out
    }
}

impl ParametricField for PolynomialField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_len(&self) -> usize {
        self.terms.first().map_or(0, |(_, c)| c.len())
    }

    fn degrees(&self) -> Vec<usize> {
        (0..self.dim)
            .map(|m| self.terms.iter().map(|(e, _)| e.get(m)).max().unwrap_or(0))
            .collect()
    }

    fn evaluate_tensor_grid(&self, axes: &[Vec<f64>]) -> Vec<f64> {
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let mut out = Vec::with_capacity(shape.iter().product::<usize>() * self.value_len());
        for pos in TensorIter::new(&shape) {
            let y: Vec<f64> = pos.iter().zip(axes).map(|(&p, a)| a[p]).collect();
            out.extend(self.evaluate(&y));
        }
        out
    }
}
