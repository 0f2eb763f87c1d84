#![allow(dead_code)]

use rand::seq::IteratorRandom;
use rand::Rng;
use sgcol_core::{AdaptiveTrace, MonotoneIndexSet, MultiIndex, NodeFamily, SparseInterpolant};

/// Grows a downward-closed set from `{0}` by random reduced-margin insertions.
/// Indices with an entry above `max_entry` are never chosen.
pub fn random_monotone_set<R: Rng>(
    rng: &mut R,
    dim: usize,
    size: usize,
    max_entry: u32,
) -> MonotoneIndexSet {
    let mut set = MonotoneIndexSet::root(dim);
    while set.len() < size {
        let pick = set
            .reduced_margin()
            .unwrap()
            .iter()
            .filter(|k| k.as_slice().iter().all(|&v| v <= max_entry))
            .choose(rng)
            .cloned();
        match pick {
            Some(k) => set.insert(k).unwrap(),
            None => break,
        }
    }
    set
}

/// Insertion order that is downward closed at every step but otherwise
/// shuffled.
pub fn random_insertion_order<R: Rng>(rng: &mut R, set: &MonotoneIndexSet) -> Vec<MultiIndex> {
    let mut partial = MonotoneIndexSet::empty(set.dim());
    let mut order = Vec::with_capacity(set.len());
    while partial.len() < set.len() {
        let k = set
            .iter()
            .filter(|k| !partial.contains(k) && partial.is_admissible(k))
            .choose(rng)
            .cloned()
            .unwrap();
        partial.insert(k.clone()).unwrap();
        order.push(k);
    }
    order
}

pub fn build<F: FnMut(&[f64]) -> Vec<f64>>(
    family: &NodeFamily,
    order: &[MultiIndex],
    value_len: usize,
    mut f: F,
) -> SparseInterpolant {
    let dim = order[0].dim();
    let mut interp = SparseInterpolant::new(family.clone(), dim, value_len);
    for k in order {
        interp.add_index(k, |g| f(&g.coords)).unwrap();
    }
    interp
}

pub fn smooth(y: &[f64]) -> Vec<f64> {
    let s: f64 = y.iter().enumerate().map(|(m, v)| v / (m + 2) as f64).sum();
    vec![1.0 / (2.5 + s), (0.7 * s).sin(), s.exp()]
}

pub fn uniform_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

/// First difference between two traces, ignoring wall-clock times. Index
/// sets must agree exactly, floats to a relative 1e-15.
pub fn trace_difference(a: &AdaptiveTrace, b: &AdaptiveTrace) -> Option<String> {
    if a.status != b.status || a.records.len() != b.records.len() {
        return Some(format!(
            "{:?}/{} iterations vs {:?}/{}",
            a.status,
            a.records.len(),
            b.status,
            b.records.len()
        ));
    }
    for (ra, rb) in a.records.iter().zip(&b.records) {
        let n = ra.n;
        if ra.index_set != rb.index_set || ra.selected != rb.selected || ra.marked != rb.marked {
            return Some(format!("iteration {n}: index sets differ"));
        }
        if ra.solves != rb.solves || ra.grid_size != rb.grid_size || ra.candidates != rb.candidates
        {
            return Some(format!("iteration {n}: counters differ"));
        }
        let ea: Vec<_> = ra
            .report
            .entries
            .iter()
            .map(|e| (&e.index, e.eta, e.profit))
            .collect();
        let eb: Vec<_> = rb
            .report
            .entries
            .iter()
            .map(|e| (&e.index, e.eta, e.profit))
            .collect();
        if ea.len() != eb.len()
            || ea
                .iter()
                .zip(&eb)
                .any(|(x, y)| x.0 != y.0 || !close(x.1, y.1) || !close(x.2, y.2))
            || !close(ra.report.total, rb.report.total)
        {
            return Some(format!("iteration {n}: estimators differ"));
        }
        if !close_opt(ra.reference_error, rb.reference_error)
            || !close_opt(ra.effectivity, rb.effectivity)
        {
            return Some(format!("iteration {n}: reference errors differ"));
        }
    }
    let (ia, ib) = (&a.interpolant, &b.interpolant);
    if ia.point_indices() != ib.point_indices() {
        return Some("final grids differ".into());
    }
    for j in ia.point_indices() {
        let (sa, sb) = (ia.surplus(j).unwrap(), ib.surplus(j).unwrap());
        if sa.iter().zip(sb).any(|(x, y)| !close(*x, *y)) {
            return Some(format!("surplus at {j} differs"));
        }
    }
    None
}
