//! Multi-indices in `N_0^M` and downward-closed (monotone) index sets.
//!
//! A set `Λ` is monotone when `k ∈ Λ` and `k_m ≥ 1` imply `k - e_m ∈ Λ`.
//! [`MonotoneIndexSet`] keeps its margin and reduced margin up to date on
//! every insertion, so adaptive drivers can query them each iteration
//! without recomputation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `N_0^M`. Ordering is lexicographic.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The canonical unit index `e_m`.
    pub fn unit(dim: usize, m: usize) -> Self {
        let mut e = vec![0; dim];
        e[m] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, m: usize) -> usize {
        self.0[m] as usize
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    /// `|k|_1`
    pub fn order(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    /// `k + e_m`
    pub fn forward(&self, m: usize) -> Self {
        let mut next = self.0.clone();
        next[m] += 1;
        MultiIndex(next)
    }

    /// `k - e_m`, if `k_m ≥ 1`.
    pub fn backward(&self, m: usize) -> Option<Self> {
        if self.0[m] == 0 {
            return None;
        }
        let mut prev = self.0.clone();
        prev[m] -= 1;
        Some(MultiIndex(prev))
    }

    /// All existing predecessors `k - e_m`.
    pub fn predecessors(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.dim()).filter_map(move |m| self.backward(m))
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (m, v) in self.0.iter().enumerate() {
            if m > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

fn check_dims<'a>(indices: impl IntoIterator<Item = &'a MultiIndex>) -> Result<Option<usize>> {
    let mut dim = None;
    for k in indices {
        match dim {
            None => dim = Some(k.dim()),
            Some(d) if d != k.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: k.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(dim)
}

/// True iff `indices` is downward closed.
pub fn is_monotone<'a, I>(indices: I) -> Result<bool>
where
    I: IntoIterator<Item = &'a MultiIndex>,
    I::IntoIter: Clone,
{
    let iter = indices.into_iter();
    check_dims(iter.clone())?;
    let set: BTreeSet<&MultiIndex> = iter.collect();
    Ok(set
        .iter()
        .all(|k| k.predecessors().all(|p| set.contains(&p))))
}

/// A finite downward-closed subset of `N_0^M` with cached margins.
#[derive(Clone, Debug)]
pub struct MonotoneIndexSet {
    dim: usize,
    members: BTreeSet<MultiIndex>,
    margin: BTreeSet<MultiIndex>,
    reduced: BTreeSet<MultiIndex>,
}

impl MonotoneIndexSet {
    /// The empty set; the only admissible first insertion is the zero index.
    pub fn empty(dim: usize) -> Self {
        MonotoneIndexSet {
            dim,
            members: BTreeSet::new(),
            margin: BTreeSet::new(),
            reduced: BTreeSet::new(),
        }
    }

    /// `Λ_0 = {0}`
    pub fn root(dim: usize) -> Self {
        let mut set = Self::empty(dim);
        set.insert(MultiIndex::zeros(dim))
            .expect("zero index is admissible in the empty set");
        set
    }

    /// Builds a set from arbitrary indices, failing if they are not downward closed.
    pub fn from_indices<I: IntoIterator<Item = MultiIndex>>(
        dim: usize,
        indices: I,
    ) -> Result<Self> {
        let sorted: BTreeSet<MultiIndex> = indices.into_iter().collect();
        check_dims(&sorted)?;
        if let Some(k) = sorted.iter().next() {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.dim(),
                });
            }
        }
        // predecessors are lexicographically smaller, so sorted order is admissible
        let mut set = Self::empty(dim);
        for k in sorted {
            set.insert(k)?;
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: &MultiIndex) -> bool {
        self.members.contains(k)
    }

    /// Members in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.members.iter()
    }

    pub fn members(&self) -> &BTreeSet<MultiIndex> {
        &self.members
    }

    pub fn to_sorted_vec(&self) -> Vec<MultiIndex> {
        self.members.iter().cloned().collect()
    }

    /// `{ k ∉ Λ : k - e_m ∈ Λ for some m }`
    pub fn margin(&self) -> Result<&BTreeSet<MultiIndex>> {
        if self.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(&self.margin)
    }

    /// Margin elements all of whose existing predecessors lie in `Λ`.
    pub fn reduced_margin(&self) -> Result<&BTreeSet<MultiIndex>> {
        if self.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(&self.reduced)
    }

    pub fn in_margin(&self, k: &MultiIndex) -> bool {
        self.margin.contains(k)
    }

    pub fn in_reduced_margin(&self, k: &MultiIndex) -> bool {
        self.reduced.contains(k)
    }

    /// Whether `Λ ∪ {k}` is monotone and `k ∉ Λ`.
    pub fn is_admissible(&self, k: &MultiIndex) -> bool {
        if self.is_empty() {
            k.dim() == self.dim && k.is_zero()
        } else {
            self.reduced.contains(k)
        }
    }

    fn is_reduced(&self, k: &MultiIndex) -> bool {
        k.predecessors().all(|p| self.members.contains(&p))
    }

    /// Inserts an admissible index and updates the margin caches.
    pub fn insert(&mut self, k: MultiIndex) -> Result<()> {
        if k.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: k.dim(),
            });
        }
        if !self.is_admissible(&k) {
            return Err(Error::NotAdmissible(k));
        }
        self.margin.remove(&k);
        self.reduced.remove(&k);
        for m in 0..self.dim {
            let next = k.forward(m);
            debug_assert!(!self.members.contains(&next));
            self.margin.insert(next.clone());
            // only successors of k can change reduced status
            if self.is_reduced_after(&next, &k) {
                self.reduced.insert(next);
            }
        }
        self.members.insert(k);
        Ok(())
    }

    fn is_reduced_after(&self, candidate: &MultiIndex, added: &MultiIndex) -> bool {
        candidate
            .predecessors()
            .all(|p| &p == added || self.members.contains(&p))
    }

    /// Inserts every index of `indices` (in lexicographic order).
    pub fn insert_all<'a, I: IntoIterator<Item = &'a MultiIndex>>(
        &mut self,
        indices: I,
    ) -> Result<()> {
        let sorted: BTreeSet<&MultiIndex> = indices.into_iter().collect();
        for k in sorted {
            if !self.contains(k) {
                self.insert(k.clone())?;
            }
        }
        Ok(())
    }

    /// Smallest `E ⊆ Marg(Λ)` with `k ∈ E` and `Λ ∪ E` monotone.
    ///
    /// Computed as the closure of `k` under predecessors that are not in `Λ`.
    pub fn monotone_envelope(&self, k: &MultiIndex) -> Result<BTreeSet<MultiIndex>> {
        if self.is_empty() {
            return Err(Error::EmptySet);
        }
        if !self.margin.contains(k) {
            return Err(Error::NotInMargin(k.clone()));
        }
        let mut envelope = BTreeSet::new();
        let mut queue = VecDeque::from([k.clone()]);
        while let Some(j) = queue.pop_front() {
            if self.members.contains(&j) || envelope.contains(&j) {
                continue;
            }
            for p in j.predecessors() {
                queue.push_back(p);
            }
            envelope.insert(j);
        }
        debug_assert!(envelope.iter().all(|j| self.margin.contains(j)));
        Ok(envelope)
    }

    /// From-scratch margin and reduced margin; used to validate the caches.
    pub fn recompute_margins(&self) -> (BTreeSet<MultiIndex>, BTreeSet<MultiIndex>) {
        let mut margin = BTreeSet::new();
        for k in &self.members {
            for m in 0..self.dim {
                let next = k.forward(m);
                if !self.members.contains(&next) {
                    margin.insert(next);
                }
            }
        }
        let reduced = margin
            .iter()
            .filter(|k| self.is_reduced(k))
            .cloned()
            .collect();
        (margin, reduced)
    }
}
