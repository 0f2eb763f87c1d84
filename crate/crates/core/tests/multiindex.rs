mod common;

use std::collections::BTreeSet;

use common::random_monotone_set;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgcol_core::{is_monotone, MonotoneIndexSet, MultiIndex};

/// Brute-force margin over the bounding box of the set plus one.
fn brute_margins(set: &MonotoneIndexSet) -> (BTreeSet<MultiIndex>, BTreeSet<MultiIndex>) {
    let dim = set.dim();
    let mut margin = BTreeSet::new();
    let mut reduced = BTreeSet::new();
    for k in set.iter() {
        for m in 0..dim {
            let f = k.forward(m);
            if set.contains(&f) {
                continue;
            }
            margin.insert(f.clone());
            if (0..dim).all(|n| f.backward(n).map_or(true, |b| set.contains(&b))) {
                reduced.insert(f);
            }
        }
    }
    (margin, reduced)
}

proptest! {
    #[test]
    fn cached_margins_match_brute_force(seed in any::<u64>(), dim in 1usize..=4, size in 1usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_monotone_set(&mut rng, dim, size, 10);
        let (margin, reduced) = brute_margins(&set);
        prop_assert_eq!(set.margin().unwrap(), &margin);
        prop_assert_eq!(set.reduced_margin().unwrap(), &reduced);
        prop_assert_eq!(set.recompute_margins(), (margin, reduced));
        prop_assert!(is_monotone(set.members()).unwrap());
    }

    #[test]
    fn envelope_is_minimal_monotone_extension(seed in any::<u64>(), dim in 1usize..=3, size in 1usize..=25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_monotone_set(&mut rng, dim, size, 8);
        for k in set.margin().unwrap().clone() {
            let env = set.monotone_envelope(&k).unwrap();
            prop_assert!(env.contains(&k));
            prop_assert!(env.iter().all(|j| set.in_margin(j) && j.le(&k)));
            let union: Vec<MultiIndex> = set.iter().chain(env.iter()).cloned().collect();
            prop_assert!(is_monotone(union.iter()).unwrap());
            // minimal: dropping any non-k member breaks downward closedness
            for j in env.iter().filter(|j| *j != &k) {
                let without: Vec<MultiIndex> = set.iter().chain(env.iter()).filter(|i| *i != j).cloned().collect();
                prop_assert!(!is_monotone(without.iter()).unwrap());
            }
            prop_assert_eq!(set.in_reduced_margin(&k), env.len() == 1);
        }
    }
}

#[test]
fn rejects_non_admissible_and_mixed_dimensions() {
    let mut set = MonotoneIndexSet::root(2);
    assert!(set.insert(MultiIndex::new(vec![1, 1])).is_err());
    assert!(set.insert(MultiIndex::new(vec![1])).is_err());
    assert!(MonotoneIndexSet::from_indices(2, [MultiIndex::new(vec![0, 1])]).is_err());
    assert!(is_monotone([MultiIndex::new(vec![0]), MultiIndex::new(vec![0, 0])].iter()).is_err());
}
