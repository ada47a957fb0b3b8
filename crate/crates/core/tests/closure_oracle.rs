#![allow(clippy::needless_range_loop)]

mod common;

use cobras_ts::{ConstraintError, ConstraintKind, ConstraintStore, Origin, Relation};
use common::closure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Record random constraints, then compare every pair against the fixpoint
/// closure. Half the sets come from hidden labels, half from arbitrary answers
/// to whatever is still unknown. Contradictions must be rejected.
#[test]
fn relation_of_matches_fixpoint_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for set in 0..1000 {
        let n = rng.random_range(2..=20);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let from_labels = set % 2 == 0;
        let mut store = ConstraintStore::new(n, usize::MAX);
        let mut recorded = Vec::new();
        for _ in 0..rng.random_range(0..3 * n) {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i == j {
                continue;
            }
            let kind = if from_labels {
                if labels[i] == labels[j] {
                    ConstraintKind::MustLink
                } else {
                    ConstraintKind::CannotLink
                }
            } else if rng.random_bool(0.4) {
                ConstraintKind::MustLink
            } else {
                ConstraintKind::CannotLink
            };
            let before = closure(n, &recorded)[i][j];
            match store.record(i, j, kind, Origin::Queried) {
                Ok(_) => {
                    assert_eq!(before, Relation::Unknown);
                    recorded.push((i, j, kind));
                }
                Err(ConstraintError::AlreadyKnown { .. }) => assert_eq!(before, Relation::from(kind)),
                Err(ConstraintError::Inconsistent { chain, .. }) => {
                    assert!(before != Relation::Unknown && before != Relation::from(kind));
                    // The chain consists of recorded constraints that entail the conflict.
                    let chain: Vec<_> = chain.iter().map(|c| (c.i, c.j, c.kind)).collect();
                    for c in &chain {
                        assert!(recorded.iter().any(|r| (r.0.min(r.1), r.0.max(r.1), r.2) == *c));
                    }
                    assert_eq!(closure(n, &chain)[i][j], before);
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        let want = closure(n, &recorded);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(store.relation_of(i, j), want[i][j], "set {set}: pair ({i}, {j})");
                }
            }
        }
        assert_eq!(store.queries_used(), recorded.len());
    }
}
