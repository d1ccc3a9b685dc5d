use std::collections::BTreeMap;

use proptest::prelude::*;

use microclust::evaluation::pairwise_confusion;
use microclust::io::{read_trace, write_trace};
use microclust::mcmc::{Trace, TraceSample};
use microclust::synthetic::{scenario_partition, ScenarioSpec};
use microclust::Partition;

fn arb_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..25).prop_flat_map(|n| (proptest::collection::vec(0usize..7, n), proptest::collection::vec(0usize..7, n)))
}

// O(n^2) pair count
fn brute_confusion(truth: &[usize], est: &[usize]) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..truth.len() {
        for j in i + 1..truth.len() {
            match (truth[i] == truth[j], est[i] == est[j]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
    }
    (tp, fp, fn_)
}

fn finite() -> impl Strategy<Value = Option<f64>> {
    proptest::option::of(prop_oneof![-1e6..1e6f64, 0.0..1e-8f64])
}

fn arb_sample() -> impl Strategy<Value = TraceSample> {
    (
        0usize..1_000_000,
        (finite(), finite(), finite(), finite()),
        proptest::collection::vec(0.0..1.0f64, 0..4),
        proptest::collection::vec(0usize..5, 0..9),
    )
        .prop_map(|(iteration, (r, p, theta, sigma), beta, z)| {
            let allocations = if z.is_empty() {
                Vec::new()
            } else {
                Partition::from_allocations(&z).unwrap().allocations().to_vec()
            };
            let k = allocations.iter().max().map_or(0, |m| m + 1);
            TraceSample { iteration, k, r, p, theta, sigma, beta, allocations }
        })
}

proptest! {
    #[test]
    fn confusion_matches_pair_enumeration((t, e) in arb_pair()) {
        let truth = Partition::from_allocations(&t).unwrap();
        let est = Partition::from_allocations(&e).unwrap();
        let c = pairwise_confusion(&truth, &est).unwrap();
        prop_assert_eq!((c.tp, c.fp, c.fn_), brute_confusion(&t, &e));
        prop_assert_eq!(c.tp + c.fn_, truth.linked_pairs());
        prop_assert_eq!(c.tp + c.fp, est.linked_pairs());
        prop_assert!((0.0..=1.0).contains(&c.fnr()) && (0.0..=1.0).contains(&c.fdr()));

        let swapped = pairwise_confusion(&est, &truth).unwrap();
        prop_assert_eq!((swapped.tp, swapped.fp, swapped.fn_), (c.tp, c.fn_, c.fp));
    }

    #[test]
    fn confusion_ignores_labels((t, e) in arb_pair(), shift in 1usize..40) {
        let relabel = |z: &[usize]| -> Partition {
            Partition::from_allocations(&z.iter().map(|&c| 100 - (c * 3 + shift) % 50).collect::<Vec<_>>()).unwrap()
        };
        let base = pairwise_confusion(&Partition::from_allocations(&t).unwrap(), &Partition::from_allocations(&e).unwrap()).unwrap();
        prop_assert_eq!(base, pairwise_confusion(&relabel(&t), &relabel(&e)).unwrap());
    }

    #[test]
    fn self_comparison_has_no_errors(t in proptest::collection::vec(0usize..5, 1..30)) {
        let p = Partition::from_allocations(&t).unwrap();
        let c = pairwise_confusion(&p, &p).unwrap();
        prop_assert_eq!((c.fp, c.fn_, c.fnr(), c.fdr()), (0, 0, 0.0, 0.0));
    }

    #[test]
    fn trace_round_trips(samples in proptest::collection::vec(arb_sample(), 0..6)) {
        let trace = Trace { samples };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn scenario_partition_realises_its_occupancy(
        counts in proptest::collection::btree_map(1usize..9, 1usize..12, 1..5)
    ) {
        let spec = ScenarioSpec::new(counts.clone(), 3, 4, 0.01);
        let p = scenario_partition(&spec).unwrap();
        prop_assert_eq!(p.n(), spec.n());
        prop_assert_eq!(p.k(), spec.k());
        let occupancy: BTreeMap<usize, usize> = p.occupancy().clone();
        prop_assert_eq!(occupancy, counts);
    }
}
