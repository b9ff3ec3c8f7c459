//! SIC decoding checked against an independent peeling oracle.

mod common;

use std::collections::BTreeSet;

use common::peeling::{exhaustive_degree_two, graph, oracle};
use crdsa_core::frame::{build_frame, sic_decode, FrameGraph};
use crdsa_core::SystemConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exhaustive_degree_two_frames() {
    let checked = exhaustive_degree_two();
    assert!(checked > 1_000_000, "{checked}");
}

fn arb_frame() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (3usize..30).prop_flat_map(|n_f| {
        let packet = proptest::sample::subsequence((0..n_f).collect::<Vec<_>>(), 1..=3.min(n_f));
        (Just(n_f), proptest::collection::vec(packet, 0..40))
    })
}

proptest! {
    #[test]
    fn matches_oracle_on_random_frames((n_f, packets) in arb_frame()) {
        let (expect, sweeps) = oracle(&packets, n_f);
        let got = sic_decode(&graph(&packets, n_f), 1000);
        let got_set: BTreeSet<usize> = got.decoded_ids.iter().map(|&i| i as usize).collect();
        prop_assert_eq!(got_set, expect);
        prop_assert_eq!(got.iterations_used, sweeps);
    }

    #[test]
    fn invariant_under_relabelling((n_f, packets) in arb_frame(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..packets.len()).collect();
        order.shuffle(&mut rng);
        let mut slot_map: Vec<usize> = (0..n_f).collect();
        slot_map.shuffle(&mut rng);

        let base = sic_decode(&graph(&packets, n_f), 1000);
        let permuted = FrameGraph::from_placements(
            n_f,
            order.iter().map(|&i| (i as u64 * 7 + 3, packets[i].iter().map(|&s| slot_map[s]))),
        ).unwrap();
        let other = sic_decode(&permuted, 1000);
        let mapped: BTreeSet<u64> = base.decoded_ids.iter().map(|&i| i * 7 + 3).collect();
        prop_assert_eq!(other.decoded_ids.iter().copied().collect::<BTreeSet<_>>(), mapped);
        prop_assert_eq!(other.iterations_used, base.iterations_used);
        prop_assert_eq!(other.per_iteration_decoded, base.per_iteration_decoded);
    }

    #[test]
    fn budget_monotonicity((n_f, packets) in arb_frame()) {
        let frame = graph(&packets, n_f);
        let mut prev: BTreeSet<u64> = BTreeSet::new();
        for budget in 1..=12 {
            let r = sic_decode(&frame, budget);
            let now: BTreeSet<u64> = r.decoded_ids.iter().copied().collect();
            prop_assert!(now.is_superset(&prev));
            prop_assert!(r.iterations_used <= budget);
            prop_assert!(r.iterations_used as usize <= packets.len());
            prop_assert_eq!(r.per_iteration_decoded.iter().sum::<usize>(), r.decoded_ids.len());
            prop_assert!(r.per_iteration_decoded.iter().all(|&c| c > 0));
            prev = now;
        }
    }
}

#[test]
fn placement_is_uniform_over_slots() {
    // chi-square, 99 degrees of freedom, upper 1% point
    const CRITICAL: f64 = 134.642;
    let cfg = SystemConfig::crdsa(100, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let frame = build_frame(10_000, &cfg, &mut rng);
    let occ = frame.occupancy();
    let expected = 20_000.0 / 100.0;
    let chi2: f64 = occ
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < CRITICAL, "chi2 = {chi2}");
    for p in frame.packets() {
        assert_eq!(p.degree(), 2);
        assert!(p.slots()[0] < p.slots()[1]);
    }
}
