mod support;

use hygieia_core::evaluation::LabelKind;
use hygieia_core::orchestrator::{aggregate_confidence, ConfidenceSample};
use hygieia_core::CandidateAnswer;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{surface_variant, tally_oracle, BASES};

fn samples_from(spec: &[(String, f64)]) -> Vec<ConfidenceSample> {
    spec.iter()
        .enumerate()
        .map(|(i, (label, c))| ConfidenceSample {
            sample_index: i as u32,
            answer: CandidateAnswer::new(label.clone(), LabelKind::Disease, *c, "").unwrap(),
            alternatives: Vec::new(),
        })
        .collect()
}

#[test]
fn winner_and_mean_match_tally_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let s = rng.random_range(1..8);
        // A narrow label pool and coarse confidences force frequent ties.
        let pool = rng.random_range(1..=4);
        let raw: Vec<(&str, u32)> = (0..s)
            .map(|_| (BASES[rng.random_range(0..pool)], rng.random_range(0..=10) * 10))
            .collect();
        let spec: Vec<(String, f64)> = raw.iter().map(|(b, c)| (surface_variant(&mut rng, b), *c as f64)).collect();
        let agg = aggregate_confidence(&samples_from(&spec)).unwrap();
        let (winner, mean) = tally_oracle(&raw);
        assert_eq!(agg.winner.normalized_label, winner, "{spec:?}");
        assert!((agg.final_confidence - mean).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn permutation_invariant_and_bounded(
        spec in prop::collection::vec((0usize..4, 0.0f64..=100.0), 1..9),
        seed in any::<u64>(),
    ) {
        let spec: Vec<(String, f64)> = spec.into_iter().map(|(l, c)| (BASES[l].to_string(), c)).collect();
        let a = aggregate_confidence(&samples_from(&spec)).unwrap();
        let mut shuffled = spec.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let b = aggregate_confidence(&samples_from(&shuffled)).unwrap();
        prop_assert_eq!(&a.winner.normalized_label, &b.winner.normalized_label);
        prop_assert_eq!(a.final_confidence, b.final_confidence);
        let min = spec.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let max = spec.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a.final_confidence >= min && a.final_confidence <= max);
        let mean = spec.iter().map(|s| s.1).sum::<f64>() / spec.len() as f64;
        prop_assert!((a.final_confidence - mean).abs() < 1e-9);
    }
}
