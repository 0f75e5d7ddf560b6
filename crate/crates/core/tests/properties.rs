//! Property tests for the cross-cutting invariants.

use proptest::prelude::*;

use emofuse::aggregate::{build_descriptor, FrameProbabilitySequence, NUM_BLOCKS};
use emofuse::bof::triangle_activation;
use emofuse::emotions::{
    argmax_label, read_predictions, write_predictions, ClassDistribution, EmotionLabel,
    PredictionEntry, PredictionSet, Split,
};
use emofuse::fusion::{sample_weight_matrix, weighted_average};
use emofuse::math::moving_average;
use emofuse::NUM_CLASSES;

fn normalized_dist() -> impl Strategy<Value = ClassDistribution> {
    proptest::collection::vec(0.0f64..1.0, NUM_CLASSES).prop_filter_map(
        "positive sum",
        |raw| {
            let sum: f64 = raw.iter().sum();
            if sum <= 1e-3 {
                return None;
            }
            let mut scores = [0.0; NUM_CLASSES];
            for (s, v) in scores.iter_mut().zip(&raw) {
                *s = v / sum;
            }
            ClassDistribution::normalized(scores).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every descriptor block is a convex combination of normalized rows.
    #[test]
    fn descriptor_blocks_stay_on_the_simplex(
        rows in proptest::collection::vec(normalized_dist(), 1..35)
    ) {
        let seq = FrameProbabilitySequence::new("clip", rows).unwrap();
        let d = build_descriptor(&seq).unwrap();
        for g in 0..NUM_BLOCKS {
            let block = d.block(g);
            prop_assert!(block.iter().all(|&v| v >= 0.0));
            let sum: f64 = block.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    /// Moving averages keep constants fixed for any odd window.
    #[test]
    fn moving_average_fixes_constants(
        value in -1e3f64..1e3,
        len in 1usize..40,
        half in 0usize..8
    ) {
        let xs = vec![value; len];
        let out = moving_average(&xs, 2 * half + 1);
        for v in out {
            prop_assert!((v - value).abs() < 1e-9);
        }
    }

    /// Triangle activations are non-negative and the farthest centroid is
    /// always silent.
    #[test]
    fn triangle_activation_properties(
        distances in proptest::collection::vec(0.0f64..10.0, 2..40)
    ) {
        let acts = triangle_activation(&distances);
        prop_assert!(acts.iter().all(|&a| a >= 0.0));
        let farthest = distances
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        prop_assert_eq!(acts[farthest], 0.0);
    }

    /// Fused per-class scores stay inside the expert envelope, and argmax
    /// is invariant under a global positive rescale.
    #[test]
    fn fusion_envelope_and_scale_invariance(
        dists in proptest::collection::vec(normalized_dist(), 8..16),
        seed in 0u64..1000,
        scale in 0.1f64..10.0
    ) {
        let n_models = 2 + (dists.len() % 3);
        let per_clip = dists.len() / n_models;
        prop_assume!(per_clip >= 1);
        let sets: Vec<PredictionSet> = (0..n_models)
            .map(|m| {
                let entries = (0..per_clip)
                    .map(|i| PredictionEntry {
                        clip_id: format!("c{i}"),
                        dist: dists[m * per_clip + i].clone(),
                        gold: None,
                    })
                    .collect();
                PredictionSet::new(Split::Valid, entries).unwrap()
            })
            .collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let w = sample_weight_matrix(n_models, &mut rng);
        let fused = weighted_average(&sets, &w).unwrap();
        for (i, e) in fused.entries().iter().enumerate() {
            for c in 0..NUM_CLASSES {
                let values: Vec<f64> = sets
                    .iter()
                    .map(|s| s.entries()[i].dist.scores()[c])
                    .collect();
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(e.dist.scores()[c] >= lo - 1e-12);
                prop_assert!(e.dist.scores()[c] <= hi + 1e-12);
            }
            let scaled =
                ClassDistribution::unnormalized(e.dist.scores().map(|v| v * scale)).unwrap();
            prop_assert_eq!(
                argmax_label(&e.dist).unwrap(),
                argmax_label(&scaled).unwrap()
            );
        }
    }

    /// Prediction CSV round-trips are lossless at 9 significant digits.
    #[test]
    fn prediction_csv_round_trip(
        dists in proptest::collection::vec(normalized_dist(), 1..12),
        golds in proptest::collection::vec(proptest::option::of(0usize..NUM_CLASSES), 1..12)
    ) {
        let n = dists.len().min(golds.len());
        let entries: Vec<PredictionEntry> = (0..n)
            .map(|i| PredictionEntry {
                clip_id: format!("clip{i}"),
                dist: dists[i].clone(),
                gold: golds[i].map(|g| EmotionLabel::ALL[g]),
            })
            .collect();
        let set = PredictionSet::new(Split::Test, entries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions(&set, &path).unwrap();
        let back = read_predictions(&path).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for (a, b) in set.entries().iter().zip(back.entries()) {
            prop_assert_eq!(&a.clip_id, &b.clip_id);
            prop_assert_eq!(a.gold, b.gold);
            for (x, y) in a.dist.scores().iter().zip(b.dist.scores()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}
