use hhi::dataio::{feature_csv_string, parse_feature_csv, parse_predictions, predictions_csv_string};
use hhi::domain::{InteractionLabel, NUM_CLASSES};
use hhi::features::{robust_fit, robust_transform, FeatureFrame};
use hhi::postprocess::{ensemble_mode, mode_of, run_lengths, smooth_with, PredictionTrace};
use proptest::prelude::*;

fn labels(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..NUM_CLASSES, 0..max_len)
}

fn counts(xs: &[usize]) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    xs.iter().for_each(|&x| c[x] += 1);
    c
}

proptest! {
    #[test]
    fn mode_is_a_lowest_index_maximum(xs in prop::collection::vec(0..NUM_CLASSES, 1..60)) {
        let c = counts(&xs);
        let m = mode_of(&xs);
        let top = *c.iter().max().unwrap();
        prop_assert_eq!(c[m], top);
        prop_assert!(c[..m].iter().all(|&n| n < top));
    }

    #[test]
    fn ensemble_of_identical_folds_is_identity(xs in labels(80), k in 1usize..6) {
        let folds = vec![xs.clone(); k];
        prop_assert_eq!(ensemble_mode(&folds).unwrap(), xs);
    }

    #[test]
    fn ensemble_is_invariant_to_fold_order(
        folds in (1usize..60).prop_flat_map(|t| prop::collection::vec(prop::collection::vec(0..NUM_CLASSES, t), 1..6))
    ) {
        let mut rev = folds.clone();
        rev.reverse();
        prop_assert_eq!(ensemble_mode(&folds).unwrap(), ensemble_mode(&rev).unwrap());
    }

    #[test]
    fn smoothing_keeps_length_and_edges(xs in labels(200), w in 0usize..25) {
        let out = smooth_with(&xs, w);
        prop_assert_eq!(out.len(), xs.len());
        if xs.len() >= 2 * w + 1 {
            prop_assert_eq!(&out[..w], &xs[..w]);
            prop_assert_eq!(&out[xs.len() - w..], &xs[xs.len() - w..]);
        } else {
            prop_assert_eq!(&out, &xs);
        }
    }

    #[test]
    fn smoothing_fixes_constant_sequences(c in 0..NUM_CLASSES, n in 0usize..120, w in 1usize..25) {
        let xs = vec![c; n];
        prop_assert_eq!(smooth_with(&xs, w), xs);
    }

    #[test]
    fn smoothing_removes_an_isolated_glitch(
        a in 0..NUM_CLASSES, b in 0..NUM_CLASSES, w in 1usize..25, pad in 0usize..30, at in 0usize..1000
    ) {
        let n = 2 * w + 1 + pad;
        let mut xs = vec![a; n];
        let i = w + at % (n - 2 * w);
        xs[i] = b;
        prop_assert_eq!(smooth_with(&xs, w), vec![a; n]);
    }

    #[test]
    fn run_lengths_partition_the_sequence(xs in labels(200)) {
        let runs = run_lengths(&xs);
        prop_assert_eq!(runs.iter().sum::<usize>(), xs.len());
        prop_assert!(runs.iter().all(|&r| r > 0));
        let changes = xs.windows(2).filter(|p| p[0] != p[1]).count();
        prop_assert_eq!(runs.len(), if xs.is_empty() { 0 } else { changes + 1 });
    }

    #[test]
    fn predictions_csv_round_trips(
        (folds, truth) in (1usize..50).prop_flat_map(|t| (
            prop::collection::vec(prop::collection::vec(0..NUM_CLASSES, t), 1..5),
            prop::option::of(prop::collection::vec(0..NUM_CLASSES, t)),
        ))
    ) {
        let trace = PredictionTrace::from_folds(folds, truth).unwrap();
        let back = parse_predictions(&predictions_csv_string(&trace).unwrap()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn feature_csv_round_trips(
        (rows, cols, data, labeled) in (1usize..12, 1usize..6).prop_flat_map(|(r, c)| (
            Just(r), Just(c), prop::collection::vec(-1e6f64..1e6, r * c), any::<bool>(),
        ))
    ) {
        let labels = labeled.then(|| (0..rows).map(|i| InteractionLabel::ALL[i % NUM_CLASSES]).collect());
        let frame = FeatureFrame::new(rows, cols, data, labels).unwrap();
        let names: Vec<String> = (0..cols).map(|c| format!("f{c}")).collect();
        let back = parse_feature_csv(&feature_csv_string(&frame, &names).unwrap()).unwrap();
        prop_assert_eq!((back.rows, back.cols), (rows, cols));
        prop_assert_eq!(&back.labels, &frame.labels);
        for (x, y) in back.data.iter().zip(&frame.data) {
            prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn scaling_is_affine_invariant(
        data in prop::collection::vec(-100.0f64..100.0, 40),
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        let base = FeatureFrame::new(20, 2, data.clone(), None).unwrap();
        let moved = FeatureFrame::new(20, 2, data.iter().map(|v| v * scale + shift).collect(), None).unwrap();
        let p = robust_fit([&base]).unwrap();
        let q = robust_fit([&moved]).unwrap();
        prop_assume!(!p.degenerate.iter().any(|&d| d));
        let a = robust_transform(&base, &p).unwrap();
        let b = robust_transform(&moved, &q).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}
