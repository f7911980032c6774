use proptest::prelude::*;
use tsqa::evalkit::{f1, relative_accuracy};
use tsqa::synth::{denormalize, normalize, TimeSeries};

fn series(values: Vec<f64>) -> TimeSeries {
    TimeSeries {
        metric: "m".into(),
        values,
    }
}

proptest! {
    #[test]
    fn normalization_ignores_affine_rescaling(
        xs in prop::collection::vec(-1e3f64..1e3, 2..200),
        a in 0.01f64..100.0,
        b in -1e4f64..1e4,
    ) {
        let base = normalize(&series(xs.clone()));
        let moved = normalize(&series(xs.iter().map(|x| a * x + b).collect()));
        let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-6);
        for (u, v) in base.values.iter().zip(&moved.values) {
            prop_assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn normalized_values_lie_in_unit_interval_and_round_trip(xs in prop::collection::vec(-1e6f64..1e6, 1..300)) {
        let n = normalize(&series(xs.clone()));
        prop_assert!(n.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let scale = xs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in xs.iter().zip(&denormalize(&n, "m").values) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn f1_is_symmetric_and_bounded(
        p in prop::collection::btree_set("[a-e]", 0..5),
        g in prop::collection::btree_set("[a-e]", 0..5),
    ) {
        let p: Vec<String> = p.into_iter().collect();
        let g: Vec<String> = g.into_iter().collect();
        let s = f1(&p, &g);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, f1(&g, &p));
        prop_assert_eq!(f1(&g, &g), 1.0);
    }

    #[test]
    fn relative_accuracy_is_bounded_and_exact_at_label(label in -1e3f64..1e3, answer in -1e3f64..1e3, range in 0.1f64..1e3) {
        let s = relative_accuracy(Some(answer), label, range);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(relative_accuracy(Some(label), label, range), 1.0);
    }
}
