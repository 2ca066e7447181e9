mod common;

use dmvi_core::bijector::Bijector;
use dmvi_core::models::{mixture_log_likelihood, MODEL_NAMES};
use dmvi_core::random::{standard_normal_tensor, stream};
use dmvi_core::{Dataset64, GenerativeModel, Graph64, Guide, IafGuide, Method, NoiseSchedule, Tensor64};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_exp_round_trip(theta in 1e-6f64..10.0) {
        let xi = Bijector::LogExp.forward(theta).unwrap();
        prop_assert!((Bijector::LogExp.inverse(xi) - theta).abs() < 1e-9);
    }

    #[test]
    fn simulated_truth_survives_unconstraining(seed in 0u64..10_000, which in 0usize..7) {
        let model = GenerativeModel::by_name(MODEL_NAMES[which]).unwrap();
        let data = model.simulate::<f64>(seed, 3).unwrap();
        let xi = model.layout().unconstrain(&data.theta_true).unwrap();
        let back = model.layout().constrain(&xi);
        for (a, b) in back.iter().zip(&data.theta_true) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_identity_for_any_length(t_max in 2usize..400, frac in 0.0f64..1.0) {
        let s = NoiseSchedule::<f64>::default_linear(t_max).unwrap();
        let t = 1 + ((t_max - 1) as f64 * frac) as usize;
        prop_assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-12);
        if t > 1 {
            prop_assert!(s.sigma(t) > s.sigma(t - 1));
        }
    }

    #[test]
    fn perturb_degenerate_cases(y0 in prop::collection::vec(-5.0f64..5.0, 1..6), t in 1usize..=50) {
        let s = NoiseSchedule::<f64>::default_linear(50).unwrap();
        let zeros = vec![0.0; y0.len()];
        let no_noise = s.perturb(&y0, t, &zeros).unwrap();
        let no_signal = s.perturb(&zeros, t, &y0).unwrap();
        for i in 0..y0.len() {
            prop_assert_eq!(no_noise[i], s.alpha(t) * y0[i]);
            prop_assert_eq!(no_signal[i], s.sigma(t) * y0[i]);
        }
    }

    #[test]
    fn dataset_text_round_trip(seed in 0u64..10_000, which in 0usize..7, n in 1usize..20) {
        let model = GenerativeModel::by_name(MODEL_NAMES[which]).unwrap();
        let data: Dataset64 = model.simulate(seed, n).unwrap();
        let mut buf = Vec::new();
        data.write_to(&mut buf).unwrap();
        prop_assert_eq!(Dataset64::read_from(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn simulation_is_deterministic(seed in 0u64..10_000, which in 0usize..7) {
        let model = GenerativeModel::by_name(MODEL_NAMES[which]).unwrap();
        prop_assert_eq!(model.simulate::<f64>(seed, 5).unwrap(), model.simulate::<f64>(seed, 5).unwrap());
    }

    #[test]
    fn identical_components_ignore_weights(w in 0.01f64..0.98, y in prop::array::uniform2(-3.0f64..3.0)) {
        let means = vec![vec![0.4, -0.2]; 3];
        let stds = vec![vec![1.3, 0.7]; 3];
        let rest = (1.0 - w) / 2.0;
        let a = mixture_log_likelihood(&[w, rest, rest], &means, &stds, &y);
        let b = mixture_log_likelihood(&[1.0 / 3.0; 3], &means, &stds, &y);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes(data in prop::collection::vec(-50.0f64..50.0, 2..40)) {
        let spread = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - data.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let n = data.len();
        let g = Graph64::new();
        let y = g.constant(Tensor64::row(data)).layer_norm(1e-12).value().into_data();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn flow_inverts_with_random_weights(seed in 0u64..1000, d in 1usize..6) {
        let mut guide = IafGuide::<f64>::with_hidden(d, 12);
        common::randomize(guide.params_mut(), 0.3, seed);
        let g = Graph64::new();
        let p = guide.params().bind_frozen(&g);
        let eps = g.constant(standard_normal_tensor(&mut stream(seed), 8, d));
        let (xi, _) = guide.forward(&p, eps).unwrap();
        let (back, _) = guide.inverse(&p, xi).unwrap();
        let err = (back - eps).value().data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err < 1e-8, "{}", err);
    }

    #[test]
    fn mixture_alignment_ignores_labels(seed in 0u64..1000, perm in 0usize..6) {
        let model = GenerativeModel::mixture();
        let truth = model.simulate::<f64>(seed, 1).unwrap().theta_true;
        let draw = model.simulate::<f64>(seed + 1, 1).unwrap().theta_true;
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut relabelled = draw.clone();
        for (to, &from) in orders[perm].iter().enumerate() {
            for i in 0..2 {
                relabelled[2 * to + i] = draw[2 * from + i];
                relabelled[6 + 2 * to + i] = draw[6 + 2 * from + i];
            }
        }
        let mut a = draw.clone();
        let mut b = relabelled;
        model.align_to_truth(&mut a, &truth);
        model.align_to_truth(&mut b, &truth);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn method_names_round_trip(which in 0usize..3) {
        let m = Method::ALL[which];
        prop_assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        prop_assert_eq!(m.to_string().to_lowercase().parse::<Method>().unwrap(), m);
    }
}
