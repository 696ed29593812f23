mod common;

use common::random_panel;
use fiptiw::prelude::*;
use fiptiw::survival::information;
use fiptiw::weights::{WeightKey, WeightKind};
use proptest::prelude::*;

fn weight_set(kind: WeightKind, w: &[f64]) -> WeightSet {
    let keys = (0..w.len())
        .map(|i| WeightKey {
            subject: i,
            time: 1.0,
        })
        .collect();
    WeightSet::new(kind, keys, w.to_vec()).unwrap()
}

fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, len)
}

fn shifted(panel: &Panel, name: &str, a: f64, b: f64) -> Panel {
    let subjects = panel
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            let v = s.baseline[name];
            s.baseline.insert(name.to_string(), a + b * v);
            s
        })
        .collect();
    Panel::new(subjects, panel.tau()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trimming_is_idempotent_and_caps_at_the_threshold(
        w in weights(40),
        p in 0.5f64..=1.0,
        after in any::<bool>(),
    ) {
        let stage = if after { TrimStage::After } else { TrimStage::Before };
        let once = trim(&weight_set(WeightKind::Fiptiw, &w), p, stage).unwrap();
        let twice = trim(&once, p, stage).unwrap();
        prop_assert_eq!(once.entries(), twice.entries());
        let threshold = once.trim_record().unwrap().threshold;
        for (t, raw) in once.entries().iter().zip(&w) {
            prop_assert!(*t <= threshold);
            prop_assert!(*t == raw.min(threshold));
        }
    }

    #[test]
    fn trimming_at_one_is_the_identity(w in weights(25)) {
        let t = trim(&weight_set(WeightKind::Iiw, &w), 1.0, TrimStage::After).unwrap();
        prop_assert_eq!(t.entries(), &w[..]);
    }

    #[test]
    fn combining_is_commutative_and_associative(a in weights(12), b in weights(12), c in weights(12)) {
        let (a, b, c) = (
            weight_set(WeightKind::Iiw, &a),
            weight_set(WeightKind::Iptw, &b),
            weight_set(WeightKind::Ipcw, &c),
        );
        let ab = combine(&[&a, &b]).unwrap();
        let ba = combine(&[&b, &a]).unwrap();
        prop_assert_eq!(ab.entries(), ba.entries());
        prop_assert_eq!(ab.kind(), WeightKind::Fiptiw);
        let left = combine(&[&ab, &c]).unwrap();
        let right = combine(&[&a, &combine(&[&b, &c]).unwrap()]).unwrap();
        for (l, r) in left.entries().iter().zip(right.entries()) {
            prop_assert!((l - r).abs() <= 1e-12 * l.abs());
        }
    }

    #[test]
    fn cox_fit_is_shift_and_scale_equivariant(seed in 0u64..500, shift in -3.0f64..3.0, scale in 0.3f64..3.0) {
        let panel = random_panel(seed, 25, None);
        let spec = PhSpec::intensity(&["x1", "x2"]);
        let base = fit_ph(&panel, &spec);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let moved = fit_ph(&shifted(&panel, "x1", shift, scale), &spec).unwrap();
        prop_assert!((moved.gamma_hat[0] * scale - base.gamma_hat[0]).abs() < 1e-6);
        prop_assert!((moved.gamma_hat[1] - base.gamma_hat[1]).abs() < 1e-6);
    }

    #[test]
    fn information_is_positive_semidefinite(seed in 0u64..500, g0 in -1.0f64..1.0, g1 in -1.0f64..1.0) {
        let panel = random_panel(seed, 15, None);
        let spec = PhSpec::intensity(&["x1", "s"]);
        let info = information(&panel, &spec, &[g0, g1]).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &info);
        prop_assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-10 * m[(0, 0)].abs().max(1.0));
        for ev in m.symmetric_eigenvalues().iter() {
            prop_assert!(*ev >= -1e-9);
        }
    }

    #[test]
    fn counting_process_matches_observations(seed in 0u64..500, t in 0.0f64..5.0) {
        let panel = random_panel(seed, 8, None);
        for s in panel.subjects() {
            prop_assert_eq!(s.count_at(t), s.obs_times.iter().filter(|&&x| x <= t).count());
        }
    }

    #[test]
    fn risk_sets_shrink_and_match_brute_force(seed in 0u64..500) {
        let panel = random_panel(seed, 12, Some(0.2));
        let table = risk_table(&panel, EventSource::Observations, None);
        let mut prev = usize::MAX;
        for k in 0..table.len() {
            let t = table.times()[k];
            let mut got: Vec<usize> = table.at_risk(k).to_vec();
            got.sort_unstable();
            let expected: Vec<usize> = panel
                .subjects()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.censor_time >= t)
                .map(|(i, _)| i)
                .collect();
            prop_assert_eq!(&got, &expected);
            prop_assert!(got.len() <= prev);
            prev = got.len();
            for &e in table.events(k) {
                prop_assert!(got.contains(&e));
                prop_assert!(panel.subjects()[e].obs_times.contains(&t));
            }
        }
        prop_assert_eq!(table.n_events(), panel.n_observations());
    }

    #[test]
    fn gee_is_invariant_to_weight_scale(seed in 0u64..200, c in 0.01f64..100.0) {
        let panel = common::gaussian_panel(seed, 20);
        let spec = OutcomeSpec::gaussian(&["a", "b"]).with_intercept();
        let w = common::random_weights(&panel, seed + 1);
        let f1 = solve_gee(&panel, &spec, Some(&w)).unwrap();
        let f2 = solve_gee(&panel, &spec, Some(&w.scaled(c))).unwrap();
        for (a, b) in f1.beta_hat.iter().zip(&f2.beta_hat) {
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
