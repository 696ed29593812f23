mod common;

use common::*;
use fiptiw::prelude::*;
use fiptiw::simgen::{
    censoring_time_ph, gen_covariates, gen_outcome, thinning_sample, Component, SubjectCovariates,
};
use rand_distr::Distribution;

#[test]
fn constant_rate_thinning_is_poisson() {
    let (ok, msg) = constant_rate_counts_ok();
    assert!(ok, "{msg}");
}

#[test]
fn thinning_reproduces_a_linear_intensity() {
    // lambda(t) = t / 2 on (0, 4]: given N, times are iid with cdf t^2 / 16.
    let tau = 4.0;
    let mut r = rng(2);
    let mut times = Vec::new();
    let mut counts = Vec::new();
    for _ in 0..2000 {
        let t = thinning_sample(|t| t / 2.0, 2.0, tau, &mut r).unwrap();
        counts.push(t.len() as f64);
        times.extend(t);
    }
    let p = ks_p_value(&mut times, |t| (t / tau).powi(2));
    assert!(p > 0.001, "KS p = {p}");
    let (m, _) = mean_var(&counts);
    assert!((m - 4.0).abs() < 3.0 * (4.0f64 / 2000.0).sqrt());
}

#[test]
fn thinning_rejects_an_exceeded_bound() {
    let mut r = rng(3);
    assert!(thinning_sample(|t| t, 1.0, 5.0, &mut r).is_err());
}

#[test]
fn bender_censoring_squared_is_exponential() {
    let p = bender_ks_p();
    assert!(p > 0.001, "KS p = {p}");
}

#[test]
fn bender_censoring_is_capped_at_tau() {
    let x = SubjectCovariates {
        w: 0.5,
        d: false,
        z: 2.0,
    };
    assert_eq!(censoring_time_ph(1e-12, [0.4, 0.5, 0.6], 0.1, &x, 7.0), 7.0);
}

#[test]
fn frailty_has_unit_mean_and_set_variance() {
    let (ok, msg) = frailty_moments_ok();
    assert!(ok, "{msg}");
}

#[test]
fn covariates_follow_their_laws() {
    let spec = DgpSpec {
        n: 20_000,
        ..DgpSpec::default()
    };
    let x = gen_covariates(
        &spec,
        &mut RngStream::new(6, 1, 0).rng(Component::Covariates),
    );
    let n = x.len() as f64;
    let d: Vec<f64> = x.iter().map(|c| c.d_value()).collect();
    let (md, _) = mean_var(&d);
    assert!((md - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    let w: Vec<f64> = x.iter().map(|c| c.w).collect();
    let (mw, vw) = mean_var(&w);
    assert!((mw - 0.5).abs() < 0.01 && (vw - 1.0 / 12.0).abs() < 0.005);
    for (treated, mean, var) in [(false, 2.0, 1.0), (true, 0.0, 0.5)] {
        let z: Vec<f64> = x.iter().filter(|c| c.d == treated).map(|c| c.z).collect();
        let (mz, vz) = mean_var(&z);
        let k = z.len() as f64;
        assert!((mz - mean).abs() < 3.0 * (var / k).sqrt(), "Z mean {mz}");
        assert!(
            (vz - var).abs() < 3.0 * var * (2.0 / k).sqrt(),
            "Z var {vz}"
        );
    }
}

#[test]
fn logistic_treatment_probabilities_match() {
    let spec = DgpSpec {
        n: 20_000,
        treatment: TreatmentSpec::Logistic {
            alpha0: -1.0,
            alpha1: 1.0,
        },
        ..DgpSpec::default()
    };
    let x = gen_covariates(
        &spec,
        &mut RngStream::new(7, 1, 0).rng(Component::Covariates),
    );
    let expected: f64 = x
        .iter()
        .map(|c| spec.treatment.probability(c.w))
        .sum::<f64>()
        / x.len() as f64;
    let observed = x.iter().filter(|c| c.d).count() as f64 / x.len() as f64;
    assert!((observed - expected).abs() < 3.0 * (0.25 / x.len() as f64).sqrt());
}

#[test]
fn outcome_moments_at_t_equal_one() {
    // ln 1 = 0 removes the G term; with beta3 = 0 the variance is 0.25 + 1.
    let spec = DgpSpec {
        beta: [0.5, 2.0, 0.0],
        ..DgpSpec::default()
    };
    let mut r = rng(8);
    let re = rand_distr::Normal::new(0.0, 0.5).unwrap();
    let noise = rand_distr::Normal::new(0.0, 1.0).unwrap();
    for (d, mean) in [(true, 1.5), (false, 1.0)] {
        let x = SubjectCovariates { w: 0.7, d, z: 0.3 };
        let y: Vec<f64> = (0..DRAWS)
            .map(|_| gen_outcome(&spec, &x, 1.0, re.sample(&mut r), noise.sample(&mut r)))
            .collect();
        let (m, v) = mean_var(&y);
        assert!(
            (m - mean).abs() < 3.0 * (1.25 / DRAWS as f64).sqrt(),
            "mean {m}"
        );
        assert!(
            (v - 1.25).abs() < 3.0 * 1.25 * (2.0 / DRAWS as f64).sqrt(),
            "var {v}"
        );
    }
}

#[test]
fn observation_counts_match_the_integrated_intensity_and_are_overdispersed() {
    // Sim II design with gamma2 = 0: E N = E[nu] E[exp(g1 D + g3 Z)] E[C^1.5] / 1.5 / 2.
    let spec = DgpSpec {
        n: 400,
        gamma: [0.5, 0.0, 0.6],
        ..DgpSpec::default()
    };
    let mut counts = Vec::new();
    for rep in 0..10 {
        let sim = gen_panel(&spec, RngStream::new(10, 2, rep)).unwrap();
        counts.extend(sim.panel.subjects().iter().map(|s| s.n_obs() as f64));
    }
    let ez0 = (0.6 * 2.0 + 0.36 * 1.0 / 2.0f64).exp();
    let ez1 = (0.5 + 0.36 * 0.5 / 2.0f64).exp();
    // C ~ U(3.5, 7): E C^1.5 = (7^2.5 - 3.5^2.5) / (2.5 * 3.5).
    let ec = (7f64.powf(2.5) - 3.5f64.powf(2.5)) / (2.5 * 3.5);
    let expected = 0.5 * (ez0 + ez1) * ec / 1.5 / 2.0;
    let (m, v) = mean_var(&counts);
    assert!(
        (m - expected).abs() < 3.0 * (v / counts.len() as f64).sqrt(),
        "mean {m} vs {expected}"
    );
    assert!(v > 1.5 * m, "variance {v} vs mean {m}");
}

#[test]
fn observation_times_stay_within_censoring() {
    let sim = gen_panel(&DgpSpec::default(), RngStream::new(11, 3, 0)).unwrap();
    for s in sim.panel.subjects() {
        assert!(s.obs_times.iter().all(|&t| t > 0.0 && t <= s.censor_time));
        assert!(s.obs_times.windows(2).all(|w| w[0] < w[1]));
        assert!((3.5..=7.0).contains(&s.censor_time));
    }
}

#[test]
fn streams_are_reproducible_and_component_separated() {
    let a = gen_panel(&DgpSpec::default(), RngStream::new(12, 4, 3)).unwrap();
    let b = gen_panel(&DgpSpec::default(), RngStream::new(12, 4, 3)).unwrap();
    assert_eq!(a.panel, b.panel);
    let c = gen_panel(
        &DgpSpec {
            beta: [0.5, 0.0, 0.0],
            ..DgpSpec::default()
        },
        RngStream::new(12, 4, 3),
    )
    .unwrap();
    // Outcome coefficients do not touch the covariate, censoring or
    // observation streams.
    for (s, t) in a.panel.subjects().iter().zip(c.panel.subjects()) {
        assert_eq!(s.obs_times, t.obs_times);
        assert_eq!(s.censor_time, t.censor_time);
    }
}
