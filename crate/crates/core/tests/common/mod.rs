#![allow(dead_code)]

use fiptiw::gee::GeeDesign;
use fiptiw::panel::CovariateSeries;
use fiptiw::prelude::*;
use fiptiw::simgen::{censoring_time_ph, frailty_law, thinning_sample, SubjectCovariates};
use fiptiw::survival::{log_partial_likelihood, score};
use fiptiw::weights::{bernoulli_deviance, panel_keys, WeightKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A recurrent-event panel with baseline `x1` (normal), `x2` (binary) and a
/// step series `s`. Observation rate `exp(0.4 x1 - 0.3 x2)`.
pub fn random_panel(seed: u64, n: usize, tie_grid: Option<f64>) -> Panel {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let subjects = (0..n)
        .map(|i| {
            let x1: f64 = normal.sample(&mut r);
            let x2 = f64::from(u8::from(r.random::<f64>() < 0.5));
            let c = 2.0 + 3.0 * r.random::<f64>();
            let rate = (0.4 * x1 - 0.3 * x2).exp();
            let gap = Exp::new(rate).unwrap();
            let mut t = 0.0;
            let mut times = Vec::new();
            loop {
                t += gap.sample(&mut r);
                let tt = match tie_grid {
                    Some(g) => (t / g).ceil() * g,
                    None => t,
                };
                if tt > c {
                    break;
                }
                if times.last() != Some(&tt) {
                    times.push(tt);
                }
            }
            let mut s = Subject::new(format!("s{i}"), c);
            s.outcomes = times.iter().map(|_| normal.sample(&mut r)).collect();
            s.obs_times = times;
            s.baseline.insert("x1".into(), x1);
            s.baseline.insert("x2".into(), x2);
            let knot = 1.0 + r.random::<f64>();
            s.series.insert(
                "s".into(),
                CovariateSeries::step(vec![knot], vec![x1 + 1.0], 0.0),
            );
            s
        })
        .collect();
    Panel::new(subjects, 5.0).unwrap()
}

/// The five fixed Cox instances used by the grid-search oracle.
pub fn cox_instances() -> Vec<(Panel, PhSpec)> {
    vec![
        (random_panel(101, 6, None), PhSpec::intensity(&["x1"])),
        (random_panel(102, 10, None), PhSpec::intensity(&["x2"])),
        (
            random_panel(103, 12, None),
            PhSpec::intensity(&["x1", "x2"]),
        ),
        (random_panel(104, 9, Some(0.5)), PhSpec::intensity(&["x1"])),
        (random_panel(105, 10, None), PhSpec::intensity(&["s", "x2"])),
    ]
}

/// Six subjects; three censoring events strictly before `tau = 4`.
pub fn censoring_instance() -> Panel {
    let data = [
        (0.7, 1.0),
        (1.3, 0.0),
        (2.2, 1.0),
        (4.0, 0.0),
        (4.0, 1.0),
        (3.1, 0.0),
    ];
    let subjects = data
        .iter()
        .enumerate()
        .map(|(i, &(c, x))| {
            let mut s = Subject::new(format!("c{i}"), c);
            s.baseline.insert("x".into(), x);
            s.baseline.insert("v".into(), (i as f64 - 2.5) / 2.0);
            s
        })
        .collect();
    Panel::new(subjects, 4.0).unwrap()
}

/// Zooming grid search for the maximizer of `f` around `start`.
pub fn grid_maximize(f: impl Fn(&[f64]) -> f64, start: &[f64], half_width: f64) -> Vec<f64> {
    let p = start.len();
    let mut center = start.to_vec();
    let mut step = half_width / 20.0;
    while step > 1e-7 {
        let points = 41usize;
        let total = points.pow(p as u32);
        let mut best = (f64::NEG_INFINITY, center.clone());
        for idx in 0..total {
            let mut cand = center.clone();
            let mut rest = idx;
            for c in cand.iter_mut() {
                let k = rest % points;
                rest /= points;
                *c += (k as f64 - 20.0) * step;
            }
            let v = f(&cand);
            if v > best.0 {
                best = (v, cand);
            }
        }
        center = best.1;
        step /= 8.0;
    }
    center
}

/// Largest `|gamma_newton - gamma_grid|` over the fixed Cox instances.
pub fn cox_grid_gap() -> f64 {
    cox_instances()
        .iter()
        .map(|(panel, spec)| {
            let fit = fit_ph(panel, spec).unwrap();
            let grid = grid_maximize(
                |g| log_partial_likelihood(panel, spec, g).unwrap(),
                &vec![0.0; spec.covariates.len()],
                4.0,
            );
            fit.gamma_hat
                .iter()
                .zip(&grid)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

pub fn logistic_panel(seed: u64, n: usize) -> Panel {
    let mut r = rng(seed);
    let subjects = (0..n)
        .map(|i| {
            let w: f64 = r.random();
            let pi = 1.0 / (1.0 + (-(-0.5 + 1.5 * w)).exp());
            let d = f64::from(u8::from(r.random::<f64>() < pi));
            let mut s = Subject::new(format!("p{i}"), 1.0);
            s.baseline.insert("W".into(), w);
            s.baseline.insert("D".into(), d);
            s
        })
        .collect();
    Panel::new(subjects, 1.0).unwrap()
}

/// `|alpha_irls - alpha_grid|` on a fixed logistic instance.
pub fn logistic_grid_gap() -> f64 {
    let panel = logistic_panel(7, 60);
    let fit = fit_propensity(&panel, "D", &["W"], true).unwrap();
    let w: Vec<f64> = panel.subjects().iter().map(|s| s.baseline["W"]).collect();
    let d: Vec<f64> = panel.subjects().iter().map(|s| s.baseline["D"]).collect();
    let loglik = |a: &[f64]| {
        let lp: Vec<f64> = w.iter().map(|&x| a[0] + a[1] * x).collect();
        -0.5 * bernoulli_deviance(&lp, &d)
    };
    let grid = grid_maximize(loglik, &[0.0, 0.0], 4.0);
    fit.alpha_hat
        .iter()
        .zip(&grid)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Largest relative gap between the analytic score and central differences
/// of the log partial likelihood over 20 random `(panel, gamma)` draws.
pub fn score_fd_gap() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng(99);
    for draw in 0..20u64 {
        let panel = random_panel(
            500 + draw,
            15,
            if draw % 4 == 0 { Some(0.25) } else { None },
        );
        let spec = PhSpec::intensity(&["x1", "x2", "s"]);
        let gamma: Vec<f64> = (0..3).map(|_| r.random::<f64>() * 1.6 - 0.8).collect();
        let u = score(&panel, &spec, &gamma).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut up = gamma.clone();
            let mut down = gamma.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_partial_likelihood(&panel, &spec, &up).unwrap()
                - log_partial_likelihood(&panel, &spec, &down).unwrap())
                / (2.0 * h);
            worst = worst.max((u[j] - fd).abs() / u[j].abs().max(1.0));
        }
    }
    worst
}

/// Gaussian panel with intercept, covariates `a`, `b` and a linear offset.
pub fn gaussian_panel(seed: u64, n: usize) -> Panel {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let subjects = (0..n)
        .map(|i| {
            let a: f64 = normal.sample(&mut r);
            let b = f64::from(u8::from(r.random::<f64>() < 0.4));
            let k = 1 + (r.random::<f64>() * 4.0) as usize;
            let mut s = Subject::new(format!("g{i}"), 10.0);
            let mut t = 0.0;
            for _ in 0..k {
                t += 0.1 + r.random::<f64>() * 2.0;
                s.obs_times.push(t);
                s.outcomes
                    .push(1.0 + 0.5 * a - 0.8 * b + (2.0 - t) + normal.sample(&mut r));
            }
            s.baseline.insert("a".into(), a);
            s.baseline.insert("b".into(), b);
            s
        })
        .collect();
    Panel::new(subjects, 10.0).unwrap()
}

pub fn random_weights(panel: &Panel, seed: u64) -> WeightSet {
    let mut r = rng(seed);
    let keys = panel_keys(panel);
    let entries = keys.iter().map(|_| 0.2 + 3.0 * r.random::<f64>()).collect();
    WeightSet::new(WeightKind::Product, keys, entries).unwrap()
}

/// `max |beta_gee - beta_wls|` for the identity link.
pub fn wls_gap() -> f64 {
    let panel = gaussian_panel(21, 40);
    let spec = OutcomeSpec::gaussian(&["a", "b"])
        .with_intercept()
        .with_offset(Offset::Linear {
            intercept: 2.0,
            slope: -1.0,
        });
    let w = random_weights(&panel, 22);
    let fit = solve_gee(&panel, &spec, Some(&w)).unwrap();
    let design = GeeDesign::new(&panel, &spec).unwrap();
    let x = design.design_matrix();
    let y = design.outcomes() - design.offsets();
    let wv = DVector::from_vec(w.entries().to_vec());
    let xtw = DMatrix::from_fn(x.ncols(), x.nrows(), |j, i| x[(i, j)] * wv[i]);
    let beta = (&xtw * x).try_inverse().unwrap() * (&xtw * y);
    fit.beta_hat
        .iter()
        .zip(beta.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Two-sided Kolmogorov–Smirnov p-value of `sample` against `cdf`.
pub fn ks_p_value(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub const DRAWS: usize = 10_000;

/// Poisson counts of `N(tau)` under constant rate: mean and variance at 3 sigma.
pub fn constant_rate_counts_ok() -> (bool, String) {
    let (rate, tau) = (2.0, 5.0);
    let lambda = rate * tau;
    let mut r = rng(1);
    let counts: Vec<f64> = (0..DRAWS)
        .map(|_| thinning_sample(|_| rate, rate, tau, &mut r).unwrap().len() as f64)
        .collect();
    let (m, v) = mean_var(&counts);
    let n = DRAWS as f64;
    let mean_ok = (m - lambda).abs() <= 3.0 * (lambda / n).sqrt();
    let var_ok = (v - lambda).abs() <= 3.0 * ((lambda + 2.0 * lambda * lambda) / n).sqrt();
    (
        mean_ok && var_ok,
        format!("mean {m:.3}, var {v:.3}, expected {lambda}"),
    )
}

/// Bender inversion with `eta = 0`: `C^2 / 20 ~ Exp(1)`.
pub fn bender_ks_p() -> f64 {
    let mut r = rng(4);
    let x = SubjectCovariates {
        w: 0.3,
        d: true,
        z: 1.2,
    };
    let mut scaled: Vec<f64> = (0..DRAWS)
        .map(|_| {
            let u: f64 = 1.0 - r.random::<f64>();
            let c = censoring_time_ph(u, [0.0; 3], 0.1, &x, f64::INFINITY);
            c * c / 20.0
        })
        .collect();
    ks_p_value(&mut scaled, |v| 1.0 - (-v).exp())
}

/// Gamma frailty sample mean and variance within 3 sigma of `(1, 0.1)`.
pub fn frailty_moments_ok() -> (bool, String) {
    let law = frailty_law(0.1);
    let mut r = rng(5);
    let draws: Vec<f64> = (0..DRAWS).map(|_| law.sample(&mut r)).collect();
    let (m, v) = mean_var(&draws);
    let n = DRAWS as f64;
    // Gamma(k = 10, theta = 0.1): central fourth moment 3 k (k + 2) theta^4.
    let mu4 = 3.0 * 10.0 * 12.0 * 1e-4;
    let mean_ok = (m - 1.0).abs() <= 3.0 * (0.1 / n).sqrt();
    let var_ok = (v - 0.1).abs() <= 3.0 * ((mu4 - 0.01) / n).sqrt();
    (mean_ok && var_ok, format!("mean {m:.4}, var {v:.4}"))
}
