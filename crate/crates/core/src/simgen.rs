//! Synthetic irregular longitudinal panels: baseline covariates, treatment,
//! frailty-modulated observation times drawn by thinning, outcomes with a
//! subject random effect, and uniform or proportional-hazards censoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{AnalyticForm, CovariateSeries, Panel, PanelError, Subject};
use crate::weights::expit;

/// Grid resolution for the dominating-rate search.
pub const BOUND_GRID: usize = 10_000;
/// Safety factor applied to the grid maximum.
pub const BOUND_INFLATION: f64 = 1.001;

pub const TREATMENT: &str = "D";
pub const AUXILIARY: &str = "W";
pub const CONFOUNDER: &str = "Z";
pub const TIME_VARYING: &str = "G";
pub const OFFSET: &str = "offset";

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("intensity {value} at t = {t} exceeds the dominating rate {bound}")]
    BoundViolation { t: f64, value: f64, bound: f64 },
    #[error("invalid intensity value {value} at t = {t}")]
    InvalidIntensity { t: f64, value: f64 },
    #[error("invalid generator specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreatmentSpec {
    Randomized {
        pi: f64,
    },
    /// `P(D = 1 | W) = expit(alpha0 + alpha1 W)`.
    Logistic {
        alpha0: f64,
        alpha1: f64,
    },
}

impl TreatmentSpec {
    pub fn probability(&self, w: f64) -> f64 {
        match *self {
            TreatmentSpec::Randomized { pi } => pi,
            TreatmentSpec::Logistic { alpha0, alpha1 } => expit(alpha0 + alpha1 * w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CensoringSpec {
    /// `C ~ U(tau / 2, tau)`.
    Uniform,
    /// Hazard `rate * t * exp(eta1 D + eta2 W + eta3 Z)`, inverted and
    /// truncated at `tau`.
    ProportionalHazards { eta: [f64; 3], rate: f64 },
    /// Everyone followed to `tau`.
    Administrative,
}

/// Normal law of `Z` within each treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderLaw {
    pub mean_untreated: f64,
    pub var_untreated: f64,
    pub mean_treated: f64,
    pub var_treated: f64,
}

impl Default for ConfounderLaw {
    fn default() -> Self {
        ConfounderLaw {
            mean_untreated: 2.0,
            var_untreated: 1.0,
            mean_treated: 0.0,
            var_treated: 0.5,
        }
    }
}

impl ConfounderLaw {
    pub fn mean(&self, treated: bool) -> f64 {
        if treated {
            self.mean_treated
        } else {
            self.mean_untreated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub treatment: TreatmentSpec,
    /// Outcome coefficients on `D`, centered `G(t)` and centered `Z`.
    pub beta: [f64; 3],
    /// Intensity coefficients on `D`, `G(t)` and `Z`.
    pub gamma: [f64; 3],
    #[serde(default = "default_frailty_variance")]
    pub frailty_variance: f64,
    pub censoring: CensoringSpec,
    #[serde(default)]
    pub confounder: ConfounderLaw,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_random_effect_variance")]
    pub random_effect_variance: f64,
}

fn default_tau() -> f64 {
    7.0
}
fn default_frailty_variance() -> f64 {
    0.1
}
fn default_noise_sd() -> f64 {
    1.0
}
fn default_random_effect_variance() -> f64 {
    0.25
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            n: 100,
            tau: 7.0,
            treatment: TreatmentSpec::Randomized { pi: 0.5 },
            beta: [0.5, 2.0, 1.0],
            gamma: [0.5, 0.3, 0.6],
            frailty_variance: 0.1,
            censoring: CensoringSpec::Uniform,
            confounder: ConfounderLaw::default(),
            noise_sd: 1.0,
            random_effect_variance: 0.25,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        let c = &self.confounder;
        if !(c.var_untreated > 0.0 && c.var_treated > 0.0) {
            return bad("confounder variances must be positive");
        }
        if !(self.frailty_variance > 0.0
            && self.noise_sd >= 0.0
            && self.random_effect_variance >= 0.0)
        {
            return bad("variances must be positive");
        }
        let finite = self.beta.iter().chain(&self.gamma).all(|v| v.is_finite());
        if !finite {
            return bad("beta and gamma must be finite");
        }
        match self.treatment {
            TreatmentSpec::Randomized { pi } if !(0.0..=1.0).contains(&pi) => {
                return bad("pi must lie in [0, 1]")
            }
            TreatmentSpec::Logistic { alpha0, alpha1 }
                if !(alpha0.is_finite() && alpha1.is_finite()) =>
            {
                return bad("alpha must be finite")
            }
            _ => {}
        }
        if let CensoringSpec::ProportionalHazards { eta, rate } = self.censoring {
            if !(rate > 0.0 && eta.iter().all(|v| v.is_finite())) {
                return bad("censoring rate must be positive and eta finite");
            }
        }
        Ok(())
    }
}

/// Which random quantity a generator stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Covariates = 0,
    Censoring = 1,
    Observations = 2,
    Outcomes = 3,
}

/// Reproducible per-replication randomness: a ChaCha8 key from the master
/// seed and scenario, and one stream per `(replication, component)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub scenario: u64,
    pub replication: u64,
}

impl RngStream {
    pub fn new(seed: u64, scenario: u64, replication: u64) -> Self {
        RngStream {
            seed,
            scenario,
            replication,
        }
    }

    pub fn rng(&self, component: Component) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.scenario)));
        rng.set_stream(
            self.replication
                .wrapping_mul(4)
                .wrapping_add(component as u64),
        );
        rng
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit id of a scenario label (FNV-1a).
pub fn scenario_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Uniform draw on `(0, 1]`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectCovariates {
    pub w: f64,
    pub d: bool,
    pub z: f64,
}

impl SubjectCovariates {
    pub fn d_value(&self) -> f64 {
        if self.d {
            1.0
        } else {
            0.0
        }
    }

    /// `G(t) = W ln t`.
    pub fn g(&self, t: f64) -> f64 {
        self.w * t.ln()
    }
}

pub fn gen_covariates<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Vec<SubjectCovariates> {
    let c = &spec.confounder;
    let z0 = Normal::new(c.mean_untreated, c.var_untreated.sqrt()).expect("validated variance");
    let z1 = Normal::new(c.mean_treated, c.var_treated.sqrt()).expect("validated variance");
    (0..spec.n)
        .map(|_| {
            let w: f64 = rng.random();
            let d = rng.random::<f64>() < spec.treatment.probability(w);
            let z = if d { z1.sample(rng) } else { z0.sample(rng) };
            SubjectCovariates { w, d, z }
        })
        .collect()
}

/// `1.001 * max lambda` over a uniform grid of `BOUND_GRID` points on `(0, tau]`.
pub fn dominating_rate(lambda: impl Fn(f64) -> f64, tau: f64) -> f64 {
    let step = tau / BOUND_GRID as f64;
    let max = (1..=BOUND_GRID)
        .map(|j| {
            lambda(if j == BOUND_GRID {
                tau
            } else {
                j as f64 * step
            })
        })
        .fold(0.0, f64::max);
    BOUND_INFLATION * max
}

/// Lewis–Shedler thinning of a nonhomogeneous Poisson process on `(0, tau]`.
///
/// Candidates arrive from a rate-`bound` homogeneous process and are kept with
/// probability `lambda(s) / bound`; the loop runs until a candidate passes
/// `tau`, and a final kept time beyond `tau` is dropped. Every candidate draws
/// both uniforms, so the number of draws depends only on the candidates.
pub fn thinning_sample<R: Rng + ?Sized>(
    lambda: impl Fn(f64) -> f64,
    bound: f64,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    if bound <= 0.0 {
        return Ok(Vec::new());
    }
    let mut times = Vec::new();
    let mut s = 0.0;
    while s < tau {
        let u = open_unit(rng);
        s += -u.ln() / bound;
        let r: f64 = rng.random();
        let value = lambda(s);
        if s <= tau {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::InvalidIntensity { t: s, value });
            }
            if value > bound {
                return Err(SimError::BoundViolation { t: s, value, bound });
            }
        }
        if r <= value / bound {
            times.push(s);
        }
    }
    if times.last().is_some_and(|&t| t > tau) {
        times.pop();
    }
    Ok(times)
}

/// Intensity `nu sqrt(t)/2 exp(gamma1 D + gamma2 W ln t + gamma3 Z)`.
pub fn observation_intensity(
    spec: &DgpSpec,
    x: &SubjectCovariates,
    nu: f64,
) -> impl Fn(f64) -> f64 {
    let [g1, g2, g3] = spec.gamma;
    let level = nu * 0.5 * (g1 * x.d_value() + g3 * x.z).exp();
    let power = 0.5 + g2 * x.w;
    move |t: f64| level * t.powf(power)
}

/// Uncensored observation times on `(0, tau]`.
///
/// The intensity is log-linear in `ln t`, so its grid maximum sits at one of
/// the two grid ends; only those are evaluated.
pub fn gen_observation_times<R: Rng + ?Sized>(
    spec: &DgpSpec,
    x: &SubjectCovariates,
    nu: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    let lambda = observation_intensity(spec, x, nu);
    let first = spec.tau / BOUND_GRID as f64;
    let bound = BOUND_INFLATION * lambda(first).max(lambda(spec.tau));
    thinning_sample(lambda, bound, spec.tau, rng)
}

/// Outcome at `t` given the subject's random effect and the observation noise.
pub fn gen_outcome(
    spec: &DgpSpec,
    x: &SubjectCovariates,
    t: f64,
    random_effect: f64,
    noise: f64,
) -> f64 {
    let [b1, b2, b3] = spec.beta;
    let mean_w = 0.5;
    (2.0 - t)
        + b1 * x.d_value()
        + b2 * (x.w - mean_w) * t.ln()
        + b3 * (x.z - spec.confounder.mean(x.d))
        + random_effect
        + noise
}

pub fn gen_censoring_uniform<R: Rng + ?Sized>(tau: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    tau / 2.0 + u * (tau / 2.0)
}

/// Inverse of `H(t) = rate t^2 / 2 * exp(eta^T x)` at `-ln U`, capped at `tau`.
pub fn censoring_time_ph(u: f64, eta: [f64; 3], rate: f64, x: &SubjectCovariates, tau: f64) -> f64 {
    let lp = eta[0] * x.d_value() + eta[1] * x.w + eta[2] * x.z;
    let c = ((2.0 / rate) * (-u.ln()) * (-lp).exp()).sqrt();
    c.min(tau)
}

pub fn gen_censoring_ph<R: Rng + ?Sized>(
    eta: [f64; 3],
    rate: f64,
    x: &SubjectCovariates,
    tau: f64,
    rng: &mut R,
) -> f64 {
    censoring_time_ph(rng.random::<f64>(), eta, rate, x, tau)
}

pub fn frailty_law(variance: f64) -> Gamma<f64> {
    Gamma::new(1.0 / variance, variance).expect("validated variance")
}

/// A generated panel with the latent quantities that produced it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: Panel,
    pub covariates: Vec<SubjectCovariates>,
    pub frailty: Vec<f64>,
    pub propensity: Vec<f64>,
}

pub fn gen_panel(spec: &DgpSpec, stream: RngStream) -> Result<Simulated, SimError> {
    spec.validate()?;
    let tau = spec.tau;
    let covariates = gen_covariates(spec, &mut stream.rng(Component::Covariates));

    let mut c_rng = stream.rng(Component::Censoring);
    let censor: Vec<f64> = covariates
        .iter()
        .map(|x| match spec.censoring {
            CensoringSpec::Uniform => gen_censoring_uniform(tau, &mut c_rng),
            CensoringSpec::ProportionalHazards { eta, rate } => {
                gen_censoring_ph(eta, rate, x, tau, &mut c_rng)
            }
            CensoringSpec::Administrative => tau,
        })
        .collect();

    let mut o_rng = stream.rng(Component::Observations);
    let frailty_dist = frailty_law(spec.frailty_variance);
    let mut frailty = Vec::with_capacity(spec.n);
    let mut all_times = Vec::with_capacity(spec.n);
    for x in &covariates {
        let nu = frailty_dist.sample(&mut o_rng);
        frailty.push(nu);
        all_times.push(gen_observation_times(spec, x, nu, &mut o_rng)?);
    }

    let mut y_rng = stream.rng(Component::Outcomes);
    let re = Normal::new(0.0, spec.random_effect_variance.sqrt()).expect("validated variance");
    let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
    let mut subjects = Vec::with_capacity(spec.n);
    for (i, x) in covariates.iter().enumerate() {
        let phi = re.sample(&mut y_rng);
        // Noise is drawn for every uncensored time so outcomes do not depend
        // on where censoring falls.
        let mut s = Subject::new((i + 1).to_string(), censor[i]);
        for &t in &all_times[i] {
            let y = gen_outcome(spec, x, t, phi, noise.sample(&mut y_rng));
            if t <= censor[i] {
                s.obs_times.push(t);
                s.outcomes.push(y);
            }
        }
        s.baseline.insert(TREATMENT.into(), x.d_value());
        s.baseline.insert(AUXILIARY.into(), x.w);
        s.baseline.insert(CONFOUNDER.into(), x.z);
        s.series.insert(
            TIME_VARYING.into(),
            CovariateSeries::Analytic {
                form: AnalyticForm::ScaledLog { scale: x.w },
            },
        );
        s.series.insert(
            OFFSET.into(),
            CovariateSeries::Analytic {
                form: AnalyticForm::Linear {
                    intercept: 2.0,
                    slope: -1.0,
                },
            },
        );
        subjects.push(s);
    }
    let propensity = covariates
        .iter()
        .map(|x| spec.treatment.probability(x.w))
        .collect();
    Ok(Simulated {
        panel: Panel::new(subjects, tau)?,
        covariates,
        frailty,
        propensity,
    })
}

/// Replaces every outcome by `1{Y > 2 - t}`. With `beta1 = 0` the centered
/// outcome is symmetric about zero in both arms, so `P(Y = 1 | D, t) = 1/2`
/// and the true treatment odds ratio is 1.
pub fn dichotomize(panel: &Panel) -> Panel {
    let subjects = panel
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for (y, &t) in s.outcomes.iter_mut().zip(&s.obs_times) {
                *y = f64::from(u8::from(*y > 2.0 - t));
            }
            s
        })
        .collect();
    Panel::new(subjects, panel.tau()).expect("same shape as a valid panel")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        RngStream::new(seed, 1, 0).rng(Component::Observations)
    }

    #[test]
    fn zero_rate_gives_no_events() {
        let t = thinning_sample(|_| 0.0, 0.0, 7.0, &mut rng(1)).unwrap();
        assert!(t.is_empty());
        let spec = DgpSpec::default();
        let x = SubjectCovariates {
            w: 0.5,
            d: false,
            z: 2.0,
        };
        assert!(gen_observation_times(&spec, &x, 0.0, &mut rng(2))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn bound_violation_is_an_error() {
        let err = thinning_sample(|t| t, 1.0, 7.0, &mut rng(3)).unwrap_err();
        assert!(matches!(err, SimError::BoundViolation { .. }));
    }

    #[test]
    fn times_increase_within_tau() {
        let mut r = rng(4);
        for _ in 0..200 {
            let t = thinning_sample(|t| t.sqrt(), 3.0, 7.0, &mut r).unwrap();
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            assert!(t.iter().all(|&s| s > 0.0 && s <= 7.0));
        }
    }

    #[test]
    fn outcome_with_noise_zeroed() {
        let spec = DgpSpec::default();
        let x = SubjectCovariates {
            w: 0.5,
            d: false,
            z: 2.0,
        };
        assert_eq!(gen_outcome(&spec, &x, 1.0, 0.0, 0.0), 1.0 + 0.0);
        // mu(1) = 1; every centered term vanishes.
        let x1 = SubjectCovariates {
            w: 0.9,
            d: true,
            z: 0.0,
        };
        assert!((gen_outcome(&spec, &x1, 1.0, 0.0, 0.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ph_censoring_limits() {
        let x = SubjectCovariates {
            w: 0.3,
            d: true,
            z: 1.0,
        };
        let c = censoring_time_ph(1.0 - 1e-15, [0.4, 0.2, 0.6], 0.1, &x, 7.0);
        assert!(c < 1e-6);
        assert_eq!(censoring_time_ph(1e-300, [0.0; 3], 0.1, &x, 7.0), 7.0);
    }

    #[test]
    fn uniform_censoring_support() {
        let mut r = rng(5);
        for _ in 0..10_000 {
            let c = gen_censoring_uniform(7.0, &mut r);
            assert!(c >= 3.5 && c < 7.0);
        }
    }

    #[test]
    fn same_stream_same_panel() {
        let spec = DgpSpec::default();
        let a = gen_panel(&spec, RngStream::new(9, 2, 3)).unwrap();
        let b = gen_panel(&spec, RngStream::new(9, 2, 3)).unwrap();
        assert_eq!(a.panel, b.panel);
        let c = gen_panel(&spec, RngStream::new(9, 2, 4)).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn administrative_censoring_gives_superset() {
        let spec = DgpSpec::default();
        let full = DgpSpec {
            censoring: CensoringSpec::Administrative,
            ..spec.clone()
        };
        let stream = RngStream::new(11, 5, 0);
        let a = gen_panel(&spec, stream).unwrap();
        let b = gen_panel(&full, stream).unwrap();
        for (sa, sb) in a.panel.subjects().iter().zip(b.panel.subjects()) {
            assert!(sa.obs_times.iter().all(|t| sb.obs_times.contains(t)));
            for (t, y) in sa.obs_times.iter().zip(&sa.outcomes) {
                let k = sb.obs_times.iter().position(|s| s == t).unwrap();
                assert_eq!(sb.outcomes[k], *y);
            }
        }
    }

    #[test]
    fn g_series_vanishes_at_one() {
        let sim = gen_panel(&DgpSpec::default(), RngStream::new(1, 1, 1)).unwrap();
        for s in sim.panel.subjects() {
            assert_eq!(sim.panel.covariate_at(s, TIME_VARYING, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = DgpSpec {
            n: 1,
            ..DgpSpec::default()
        };
        assert!(matches!(
            gen_panel(&spec, RngStream::new(0, 0, 0)),
            Err(SimError::InvalidSpec(_))
        ));
    }
}
