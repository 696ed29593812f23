//! Weighted GEE with an independence working correlation, for Gaussian
//! (identity link) and Bernoulli (logit link) outcomes, plus a subject-cluster
//! sandwich covariance and a cubic B-spline time basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Panel, PanelError};
use crate::weights::{expit, quantile_type7, WeightKey, WeightSet};

pub const GEE_TOL: f64 = 1e-8;
pub const GEE_MAX_ITER: usize = 50;
const Z_95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum GeeError {
    #[error("rank-deficient design")]
    RankDeficient,
    #[error("logit GEE did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("Bernoulli outcome must be 0/1, got {0}")]
    NonBinaryOutcome(f64),
    #[error("{got} observations for {p} coefficients")]
    InsufficientData { got: usize, p: usize },
    #[error("weights do not match the panel's observations")]
    WeightMismatch,
    #[error("invalid outcome specification: {0}")]
    InvalidSpec(String),
    #[error("spline: {0}")]
    Spline(String),
    #[error("coefficient vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Outcome distribution with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Identity link, constant variance.
    Gaussian,
    /// Logit link, variance `mu (1 - mu)`.
    Bernoulli,
}

/// Known part of the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Offset {
    #[default]
    None,
    /// `intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
}

impl Offset {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Offset::None => 0.0,
            Offset::Linear { intercept, slope } => intercept + slope * t,
        }
    }
}

/// Cubic B-spline in time. Boundary knots default to the pooled observation
/// time range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub knots: Vec<f64>,
    #[serde(default)]
    pub boundary: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub family: Family,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub offset: Offset,
    #[serde(default)]
    pub spline: Option<SplineSpec>,
}

impl OutcomeSpec {
    pub fn gaussian<S: AsRef<str>>(covariates: &[S]) -> Self {
        OutcomeSpec {
            family: Family::Gaussian,
            covariates: covariates.iter().map(|s| s.as_ref().to_string()).collect(),
            intercept: false,
            offset: Offset::None,
            spline: None,
        }
    }

    pub fn bernoulli<S: AsRef<str>>(covariates: &[S]) -> Self {
        OutcomeSpec {
            family: Family::Bernoulli,
            ..OutcomeSpec::gaussian(covariates)
        }
    }

    pub fn with_intercept(mut self) -> Self {
        self.intercept = true;
        self
    }

    pub fn with_offset(mut self, offset: Offset) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_spline(mut self, spline: SplineSpec) -> Self {
        self.spline = Some(spline);
        self
    }

    fn validate(&self) -> Result<(), GeeError> {
        if self.spline.is_some() && self.offset != Offset::None {
            return Err(GeeError::InvalidSpec(
                "a spline time trend and a closed-form offset are mutually exclusive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome, offset, design and cluster for every observation, in panel order.
#[derive(Debug, Clone)]
pub struct GeeDesign {
    pub names: Vec<String>,
    pub family: Family,
    x: DMatrix<f64>,
    y: DVector<f64>,
    offset: DVector<f64>,
    cluster: Vec<usize>,
    keys: Vec<WeightKey>,
}

impl GeeDesign {
    pub fn new(panel: &Panel, spec: &OutcomeSpec) -> Result<Self, GeeError> {
        spec.validate()?;
        let keys: Vec<WeightKey> = crate::weights::panel_keys(panel);
        let n = keys.len();
        let subjects = panel.subjects();
        let times: Vec<f64> = keys.iter().map(|k| k.time).collect();

        let mut names = Vec::new();
        let mut blocks: Vec<Vec<f64>> = Vec::new();
        if spec.intercept {
            names.push("(intercept)".to_string());
            blocks.push(vec![1.0; n]);
        }
        if let Some(sp) = &spec.spline {
            let boundary = match sp.boundary {
                Some(b) => b,
                None => time_range(&times)?,
            };
            let basis = spline_basis(&times, &sp.knots, boundary)?;
            let skip = usize::from(spec.intercept);
            for c in skip..sp.knots.len() + 4 {
                names.push(format!("spline{}", c + 1));
                blocks.push(basis.iter().map(|row| row[c]).collect());
            }
        }
        for name in &spec.covariates {
            names.push(name.clone());
            let mut col = Vec::with_capacity(n);
            for k in &keys {
                col.push(panel.covariate_at(&subjects[k.subject], name, k.time)?);
            }
            blocks.push(col);
        }
        let p = names.len();
        let x = DMatrix::from_fn(n, p, |r, c| blocks[c][r]);
        let mut y = DVector::zeros(n);
        for (r, k) in keys.iter().enumerate() {
            let s = &subjects[k.subject];
            let idx = s.obs_times.partition_point(|&t| t < k.time);
            y[r] = s.outcomes[idx];
            if spec.family == Family::Bernoulli && y[r] != 0.0 && y[r] != 1.0 {
                return Err(GeeError::NonBinaryOutcome(y[r]));
            }
        }
        let offset = DVector::from_iterator(n, times.iter().map(|&t| spec.offset.at(t)));
        Ok(GeeDesign {
            names,
            family: spec.family,
            x,
            y,
            offset,
            cluster: keys.iter().map(|k| k.subject).collect(),
            keys,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.x.ncols()
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn outcomes(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn weight_vector(&self, weights: Option<&WeightSet>) -> Result<Vec<f64>, GeeError> {
        match weights {
            None => Ok(vec![1.0; self.n_obs()]),
            Some(ws) => {
                if ws.keys() != self.keys.as_slice() {
                    return Err(GeeError::WeightMismatch);
                }
                Ok(ws.entries().to_vec())
            }
        }
    }

    fn mean(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.x * beta + &self.offset;
        match self.family {
            Family::Gaussian => eta,
            Family::Bernoulli => eta.map(expit),
        }
    }

    /// `sum_i sum_k w x (y - mu)`: the canonical-link estimating function.
    pub fn estimating_function(&self, beta: &[f64], weights: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        let mu = self.mean(&b);
        let r = DVector::from_fn(self.n_obs(), |i, _| weights[i] * (self.y[i] - mu[i]));
        (self.x.transpose() * r).iter().copied().collect()
    }

    /// Weighted quasi log-likelihood whose gradient is the estimating function.
    pub fn quasi_log_likelihood(&self, beta: &[f64], weights: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        let eta = &self.x * b + &self.offset;
        match self.family {
            Family::Gaussian => {
                -0.5 * (0..self.n_obs())
                    .map(|i| weights[i] * (self.y[i] - eta[i]).powi(2))
                    .sum::<f64>()
            }
            Family::Bernoulli => {
                -0.5 * (0..self.n_obs())
                    .map(|i| {
                        weights[i] * crate::weights::bernoulli_deviance(&[eta[i]], &[self.y[i]])
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Bread `A = sum w v(mu) x x^T` at `beta`.
    fn bread(&self, mu: &DVector<f64>, w: &[f64]) -> DMatrix<f64> {
        let p = self.n_coefficients();
        let mut a = DMatrix::zeros(p, p);
        for i in 0..self.n_obs() {
            let v = match self.family {
                Family::Gaussian => 1.0,
                Family::Bernoulli => mu[i] * (1.0 - mu[i]),
            };
            let row = self.x.row(i);
            a.ger(w[i] * v, &row.transpose(), &row.transpose(), 1.0);
        }
        a
    }

    pub fn solve(&self, weights: Option<&WeightSet>) -> Result<GeeFit, GeeError> {
        let w = self.weight_vector(weights)?;
        self.solve_with(&w)
    }

    /// Coefficients only, without the sandwich covariance.
    pub fn estimate(&self, w: &[f64]) -> Result<Vec<f64>, GeeError> {
        let p = self.n_coefficients();
        let n = self.n_obs();
        if n < p + 1 {
            return Err(GeeError::InsufficientData { got: n, p });
        }
        let beta = match self.family {
            Family::Gaussian => {
                let rhs = self.x.transpose()
                    * DVector::from_fn(n, |i, _| w[i] * (self.y[i] - self.offset[i]));
                solve_spd(self.bread(&self.offset, w), &rhs)?
            }
            Family::Bernoulli => self.fisher_scoring(w)?.0,
        };
        Ok(beta.iter().copied().collect())
    }

    pub fn solve_with(&self, w: &[f64]) -> Result<GeeFit, GeeError> {
        let p = self.n_coefficients();
        let n = self.n_obs();
        if n < p + 1 {
            return Err(GeeError::InsufficientData { got: n, p });
        }
        let (beta, iterations) = match self.family {
            Family::Gaussian => {
                let a = self.bread(&self.offset, w);
                let rhs = self.x.transpose()
                    * DVector::from_fn(n, |i, _| w[i] * (self.y[i] - self.offset[i]));
                (solve_spd(a, &rhs)?, 0)
            }
            Family::Bernoulli => self.fisher_scoring(w)?,
        };
        let mu = self.mean(&beta);
        let a = self.bread(&mu, w);
        let a_inv = a
            .clone()
            .cholesky()
            .ok_or(GeeError::RankDeficient)?
            .inverse();
        let mut meat = DMatrix::zeros(p, p);
        let mut u_i = DVector::zeros(p);
        let mut current = usize::MAX;
        for i in 0..n {
            if self.cluster[i] != current {
                if current != usize::MAX {
                    meat.ger(1.0, &u_i, &u_i, 1.0);
                }
                u_i.fill(0.0);
                current = self.cluster[i];
            }
            let r = w[i] * (self.y[i] - mu[i]);
            u_i.axpy(r, &self.x.row(i).transpose(), 1.0);
        }
        if current != usize::MAX {
            meat.ger(1.0, &u_i, &u_i, 1.0);
        }
        let cov = &a_inv * meat * &a_inv;
        let cov = (&cov + cov.transpose()) * 0.5;
        let score = self.estimating_function(beta.as_slice(), w);
        Ok(GeeFit {
            names: self.names.clone(),
            family: self.family,
            beta_hat: beta.iter().copied().collect(),
            sandwich_cov: (0..p)
                .map(|r| (0..p).map(|c| cov[(r, c)]).collect())
                .collect(),
            iterations,
            converged: true,
            max_abs_estimating_function: score.iter().fold(0.0, |m, v| m.max(v.abs())),
            n_obs_used: w.iter().filter(|&&v| v > 0.0).count(),
            sum_weights: w.iter().sum(),
        })
    }

    fn fisher_scoring(&self, w: &[f64]) -> Result<(DVector<f64>, usize), GeeError> {
        let p = self.n_coefficients();
        let mut beta = DVector::zeros(p);
        let mut ql = self.quasi_log_likelihood(beta.as_slice(), w);
        for iter in 0..=GEE_MAX_ITER {
            let u = DVector::from_vec(self.estimating_function(beta.as_slice(), w));
            if u.amax() <= GEE_TOL {
                return Ok((beta, iter));
            }
            if iter == GEE_MAX_ITER {
                break;
            }
            let mu = self.mean(&beta);
            let step = solve_spd(self.bread(&mu, w), &u)?;
            let mut scale = 1.0;
            let mut cand = &beta + &step;
            let mut cand_ql = self.quasi_log_likelihood(cand.as_slice(), w);
            let slack = crate::survival::ROUNDING_SLACK * (1.0 + ql.abs());
            let mut halvings = 0;
            while !(cand_ql >= ql - slack) && halvings < 10 {
                scale *= 0.5;
                cand = &beta + scale * &step;
                cand_ql = self.quasi_log_likelihood(cand.as_slice(), w);
                halvings += 1;
            }
            if !(cand_ql >= ql - slack) {
                break;
            }
            beta = cand;
            ql = cand_ql;
        }
        Err(GeeError::NonConvergence(GEE_MAX_ITER))
    }
}

fn solve_spd(a: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, GeeError> {
    let sol = a.cholesky().ok_or(GeeError::RankDeficient)?.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(GeeError::RankDeficient)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeFit {
    pub names: Vec<String>,
    pub family: Family,
    pub beta_hat: Vec<f64>,
    pub sandwich_cov: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_estimating_function: f64,
    pub n_obs_used: usize,
    pub sum_weights: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub odds_ratio: Option<f64>,
    pub or_ci_lower: Option<f64>,
    pub or_ci_upper: Option<f64>,
}

impl GeeFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.beta_hat[i])
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta_hat.len())
            .map(|i| self.sandwich_cov[i][i].sqrt())
            .collect()
    }

    /// Wald 95% intervals; odds ratios under the logit link.
    pub fn summary(&self) -> Vec<CoefficientSummary> {
        self.names
            .iter()
            .zip(&self.beta_hat)
            .zip(self.standard_errors())
            .map(|((name, &b), se)| {
                let (lo, hi) = (b - Z_95 * se, b + Z_95 * se);
                let logit = self.family == Family::Bernoulli;
                CoefficientSummary {
                    name: name.clone(),
                    estimate: b,
                    se,
                    ci_lower: lo,
                    ci_upper: hi,
                    odds_ratio: logit.then(|| b.exp()),
                    or_ci_lower: logit.then(|| lo.exp()),
                    or_ci_upper: logit.then(|| hi.exp()),
                }
            })
            .collect()
    }
}

pub fn solve_gee(
    panel: &Panel,
    spec: &OutcomeSpec,
    weights: Option<&WeightSet>,
) -> Result<GeeFit, GeeError> {
    GeeDesign::new(panel, spec)?.solve(weights)
}

/// The weighted estimating function at an arbitrary `beta`.
pub fn estimating_function_value(
    panel: &Panel,
    spec: &OutcomeSpec,
    beta: &[f64],
    weights: Option<&WeightSet>,
) -> Result<Vec<f64>, GeeError> {
    let design = GeeDesign::new(panel, spec)?;
    if beta.len() != design.n_coefficients() {
        return Err(GeeError::Dimension {
            expected: design.n_coefficients(),
            got: beta.len(),
        });
    }
    let w = design.weight_vector(weights)?;
    Ok(design.estimating_function(beta, &w))
}

fn time_range(times: &[f64]) -> Result<(f64, f64), GeeError> {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(GeeError::Spline("fewer than 2 distinct times".into()));
    }
    Ok((lo, hi))
}

/// Tertiles (type-7 quantiles at 1/3 and 2/3) of the pooled times.
pub fn tertile_knots(times: &[f64]) -> Result<Vec<f64>, GeeError> {
    time_range(times)?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(vec![
        quantile_type7(&sorted, 1.0 / 3.0),
        quantile_type7(&sorted, 2.0 / 3.0),
    ])
}

/// Cubic B-spline basis (Cox–de Boor) with clamped boundary knots. Returns
/// `knots.len() + 4` columns per time; each row sums to 1 on the boundary
/// interval.
pub fn spline_basis(
    times: &[f64],
    knots: &[f64],
    boundary: (f64, f64),
) -> Result<Vec<Vec<f64>>, GeeError> {
    let (a, b) = boundary;
    if !(b > a) {
        return Err(GeeError::Spline("fewer than 2 distinct times".into()));
    }
    for (i, &k) in knots.iter().enumerate() {
        if !(k > a && k < b) {
            return Err(GeeError::Spline(format!(
                "knot {k} not strictly inside ({a}, {b})"
            )));
        }
        if i > 0 && k <= knots[i - 1] {
            return Err(GeeError::Spline("knots must be strictly increasing".into()));
        }
    }
    const DEG: usize = 3;
    let mut u = vec![a; DEG + 1];
    u.extend_from_slice(knots);
    u.extend(std::iter::repeat_n(b, DEG + 1));
    let n_basis = knots.len() + DEG + 1;

    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        if !(a..=b).contains(&t) {
            return Err(GeeError::Spline(format!("time {t} outside [{a}, {b}]")));
        }
        // Degree-0 functions on the knot spans; t = b belongs to the last span.
        let mut n: Vec<f64> = (0..u.len() - 1)
            .map(|i| {
                let inside = u[i] <= t && t < u[i + 1];
                let last = t == b && u[i] < u[i + 1] && u[i + 1] == b;
                if inside || last {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for d in 1..=DEG {
            let mut next = vec![0.0; u.len() - 1 - d];
            for (i, slot) in next.iter_mut().enumerate() {
                let mut v = 0.0;
                let den1 = u[i + d] - u[i];
                if den1 > 0.0 {
                    v += (t - u[i]) / den1 * n[i];
                }
                let den2 = u[i + d + 1] - u[i + 1];
                if den2 > 0.0 {
                    v += (u[i + d + 1] - t) / den2 * n[i + 1];
                }
                *slot = v;
            }
            n = next;
        }
        debug_assert_eq!(n.len(), n_basis);
        rows.push(n);
    }
    Ok(rows)
}
