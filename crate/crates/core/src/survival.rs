//! Proportional-hazards fits for the observation intensity (recurrent events,
//! Andersen–Gill) and the censoring hazard (single event), with Breslow ties.
//!
//! The fitter maximizes the Breslow log partial likelihood
//! `sum_events [eta_i(t) - log sum_{j: C_j >= t} exp(eta_j(t))]` by safeguarded
//! Newton–Raphson from `gamma = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{
    risk_table, AnalyticForm, CovariateSeries, EventSource, Panel, PanelError, RiskTable,
};

/// Score tolerance (`|U|_inf`) for Newton–Raphson.
pub const SCORE_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 25;
pub const MAX_HALVINGS: usize = 10;
/// A coefficient whose contribution to the linear predictor spans more than
/// this many log units is treated as a diverging (monotone likelihood) fit.
const DIVERGENCE_SPAN: f64 = 15.0;
/// Relative objective slack tolerated by step-halving line searches.
pub(crate) const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SurvivalError {
    #[error("no events to fit")]
    NoEvents,
    #[error("no censoring events")]
    NoCensoringEvents,
    #[error("singular information matrix (collinear covariates)")]
    Singular,
    #[error("monotone likelihood: coefficient for `{covariate}` diverges")]
    Divergence { covariate: String },
    #[error(
        "Newton-Raphson did not converge in {iterations} iterations (|score| = {max_score:e})"
    )]
    NonConvergence { iterations: usize, max_score: f64 },
    #[error("coefficient vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Which covariates enter the linear predictor and which events are modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhSpec {
    pub covariates: Vec<String>,
    pub event_source: EventSource,
    /// Skip observation events at `t = 0` (enrollment visits that the
    /// observation process did not generate). Those records still exist in
    /// the panel and still get weights.
    #[serde(default)]
    pub exclude_zero_time_events: bool,
}

impl PhSpec {
    pub fn intensity<S: AsRef<str>>(covariates: &[S]) -> Self {
        PhSpec {
            covariates: covariates.iter().map(|s| s.as_ref().to_string()).collect(),
            event_source: EventSource::Observations,
            exclude_zero_time_events: false,
        }
    }

    pub fn censoring<S: AsRef<str>>(covariates: &[S]) -> Self {
        PhSpec {
            covariates: covariates.iter().map(|s| s.as_ref().to_string()).collect(),
            event_source: EventSource::Censoring,
            exclude_zero_time_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedIntensity {
    pub covariates: Vec<String>,
    pub gamma_hat: Vec<f64>,
    pub score_at_solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_partial_likelihood: f64,
    /// Covariates constant within every risk set; their coefficient is held at 0.
    pub non_identifiable: Vec<String>,
    pub n_events: usize,
}

impl FittedIntensity {
    /// Linear predictor `gamma^T z_i(t)` for one subject.
    pub fn linear_predictor(
        &self,
        panel: &Panel,
        subject: &crate::panel::Subject,
        t: f64,
    ) -> Result<f64, PanelError> {
        let mut eta = 0.0;
        for (name, g) in self.covariates.iter().zip(&self.gamma_hat) {
            if *g != 0.0 {
                eta += g * panel.covariate_at(subject, name, t)?;
            }
        }
        Ok(eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreslowBaseline {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BreslowBaseline {
    /// `H0(t)`: sum of increments at event times `s <= t`.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative_hazard[idx - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCensoringHazard {
    pub fit: FittedIntensity,
    pub breslow_baseline: BreslowBaseline,
    pub converged: bool,
}

impl FittedCensoringHazard {
    pub fn covariates(&self) -> &[String] {
        &self.fit.covariates
    }

    pub fn eta_hat(&self) -> &[f64] {
        &self.fit.gamma_hat
    }

    /// `S_c(t | x) = exp(-H0c(t) exp(eta^T x))`.
    pub fn survival(
        &self,
        panel: &Panel,
        subject: &crate::panel::Subject,
        t: f64,
    ) -> Result<f64, PanelError> {
        let lp = self.fit.linear_predictor(panel, subject, t)?;
        Ok((-self.breslow_baseline.at(t) * lp.exp()).exp())
    }
}

/// Per-column covariate values laid out by risk-table order.
#[derive(Debug, Clone)]
enum Column {
    Fixed(Vec<f64>),
    /// `scale_j * ln t`.
    ScaledLog(Vec<f64>),
    Series(Vec<CovariateSeries>),
}

impl Column {
    #[inline]
    fn value(&self, pos: usize, t: f64, ln_t: f64) -> f64 {
        match self {
            Column::Fixed(v) => v[pos],
            Column::ScaledLog(s) => s[pos] * ln_t,
            Column::Series(s) => s[pos].value_at(t),
        }
    }
}

/// The data needed to evaluate the partial likelihood, compiled once.
#[derive(Debug, Clone)]
pub struct PhDesign {
    names: Vec<String>,
    columns: Vec<Column>,
    table: RiskTable,
    /// Position (in risk-table order) of each subject index.
    position: Vec<usize>,
    ln_times: Vec<f64>,
    all_fixed: bool,
    /// Per column: constant within every risk set.
    degenerate: Vec<bool>,
    /// Per column: max |value| spread seen at event times.
    spread: Vec<f64>,
}

/// Log partial likelihood, score and information at one `gamma`.
#[derive(Debug, Clone)]
pub struct PhEvaluation {
    pub log_lik: f64,
    pub score: Vec<f64>,
    pub information: Vec<f64>,
}

impl PhDesign {
    pub fn new(panel: &Panel, spec: &PhSpec) -> Result<Self, SurvivalError> {
        let min_time = (spec.exclude_zero_time_events
            && spec.event_source == EventSource::Observations)
            .then_some(0.0);
        let table = risk_table(panel, spec.event_source, min_time);
        let order = table.order().to_vec();
        let mut position = vec![0; order.len()];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        let subjects = panel.subjects();
        let mut columns = Vec::with_capacity(spec.covariates.len());
        for name in &spec.covariates {
            let all_fixed = order.iter().all(|&i| subjects[i].is_time_invariant(name));
            let col = if all_fixed {
                let mut v = Vec::with_capacity(order.len());
                for &i in &order {
                    let s = &subjects[i];
                    if !s.has_covariate(name) {
                        return Err(PanelError::UnknownCovariate(name.clone()).into());
                    }
                    // Evaluated at tau, any time works for an invariant value.
                    v.push(crate::panel::covariate_at(
                        s,
                        name,
                        panel.tau(),
                        panel.tau(),
                    )?);
                }
                Column::Fixed(v)
            } else {
                let scaled_log: Option<Vec<f64>> = order
                    .iter()
                    .map(|&i| match subjects[i].series.get(name) {
                        Some(CovariateSeries::Analytic {
                            form: AnalyticForm::ScaledLog { scale },
                        }) => Some(*scale),
                        _ => None,
                    })
                    .collect();
                match scaled_log {
                    Some(s) => Column::ScaledLog(s),
                    None => {
                        let mut v = Vec::with_capacity(order.len());
                        for &i in &order {
                            let s = &subjects[i];
                            let series = if let Some(b) = s.baseline.get(name) {
                                CovariateSeries::Constant { value: *b }
                            } else if let Some(c) = s.series.get(name) {
                                c.clone()
                            } else {
                                return Err(PanelError::UnknownCovariate(name.clone()).into());
                            };
                            v.push(series);
                        }
                        Column::Series(v)
                    }
                }
            };
            columns.push(col);
        }
        let ln_times: Vec<f64> = table.times().iter().map(|t| t.ln()).collect();
        let all_fixed = columns.iter().all(|c| matches!(c, Column::Fixed(_)));

        let mut design = PhDesign {
            names: spec.covariates.clone(),
            columns,
            table,
            position,
            ln_times,
            all_fixed,
            degenerate: Vec::new(),
            spread: Vec::new(),
        };
        design.scan_columns(panel.tau())?;
        Ok(design)
    }

    /// Checks evaluability at every event time and records, per column,
    /// whether it is constant within every risk set and its spread.
    fn scan_columns(&mut self, tau: f64) -> Result<(), SurvivalError> {
        let n_cols = self.columns.len();
        let mut degenerate = vec![true; n_cols];
        let mut spread = vec![0.0f64; n_cols];
        let n = self.table.order().len();
        for (c, col) in self.columns.iter().enumerate() {
            for k in 0..self.table.len() {
                let t = self.table.times()[k];
                if !(0.0..=tau).contains(&t) {
                    return Err(PanelError::TimeOutOfRange { t, tau }.into());
                }
                let ln_t = self.ln_times[k];
                let start = self.table.start(k);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                // Risk sets are nested suffixes, so for a fixed column the
                // first (largest) one decides.
                if let Column::Fixed(_) = col {
                    if k > 0 {
                        continue;
                    }
                }
                for pos in start..n {
                    let v = col.value(pos, t, ln_t);
                    if !v.is_finite() {
                        return Err(PanelError::NotEvaluable {
                            name: self.names[c].clone(),
                            t,
                        }
                        .into());
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if hi > lo {
                    degenerate[c] = false;
                }
                spread[c] = spread[c].max(hi - lo);
            }
        }
        self.degenerate = degenerate;
        self.spread = spread;
        Ok(())
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_events(&self) -> usize {
        self.table.n_events()
    }

    pub fn risk_table(&self) -> &RiskTable {
        &self.table
    }

    pub fn log_partial_likelihood(&self, gamma: &[f64]) -> f64 {
        self.evaluate_inner(gamma, false).log_lik
    }

    pub fn evaluate(&self, gamma: &[f64]) -> PhEvaluation {
        self.evaluate_inner(gamma, true)
    }

    fn evaluate_inner(&self, gamma: &[f64], derivatives: bool) -> PhEvaluation {
        if self.all_fixed {
            self.evaluate_fixed(gamma, derivatives)
        } else {
            self.evaluate_varying(gamma, derivatives)
        }
    }

    /// All covariates time-invariant: risk sets are suffixes, so one backward
    /// sweep accumulates every risk-set sum. A running maximum rescales the
    /// partial sums so each set is shifted by its own max linear predictor.
    fn evaluate_fixed(&self, gamma: &[f64], derivatives: bool) -> PhEvaluation {
        let p = gamma.len();
        let n = self.table.order().len();
        let cols: Vec<&[f64]> = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Fixed(v) => v.as_slice(),
                _ => unreachable!("fixed path only"),
            })
            .collect();
        let eta: Vec<f64> = (0..n)
            .map(|pos| (0..p).map(|c| gamma[c] * cols[c][pos]).sum())
            .collect();

        let mut out = PhEvaluation {
            log_lik: 0.0,
            score: vec![0.0; p],
            information: vec![0.0; p * p],
        };
        let mut shift = f64::NEG_INFINITY;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut next = n;
        for k in (0..self.table.len()).rev() {
            let start = self.table.start(k);
            while next > start {
                next -= 1;
                let e = eta[next];
                if e > shift {
                    let scale = (shift - e).exp();
                    s0 *= scale;
                    if derivatives {
                        s1.iter_mut().for_each(|v| *v *= scale);
                        s2.iter_mut().for_each(|v| *v *= scale);
                    }
                    shift = e;
                }
                let w = (e - shift).exp();
                s0 += w;
                if derivatives {
                    for a in 0..p {
                        let xa = cols[a][next];
                        s1[a] += w * xa;
                        for b in 0..=a {
                            s2[a * p + b] += w * xa * cols[b][next];
                        }
                    }
                }
            }
            let events = self.table.events(k);
            let d = events.len() as f64;
            let log_s0 = s0.ln() + shift;
            for &i in events {
                let pos = self.position[i];
                out.log_lik += eta[pos];
                if derivatives {
                    for a in 0..p {
                        out.score[a] += cols[a][pos];
                    }
                }
            }
            out.log_lik -= d * log_s0;
            if derivatives {
                accumulate_moments(&mut out, &s1, &s2, s0, d);
            }
        }
        if derivatives {
            symmetrize(&mut out.information, p);
        }
        out
    }

    fn evaluate_varying(&self, gamma: &[f64], derivatives: bool) -> PhEvaluation {
        let p = gamma.len();
        let n = self.table.order().len();
        let mut out = PhEvaluation {
            log_lik: 0.0,
            score: vec![0.0; p],
            information: vec![0.0; p * p],
        };
        let mut x = vec![0.0; n * p];
        let mut eta = vec![0.0; n];
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        for k in 0..self.table.len() {
            let t = self.table.times()[k];
            let ln_t = self.ln_times[k];
            let start = self.table.start(k);
            let mut shift = f64::NEG_INFINITY;
            for pos in start..n {
                let row = &mut x[pos * p..(pos + 1) * p];
                let mut e = 0.0;
                for (c, col) in self.columns.iter().enumerate() {
                    row[c] = col.value(pos, t, ln_t);
                    e += gamma[c] * row[c];
                }
                eta[pos] = e;
                shift = shift.max(e);
            }
            let mut s0 = 0.0;
            s1.iter_mut().for_each(|v| *v = 0.0);
            s2.iter_mut().for_each(|v| *v = 0.0);
            for pos in start..n {
                let w = (eta[pos] - shift).exp();
                s0 += w;
                if derivatives {
                    let row = &x[pos * p..(pos + 1) * p];
                    for a in 0..p {
                        s1[a] += w * row[a];
                        for b in 0..=a {
                            s2[a * p + b] += w * row[a] * row[b];
                        }
                    }
                }
            }
            let events = self.table.events(k);
            let d = events.len() as f64;
            for &i in events {
                let pos = self.position[i];
                out.log_lik += eta[pos];
                if derivatives {
                    for a in 0..p {
                        out.score[a] += x[pos * p + a];
                    }
                }
            }
            out.log_lik -= d * (s0.ln() + shift);
            if derivatives {
                accumulate_moments(&mut out, &s1, &s2, s0, d);
            }
        }
        if derivatives {
            symmetrize(&mut out.information, p);
        }
        out
    }

    /// Safeguarded Newton–Raphson from zero.
    pub fn fit(&self) -> Result<FittedIntensity, SurvivalError> {
        let p = self.n_covariates();
        if self.n_events() == 0 {
            return Err(SurvivalError::NoEvents);
        }
        let free: Vec<usize> = (0..p).filter(|&c| !self.degenerate[c]).collect();
        let non_identifiable: Vec<String> = (0..p)
            .filter(|&c| self.degenerate[c])
            .map(|c| self.names[c].clone())
            .collect();

        let mut gamma = vec![0.0; p];
        let mut eval = self.evaluate(&gamma);
        let mut iterations = 0;
        let mut converged = max_abs_at(&eval.score, &free) <= SCORE_TOL;
        while !converged && iterations < MAX_ITER {
            iterations += 1;
            let m = free.len();
            let info = DMatrix::from_fn(m, m, |a, b| eval.information[free[a] * p + free[b]]);
            let u = DVector::from_fn(m, |a, _| eval.score[free[a]]);
            let step = info
                .cholesky()
                .map(|ch| ch.solve(&u))
                .ok_or(SurvivalError::Singular)?;
            if step.iter().any(|v| !v.is_finite()) {
                return Err(SurvivalError::Singular);
            }
            let mut scale = 1.0;
            let mut candidate = gamma.clone();
            for halving in 0..=MAX_HALVINGS {
                for (a, &c) in free.iter().enumerate() {
                    candidate[c] = gamma[c] + scale * step[a];
                }
                let ll = self.log_partial_likelihood(&candidate);
                if ll.is_finite()
                    && ll >= eval.log_lik - ROUNDING_SLACK * (1.0 + eval.log_lik.abs())
                {
                    break;
                }
                if halving == MAX_HALVINGS {
                    break;
                }
                scale *= 0.5;
            }
            gamma = candidate;
            eval = self.evaluate(&gamma);
            converged = max_abs_at(&eval.score, &free) <= SCORE_TOL;
        }

        for &c in &free {
            if gamma[c].abs() * self.spread[c] > DIVERGENCE_SPAN {
                return Err(SurvivalError::Divergence {
                    covariate: self.names[c].clone(),
                });
            }
        }
        if !converged {
            return Err(SurvivalError::NonConvergence {
                iterations,
                max_score: max_abs_at(&eval.score, &free),
            });
        }
        Ok(FittedIntensity {
            covariates: self.names.clone(),
            gamma_hat: gamma,
            score_at_solution: eval.score,
            iterations,
            converged,
            log_partial_likelihood: eval.log_lik,
            non_identifiable,
            n_events: self.n_events(),
        })
    }

    /// Breslow increments `d_s / sum_{at risk} exp(gamma^T x_j(s))`, cumulated.
    pub fn breslow(&self, gamma: &[f64]) -> BreslowBaseline {
        let n = self.table.order().len();
        let mut times = Vec::with_capacity(self.table.len());
        let mut cumulative = Vec::with_capacity(self.table.len());
        let mut h = 0.0;
        for k in 0..self.table.len() {
            let t = self.table.times()[k];
            let ln_t = self.ln_times[k];
            let mut denom = 0.0;
            for pos in self.table.start(k)..n {
                let e: f64 = self
                    .columns
                    .iter()
                    .zip(gamma)
                    .map(|(col, g)| g * col.value(pos, t, ln_t))
                    .sum();
                denom += e.exp();
            }
            h += self.table.events(k).len() as f64 / denom;
            times.push(t);
            cumulative.push(h);
        }
        BreslowBaseline {
            times,
            cumulative_hazard: cumulative,
        }
    }
}

fn accumulate_moments(out: &mut PhEvaluation, s1: &[f64], s2: &[f64], s0: f64, d: f64) {
    let p = s1.len();
    for a in 0..p {
        let ma = s1[a] / s0;
        out.score[a] -= d * ma;
        for b in 0..=a {
            let mb = s1[b] / s0;
            out.information[a * p + b] += d * (s2[a * p + b] / s0 - ma * mb);
        }
    }
}

fn symmetrize(m: &mut [f64], p: usize) {
    for a in 0..p {
        for b in 0..a {
            m[b * p + a] = m[a * p + b];
        }
    }
}

fn max_abs_at(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| v[i].abs()).fold(0.0, f64::max)
}

pub fn fit_ph(panel: &Panel, spec: &PhSpec) -> Result<FittedIntensity, SurvivalError> {
    PhDesign::new(panel, spec)?.fit()
}

pub fn fit_censoring<S: AsRef<str>>(
    panel: &Panel,
    covariates: &[S],
) -> Result<FittedCensoringHazard, SurvivalError> {
    if panel
        .subjects()
        .iter()
        .all(|s| s.censor_time >= panel.tau())
    {
        return Err(SurvivalError::NoCensoringEvents);
    }
    let design = PhDesign::new(panel, &PhSpec::censoring(covariates))?;
    let fit = design.fit()?;
    let breslow_baseline = design.breslow(&fit.gamma_hat);
    Ok(FittedCensoringHazard {
        converged: fit.converged,
        fit,
        breslow_baseline,
    })
}

fn check_dim(spec: &PhSpec, gamma: &[f64]) -> Result<(), SurvivalError> {
    if spec.covariates.len() != gamma.len() {
        return Err(SurvivalError::Dimension {
            expected: spec.covariates.len(),
            got: gamma.len(),
        });
    }
    Ok(())
}

pub fn log_partial_likelihood(
    panel: &Panel,
    spec: &PhSpec,
    gamma: &[f64],
) -> Result<f64, SurvivalError> {
    check_dim(spec, gamma)?;
    Ok(PhDesign::new(panel, spec)?.log_partial_likelihood(gamma))
}

pub fn score(panel: &Panel, spec: &PhSpec, gamma: &[f64]) -> Result<Vec<f64>, SurvivalError> {
    check_dim(spec, gamma)?;
    Ok(PhDesign::new(panel, spec)?.evaluate(gamma).score)
}

/// Observed information, row-major `p x p`.
pub fn information(panel: &Panel, spec: &PhSpec, gamma: &[f64]) -> Result<Vec<f64>, SurvivalError> {
    check_dim(spec, gamma)?;
    Ok(PhDesign::new(panel, spec)?.evaluate(gamma).information)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Subject;

    fn subject(id: &str, censor: f64, times: &[f64], z: f64) -> Subject {
        let mut s = Subject::new(id, censor);
        s.obs_times = times.to_vec();
        s.outcomes = vec![0.0; times.len()];
        s.baseline.insert("z".into(), z);
        s
    }

    fn small_panel() -> Panel {
        Panel::new(
            vec![
                subject("a", 5.0, &[0.5, 1.5, 3.0], 1.0),
                subject("b", 4.0, &[2.0], 0.0),
                subject("c", 2.5, &[1.0, 2.2], 1.0),
                subject("d", 5.0, &[4.5], 0.0),
                subject("e", 3.5, &[], 0.0),
            ],
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn single_subject_returns_zero() {
        let p = Panel::new(vec![subject("a", 3.0, &[1.0, 2.0], 1.0)], 3.0).unwrap();
        let fit = fit_ph(&p, &PhSpec::intensity(&["z"])).unwrap();
        assert_eq!(fit.gamma_hat, vec![0.0]);
        assert_eq!(fit.non_identifiable, vec!["z".to_string()]);
    }

    #[test]
    fn constant_covariate_flagged() {
        let mut p = small_panel();
        let subs: Vec<Subject> = p
            .subjects()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.baseline.insert("k".into(), 3.0);
                s
            })
            .collect();
        p = Panel::new(subs, 5.0).unwrap();
        let fit = fit_ph(&p, &PhSpec::intensity(&["z", "k"])).unwrap();
        assert_eq!(fit.gamma_hat[1], 0.0);
        assert_eq!(fit.non_identifiable, vec!["k".to_string()]);
    }

    #[test]
    fn null_loglik_is_minus_log_risk_set_sizes() {
        let p = small_panel();
        let spec = PhSpec::intensity(&["z"]);
        let ll = log_partial_likelihood(&p, &spec, &[0.0]).unwrap();
        let mut expected = 0.0;
        for s in p.subjects() {
            for &t in &s.obs_times {
                let r = p.subjects().iter().filter(|j| j.censor_time >= t).count();
                expected -= (r as f64).ln();
            }
        }
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn null_score_formula() {
        let p = small_panel();
        let spec = PhSpec::intensity(&["z"]);
        let u = score(&p, &spec, &[0.0]).unwrap();
        let mut expected = 0.0;
        for s in p.subjects() {
            for &t in &s.obs_times {
                let risk: Vec<f64> = p
                    .subjects()
                    .iter()
                    .filter(|j| j.censor_time >= t)
                    .map(|j| j.baseline["z"])
                    .collect();
                expected += s.baseline["z"] - risk.iter().sum::<f64>() / risk.len() as f64;
            }
        }
        assert!((u[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn fixed_and_varying_paths_agree() {
        let p = small_panel();
        let fixed = PhDesign::new(&p, &PhSpec::intensity(&["z"])).unwrap();
        assert!(fixed.all_fixed);
        let mut varying = fixed.clone();
        varying.all_fixed = false;
        for g in [-1.3, 0.0, 0.7, 4.0] {
            let a = fixed.evaluate(&[g]);
            let b = varying.evaluate(&[g]);
            assert!((a.log_lik - b.log_lik).abs() < 1e-12);
            assert!((a.score[0] - b.score[0]).abs() < 1e-12);
            assert!((a.information[0] - b.information[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn breslow_null_hand_values() {
        let subs = vec![
            Subject::new("a", 1.0),
            Subject::new("b", 2.0),
            Subject::new("c", 3.0),
        ];
        let p = Panel::new(subs, 3.0).unwrap();
        let fit = fit_censoring::<&str>(&p, &[]).unwrap();
        let h = &fit.breslow_baseline;
        assert!((h.at(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.at(2.0) - (1.0 / 3.0 + 0.5)).abs() < 1e-15);
        assert_eq!(h.at(0.5), 0.0);
    }

    #[test]
    fn administrative_only_censoring_errors() {
        let p = Panel::new(vec![Subject::new("a", 3.0), Subject::new("b", 3.0)], 3.0).unwrap();
        assert_eq!(
            fit_censoring(&p, &["x"]).unwrap_err(),
            SurvivalError::NoCensoringEvents
        );
    }

    #[test]
    fn collinear_covariates_singular() {
        let subs: Vec<Subject> = small_panel()
            .subjects()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                let z = s.baseline["z"];
                s.baseline.insert("z2".into(), 2.0 * z);
                s
            })
            .collect();
        let p = Panel::new(subs, 5.0).unwrap();
        assert_eq!(
            fit_ph(&p, &PhSpec::intensity(&["z", "z2"])).unwrap_err(),
            SurvivalError::Singular
        );
    }

    #[test]
    fn separating_covariate_diverges() {
        // Every event happens to a z = 1 subject while z = 0 subjects stay at risk.
        let p = Panel::new(
            vec![
                subject("a", 5.0, &[1.0, 2.0], 1.0),
                subject("b", 5.0, &[3.0], 1.0),
                subject("c", 5.0, &[], 0.0),
                subject("d", 5.0, &[], 0.0),
            ],
            5.0,
        )
        .unwrap();
        let r = fit_ph(&p, &PhSpec::intensity(&["z"]));
        assert!(matches!(r, Err(SurvivalError::Divergence { .. })), "{r:?}");
    }

    #[test]
    fn unknown_covariate_is_reported() {
        let p = small_panel();
        assert!(matches!(
            fit_ph(&p, &PhSpec::intensity(&["nope"])),
            Err(SurvivalError::Panel(PanelError::UnknownCovariate(_)))
        ));
    }

    #[test]
    fn score_vanishes_at_solution() {
        let p = small_panel();
        let fit = fit_ph(&p, &PhSpec::intensity(&["z"])).unwrap();
        assert!(fit.converged);
        assert!(fit.score_at_solution[0].abs() <= SCORE_TOL);
    }
}
