//! Weight construction at every observed `(subject, time)` pair: inverse
//! intensity (IIW), inverse probability of treatment (IPTW), inverse
//! probability of censoring (IPCW), their pointwise products, and upper-tail
//! percentile trimming.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Panel, PanelError};
use crate::survival::{FittedCensoringHazard, FittedIntensity};

/// Propensities outside `[PI_FLOOR, 1 - PI_FLOOR]` violate positivity.
pub const PI_FLOOR: f64 = 1e-12;
/// Censoring survival below this floor is an effective positivity violation.
pub const SURVIVAL_FLOOR: f64 = 1e-8;
const LOGIT_TOL: f64 = 1e-8;
const LOGIT_MAX_ITER: usize = 50;
const SEPARATION_LP: f64 = 30.0;
/// A class fitted to within this residual everywhere is treated as separated.
const SEPARATION_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("treatment `{column}` must be 0/1; subject `{id}` has {value}")]
    NonBinaryTreatment {
        column: String,
        id: String,
        value: f64,
    },
    #[error("separation in the propensity model: {0}")]
    Separation(String),
    #[error("singular weighted normal equations in the propensity model")]
    Singular,
    #[error("propensity model did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("positivity violation: subject `{id}` has {what} = {value:e}")]
    Positivity {
        id: String,
        what: &'static str,
        value: f64,
    },
    #[error("weight set key mismatch at entry {0}")]
    KeyMismatch(usize),
    #[error("nothing to combine")]
    EmptyCombination,
    #[error("trimming percentile {0} outside [0.5, 1.0]")]
    Percentile(f64),
    #[error("empty weight set")]
    Empty,
    #[error("non-positive or non-finite weight {value} for subject index {subject} at t = {time}")]
    InvalidWeight {
        subject: usize,
        time: f64,
        value: f64,
    },
    #[error("fit did not converge")]
    NotConverged,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum WeightKind {
    Iiw,
    Iptw,
    Ipcw,
    Fiptiw,
    Fipticw,
    /// Any other product of factors.
    Product,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightKind::Iiw => "IIW",
            WeightKind::Iptw => "IPTW",
            WeightKind::Ipcw => "IPCW",
            WeightKind::Fiptiw => "FIPTIW",
            WeightKind::Fipticw => "FIPTICW",
            WeightKind::Product => "PRODUCT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimStage {
    /// Trim each factor, then multiply.
    Before,
    /// Multiply, then trim the product.
    After,
}

impl fmt::Display for TrimStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrimStage::Before => "before",
            TrimStage::After => "after",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimRecord {
    pub percentile: f64,
    pub threshold: f64,
    pub n_trimmed: usize,
    pub stage: TrimStage,
}

/// `(subject index in the panel, observation time)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightKey {
    pub subject: usize,
    pub time: f64,
}

/// One positive weight per observed `(subject, time)`, in panel order.
///
/// A trimmed set remembers its untrimmed entries; trimming always works from
/// those, so `trim(trim(w, p), p) == trim(w, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    kind: WeightKind,
    keys: Vec<WeightKey>,
    entries: Vec<f64>,
    untrimmed: Option<Vec<f64>>,
    trim_record: Option<TrimRecord>,
}

impl WeightSet {
    pub fn new(
        kind: WeightKind,
        keys: Vec<WeightKey>,
        entries: Vec<f64>,
    ) -> Result<Self, WeightError> {
        assert_eq!(keys.len(), entries.len(), "one entry per key");
        for (k, &w) in keys.iter().zip(&entries) {
            if !(w.is_finite() && w > 0.0) {
                return Err(WeightError::InvalidWeight {
                    subject: k.subject,
                    time: k.time,
                    value: w,
                });
            }
        }
        Ok(WeightSet {
            kind,
            keys,
            entries,
            untrimmed: None,
            trim_record: None,
        })
    }

    /// All-ones weights over the panel's observations.
    pub fn unit(panel: &Panel, kind: WeightKind) -> Self {
        let keys = panel_keys(panel);
        let entries = vec![1.0; keys.len()];
        WeightSet {
            kind,
            keys,
            entries,
            untrimmed: None,
            trim_record: None,
        }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn keys(&self) -> &[WeightKey] {
        &self.keys
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn untrimmed_entries(&self) -> &[f64] {
        self.untrimmed.as_deref().unwrap_or(&self.entries)
    }

    pub fn trim_record(&self) -> Option<&TrimRecord> {
        self.trim_record.as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per entry: whether trimming lowered it.
    pub fn trimmed_flags(&self) -> Vec<bool> {
        match &self.untrimmed {
            Some(raw) => raw.iter().zip(&self.entries).map(|(r, e)| r != e).collect(),
            None => vec![false; self.entries.len()],
        }
    }

    pub fn relabel(mut self, kind: WeightKind) -> Self {
        self.kind = kind;
        self
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c.is_finite() && c > 0.0, "scale must be positive");
        let mut out = self.clone();
        out.entries.iter_mut().for_each(|w| *w *= c);
        if let Some(raw) = &mut out.untrimmed {
            raw.iter_mut().for_each(|w| *w *= c);
        }
        if let Some(rec) = &mut out.trim_record {
            rec.threshold *= c;
        }
        out
    }

    pub fn summary(&self) -> WeightSummary {
        WeightSummary::of(&self.entries)
    }
}

/// Extremity summary of a set of weights. Proportions are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub max: f64,
    pub pct_over_5: f64,
    pub pct_over_10: f64,
    pub pct_over_20: f64,
}

impl WeightSummary {
    pub fn of(w: &[f64]) -> Self {
        let n = w.len().max(1) as f64;
        let pct = |c: f64| 100.0 * w.iter().filter(|&&x| x > c).count() as f64 / n;
        WeightSummary {
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            pct_over_5: pct(5.0),
            pct_over_10: pct(10.0),
            pct_over_20: pct(20.0),
        }
    }
}

pub fn panel_keys(panel: &Panel) -> Vec<WeightKey> {
    panel
        .observation_keys()
        .into_iter()
        .map(|(subject, time)| WeightKey { subject, time })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPropensity {
    pub treatment: String,
    /// Coefficient names; `"(intercept)"` first when present.
    pub terms: Vec<String>,
    pub alpha_hat: Vec<f64>,
    /// Fitted `pi_i`, one per panel subject.
    pub pi_hat: Vec<f64>,
    pub treated: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub deviance: f64,
}

pub const INTERCEPT: &str = "(intercept)";

/// Logistic regression of a binary treatment on baseline covariates, by
/// iteratively reweighted least squares with deviance step-halving.
pub fn fit_propensity<S: AsRef<str>>(
    panel: &Panel,
    treatment: &str,
    covariates: &[S],
    intercept: bool,
) -> Result<FittedPropensity, WeightError> {
    let n = panel.len();
    let mut terms: Vec<String> = Vec::new();
    if intercept {
        terms.push(INTERCEPT.to_string());
    }
    terms.extend(covariates.iter().map(|s| s.as_ref().to_string()));
    let p = terms.len();

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, s) in panel.subjects().iter().enumerate() {
        let d = panel.covariate_at(s, treatment, 0.0)?;
        if d != 0.0 && d != 1.0 {
            return Err(WeightError::NonBinaryTreatment {
                column: treatment.to_string(),
                id: s.id.clone(),
                value: d,
            });
        }
        y[i] = d;
        let mut c = 0;
        if intercept {
            x[(i, 0)] = 1.0;
            c = 1;
        }
        for name in covariates {
            x[(i, c)] = panel.covariate_at(s, name.as_ref(), 0.0)?;
            c += 1;
        }
    }
    let sum_y = y.sum();
    if sum_y == 0.0 || sum_y == n as f64 {
        return Err(WeightError::Separation(format!(
            "every subject has {treatment} = {}",
            if sum_y == 0.0 { 0 } else { 1 }
        )));
    }
    let fit = logistic_irls(&x, &y)?;
    let lp = &x * &fit.beta;
    let separated = [0.0, 1.0].iter().any(|&class| {
        (0..n)
            .filter(|&i| y[i] == class)
            .all(|i| (y[i] - expit(lp[i])).abs() < SEPARATION_RESIDUAL)
    });
    if !fit.converged || separated || lp.iter().any(|v| v.abs() > SEPARATION_LP) {
        if separated || lp.iter().any(|v| v.abs() > SEPARATION_LP) {
            let worst = (0..p)
                .filter(|&c| terms[c] != INTERCEPT)
                .max_by(|&a, &b| fit.beta[a].abs().total_cmp(&fit.beta[b].abs()))
                .map(|c| terms[c].clone())
                .unwrap_or_else(|| INTERCEPT.to_string());
            return Err(WeightError::Separation(format!(
                "fitted probabilities reach 0 or 1; `{worst}` separates {treatment}"
            )));
        }
        return Err(WeightError::NonConvergence(fit.iterations));
    }
    let pi_hat: Vec<f64> = lp.iter().map(|&v| expit(v)).collect();
    Ok(FittedPropensity {
        treatment: treatment.to_string(),
        terms,
        alpha_hat: fit.beta.iter().copied().collect(),
        pi_hat,
        treated: y.iter().map(|&v| v == 1.0).collect(),
        iterations: fit.iterations,
        converged: fit.converged,
        deviance: fit.deviance,
    })
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) struct LogisticFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub deviance: f64,
}

/// Bernoulli deviance `-2 sum [y log mu + (1-y) log(1-mu)]`, computed stably.
pub fn bernoulli_deviance(lp: &[f64], y: &[f64]) -> f64 {
    lp.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) - y e
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            2.0 * (softplus - yi * e)
        })
        .sum()
}

pub(crate) fn logistic_irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LogisticFit, WeightError> {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    let deviance_at = |b: &DVector<f64>| {
        let lp = x * b;
        bernoulli_deviance(lp.as_slice(), y.as_slice())
    };
    let mut dev = deviance_at(&beta);
    let mut iterations = 0;
    loop {
        let lp = x * &beta;
        let mu: Vec<f64> = lp.iter().map(|&v| expit(v)).collect();
        let resid = DVector::from_fn(n, |i, _| y[i] - mu[i]);
        let score = x.transpose() * &resid;
        if score.amax() <= LOGIT_TOL {
            return Ok(LogisticFit {
                beta,
                iterations,
                converged: true,
                deviance: dev,
            });
        }
        if iterations == LOGIT_MAX_ITER {
            return Ok(LogisticFit {
                beta,
                iterations,
                converged: false,
                deviance: dev,
            });
        }
        iterations += 1;
        let mut info = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = mu[i] * (1.0 - mu[i]);
            let row = x.row(i);
            info += w * row.transpose() * row;
        }
        let step = info
            .cholesky()
            .map(|c| c.solve(&score))
            .ok_or(WeightError::Singular)?;
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_dev = deviance_at(&candidate);
        let slack = crate::survival::ROUNDING_SLACK * (1.0 + dev.abs());
        let mut halvings = 0;
        while !(cand_dev <= dev + slack) && halvings < 10 {
            scale *= 0.5;
            candidate = &beta + scale * &step;
            cand_dev = deviance_at(&candidate);
            halvings += 1;
        }
        if !(cand_dev <= dev + slack) {
            // No descent available: stationary to working precision.
            return Ok(LogisticFit {
                beta,
                iterations,
                converged: score.amax() <= LOGIT_TOL,
                deviance: dev,
            });
        }
        beta = candidate;
        dev = cand_dev;
    }
}

/// `1/pi_i` for treated subjects and `1/(1 - pi_i)` otherwise, repeated at
/// each of the subject's observation times.
pub fn iptw_weights(fit: &FittedPropensity, panel: &Panel) -> Result<WeightSet, WeightError> {
    if !fit.converged {
        return Err(WeightError::NotConverged);
    }
    let mut per_subject = Vec::with_capacity(panel.len());
    for (i, s) in panel.subjects().iter().enumerate() {
        let pi = fit.pi_hat[i];
        if !(PI_FLOOR..=1.0 - PI_FLOOR).contains(&pi) {
            return Err(WeightError::Positivity {
                id: s.id.clone(),
                what: "propensity",
                value: pi,
            });
        }
        per_subject.push(if fit.treated[i] {
            1.0 / pi
        } else {
            1.0 / (1.0 - pi)
        });
    }
    let keys = panel_keys(panel);
    let entries = keys.iter().map(|k| per_subject[k.subject]).collect();
    WeightSet::new(WeightKind::Iptw, keys, entries)
}

/// `exp(delta^T x_i(t) - gamma^T z_i(t))`, or `exp(-gamma^T z_i(t))` without a
/// numerator fit.
pub fn iiw_weights(
    denominator: &FittedIntensity,
    numerator: Option<&FittedIntensity>,
    panel: &Panel,
) -> Result<WeightSet, WeightError> {
    if !denominator.converged || numerator.is_some_and(|f| !f.converged) {
        return Err(WeightError::NotConverged);
    }
    let keys = panel_keys(panel);
    let subjects = panel.subjects();
    let mut entries = Vec::with_capacity(keys.len());
    for k in &keys {
        let s = &subjects[k.subject];
        let mut lp = -denominator.linear_predictor(panel, s, k.time)?;
        if let Some(num) = numerator {
            lp += num.linear_predictor(panel, s, k.time)?;
        }
        entries.push(lp.exp());
    }
    WeightSet::new(WeightKind::Iiw, keys, entries)
}

/// `1 / S_c(t | x_i)` from the Breslow censoring-hazard fit.
pub fn ipcw_weights(fit: &FittedCensoringHazard, panel: &Panel) -> Result<WeightSet, WeightError> {
    if !fit.converged {
        return Err(WeightError::NotConverged);
    }
    let keys = panel_keys(panel);
    let subjects = panel.subjects();
    let mut entries = Vec::with_capacity(keys.len());
    for k in &keys {
        let s = &subjects[k.subject];
        let surv = fit.survival(panel, s, k.time)?;
        if !(surv >= SURVIVAL_FLOOR) {
            return Err(WeightError::Positivity {
                id: s.id.clone(),
                what: "censoring survival",
                value: surv,
            });
        }
        entries.push(1.0 / surv);
    }
    WeightSet::new(WeightKind::Ipcw, keys, entries)
}

/// Pointwise product. `{IIW, IPTW}` gives FIPTIW and `{IIW, IPTW, IPCW}` gives
/// FIPTICW; a single factor keeps its kind.
pub fn combine(parts: &[&WeightSet]) -> Result<WeightSet, WeightError> {
    let first = parts.first().ok_or(WeightError::EmptyCombination)?;
    let mut entries = first.entries.clone();
    for part in &parts[1..] {
        if part.keys.len() != first.keys.len() {
            return Err(WeightError::KeyMismatch(
                part.keys.len().min(first.keys.len()),
            ));
        }
        for (idx, (a, b)) in first.keys.iter().zip(&part.keys).enumerate() {
            if a != b {
                return Err(WeightError::KeyMismatch(idx));
            }
        }
        for (e, w) in entries.iter_mut().zip(&part.entries) {
            *e *= w;
        }
    }
    let kind = if parts.len() == 1 {
        first.kind
    } else {
        let mut kinds: Vec<WeightKind> = parts.iter().map(|p| p.kind).collect();
        kinds.sort_by_key(|k| *k as u8);
        match kinds.as_slice() {
            [WeightKind::Iiw, WeightKind::Iptw] => WeightKind::Fiptiw,
            [WeightKind::Iiw, WeightKind::Iptw, WeightKind::Ipcw] => WeightKind::Fipticw,
            [WeightKind::Ipcw, WeightKind::Fiptiw] => WeightKind::Fipticw,
            _ => WeightKind::Product,
        }
    };
    WeightSet::new(kind, first.keys.clone(), entries)
}

/// Type-7 sample quantile (`h = (n - 1) p + 1`, linear interpolation) of
/// ascending `sorted`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&p), "probability outside [0, 1]");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Caps every entry above the type-7 `p`-quantile of the untrimmed entries at
/// that quantile.
pub fn trim(ws: &WeightSet, p: f64, stage: TrimStage) -> Result<WeightSet, WeightError> {
    if !(0.5..=1.0).contains(&p) {
        return Err(WeightError::Percentile(p));
    }
    if ws.is_empty() {
        return Err(WeightError::Empty);
    }
    let raw = ws.untrimmed_entries().to_vec();
    let mut sorted = raw.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = quantile_type7(&sorted, p);
    let mut n_trimmed = 0;
    let entries: Vec<f64> = raw
        .iter()
        .map(|&w| {
            if w > threshold {
                n_trimmed += 1;
                threshold
            } else {
                w
            }
        })
        .collect();
    Ok(WeightSet {
        kind: ws.kind,
        keys: ws.keys.clone(),
        entries,
        untrimmed: Some(raw),
        trim_record: Some(TrimRecord {
            percentile: p,
            threshold,
            n_trimmed,
            stage,
        }),
    })
}

/// Product of `factors` trimmed at `p`, either factor-wise first or on the
/// product.
pub fn combine_trimmed(
    factors: &[&WeightSet],
    p: f64,
    stage: TrimStage,
) -> Result<WeightSet, WeightError> {
    match stage {
        TrimStage::Before => {
            let trimmed = factors
                .iter()
                .map(|f| trim(f, p, stage))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&WeightSet> = trimmed.iter().collect();
            combine(&refs)
        }
        TrimStage::After => trim(&combine(factors)?, p, stage),
    }
}
