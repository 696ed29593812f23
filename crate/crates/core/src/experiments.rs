//! Monte Carlo studies of the weighted estimators: censoring sensitivity
//! (study 1), intensity-model variable inclusion (study 2) and weight trimming
//! (study 3), with aggregation into bias / variance / MSE tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gee::{GeeDesign, Offset, OutcomeSpec};
use crate::panel::Panel;
use crate::simgen::{
    gen_panel, scenario_id, CensoringSpec, DgpSpec, RngStream, TreatmentSpec, AUXILIARY,
    CONFOUNDER, TIME_VARYING, TREATMENT,
};
use crate::survival::{fit_censoring, fit_ph, FittedIntensity, PhSpec};
use crate::weights::{
    combine, combine_trimmed, fit_propensity, iiw_weights, ipcw_weights, iptw_weights, TrimStage,
    WeightKind, WeightSet, WeightSummary,
};

pub const TRUE_ATE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("every replication of scenario `{0}` failed")]
    AllFailed(String),
    #[error("no replication results")]
    Empty,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Study {
    I,
    II,
    III,
}

impl Study {
    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Study::I),
            2 => Some(Study::II),
            3 => Some(Study::III),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Study::I => 1,
            Study::II => 2,
            Study::III => 3,
        }
    }
}

/// Degree of informativeness of the treatment or observation process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Moderate,
    High,
}

impl Level {
    /// Slope on `W` in the propensity model (intercept 0).
    pub fn alpha1(self) -> f64 {
        match self {
            Level::Low => 0.5,
            Level::Moderate => 3.5,
            Level::High => 5.5,
        }
    }

    /// Intensity coefficient on `Z`.
    pub fn gamma3(self) -> f64 {
        match self {
            Level::Low => 0.6,
            Level::Moderate => -0.75,
            Level::High => -1.1,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Low => "low",
            Level::Moderate => "moderate",
            Level::High => "high",
        })
    }
}

/// The six treatment/observation pairs that do not break down.
pub const SIM3_PAIRS: [(Level, Level); 6] = [
    (Level::Low, Level::Low),
    (Level::Moderate, Level::Low),
    (Level::High, Level::Low),
    (Level::Low, Level::Moderate),
    (Level::Low, Level::High),
    (Level::Moderate, Level::Moderate),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum GridPoint {
    SimI {
        eta: [f64; 3],
    },
    SimII {
        gamma2: f64,
        beta2: f64,
    },
    SimIII {
        treatment: Level,
        observation: Level,
    },
}

impl GridPoint {
    pub fn study(&self) -> Study {
        match self {
            GridPoint::SimI { .. } => Study::I,
            GridPoint::SimII { .. } => Study::II,
            GridPoint::SimIII { .. } => Study::III,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub point: GridPoint,
    /// Intensity covariate subsets (study 2).
    #[serde(default)]
    pub subsets: Vec<Vec<String>>,
    /// Trimming percentiles (study 3).
    #[serde(default)]
    pub p_grid: Vec<f64>,
}

impl ScenarioSpec {
    pub fn label(&self) -> String {
        match self.point {
            GridPoint::SimI { eta } => {
                format!("sim1_n{}_eta{}_{}_{}", self.n, eta[0], eta[1], eta[2])
            }
            GridPoint::SimII { gamma2, beta2 } => {
                format!("sim2_n{}_gamma2_{}_beta2_{}", self.n, gamma2, beta2)
            }
            GridPoint::SimIII {
                treatment,
                observation,
            } => format!("sim3_n{}_{}_{}", self.n, treatment, observation),
        }
    }

    pub fn dgp(&self) -> DgpSpec {
        let base = DgpSpec {
            n: self.n,
            ..DgpSpec::default()
        };
        match self.point {
            GridPoint::SimI { eta } => DgpSpec {
                treatment: TreatmentSpec::Logistic {
                    alpha0: -1.0,
                    alpha1: 1.0,
                },
                gamma: [0.5, 0.3, 0.6],
                censoring: CensoringSpec::ProportionalHazards { eta, rate: 0.1 },
                ..base
            },
            GridPoint::SimII { gamma2, beta2 } => DgpSpec {
                treatment: TreatmentSpec::Randomized { pi: 0.5 },
                gamma: [0.5, gamma2, 0.6],
                beta: [TRUE_ATE, beta2, 1.0],
                censoring: CensoringSpec::Uniform,
                ..base
            },
            GridPoint::SimIII {
                treatment,
                observation,
            } => DgpSpec {
                treatment: TreatmentSpec::Logistic {
                    alpha0: 0.0,
                    alpha1: treatment.alpha1(),
                },
                gamma: [0.5, 0.3, observation.gamma3()],
                censoring: CensoringSpec::Uniform,
                ..base
            },
        }
    }

    pub fn stream(&self, replication: usize) -> RngStream {
        RngStream::new(self.seed, scenario_id(&self.label()), replication as u64)
    }
}

/// One method's estimate of the treatment effect in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub method: String,
    pub stage: Option<TrimStage>,
    pub percentile: Option<f64>,
    pub estimate: Option<f64>,
    pub failure: Option<String>,
}

impl MethodEstimate {
    fn new(method: &str, result: Result<f64, String>) -> Self {
        let (estimate, failure) = match result {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        };
        MethodEstimate {
            method: method.to_string(),
            stage: None,
            percentile: None,
            estimate,
            failure,
        }
    }

    fn trimmed(method: &str, stage: TrimStage, p: f64, result: Result<f64, String>) -> Self {
        MethodEstimate {
            stage: Some(stage),
            percentile: Some(p),
            ..MethodEstimate::new(method, result)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub scenario: String,
    pub replication: usize,
    pub estimates: Vec<MethodEstimate>,
    pub weight_summaries: Vec<(WeightKind, WeightSummary)>,
}

/// Outcome model of every study: offset `2 - t`, treatment only, no intercept.
pub fn outcome_spec() -> OutcomeSpec {
    OutcomeSpec::gaussian(&[TREATMENT]).with_offset(Offset::Linear {
        intercept: 2.0,
        slope: -1.0,
    })
}

fn ate(design: &GeeDesign, w: Option<&WeightSet>) -> Result<f64, String> {
    let w = design.weight_vector(w).map_err(|e| e.to_string())?;
    design.estimate(&w).map(|b| b[0]).map_err(|e| e.to_string())
}

fn share<T: Clone>(r: &Result<T, String>) -> Result<T, String> {
    r.clone()
}

fn stabilized_iiw(
    panel: &Panel,
    numerator: &Result<FittedIntensity, String>,
    covs: &[String],
) -> Result<WeightSet, String> {
    let num = numerator
        .as_ref()
        .map_err(|e| format!("numerator intensity: {e}"))?;
    let den = fit_ph(panel, &PhSpec::intensity(covs)).map_err(|e| format!("intensity: {e}"))?;
    iiw_weights(&den, Some(num), panel).map_err(|e| e.to_string())
}

fn numerator_fit(panel: &Panel) -> Result<FittedIntensity, String> {
    fit_ph(panel, &PhSpec::intensity(&[TREATMENT])).map_err(|e| e.to_string())
}

fn propensity_weights(panel: &Panel) -> Result<WeightSet, String> {
    let ps = fit_propensity(panel, TREATMENT, &[AUXILIARY], true)
        .map_err(|e| format!("propensity: {e}"))?;
    iptw_weights(&ps, panel).map_err(|e| e.to_string())
}

fn product(parts: &[&Result<WeightSet, String>]) -> Result<WeightSet, String> {
    let sets = parts
        .iter()
        .map(|r| r.as_ref().map_err(Clone::clone))
        .collect::<Result<Vec<&WeightSet>, String>>()?;
    combine(&sets).map_err(|e| e.to_string())
}

fn full_intensity_covariates() -> Vec<String> {
    [TREATMENT, TIME_VARYING, CONFOUNDER]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn subset_label(subset: &[String]) -> String {
    if subset.is_empty() {
        "naive".to_string()
    } else {
        subset.join("+")
    }
}

/// The seven non-empty subsets of `{D, G, Z}`.
pub fn all_subsets() -> Vec<Vec<String>> {
    let names = full_intensity_covariates();
    let masks = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111];
    masks
        .iter()
        .map(|m| {
            (0..3)
                .filter(|b| m & (1 << b) != 0)
                .map(|b| names[b].clone())
                .collect()
        })
        .collect()
}

pub fn published_p_grid() -> Vec<f64> {
    (50..=100).map(|k| k as f64 / 100.0).collect()
}

/// Runs one replication. Every replication of a scenario reports the same
/// method list, failed entries included.
pub fn run_replication(spec: &ScenarioSpec, replication: usize) -> ReplicationResult {
    let mut out = ReplicationResult {
        scenario: spec.label(),
        replication,
        estimates: Vec::new(),
        weight_summaries: Vec::new(),
    };
    let generated = gen_panel(&spec.dgp(), spec.stream(replication))
        .map_err(|e| format!("generation: {e}"))
        .and_then(|sim| {
            let design = GeeDesign::new(&sim.panel, &outcome_spec()).map_err(|e| e.to_string())?;
            Ok((sim, design))
        });
    let (panel, design) = match &generated {
        Ok((sim, design)) => (Some(&sim.panel), Some(design)),
        Err(_) => (None, None),
    };
    let failed = |r: &Result<_, String>| -> Result<f64, String> {
        Err(r.as_ref().err().cloned().unwrap_or_default())
    };

    match spec.point {
        GridPoint::SimI { .. } => {
            let (Some(panel), Some(design)) = (panel, design) else {
                for m in ["unweighted", "IIW", "IPTW", "FIPTIW", "FIPTICW"] {
                    out.estimates
                        .push(MethodEstimate::new(m, failed(&generated)));
                }
                return out;
            };
            let num = numerator_fit(panel);
            let iiw = stabilized_iiw(panel, &num, &full_intensity_covariates());
            let iptw = propensity_weights(panel);
            let ipcw = fit_censoring(panel, &[TREATMENT, AUXILIARY, CONFOUNDER])
                .map_err(|e| format!("censoring: {e}"))
                .and_then(|f| ipcw_weights(&f, panel).map_err(|e| e.to_string()));
            let fiptiw = product(&[&iiw, &iptw]);
            let fipticw = product(&[&iiw, &iptw, &ipcw]);
            out.estimates
                .push(MethodEstimate::new("unweighted", ate(design, None)));
            for (m, w) in [
                ("IIW", &iiw),
                ("IPTW", &iptw),
                ("FIPTIW", &fiptiw),
                ("FIPTICW", &fipticw),
            ] {
                out.estimates.push(MethodEstimate::new(
                    m,
                    share(w).and_then(|w| ate(design, Some(&w))),
                ));
            }
            push_summaries(&mut out, &[&iiw, &iptw, &ipcw, &fiptiw, &fipticw]);
        }
        GridPoint::SimII { .. } => {
            let subsets = if spec.subsets.is_empty() {
                all_subsets()
            } else {
                spec.subsets.clone()
            };
            let (Some(panel), Some(design)) = (panel, design) else {
                out.estimates
                    .push(MethodEstimate::new("naive", failed(&generated)));
                for s in &subsets {
                    out.estimates
                        .push(MethodEstimate::new(&subset_label(s), failed(&generated)));
                }
                return out;
            };
            out.estimates
                .push(MethodEstimate::new("naive", ate(design, None)));
            let num = numerator_fit(panel);
            let mut full = None;
            for s in &subsets {
                let w = stabilized_iiw(panel, &num, s);
                out.estimates.push(MethodEstimate::new(
                    &subset_label(s),
                    share(&w).and_then(|w| ate(design, Some(&w))),
                ));
                if s.len() == 3 {
                    full = Some(w);
                }
            }
            if let Some(w) = full {
                push_summaries(&mut out, &[&w]);
            }
        }
        GridPoint::SimIII { .. } => {
            let grid = if spec.p_grid.is_empty() {
                published_p_grid()
            } else {
                spec.p_grid.clone()
            };
            let (Some(panel), Some(design)) = (panel, design) else {
                for m in ["unweighted", "IIW", "IPTW", "FIPTIW"] {
                    out.estimates
                        .push(MethodEstimate::new(m, failed(&generated)));
                }
                for stage in [TrimStage::Before, TrimStage::After] {
                    for &p in &grid {
                        out.estimates.push(MethodEstimate::trimmed(
                            "FIPTIW",
                            stage,
                            p,
                            failed(&generated),
                        ));
                    }
                }
                return out;
            };
            let num = numerator_fit(panel);
            let iiw = stabilized_iiw(panel, &num, &full_intensity_covariates());
            let iptw = propensity_weights(panel);
            let fiptiw = product(&[&iiw, &iptw]);
            out.estimates
                .push(MethodEstimate::new("unweighted", ate(design, None)));
            for (m, w) in [("IIW", &iiw), ("IPTW", &iptw), ("FIPTIW", &fiptiw)] {
                out.estimates.push(MethodEstimate::new(
                    m,
                    share(w).and_then(|w| ate(design, Some(&w))),
                ));
            }
            for stage in [TrimStage::Before, TrimStage::After] {
                for &p in &grid {
                    let est = match (&iiw, &iptw) {
                        (Ok(a), Ok(b)) => combine_trimmed(&[a, b], p, stage)
                            .map_err(|e| e.to_string())
                            .and_then(|w| ate(design, Some(&w))),
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    out.estimates
                        .push(MethodEstimate::trimmed("FIPTIW", stage, p, est));
                }
            }
            push_summaries(&mut out, &[&iiw, &iptw, &fiptiw]);
        }
    }
    out
}

fn push_summaries(out: &mut ReplicationResult, sets: &[&Result<WeightSet, String>]) {
    for w in sets.iter().filter_map(|r| r.as_ref().ok()) {
        out.weight_summaries.push((w.kind(), w.summary()));
    }
}

/// Runs every replication of a scenario on `pool`; results are in
/// replication order regardless of scheduling.
pub fn run_scenario(spec: &ScenarioSpec, pool: &rayon::ThreadPool) -> Vec<ReplicationResult> {
    pool.install(|| {
        (0..spec.replications)
            .into_par_iter()
            .map(|r| run_replication(spec, r))
            .collect()
    })
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Monte Carlo summary of one method's estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_ok: usize,
    pub mean: f64,
    pub bias: f64,
    /// Sample variance (`R - 1` denominator); `None` when `R = 1`.
    pub variance: Option<f64>,
    /// Mean squared deviation from the truth.
    pub mse: f64,
    /// `bias^2 + variance (R - 1) / R`.
    pub mse_decomposed: Option<f64>,
    pub relative_bias: f64,
}

pub fn summarize(estimates: &[f64], truth: f64) -> Option<Summary> {
    if estimates.is_empty() {
        return None;
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let bias = mean - truth;
    let variance = (estimates.len() > 1)
        .then(|| estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0));
    let mse = estimates.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / r;
    Some(Summary {
        n_ok: estimates.len(),
        mean,
        bias,
        variance,
        mse,
        mse_decomposed: variance.map(|v| bias * bias + v * (r - 1.0) / r),
        relative_bias: bias / truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub method: String,
    pub stage: Option<TrimStage>,
    pub percentile: Option<f64>,
    pub n_failed: usize,
    /// `None` when every replication failed for this method.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn find(
        &self,
        scenario: &str,
        method: &str,
        stage: Option<TrimStage>,
        p: Option<f64>,
    ) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario && r.method == method && r.stage == stage && r.percentile == p
        })
    }

    pub fn summary(&self, scenario: &str, method: &str) -> Option<Summary> {
        self.find(scenario, method, None, None)
            .and_then(|r| r.summary)
    }
}

/// Bias, variance, MSE and relative bias per `(scenario, method, stage, p)`,
/// over non-failed replications.
pub fn aggregate(
    results: &[ReplicationResult],
    truth: f64,
) -> Result<MetricsTable, ExperimentError> {
    if results.is_empty() {
        return Err(ExperimentError::Empty);
    }
    type Key = (String, String, Option<TrimStage>, Option<u64>);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, (Vec<f64>, usize)> = BTreeMap::new();
    let mut any_success: BTreeMap<String, bool> = BTreeMap::new();
    for r in results {
        let ok = any_success.entry(r.scenario.clone()).or_insert(false);
        for e in &r.estimates {
            let key = (
                r.scenario.clone(),
                e.method.clone(),
                e.stage,
                e.percentile.map(f64::to_bits),
            );
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (Vec::new(), 0)
            });
            match e.estimate {
                Some(v) => {
                    entry.0.push(v);
                    *ok = true;
                }
                None => entry.1 += 1,
            }
        }
    }
    if let Some((s, _)) = any_success.iter().find(|(_, ok)| !**ok) {
        return Err(ExperimentError::AllFailed(s.clone()));
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let (values, n_failed) = &groups[&key];
            MetricRow {
                scenario: key.0,
                method: key.1,
                stage: key.2,
                percentile: key.3.map(f64::from_bits),
                n_failed: *n_failed,
                summary: summarize(values, truth),
            }
        })
        .collect();
    Ok(MetricsTable { rows })
}

/// Mean weight-extremity summary per `(scenario, weight kind)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremityRow {
    pub scenario: String,
    pub kind: WeightKind,
    pub n: usize,
    pub mean_max: f64,
    pub mean_pct_over_5: f64,
    pub mean_pct_over_10: f64,
    pub mean_pct_over_20: f64,
}

pub fn extremity_table(results: &[ReplicationResult]) -> Vec<ExtremityRow> {
    let mut order: Vec<(String, WeightKind)> = Vec::new();
    let mut acc: BTreeMap<(String, u8), (usize, [f64; 4])> = BTreeMap::new();
    for r in results {
        for (kind, s) in &r.weight_summaries {
            let key = (r.scenario.clone(), *kind as u8);
            let e = acc.entry(key).or_insert_with(|| {
                order.push((r.scenario.clone(), *kind));
                (0, [0.0; 4])
            });
            e.0 += 1;
            e.1[0] += s.max;
            e.1[1] += s.pct_over_5;
            e.1[2] += s.pct_over_10;
            e.1[3] += s.pct_over_20;
        }
    }
    order
        .into_iter()
        .map(|(scenario, kind)| {
            let (n, sums) = acc[&(scenario.clone(), kind as u8)];
            let m = |v: f64| v / n as f64;
            ExtremityRow {
                scenario,
                kind,
                n,
                mean_max: m(sums[0]),
                mean_pct_over_5: m(sums[1]),
                mean_pct_over_10: m(sums[2]),
                mean_pct_over_20: m(sums[3]),
            }
        })
        .collect()
}

/// Grid description accepted by `run-sim --spec`. Missing fields default to
/// the full published grid of the study.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub n: Option<usize>,
    /// Study 1: `(eta1, eta2, eta3)` triples.
    #[serde(default)]
    pub eta: Option<Vec<[f64; 3]>>,
    /// Study 2: `(gamma2, beta2)` pairs.
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    /// Study 2: intensity covariate subsets.
    #[serde(default)]
    pub subsets: Option<Vec<Vec<String>>>,
    /// Study 3: `(treatment, observation)` informativeness pairs.
    #[serde(default)]
    pub pairs: Option<Vec<(Level, Level)>>,
    /// Study 3: trimming percentiles.
    #[serde(default)]
    pub p_grid: Option<Vec<f64>>,
}

fn member(v: f64, set: &[f64]) -> bool {
    set.iter().any(|s| (s - v).abs() < 1e-12)
}

impl GridConfig {
    /// Expands into scenarios. Unless `allow_custom`, every value must come
    /// from the published grids.
    pub fn scenarios(
        &self,
        study: Study,
        replications: usize,
        seed: u64,
        allow_custom: bool,
    ) -> Result<Vec<ScenarioSpec>, ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if replications == 0 {
            return bad("replications must be at least 1".into());
        }
        let n = self.n.unwrap_or(100);
        if !allow_custom && ![50, 100, 500].contains(&n) {
            return bad(format!(
                "n = {n} is not one of 50, 100, 500 (use --allow-custom)"
            ));
        }
        if n < 2 {
            return bad("n must be at least 2".into());
        }
        let used = |field: &str, present: bool, ok: bool| -> Result<(), ExperimentError> {
            if present && !ok {
                Err(ExperimentError::Config(format!(
                    "`{field}` does not apply to study {}",
                    study.number()
                )))
            } else {
                Ok(())
            }
        };
        used("eta", self.eta.is_some(), study == Study::I)?;
        used("points", self.points.is_some(), study == Study::II)?;
        used("subsets", self.subsets.is_some(), study == Study::II)?;
        used("pairs", self.pairs.is_some(), study == Study::III)?;
        used("p_grid", self.p_grid.is_some(), study == Study::III)?;

        let make = |point: GridPoint| ScenarioSpec {
            n,
            replications,
            seed,
            point,
            subsets: Vec::new(),
            p_grid: Vec::new(),
        };
        let mut out = Vec::new();
        match study {
            Study::I => {
                let grid = self.eta.clone().unwrap_or_else(|| {
                    let mut g = Vec::new();
                    for e2 in [0.0, 0.2, 0.5] {
                        for e3 in [0.0, 0.4, 0.6] {
                            g.push([0.4, e2, e3]);
                        }
                    }
                    g
                });
                for eta in grid {
                    let ok = member(eta[0], &[0.0, 0.4])
                        && member(eta[1], &[0.0, 0.2, 0.5])
                        && member(eta[2], &[0.0, 0.4, 0.6]);
                    if !ok && !allow_custom {
                        return bad(format!(
                            "eta {eta:?} is off the published grid (use --allow-custom)"
                        ));
                    }
                    out.push(make(GridPoint::SimI { eta }));
                }
            }
            Study::II => {
                let grid = self
                    .points
                    .clone()
                    .unwrap_or_else(|| vec![[0.0, 0.0], [0.0, 2.0], [0.3, 0.0], [0.3, 2.0]]);
                let subsets = self.subsets.clone().unwrap_or_else(all_subsets);
                let allowed = full_intensity_covariates();
                for s in &subsets {
                    if s.is_empty() || s.iter().any(|c| !allowed.contains(c)) {
                        return bad(format!(
                            "subset {s:?} must be a non-empty subset of D, G, Z"
                        ));
                    }
                }
                for [gamma2, beta2] in grid {
                    if !(member(gamma2, &[0.0, 0.3]) && member(beta2, &[0.0, 2.0])) && !allow_custom
                    {
                        return bad(format!(
                            "(gamma2, beta2) = ({gamma2}, {beta2}) is off the published grid (use --allow-custom)"
                        ));
                    }
                    let mut s = make(GridPoint::SimII { gamma2, beta2 });
                    s.subsets = subsets.clone();
                    out.push(s);
                }
            }
            Study::III => {
                let pairs = self.pairs.clone().unwrap_or_else(|| SIM3_PAIRS.to_vec());
                let p_grid = self.p_grid.clone().unwrap_or_else(published_p_grid);
                let published = published_p_grid();
                for &p in &p_grid {
                    if !(0.5..=1.0).contains(&p) {
                        return bad(format!("percentile {p} outside [0.5, 1.0]"));
                    }
                    if !member(p, &published) && !allow_custom {
                        return bad(format!(
                            "percentile {p} is off the 0.50:0.01:1.00 grid (use --allow-custom)"
                        ));
                    }
                }
                for (treatment, observation) in pairs {
                    if !SIM3_PAIRS.contains(&(treatment, observation)) && !allow_custom {
                        return bad(format!(
                            "pair {treatment}/{observation} is not studied (use --allow-custom)"
                        ));
                    }
                    let mut s = make(GridPoint::SimIII {
                        treatment,
                        observation,
                    });
                    s.p_grid = p_grid.clone();
                    out.push(s);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub study: Study,
    pub scenarios: Vec<ScenarioSpec>,
    pub replications: Vec<ReplicationResult>,
    pub metrics: MetricsTable,
    pub extremity: Vec<ExtremityRow>,
}

pub fn run_study(
    study: Study,
    scenarios: Vec<ScenarioSpec>,
    workers: usize,
) -> Result<StudyOutput, ExperimentError> {
    let pool = worker_pool(workers)?;
    let mut replications = Vec::new();
    for s in &scenarios {
        if s.point.study() != study {
            return Err(ExperimentError::Config(format!(
                "scenario `{}` is not part of study {}",
                s.label(),
                study.number()
            )));
        }
        replications.extend(run_scenario(s, &pool));
    }
    let metrics = aggregate(&replications, TRUE_ATE)?;
    let extremity = extremity_table(&replications);
    Ok(StudyOutput {
        study,
        scenarios,
        replications,
        metrics,
        extremity,
    })
}

pub fn run_sim1(
    config: &GridConfig,
    replications: usize,
    seed: u64,
    workers: usize,
    allow_custom: bool,
) -> Result<StudyOutput, ExperimentError> {
    run_study(
        Study::I,
        config.scenarios(Study::I, replications, seed, allow_custom)?,
        workers,
    )
}

pub fn run_sim2(
    config: &GridConfig,
    replications: usize,
    seed: u64,
    workers: usize,
    allow_custom: bool,
) -> Result<StudyOutput, ExperimentError> {
    run_study(
        Study::II,
        config.scenarios(Study::II, replications, seed, allow_custom)?,
        workers,
    )
}

pub fn run_sim3(
    config: &GridConfig,
    replications: usize,
    seed: u64,
    workers: usize,
    allow_custom: bool,
) -> Result<StudyOutput, ExperimentError> {
    run_study(
        Study::III,
        config.scenarios(Study::III, replications, seed, allow_custom)?,
        workers,
    )
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPLICATION_HEADER: [&str; 7] = [
    "scenario",
    "replication",
    "method",
    "stage",
    "p",
    "estimate",
    "failure",
];
pub const METRICS_HEADER: [&str; 12] = [
    "scenario",
    "method",
    "stage",
    "p",
    "n_ok",
    "n_failed",
    "mean",
    "bias",
    "variance",
    "mse",
    "mse_decomposed",
    "relative_bias",
];
pub const EXTREMITY_HEADER: [&str; 7] = [
    "scenario",
    "kind",
    "n",
    "mean_max",
    "mean_pct_over_5",
    "mean_pct_over_10",
    "mean_pct_over_20",
];

pub fn write_replications<W: Write>(
    results: &[ReplicationResult],
    writer: W,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPLICATION_HEADER)?;
    for r in results {
        for e in &r.estimates {
            w.write_record([
                r.scenario.clone(),
                r.replication.to_string(),
                e.method.clone(),
                opt(e.stage),
                opt(e.percentile),
                opt(e.estimate),
                e.failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(table: &MetricsTable, writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in &table.rows {
        let s = r.summary;
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            opt(r.stage),
            opt(r.percentile),
            s.map(|s| s.n_ok).unwrap_or(0).to_string(),
            r.n_failed.to_string(),
            opt(s.map(|s| s.mean)),
            opt(s.map(|s| s.bias)),
            opt(s.and_then(|s| s.variance)),
            opt(s.map(|s| s.mse)),
            opt(s.and_then(|s| s.mse_decomposed)),
            opt(s.map(|s| s.relative_bias)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_extremity<W: Write>(rows: &[ExtremityRow], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EXTREMITY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.kind.to_string(),
            r.n.to_string(),
            r.mean_max.to_string(),
            r.mean_pct_over_5.to_string(),
            r.mean_pct_over_10.to_string(),
            r.mean_pct_over_20.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl StudyOutput {
    /// Writes `metrics_<k>.csv`, `replications_<k>.csv` and
    /// `weights_extremity_<k>.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let k = self.study.number();
        write_metrics(
            &self.metrics,
            File::create(dir.join(format!("metrics_{k}.csv")))?,
        )?;
        write_replications(
            &self.replications,
            File::create(dir.join(format!("replications_{k}.csv")))?,
        )?;
        write_extremity(
            &self.extremity,
            File::create(dir.join(format!("weights_extremity_{k}.csv")))?,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_by_hand() {
        let s = summarize(&[0.5, 0.5, 0.5], 0.5).unwrap();
        assert_eq!((s.bias, s.variance, s.mse), (0.0, Some(0.0), 0.0));
        let s = summarize(&[0.4, 0.6], 0.5).unwrap();
        assert!(s.bias.abs() < 1e-15);
        assert!((s.mse - 0.01).abs() < 1e-15);
        assert!((s.variance.unwrap() - 0.02).abs() < 1e-15);
        let s = summarize(&[0.7], 0.5).unwrap();
        assert!(s.variance.is_none());
        assert!((s.bias - 0.2).abs() < 1e-15);
        assert!(summarize(&[], 0.5).is_none());
    }

    #[test]
    fn all_failed_is_an_error() {
        let r = ReplicationResult {
            scenario: "s".into(),
            replication: 0,
            estimates: vec![MethodEstimate::new("m", Err("boom".into()))],
            weight_summaries: vec![],
        };
        assert!(matches!(
            aggregate(&[r], 0.5),
            Err(ExperimentError::AllFailed(_))
        ));
        assert!(matches!(aggregate(&[], 0.5), Err(ExperimentError::Empty)));
    }

    #[test]
    fn failures_are_counted_not_averaged() {
        let mk = |rep, v: Result<f64, String>| ReplicationResult {
            scenario: "s".into(),
            replication: rep,
            estimates: vec![MethodEstimate::new("m", v)],
            weight_summaries: vec![],
        };
        let t = aggregate(
            &[mk(0, Ok(0.6)), mk(1, Err("x".into())), mk(2, Ok(0.4))],
            0.5,
        )
        .unwrap();
        let row = &t.rows[0];
        assert_eq!(row.n_failed, 1);
        assert_eq!(row.summary.unwrap().n_ok, 2);
    }

    #[test]
    fn grid_validation() {
        let g = GridConfig {
            eta: Some(vec![[0.4, 0.3, 0.0]]),
            ..GridConfig::default()
        };
        assert!(g.scenarios(Study::I, 10, 1, false).is_err());
        assert!(g.scenarios(Study::I, 10, 1, true).is_ok());
        assert_eq!(
            GridConfig::default()
                .scenarios(Study::I, 1, 1, false)
                .unwrap()
                .len(),
            9
        );
        assert_eq!(
            GridConfig::default()
                .scenarios(Study::II, 1, 1, false)
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            GridConfig::default()
                .scenarios(Study::III, 1, 1, false)
                .unwrap()
                .len(),
            6
        );
        let wrong = GridConfig {
            pairs: Some(vec![(Level::High, Level::High)]),
            ..GridConfig::default()
        };
        assert!(wrong.scenarios(Study::III, 1, 1, false).is_err());
        assert!(wrong.scenarios(Study::II, 1, 1, true).is_err());
    }

    #[test]
    fn subsets_cover_all_seven() {
        let s = all_subsets();
        assert_eq!(s.len(), 7);
        assert_eq!(subset_label(&s[6]), "D+G+Z");
        assert_eq!(subset_label(&[]), "naive");
    }

    #[test]
    fn single_replication_of_each_study() {
        for study in [Study::I, Study::II, Study::III] {
            let g = GridConfig {
                p_grid: (study == Study::III).then(|| vec![0.9, 1.0]),
                ..GridConfig::default()
            };
            let mut sc = g.scenarios(study, 1, 7, false).unwrap();
            sc.truncate(1);
            let out = run_study(study, sc, 1).unwrap();
            assert!(!out.metrics.rows.is_empty());
            for row in &out.metrics.rows {
                assert!(row.summary.unwrap().variance.is_none());
            }
        }
    }

    #[test]
    fn untrimmed_equals_p_one() {
        let g = GridConfig {
            pairs: Some(vec![(Level::Low, Level::Low)]),
            p_grid: Some(vec![1.0]),
            ..GridConfig::default()
        };
        let sc = g.scenarios(Study::III, 1, 3, false).unwrap();
        let r = run_replication(&sc[0], 0);
        let find = |stage| {
            r.estimates
                .iter()
                .find(|e| e.method == "FIPTIW" && e.stage == stage)
                .unwrap()
                .estimate
        };
        assert_eq!(find(None), find(Some(TrimStage::Before)));
        assert_eq!(find(None), find(Some(TrimStage::After)));
    }
}
