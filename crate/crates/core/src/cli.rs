//! Command-line surface: `simulate`, `run-sim`, `analyze` and `weights`.
//!
//! The binary is a thin wrapper over [`run`]; every subcommand is also a plain
//! library function so it can be driven from tests and examples.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{GridConfig, MetricsTable, Study};
use crate::gee::{tertile_knots, GeeDesign, GeeFit, OutcomeSpec, SplineSpec};
use crate::panel::{
    fmt_f64, load_panel, write_observations, write_subjects, Panel, PREV_COUNT, PREV_OUTCOME,
};
use crate::simgen::{gen_panel, scenario_id, DgpSpec, RngStream};
use crate::survival::{fit_ph, FittedIntensity, PhSpec};
use crate::weights::{
    combine, fit_propensity, iiw_weights, iptw_weights, trim, FittedPropensity, TrimStage,
    WeightSet,
};

/// Weighting methods reported by [`analyze`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "IPTW")]
    Iptw,
    #[serde(rename = "IIW")]
    Iiw,
    #[serde(rename = "FIPTIW")]
    Fiptiw,
    #[serde(rename = "FIPTIW-trimmed")]
    FiptiwTrimmed,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::None,
        Method::Iptw,
        Method::Iiw,
        Method::Fiptiw,
        Method::FiptiwTrimmed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Iptw => "IPTW",
            Method::Iiw => "IIW",
            Method::Fiptiw => "FIPTIW",
            Method::FiptiwTrimmed => "FIPTIW-trimmed",
        }
    }

    fn needs_iptw(self) -> bool {
        matches!(self, Method::Iptw | Method::Fiptiw | Method::FiptiwTrimmed)
    }

    fn needs_iiw(self) -> bool {
        matches!(self, Method::Iiw | Method::Fiptiw | Method::FiptiwTrimmed)
    }
}

/// Spline knot placement for the time trend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    /// Tertiles of the pooled observation times.
    #[default]
    Tertiles,
    Explicit(Vec<f64>),
}

fn default_censor_time() -> f64 {
    182.5
}
fn default_trim_percentile() -> f64 {
    0.95
}
fn default_trim_stage() -> TrimStage {
    TrimStage::After
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_true() -> bool {
    true
}

/// Configuration of the real-data pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Long-format file `id,time,<outcome>,<covariates...>`.
    pub observations: PathBuf,
    /// Per-subject file `id[,censor_time],<baseline...>`.
    #[serde(default)]
    pub subjects: Option<PathBuf>,
    pub outcome: String,
    pub treatment: String,
    pub propensity_covariates: Vec<String>,
    pub intensity_covariates: Vec<String>,
    /// Records after this time are dropped and censoring is capped here.
    #[serde(default = "default_censor_time")]
    pub censor_time: f64,
    #[serde(default)]
    pub knots: KnotRule,
    #[serde(default = "default_trim_percentile")]
    pub trim_percentile: f64,
    #[serde(default = "default_trim_stage")]
    pub trim_stage: TrimStage,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Value of `prev_outcome` before a subject's first observation.
    #[serde(default)]
    pub history_fill: f64,
    /// Drop observation events at `t = 0` from the intensity fit.
    #[serde(default = "default_true")]
    pub exclude_zero_time_events: bool,
}

impl AnalyzeConfig {
    /// Config with the documented defaults for everything but the columns.
    pub fn new(
        observations: impl Into<PathBuf>,
        outcome: &str,
        treatment: &str,
        propensity_covariates: &[&str],
        intensity_covariates: &[&str],
    ) -> Self {
        AnalyzeConfig {
            observations: observations.into(),
            subjects: None,
            outcome: outcome.into(),
            treatment: treatment.into(),
            propensity_covariates: propensity_covariates
                .iter()
                .map(|s| s.to_string())
                .collect(),
            intensity_covariates: intensity_covariates.iter().map(|s| s.to_string()).collect(),
            censor_time: default_censor_time(),
            knots: KnotRule::Tertiles,
            trim_percentile: default_trim_percentile(),
            trim_stage: default_trim_stage(),
            methods: default_methods(),
            history_fill: 0.0,
            exclude_zero_time_events: true,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let config: AnalyzeConfig = serde_json::from_reader(File::open(path)?)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.trim_percentile) {
            return Err(Error::Config(format!(
                "trim percentile {} outside [0.5, 1]",
                self.trim_percentile
            )));
        }
        if !(self.censor_time.is_finite() && self.censor_time > 0.0) {
            return Err(Error::Config(format!(
                "censor time {} must be positive",
                self.censor_time
            )));
        }
        if let KnotRule::Explicit(k) = &self.knots {
            if k.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("explicit knots must be finite".into()));
            }
        }
        Ok(())
    }

    fn uses_history(&self) -> bool {
        self.intensity_covariates
            .iter()
            .any(|c| c == PREV_OUTCOME || c == PREV_COUNT)
    }
}

/// Loads the panel named by the config and applies the artificial censoring.
pub fn load_analysis_panel(config: &AnalyzeConfig) -> Result<Panel> {
    let panel = load_panel(
        &config.observations,
        config.subjects.as_deref(),
        &config.outcome,
        None,
    )?;
    Ok(panel)
}

/// Drops records after `cutoff` and caps censoring there.
pub fn artificially_censor(panel: &Panel, cutoff: f64) -> Result<Panel> {
    let max_obs = panel
        .subjects()
        .iter()
        .flat_map(|s| s.obs_times.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if cutoff > max_obs {
        return Err(Error::Config(format!(
            "censor time {cutoff} exceeds the last observed time {max_obs}"
        )));
    }
    Ok(panel.censor_at(cutoff))
}

/// Keeps one subject per value of the baseline column `cluster`, chosen
/// uniformly at random with a seeded generator. Subject order is preserved.
pub fn one_per_cluster(panel: &Panel, cluster: &str, seed: u64) -> Result<Panel> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in panel.subjects().iter().enumerate() {
        let v = s.baseline.get(cluster).ok_or_else(|| {
            Error::Config(format!(
                "cluster column `{cluster}` is not a time-invariant column for subject {}",
                s.id
            ))
        })?;
        groups.entry(fmt_f64(*v)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = groups
        .values()
        .map(|members| *members.choose(&mut rng).expect("non-empty group"))
        .collect();
    keep.sort_unstable();
    Ok(panel.select(&keep))
}

/// Every fitted nuisance model and weight set behind an analysis.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisWeights {
    pub propensity: Option<FittedPropensity>,
    pub intensity: Option<FittedIntensity>,
    pub numerator: Option<FittedIntensity>,
    pub iptw: Option<WeightSet>,
    pub iiw: Option<WeightSet>,
    pub fiptiw: Option<WeightSet>,
    pub fiptiw_trimmed: Option<WeightSet>,
}

impl AnalysisWeights {
    fn for_method(&self, m: Method) -> Option<&WeightSet> {
        match m {
            Method::None => None,
            Method::Iptw => self.iptw.as_ref(),
            Method::Iiw => self.iiw.as_ref(),
            Method::Fiptiw => self.fiptiw.as_ref(),
            Method::FiptiwTrimmed => self.fiptiw_trimmed.as_ref(),
        }
    }

    /// `(label, set)` for every weight set that was built.
    pub fn labelled(&self) -> Vec<(&'static str, &WeightSet)> {
        [
            ("IPTW", &self.iptw),
            ("IIW", &self.iiw),
            ("FIPTIW", &self.fiptiw),
            ("FIPTIW-trimmed", &self.fiptiw_trimmed),
        ]
        .into_iter()
        .filter_map(|(l, w)| w.as_ref().map(|w| (l, w)))
        .collect()
    }
}

/// Builds the weights the configured methods need on an already censored
/// panel.
pub fn analysis_weights(
    panel: &Panel,
    config: &AnalyzeConfig,
    methods: &[Method],
) -> Result<AnalysisWeights> {
    let want_iptw = methods.iter().any(|m| m.needs_iptw());
    let want_iiw = methods.iter().any(|m| m.needs_iiw());
    let mut out = AnalysisWeights {
        propensity: None,
        intensity: None,
        numerator: None,
        iptw: None,
        iiw: None,
        fiptiw: None,
        fiptiw_trimmed: None,
    };
    if want_iptw {
        let fit = fit_propensity(
            panel,
            &config.treatment,
            &config.propensity_covariates,
            true,
        )?;
        out.iptw = Some(iptw_weights(&fit, panel)?);
        out.propensity = Some(fit);
    }
    if want_iiw {
        let mut spec = PhSpec::intensity(&config.intensity_covariates);
        spec.exclude_zero_time_events = config.exclude_zero_time_events;
        let mut num_spec = PhSpec::intensity(&[config.treatment.as_str()]);
        num_spec.exclude_zero_time_events = config.exclude_zero_time_events;
        let denominator = fit_ph(panel, &spec)?;
        let numerator = fit_ph(panel, &num_spec)?;
        out.iiw = Some(iiw_weights(&denominator, Some(&numerator), panel)?);
        out.intensity = Some(denominator);
        out.numerator = Some(numerator);
    }
    if let (Some(a), Some(b)) = (&out.iiw, &out.iptw) {
        let product = combine(&[a, b])?;
        if methods.contains(&Method::FiptiwTrimmed) {
            out.fiptiw_trimmed = Some(match config.trim_stage {
                TrimStage::After => trim(&product, config.trim_percentile, TrimStage::After)?,
                TrimStage::Before => crate::weights::combine_trimmed(
                    &[a, b],
                    config.trim_percentile,
                    TrimStage::Before,
                )?,
            });
        }
        out.fiptiw = Some(product);
    }
    Ok(out)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub odds_ratio: f64,
    pub or_ci_lower: f64,
    pub or_ci_upper: f64,
    pub n_obs: usize,
    pub sum_weights: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub knots: Vec<f64>,
    pub results: Vec<MethodResult>,
    pub fits: Vec<(Method, GeeFit)>,
    pub weights: AnalysisWeights,
    pub n_subjects: usize,
}

pub const RESULTS_HEADER: [&str; 10] = [
    "method",
    "estimate",
    "se",
    "ci_lower",
    "ci_upper",
    "odds_ratio",
    "or_ci_lower",
    "or_ci_upper",
    "n_obs",
    "sum_weights",
];

/// The logit-link outcome model: intercept, cubic spline in time, treatment.
pub fn outcome_model(panel: &Panel, config: &AnalyzeConfig) -> Result<OutcomeSpec> {
    let knots = match &config.knots {
        KnotRule::Tertiles => tertile_knots(&panel.pooled_times())?,
        KnotRule::Explicit(k) => k.clone(),
    };
    Ok(OutcomeSpec::bernoulli(&[config.treatment.as_str()])
        .with_intercept()
        .with_spline(SplineSpec {
            knots,
            boundary: None,
        }))
}

/// Runs every configured method on a panel that has already been censored.
pub fn analyze_panel(panel: &Panel, config: &AnalyzeConfig) -> Result<Analysis> {
    config.validate()?;
    let panel = if config.uses_history() {
        panel.with_history_covariates(config.history_fill)
    } else {
        panel.clone()
    };
    let mut methods = config.methods.clone();
    methods.sort_unstable();
    methods.dedup();
    let weights = analysis_weights(&panel, config, &methods)?;
    let spec = outcome_model(&panel, config)?;
    let knots = spec
        .spline
        .as_ref()
        .map(|s| s.knots.clone())
        .unwrap_or_default();
    let design = GeeDesign::new(&panel, &spec)?;
    let mut results = Vec::with_capacity(methods.len());
    let mut fits = Vec::with_capacity(methods.len());
    for &m in &methods {
        let fit = design.solve(weights.for_method(m))?;
        let row = fit
            .summary()
            .into_iter()
            .find(|c| c.name == config.treatment)
            .expect("treatment is a design column");
        results.push(MethodResult {
            method: m,
            estimate: row.estimate,
            se: row.se,
            ci_lower: row.ci_lower,
            ci_upper: row.ci_upper,
            odds_ratio: row.odds_ratio.unwrap_or(f64::NAN),
            or_ci_lower: row.or_ci_lower.unwrap_or(f64::NAN),
            or_ci_upper: row.or_ci_upper.unwrap_or(f64::NAN),
            n_obs: fit.n_obs_used,
            sum_weights: fit.sum_weights,
        });
        fits.push((m, fit));
    }
    Ok(Analysis {
        knots,
        results,
        fits,
        weights,
        n_subjects: panel.len(),
    })
}

/// Loads, censors and analyzes the data named by `config`.
pub fn analyze(config: &AnalyzeConfig) -> Result<Analysis> {
    config.validate()?;
    let panel = artificially_censor(&load_analysis_panel(config)?, config.censor_time)?;
    analyze_panel(&panel, config)
}

pub fn write_results<W: Write>(results: &[MethodResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.method.label().to_string(),
            fmt_f64(r.estimate),
            fmt_f64(r.se),
            fmt_f64(r.ci_lower),
            fmt_f64(r.ci_upper),
            fmt_f64(r.odds_ratio),
            fmt_f64(r.or_ci_lower),
            fmt_f64(r.or_ci_upper),
            r.n_obs.to_string(),
            fmt_f64(r.sum_weights),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const WEIGHTS_HEADER: [&str; 5] = ["id", "time", "kind", "weight", "trimmed_flag"];

/// Long-format dump of every weight set: `id,time,kind,weight,trimmed_flag`.
pub fn write_weights<W: Write>(panel: &Panel, weights: &AnalysisWeights, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(WEIGHTS_HEADER)?;
    let subjects = panel.subjects();
    for (label, set) in weights.labelled() {
        let flags = set.trimmed_flags();
        for ((key, &value), flag) in set.keys().iter().zip(set.entries()).zip(flags) {
            w.write_record([
                subjects[key.subject].id.clone(),
                fmt_f64(key.time),
                label.to_string(),
                fmt_f64(value),
                u8::from(flag).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const PLOT_HEADER: [&str; 6] = [
    "scenario",
    "method",
    "stage",
    "percentile",
    "metric",
    "value",
];

/// Tidy long-format metrics: one row per (scenario, method, stage, p, metric).
pub fn emit_plot_data<W: Write>(metrics: &MetricsTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PLOT_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &metrics.rows {
        let s = r.summary;
        let values = [
            ("n_ok", Some(s.map(|s| s.n_ok as f64).unwrap_or(0.0))),
            ("n_failed", Some(r.n_failed as f64)),
            ("mean", s.map(|s| s.mean)),
            ("bias", s.map(|s| s.bias)),
            ("variance", s.and_then(|s| s.variance)),
            ("mse", s.map(|s| s.mse)),
            ("relative_bias", s.map(|s| s.relative_bias)),
        ];
        for (metric, value) in values {
            w.write_record([
                r.scenario.clone(),
                r.method.clone(),
                r.stage.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.percentile),
                metric.to_string(),
                opt(value),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Generates one panel from a JSON data-generating spec and writes
/// `observations.csv` and `subjects.csv` into `out`.
pub fn simulate(spec_path: &Path, seed: u64, out: &Path) -> Result<Panel> {
    let spec: DgpSpec = serde_json::from_reader(File::open(spec_path)?)?;
    let sim = gen_panel(&spec, RngStream::new(seed, scenario_id("simulate"), 0))?;
    std::fs::create_dir_all(out)?;
    write_observations(&sim.panel, File::create(out.join("observations.csv"))?)?;
    write_subjects(&sim.panel, File::create(out.join("subjects.csv"))?)?;
    Ok(sim.panel)
}

/// Options of the `run-sim` subcommand.
#[derive(Debug, Clone)]
pub struct RunSimOptions {
    pub study: u8,
    pub grid: Option<PathBuf>,
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub allow_custom: bool,
}

/// Runs a study and writes metrics, replications, extremity and plot CSVs.
pub fn run_sim(opts: &RunSimOptions) -> Result<MetricsTable> {
    let study = Study::from_number(opts.study).ok_or_else(|| {
        Error::Config(format!("unknown study {}; expected 1, 2 or 3", opts.study))
    })?;
    let grid: GridConfig = match &opts.grid {
        Some(p) => serde_json::from_reader(File::open(p)?)?,
        None => GridConfig::default(),
    };
    if opts.replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    let scenarios = grid.scenarios(study, opts.replications, opts.seed, opts.allow_custom)?;
    let output = crate::experiments::run_study(study, scenarios, opts.workers)?;
    output.write_csvs(&opts.out)?;
    let k = study.number();
    emit_plot_data(
        &output.metrics,
        File::create(opts.out.join(format!("plot_data_{k}.csv")))?,
    )?;
    Ok(output.metrics)
}

/// Runs `analyze` and writes `results.csv` (and `fits.json` on request).
pub fn analyze_command(
    config_path: &Path,
    out: &Path,
    dump_fits: bool,
    dump_weights: Option<&Path>,
    cluster: Option<(&str, u64)>,
) -> Result<Analysis> {
    let config = AnalyzeConfig::from_path(config_path)?;
    let mut panel = load_analysis_panel(&config)?;
    if let Some((column, seed)) = cluster {
        panel = one_per_cluster(&panel, column, seed)?;
    }
    let panel = artificially_censor(&panel, config.censor_time)?;
    let analysis = analyze_panel(&panel, &config)?;
    std::fs::create_dir_all(out)?;
    write_results(&analysis.results, File::create(out.join("results.csv"))?)?;
    if dump_fits {
        serde_json::to_writer_pretty(File::create(out.join("fits.json"))?, &analysis)?;
    }
    if let Some(path) = dump_weights {
        write_weights(&panel, &analysis.weights, File::create(path)?)?;
    }
    Ok(analysis)
}

/// Builds every weight set for `config` and writes them to `dump`.
pub fn weights_command(config_path: &Path, dump: &Path) -> Result<AnalysisWeights> {
    let config = AnalyzeConfig::from_path(config_path)?;
    let panel = artificially_censor(&load_analysis_panel(&config)?, config.censor_time)?;
    let panel = if config.uses_history() {
        panel.with_history_covariates(config.history_fill)
    } else {
        panel
    };
    let weights = analysis_weights(&panel, &config, &Method::ALL)?;
    write_weights(&panel, &weights, File::create(dump)?)?;
    Ok(weights)
}

#[derive(Debug, Parser)]
#[command(
    name = "fiptiw",
    version,
    about = "Flexible inverse probability of treatment and intensity weighting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one synthetic panel.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation study.
    RunSim {
        #[arg(long)]
        study: u8,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
        /// Permit grid values outside the published grids.
        #[arg(long)]
        allow_custom: bool,
    },
    /// Fit the weighted outcome model to a panel.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_fits: bool,
        #[arg(long)]
        dump_weights: Option<PathBuf>,
        /// Keep one subject per value of this baseline column.
        #[arg(long, requires = "seed")]
        one_per_cluster: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build and dump the analysis weights.
    Weights {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dump: PathBuf,
    },
}

/// Executes a parsed command.
pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { spec, seed, out } => {
            let panel = simulate(&spec, seed, &out)?;
            println!(
                "wrote {} subjects, {} observations to {}",
                panel.len(),
                panel.n_observations(),
                out.display()
            );
        }
        Command::RunSim {
            study,
            spec,
            reps,
            seed,
            workers,
            out,
            allow_custom,
        } => {
            let metrics = run_sim(&RunSimOptions {
                study,
                grid: spec,
                replications: reps,
                seed,
                workers,
                out: out.clone(),
                allow_custom,
            })?;
            println!(
                "wrote {} metric rows to {}",
                metrics.rows.len(),
                out.display()
            );
        }
        Command::Analyze {
            config,
            out,
            dump_fits,
            dump_weights,
            one_per_cluster,
            seed,
        } => {
            let cluster = one_per_cluster.as_deref().zip(seed);
            let analysis =
                analyze_command(&config, &out, dump_fits, dump_weights.as_deref(), cluster)?;
            for r in &analysis.results {
                println!(
                    "{:<15} OR {:.3} ({:.3}, {:.3})",
                    r.method.label(),
                    r.odds_ratio,
                    r.or_ci_lower,
                    r.or_ci_upper
                );
            }
        }
        Command::Weights { config, dump } => {
            let weights = weights_command(&config, &dump)?;
            for (label, w) in weights.labelled() {
                let s = w.summary();
                println!(
                    "{label:<15} n {} max {:.3} %>5 {:.2} %>10 {:.2} %>20 {:.2}",
                    w.len(),
                    s.max,
                    s.pct_over_5,
                    s.pct_over_10,
                    s.pct_over_20
                );
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_status() as i32
        }
    }
}
