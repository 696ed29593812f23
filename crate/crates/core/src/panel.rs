//! Irregular longitudinal data: subjects observed at their own times, with
//! censoring, baseline covariates and time-varying covariate series.
//!
//! A [`Panel`] is immutable once built. Subjects are at risk on the closed
//! interval `[0, C_i]`, so an observation exactly at the censoring time counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PanelError {
    #[error("duplicate observation for subject `{id}` at time {time}")]
    DuplicateObservation { id: String, time: f64 },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),
    #[error("subject `{id}`: observation time {time} is after censoring time {censor}")]
    ObservationAfterCensoring { id: String, time: f64, censor: f64 },
    #[error("subject `{id}`: censoring time {censor} outside [0, {tau}]")]
    CensorOutOfRange { id: String, censor: f64, tau: f64 },
    #[error("non-finite value in column `{column}` for subject `{id}`")]
    NonFinite { id: String, column: String },
    #[error("subject `{id}`: {detail}")]
    InvalidSubject { id: String, detail: String },
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("time {t} outside [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },
    #[error("covariate `{name}` is not finite at t = {t}")]
    NotEvaluable { name: String, t: f64 },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for PanelError {
    fn from(e: csv::Error) -> Self {
        PanelError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for PanelError {
    fn from(e: std::io::Error) -> Self {
        PanelError::Io(e.to_string())
    }
}

/// Closed-form covariate paths used by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum AnalyticForm {
    /// `scale * ln(t)`.
    ScaledLog { scale: f64 },
    /// `intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
}

impl AnalyticForm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            AnalyticForm::ScaledLog { scale } => scale * t.ln(),
            AnalyticForm::Linear { intercept, slope } => intercept + slope * t,
        }
    }
}

/// A covariate path `t -> value` for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSeries {
    Constant {
        value: f64,
    },
    /// Last observation carried forward over ascending `knots`.
    ///
    /// With `lagged` set the lookup uses the greatest knot strictly below `t`
    /// (a left limit), which is what past-outcome covariates need. Before the
    /// first usable knot the series returns `fill`.
    Step {
        knots: Vec<f64>,
        values: Vec<f64>,
        fill: f64,
        lagged: bool,
    },
    Analytic {
        form: AnalyticForm,
    },
}

impl CovariateSeries {
    pub fn step(knots: Vec<f64>, values: Vec<f64>, fill: f64) -> Self {
        CovariateSeries::Step {
            knots,
            values,
            fill,
            lagged: false,
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            CovariateSeries::Constant { .. } => true,
            CovariateSeries::Step { values, fill, .. } => {
                values.iter().all(|v| v == fill) || values.is_empty()
            }
            CovariateSeries::Analytic { .. } => false,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            CovariateSeries::Constant { value } => *value,
            CovariateSeries::Step {
                knots,
                values,
                fill,
                lagged,
            } => {
                let idx = if *lagged {
                    knots.partition_point(|&k| k < t)
                } else {
                    knots.partition_point(|&k| k <= t)
                };
                if idx == 0 {
                    *fill
                } else {
                    values[idx - 1]
                }
            }
            CovariateSeries::Analytic { form } => form.eval(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub obs_times: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub censor_time: f64,
    pub baseline: BTreeMap<String, f64>,
    pub series: BTreeMap<String, CovariateSeries>,
}

impl Subject {
    pub fn new(id: impl Into<String>, censor_time: f64) -> Self {
        Subject {
            id: id.into(),
            obs_times: Vec::new(),
            outcomes: Vec::new(),
            censor_time,
            baseline: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.obs_times.len()
    }

    /// `N_i(t)`: number of observations at or before `t`.
    pub fn count_at(&self, t: f64) -> usize {
        self.obs_times.partition_point(|&s| s <= t)
    }

    pub fn has_covariate(&self, name: &str) -> bool {
        self.baseline.contains_key(name) || self.series.contains_key(name)
    }

    /// True when the covariate cannot change over time for this subject.
    pub fn is_time_invariant(&self, name: &str) -> bool {
        if self.baseline.contains_key(name) {
            return true;
        }
        self.series
            .get(name)
            .map(CovariateSeries::is_time_invariant)
            .unwrap_or(true)
    }

    fn validate(&self, tau: f64) -> Result<(), PanelError> {
        let id = &self.id;
        if !self.censor_time.is_finite() {
            return Err(PanelError::NonFinite {
                id: id.clone(),
                column: "censor_time".into(),
            });
        }
        if self.censor_time < 0.0 || self.censor_time > tau {
            return Err(PanelError::CensorOutOfRange {
                id: id.clone(),
                censor: self.censor_time,
                tau,
            });
        }
        if self.obs_times.len() != self.outcomes.len() {
            return Err(PanelError::InvalidSubject {
                id: id.clone(),
                detail: "outcomes and observation times differ in length".into(),
            });
        }
        for (k, (&t, &y)) in self.obs_times.iter().zip(&self.outcomes).enumerate() {
            if !t.is_finite() {
                return Err(PanelError::NonFinite {
                    id: id.clone(),
                    column: "time".into(),
                });
            }
            if !y.is_finite() {
                return Err(PanelError::NonFinite {
                    id: id.clone(),
                    column: "outcome".into(),
                });
            }
            if t < 0.0 {
                return Err(PanelError::InvalidSubject {
                    id: id.clone(),
                    detail: format!("negative observation time {t}"),
                });
            }
            if t > self.censor_time {
                return Err(PanelError::ObservationAfterCensoring {
                    id: id.clone(),
                    time: t,
                    censor: self.censor_time,
                });
            }
            if k > 0 && t <= self.obs_times[k - 1] {
                return Err(PanelError::InvalidSubject {
                    id: id.clone(),
                    detail: "observation times are not strictly increasing".into(),
                });
            }
        }
        for (name, v) in &self.baseline {
            if !v.is_finite() {
                return Err(PanelError::NonFinite {
                    id: id.clone(),
                    column: name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    subjects: Vec<Subject>,
    tau: f64,
}

impl Panel {
    /// Validates every subject and the panel-level invariants.
    pub fn new(subjects: Vec<Subject>, tau: f64) -> Result<Self, PanelError> {
        let mut seen = BTreeSet::new();
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(PanelError::DuplicateSubject(s.id.clone()));
            }
            s.validate(tau)?;
        }
        Ok(Panel { subjects, tau })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(Subject::n_obs).sum()
    }

    /// All `(subject index, time)` keys in panel order.
    pub fn observation_keys(&self) -> Vec<(usize, f64)> {
        self.subjects
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.obs_times.iter().map(move |&t| (i, t)))
            .collect()
    }

    pub fn pooled_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .subjects
            .iter()
            .flat_map(|s| s.obs_times.iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn covariate_at(&self, subject: &Subject, name: &str, t: f64) -> Result<f64, PanelError> {
        covariate_at(subject, name, t, self.tau)
    }

    /// Keeps only records at or before `cutoff` and censors everyone at
    /// `min(C_i, cutoff)`. The study end becomes `min(tau, cutoff)`.
    pub fn censor_at(&self, cutoff: f64) -> Panel {
        let tau = self.tau.min(cutoff);
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let keep = s.obs_times.partition_point(|&t| t <= cutoff);
                let mut s2 = s.clone();
                s2.obs_times.truncate(keep);
                s2.outcomes.truncate(keep);
                s2.censor_time = s.censor_time.min(cutoff);
                s2
            })
            .collect();
        Panel { subjects, tau }
    }

    /// Panel restricted to the given subject indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Panel {
        Panel {
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            tau: self.tau,
        }
    }

    /// Attaches `prev_outcome` (last observed outcome strictly before `t`)
    /// and `prev_count` (`N(t-)`) step series to every subject.
    pub fn with_history_covariates(&self, fill: f64) -> Panel {
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut s2 = s.clone();
                s2.series.insert(
                    PREV_OUTCOME.to_string(),
                    CovariateSeries::Step {
                        knots: s.obs_times.clone(),
                        values: s.outcomes.clone(),
                        fill,
                        lagged: true,
                    },
                );
                s2.series.insert(
                    PREV_COUNT.to_string(),
                    CovariateSeries::Step {
                        knots: s.obs_times.clone(),
                        values: (1..=s.obs_times.len()).map(|k| k as f64).collect(),
                        fill: 0.0,
                        lagged: true,
                    },
                );
                s2
            })
            .collect();
        Panel {
            subjects,
            tau: self.tau,
        }
    }
}

/// Name of the derived past-outcome series.
pub const PREV_OUTCOME: &str = "prev_outcome";
/// Name of the derived past-count series.
pub const PREV_COUNT: &str = "prev_count";

/// Value of covariate `name` for `subject` at time `t`.
///
/// Baseline values are constant in time. Lookups outside `[0, tau]` fail, as
/// does any analytic path that is not finite at `t` (e.g. `ln 0`).
pub fn covariate_at(subject: &Subject, name: &str, t: f64, tau: f64) -> Result<f64, PanelError> {
    if !(0.0..=tau).contains(&t) {
        return Err(PanelError::TimeOutOfRange { t, tau });
    }
    let v = if let Some(v) = subject.baseline.get(name) {
        *v
    } else if let Some(series) = subject.series.get(name) {
        series.value_at(t)
    } else {
        return Err(PanelError::UnknownCovariate(name.to_string()));
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(PanelError::NotEvaluable {
            name: name.to_string(),
            t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    /// Every observation time is an event of the recurrent observation process.
    Observations,
    /// Censoring times strictly before `tau`; censoring at `tau` is administrative.
    Censoring,
}

/// Risk sets at the pooled event times.
///
/// Everyone enters at time zero, so the at-risk set at `t` (`C_j >= t`) is a
/// suffix of the subjects sorted by censoring time. The table stores that
/// ordering once plus one suffix offset per event time.
#[derive(Debug, Clone)]
pub struct RiskTable {
    order: Vec<usize>,
    times: Vec<f64>,
    starts: Vec<usize>,
    events: Vec<Vec<usize>>,
}

impl RiskTable {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Subject indices sorted by ascending censoring time.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Offset into [`Self::order`] where the risk set of event `k` begins.
    pub fn start(&self, k: usize) -> usize {
        self.starts[k]
    }

    pub fn at_risk(&self, k: usize) -> &[usize] {
        &self.order[self.starts[k]..]
    }

    /// Subjects with an event at time `k` (one entry per event; Breslow ties).
    pub fn events(&self, k: usize) -> &[usize] {
        &self.events[k]
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }
}

/// Builds risk sets for observation or censoring events.
///
/// With `min_time` set, events at or before it are skipped (e.g. an enrollment
/// visit at `t = 0` that the observation process did not generate).
pub fn risk_table(panel: &Panel, source: EventSource, min_time: Option<f64>) -> RiskTable {
    let subjects = panel.subjects();
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| subjects[a].censor_time.total_cmp(&subjects[b].censor_time));

    let mut raw: Vec<(f64, usize)> = Vec::new();
    match source {
        EventSource::Observations => {
            for (i, s) in subjects.iter().enumerate() {
                raw.extend(s.obs_times.iter().map(|&t| (t, i)));
            }
        }
        EventSource::Censoring => {
            for (i, s) in subjects.iter().enumerate() {
                if s.censor_time < panel.tau() {
                    raw.push((s.censor_time, i));
                }
            }
        }
    }
    if let Some(m) = min_time {
        raw.retain(|&(t, _)| t > m);
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut times = Vec::new();
    let mut starts = Vec::new();
    let mut events: Vec<Vec<usize>> = Vec::new();
    for (t, i) in raw {
        if times.last() != Some(&t) {
            times.push(t);
            starts.push(order.partition_point(|&j| subjects[j].censor_time < t));
            events.push(Vec::new());
        }
        events.last_mut().expect("pushed above").push(i);
    }
    RiskTable {
        order,
        times,
        starts,
        events,
    }
}

/// One long-format row: `id,time,outcome,<covariates...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub id: String,
    pub time: f64,
    pub outcome: f64,
    pub covariates: BTreeMap<String, f64>,
}

/// One per-subject row: `id,censor_time,<baseline...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub censor_time: Option<f64>,
    pub baseline: BTreeMap<String, f64>,
}

/// Assembles a panel from long-format records.
///
/// Observation covariates that are constant within every subject are promoted
/// to baseline values; the rest become step series. A subject record without
/// a censoring time gets its last observation time (the surrogate censoring
/// time). Subjects that appear only in `subjects` keep zero observations.
pub fn build_panel(
    records: &[ObservationRecord],
    subjects: &[SubjectRecord],
    tau: f64,
) -> Result<Panel, PanelError> {
    let mut by_id: BTreeMap<&str, Vec<&ObservationRecord>> = BTreeMap::new();
    for r in records {
        if !r.time.is_finite() {
            return Err(PanelError::NonFinite {
                id: r.id.clone(),
                column: "time".into(),
            });
        }
        by_id.entry(r.id.as_str()).or_default().push(r);
    }

    let mut order: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for s in subjects {
        if !seen.insert(s.id.clone()) {
            return Err(PanelError::DuplicateSubject(s.id.clone()));
        }
        order.push(s.id.clone());
    }
    for r in records {
        if seen.insert(r.id.clone()) {
            order.push(r.id.clone());
        }
    }
    let subject_rows: BTreeMap<&str, &SubjectRecord> =
        subjects.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut columns: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        columns.extend(r.covariates.keys().map(String::as_str));
    }
    // A column is promoted only if it is constant within every subject.
    let promoted: BTreeSet<&str> = columns
        .iter()
        .copied()
        .filter(|c| {
            by_id.values().all(|rows| {
                let mut vals = rows.iter().filter_map(|r| r.covariates.get(*c));
                match vals.next() {
                    Some(first) => vals.all(|v| v.to_bits() == first.to_bits()),
                    None => true,
                }
            })
        })
        .collect();

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = by_id.remove(id.as_str()).unwrap_or_default();
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        for w in rows.windows(2) {
            if w[0].time == w[1].time {
                return Err(PanelError::DuplicateObservation {
                    id: id.clone(),
                    time: w[0].time,
                });
            }
        }
        let srow = subject_rows.get(id.as_str());
        let censor = match srow.and_then(|s| s.censor_time) {
            Some(c) => c,
            None => rows.last().map(|r| r.time).unwrap_or(0.0),
        };
        let mut subject = Subject::new(id.clone(), censor);
        if let Some(s) = srow {
            subject
                .baseline
                .extend(s.baseline.iter().map(|(k, v)| (k.clone(), *v)));
        }
        subject.obs_times = rows.iter().map(|r| r.time).collect();
        subject.outcomes = rows.iter().map(|r| r.outcome).collect();
        for c in &columns {
            let present: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| r.covariates.get(*c).map(|v| (r.time, *v)))
                .collect();
            if present.is_empty() {
                continue;
            }
            if let Some(&(_, v)) = present.iter().find(|(_, v)| !v.is_finite()) {
                let _ = v;
                return Err(PanelError::NonFinite {
                    id: id.clone(),
                    column: c.to_string(),
                });
            }
            if promoted.contains(c) {
                subject.baseline.insert(c.to_string(), present[0].1);
            } else {
                let (knots, values): (Vec<f64>, Vec<f64>) = present.into_iter().unzip();
                // Before the first record the first value is used.
                let fill = values[0];
                subject
                    .series
                    .insert(c.to_string(), CovariateSeries::step(knots, values, fill));
            }
        }
        out.push(subject);
    }
    Panel::new(out, tau)
}

fn parse_f64(id: &str, column: &str, raw: &str) -> Result<f64, PanelError> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        PanelError::Csv(format!(
            "subject `{id}`: cannot parse `{raw}` in column `{column}`"
        ))
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(PanelError::NonFinite {
            id: id.to_string(),
            column: column.to_string(),
        })
    }
}

/// Reads long-format observation rows. `outcome_column` names the outcome; all
/// columns other than `id`, `time` and the outcome are covariates.
pub fn read_observations<R: Read>(
    reader: R,
    outcome_column: &str,
) -> Result<Vec<ObservationRecord>, PanelError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let id_col = find("id")?;
    let time_col = find("time")?;
    let y_col = find(outcome_column)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row[id_col].to_string();
        let mut covariates = BTreeMap::new();
        for (j, h) in headers.iter().enumerate() {
            if j == id_col || j == time_col || j == y_col {
                continue;
            }
            covariates.insert(h.to_string(), parse_f64(&id, h, &row[j])?);
        }
        out.push(ObservationRecord {
            time: parse_f64(&id, "time", &row[time_col])?,
            outcome: parse_f64(&id, outcome_column, &row[y_col])?,
            id,
            covariates,
        });
    }
    Ok(out)
}

/// Reads per-subject rows. `censor_time` is optional.
pub fn read_subjects<R: Read>(reader: R) -> Result<Vec<SubjectRecord>, PanelError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| PanelError::MissingColumn("id".into()))?;
    let censor_col = headers.iter().position(|h| h == "censor_time");
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row[id_col].to_string();
        let mut baseline = BTreeMap::new();
        for (j, h) in headers.iter().enumerate() {
            if j == id_col || Some(j) == censor_col {
                continue;
            }
            baseline.insert(h.to_string(), parse_f64(&id, h, &row[j])?);
        }
        let censor_time = match censor_col {
            Some(c) => Some(parse_f64(&id, "censor_time", &row[c])?),
            None => None,
        };
        out.push(SubjectRecord {
            id,
            censor_time,
            baseline,
        });
    }
    Ok(out)
}

/// Loads a panel from the observation CSV and an optional subject CSV.
pub fn load_panel(
    observations: &Path,
    subjects: Option<&Path>,
    outcome_column: &str,
    tau: Option<f64>,
) -> Result<Panel, PanelError> {
    let records = read_observations(File::open(observations)?, outcome_column)?;
    let subject_rows = match subjects {
        Some(p) => read_subjects(File::open(p)?)?,
        None => Vec::new(),
    };
    let tau = tau.unwrap_or_else(|| {
        let max_obs = records.iter().map(|r| r.time).fold(0.0, f64::max);
        subject_rows
            .iter()
            .filter_map(|s| s.censor_time)
            .fold(max_obs, f64::max)
    });
    build_panel(&records, &subject_rows, tau)
}

/// Writes the observation file. Every non-baseline series is evaluated at each
/// observation time and emitted as a column, in name order.
pub fn write_observations<W: Write>(panel: &Panel, writer: W) -> Result<(), PanelError> {
    let names: BTreeSet<&str> = panel
        .subjects()
        .iter()
        .flat_map(|s| s.series.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "time", "outcome"];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for s in panel.subjects() {
        for (&t, &y) in s.obs_times.iter().zip(&s.outcomes) {
            let mut row = vec![s.id.clone(), fmt_f64(t), fmt_f64(y)];
            for n in &names {
                let v = s.series.get(*n).map(|c| c.value_at(t)).unwrap_or(f64::NAN);
                row.push(fmt_f64(v));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `id,censor_time,<baseline...>`.
pub fn write_subjects<W: Write>(panel: &Panel, writer: W) -> Result<(), PanelError> {
    let names: BTreeSet<&str> = panel
        .subjects()
        .iter()
        .flat_map(|s| s.baseline.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "censor_time"];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for s in panel.subjects() {
        let mut row = vec![s.id.clone(), fmt_f64(s.censor_time)];
        for n in &names {
            row.push(fmt_f64(s.baseline.get(*n).copied().unwrap_or(f64::NAN)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Panel(n = {}, observations = {}, tau = {})",
            self.len(),
            self.n_observations(),
            self.tau
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, time: f64, y: f64) -> ObservationRecord {
        ObservationRecord {
            id: id.into(),
            time,
            outcome: y,
            covariates: BTreeMap::new(),
        }
    }

    fn srec(id: &str, c: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            censor_time: Some(c),
            baseline: BTreeMap::new(),
        }
    }

    #[test]
    fn two_records_one_subject() {
        let p = build_panel(
            &[rec("a", 1.0, 0.0), rec("a", 0.5, 1.0)],
            &[srec("a", 2.0)],
            3.0,
        )
        .unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.subjects()[0].n_obs(), 2);
        assert_eq!(p.subjects()[0].obs_times, vec![0.5, 1.0]);
        assert_eq!(p.subjects()[0].outcomes, vec![1.0, 0.0]);
    }

    #[test]
    fn record_after_censoring_is_rejected() {
        let err = build_panel(&[rec("a", 3.0, 0.0)], &[srec("a", 2.0)], 5.0).unwrap_err();
        assert!(matches!(err, PanelError::ObservationAfterCensoring { .. }));
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let err = build_panel(
            &[rec("a", 1.0, 0.0), rec("a", 1.0, 2.0)],
            &[srec("a", 2.0)],
            5.0,
        )
        .unwrap_err();
        assert!(matches!(err, PanelError::DuplicateObservation { .. }));
    }

    #[test]
    fn non_finite_outcome_is_rejected() {
        let err = build_panel(&[rec("a", 1.0, f64::NAN)], &[srec("a", 2.0)], 5.0).unwrap_err();
        assert!(matches!(err, PanelError::NonFinite { .. }));
    }

    #[test]
    fn constant_columns_promoted() {
        let mut r1 = rec("a", 1.0, 0.0);
        r1.covariates.insert("x".into(), 2.0);
        r1.covariates.insert("v".into(), 1.0);
        let mut r2 = rec("a", 2.0, 0.0);
        r2.covariates.insert("x".into(), 2.0);
        r2.covariates.insert("v".into(), 5.0);
        let p = build_panel(&[r1, r2], &[srec("a", 3.0)], 3.0).unwrap();
        let s = &p.subjects()[0];
        assert_eq!(s.baseline.get("x"), Some(&2.0));
        assert!(s.series.contains_key("v"));
        assert_eq!(p.covariate_at(s, "v", 1.5).unwrap(), 1.0);
        assert_eq!(p.covariate_at(s, "v", 2.0).unwrap(), 5.0);
    }

    #[test]
    fn surrogate_censoring_time() {
        let sub = SubjectRecord {
            id: "a".into(),
            censor_time: None,
            baseline: BTreeMap::new(),
        };
        let p = build_panel(&[rec("a", 1.0, 0.0), rec("a", 4.0, 0.0)], &[sub], 10.0).unwrap();
        assert_eq!(p.subjects()[0].censor_time, 4.0);
    }

    #[test]
    fn covariate_lookup_examples() {
        let mut s = Subject::new("a", 5.0);
        s.baseline.insert("Z".into(), 1.7);
        s.series.insert(
            "S".into(),
            CovariateSeries::step(vec![0.0, 1.0], vec![0.0, 5.0], 0.0),
        );
        s.series.insert(
            "G".into(),
            CovariateSeries::Analytic {
                form: AnalyticForm::ScaledLog { scale: 0.5 },
            },
        );
        let p = Panel::new(vec![s], 7.0).unwrap();
        let s = &p.subjects()[0];
        assert_eq!(p.covariate_at(s, "Z", 3.3).unwrap(), 1.7);
        assert_eq!(p.covariate_at(s, "S", 0.99).unwrap(), 0.0);
        assert_eq!(p.covariate_at(s, "S", 1.0).unwrap(), 5.0);
        let g = p.covariate_at(s, "G", std::f64::consts::E).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        assert!(matches!(
            p.covariate_at(s, "nope", 1.0),
            Err(PanelError::UnknownCovariate(_))
        ));
        assert!(matches!(
            p.covariate_at(s, "Z", 8.0),
            Err(PanelError::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            p.covariate_at(s, "G", 0.0),
            Err(PanelError::NotEvaluable { .. })
        ));
    }

    #[test]
    fn lagged_history_series() {
        let mut s = Subject::new("a", 5.0);
        s.obs_times = vec![1.0, 2.0];
        s.outcomes = vec![1.0, 0.0];
        let p = Panel::new(vec![s], 5.0)
            .unwrap()
            .with_history_covariates(-1.0);
        let s = &p.subjects()[0];
        assert_eq!(p.covariate_at(s, PREV_OUTCOME, 1.0).unwrap(), -1.0);
        assert_eq!(p.covariate_at(s, PREV_OUTCOME, 1.5).unwrap(), 1.0);
        assert_eq!(p.covariate_at(s, PREV_OUTCOME, 2.0).unwrap(), 1.0);
        assert_eq!(p.covariate_at(s, PREV_OUTCOME, 2.5).unwrap(), 0.0);
        assert_eq!(p.covariate_at(s, PREV_COUNT, 2.0).unwrap(), 1.0);
        assert_eq!(p.covariate_at(s, PREV_COUNT, 2.1).unwrap(), 2.0);
    }

    #[test]
    fn risk_table_single_subject() {
        let mut s = Subject::new("a", 3.0);
        s.obs_times = vec![1.0, 2.0];
        s.outcomes = vec![0.0, 0.0];
        let p = Panel::new(vec![s], 3.0).unwrap();
        let rt = risk_table(&p, EventSource::Observations, None);
        assert_eq!(rt.times(), &[1.0, 2.0]);
        assert_eq!(rt.at_risk(0), &[0]);
        assert_eq!(rt.at_risk(1), &[0]);
        assert_eq!(rt.events(1), &[0]);
    }

    #[test]
    fn administrative_censoring_is_not_an_event() {
        let a = Subject::new("a", 7.0);
        let b = Subject::new("b", 2.0);
        let p = Panel::new(vec![a, b], 7.0).unwrap();
        let rt = risk_table(&p, EventSource::Censoring, None);
        assert_eq!(rt.times(), &[2.0]);
        assert_eq!(rt.events(0), &[1]);
        assert_eq!(rt.at_risk(0).len(), 2);
    }

    #[test]
    fn observation_at_censoring_time_counts() {
        let mut s = Subject::new("a", 2.0);
        s.obs_times = vec![2.0];
        s.outcomes = vec![0.0];
        let p = Panel::new(vec![s, Subject::new("b", 1.0)], 3.0).unwrap();
        let rt = risk_table(&p, EventSource::Observations, None);
        assert_eq!(rt.at_risk(0), &[0]);
    }

    #[test]
    fn censor_at_truncates() {
        let mut s = Subject::new("a", 6.0);
        s.obs_times = vec![1.0, 3.0, 5.0];
        s.outcomes = vec![0.0, 1.0, 0.0];
        let p = Panel::new(vec![s], 7.0).unwrap().censor_at(3.0);
        assert_eq!(p.tau(), 3.0);
        assert_eq!(p.subjects()[0].obs_times, vec![1.0, 3.0]);
        assert_eq!(p.subjects()[0].censor_time, 3.0);
    }
}
