//! Joins an answer with its key and produces the metrics report.
//!
//! Slices:
//! - `trial-type`: rates at the overall minimum-DCF threshold. Target types
//!   report the miss rate, nontarget types the false-alarm rate. Per-type
//!   minimum DCF is not computed because a single threshold serves all types.
//! - `partition`: each language partition scored as its own problem.
//! - `phrase`: trials whose model was enrolled on the phrase, scored as their
//!   own problem. Needs the model-to-phrase map from the enrollment file.
//! - `overall`: the whole key again, identical to the top-level numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::PhraseId;
use crate::metrics::{self, DetCostParams, MetricsError, MetricsReport};
use crate::par::Execution;
use crate::trials::{Partition, Task, TrialKey, TrialType};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("{scores} scores for {keys} key entries")]
    LengthMismatch { scores: usize, keys: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("phrase slices need the model enrollment file")]
    MissingPhraseMap,
    #[error("invalid slice `{0}`")]
    InvalidSlice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceDimension {
    TrialType,
    Phrase,
    Partition,
    Overall,
}

impl SliceDimension {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceDimension::TrialType => "trial-type",
            SliceDimension::Phrase => "phrase",
            SliceDimension::Partition => "partition",
            SliceDimension::Overall => "overall",
        }
    }
}

/// A requested slice: one dimension, optionally narrowed to one label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSpec {
    pub dimension: SliceDimension,
    pub label: Option<String>,
}

impl SliceSpec {
    pub fn all(dimension: SliceDimension) -> Self {
        SliceSpec { dimension, label: None }
    }
}

impl fmt::Display for SliceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{}={l}", self.dimension.as_str()),
            None => f.write_str(self.dimension.as_str()),
        }
    }
}

/// Accepts `dimension` or `dimension=label`.
impl FromStr for SliceSpec {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        let (dim, label) = match s.split_once('=') {
            Some((d, l)) => (d, Some(l.to_string())),
            None => (s, None),
        };
        let dimension = match dim.trim() {
            "trial-type" => SliceDimension::TrialType,
            "phrase" => SliceDimension::Phrase,
            "partition" => SliceDimension::Partition,
            "overall" => SliceDimension::Overall,
            _ => return Err(ScoreError::InvalidSlice(s.to_string())),
        };
        if dimension == SliceDimension::Overall && label.is_some() {
            return Err(ScoreError::InvalidSlice(s.to_string()));
        }
        Ok(SliceSpec { dimension, label })
    }
}

pub fn parse_slices(list: &str) -> Result<Vec<SliceSpec>, ScoreError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    Miss,
    FalseAlarm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SliceOutcome {
    /// The slice scored as an independent target/nontarget problem.
    Metrics {
        min_dcf_norm: f64,
        eer: f64,
        argmin_threshold: f64,
        n_target: usize,
        n_nontarget: usize,
    },
    /// One error rate at a fixed threshold.
    Rate { rate: RateKind, value: f64, threshold: f64 },
    Empty { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub label: String,
    pub n_trials: usize,
    #[serde(flatten)]
    pub outcome: SliceOutcome,
}

impl SliceResult {
    pub fn is_empty(&self) -> bool {
        matches!(self.outcome, SliceOutcome::Empty { .. })
    }
}

/// Slice results keyed by dimension name.
pub type Breakdowns = BTreeMap<SliceDimension, Vec<SliceResult>>;

fn task_of(keys: &[TrialKey]) -> Task {
    keys.first().map_or(Task::TextDependent, |k| k.trial_type.task())
}

fn check_lengths(scores: &[f64], keys: &[TrialKey]) -> Result<(), ScoreError> {
    if scores.len() != keys.len() {
        return Err(ScoreError::LengthMismatch { scores: scores.len(), keys: keys.len() });
    }
    Ok(())
}

pub fn score_answer(scores: &[f64], keys: &[TrialKey], params: &DetCostParams) -> Result<MetricsReport, ScoreError> {
    score_answer_with(scores, keys, params, Execution::default())
}

pub fn score_answer_with(
    scores: &[f64],
    keys: &[TrialKey],
    params: &DetCostParams,
    exec: Execution,
) -> Result<MetricsReport, ScoreError> {
    check_lengths(scores, keys)?;
    let flags: Vec<bool> = keys.iter().map(|k| k.is_target).collect();
    Ok(metrics::evaluate_with(scores, &flags, params, exec)?)
}

fn sub_problem(scores: &[f64], keys: &[TrialKey], params: &DetCostParams, pick: impl Fn(&TrialKey) -> bool) -> (usize, SliceOutcome) {
    let (s, k): (Vec<f64>, Vec<bool>) = scores
        .iter()
        .zip(keys)
        .filter(|(_, key)| pick(key))
        .map(|(&s, key)| (s, key.is_target))
        .unzip();
    let n = s.len();
    if n == 0 {
        return (0, SliceOutcome::Empty { reason: "no trials".into() });
    }
    match metrics::evaluate_with(&s, &k, params, Execution::Sequential) {
        Ok(r) => (
            n,
            SliceOutcome::Metrics {
                min_dcf_norm: r.min_dcf_norm,
                eer: r.eer,
                argmin_threshold: r.argmin_threshold,
                n_target: r.n_target,
                n_nontarget: r.n_nontarget,
            },
        ),
        Err(e) => (n, SliceOutcome::Empty { reason: e.to_string() }),
    }
}

fn type_rate(scores: &[f64], keys: &[TrialKey], t: TrialType, threshold: f64) -> (usize, SliceOutcome) {
    let selected: Vec<f64> = scores.iter().zip(keys).filter(|(_, k)| k.trial_type == t).map(|(&s, _)| s).collect();
    let n = selected.len();
    if n == 0 {
        return (0, SliceOutcome::Empty { reason: format!("no {t} trials") });
    }
    let (rate, count) = if t.is_target() {
        (RateKind::Miss, selected.iter().filter(|&&s| s < threshold).count())
    } else {
        (RateKind::FalseAlarm, selected.iter().filter(|&&s| s >= threshold).count())
    };
    (n, SliceOutcome::Rate { rate, value: count as f64 / n as f64, threshold })
}

/// One concrete (dimension, label) job after expanding `SliceSpec`s.
#[derive(Debug, Clone)]
enum Job {
    Overall,
    Type(TrialType),
    Partition(Partition),
    Phrase(String),
    Invalid(SliceDimension, String),
}

fn expand(
    slices: &[SliceSpec],
    keys: &[TrialKey],
    phrases: Option<&HashMap<String, PhraseId>>,
) -> Result<Vec<(SliceDimension, Job)>, ScoreError> {
    let task = task_of(keys);
    let mut jobs = Vec::new();
    for spec in slices {
        let dim = spec.dimension;
        match dim {
            SliceDimension::Overall => jobs.push((dim, Job::Overall)),
            SliceDimension::TrialType => {
                let all: &[TrialType] = match task {
                    Task::TextDependent => &TrialType::TEXT_DEPENDENT,
                    Task::TextIndependent => &TrialType::TEXT_INDEPENDENT,
                };
                match &spec.label {
                    None => jobs.extend(all.iter().map(|&t| (dim, Job::Type(t)))),
                    Some(l) => match l.parse::<TrialType>() {
                        Ok(t) if all.contains(&t) => jobs.push((dim, Job::Type(t))),
                        _ => jobs.push((dim, Job::Invalid(dim, l.clone()))),
                    },
                }
            }
            SliceDimension::Partition => {
                let all: &[Partition] = match task {
                    Task::TextDependent => &[Partition::None],
                    Task::TextIndependent => &[Partition::SameLang, Partition::CrossLang],
                };
                match &spec.label {
                    None => jobs.extend(all.iter().map(|&p| (dim, Job::Partition(p)))),
                    Some(l) => match l.parse::<Partition>() {
                        Ok(p) if all.contains(&p) => jobs.push((dim, Job::Partition(p))),
                        _ => jobs.push((dim, Job::Invalid(dim, l.clone()))),
                    },
                }
            }
            SliceDimension::Phrase => {
                let map = phrases.ok_or(ScoreError::MissingPhraseMap)?;
                match &spec.label {
                    None => {
                        let present: BTreeSet<PhraseId> =
                            keys.iter().filter_map(|k| map.get(&k.model_id).copied()).collect();
                        jobs.extend(present.into_iter().map(|p| (dim, Job::Phrase(p.to_string()))));
                    }
                    Some(l) => jobs.push((dim, Job::Phrase(l.clone()))),
                }
            }
        }
    }
    Ok(jobs)
}

/// Overall metrics plus the requested per-slice breakdowns.
pub fn breakdown_report(
    scores: &[f64],
    keys: &[TrialKey],
    params: &DetCostParams,
    slices: &[SliceSpec],
    phrases: Option<&HashMap<String, PhraseId>>,
) -> Result<MetricsReport, ScoreError> {
    breakdown_report_with(scores, keys, params, slices, phrases, Execution::default())
}

pub fn breakdown_report_with(
    scores: &[f64],
    keys: &[TrialKey],
    params: &DetCostParams,
    slices: &[SliceSpec],
    phrases: Option<&HashMap<String, PhraseId>>,
    exec: Execution,
) -> Result<MetricsReport, ScoreError> {
    let mut report = score_answer_with(scores, keys, params, exec)?;
    let jobs = expand(slices, keys, phrases)?;
    let threshold = report.argmin_threshold;
    let overall = SliceOutcome::Metrics {
        min_dcf_norm: report.min_dcf_norm,
        eer: report.eer,
        argmin_threshold: report.argmin_threshold,
        n_target: report.n_target,
        n_nontarget: report.n_nontarget,
    };

    let results = exec.map(&jobs, |(dim, job)| {
        let (label, (n_trials, outcome)) = match job {
            Job::Overall => ("all".to_string(), (keys.len(), overall.clone())),
            Job::Type(t) => (t.to_string(), type_rate(scores, keys, *t, threshold)),
            Job::Partition(p) => (p.to_string(), sub_problem(scores, keys, params, |k| k.partition == *p)),
            Job::Phrase(label) => {
                let map = phrases.expect("checked during expansion");
                let want: Option<PhraseId> = label.parse().ok();
                (
                    label.clone(),
                    sub_problem(scores, keys, params, |k| want.is_some() && map.get(&k.model_id).copied() == want),
                )
            }
            Job::Invalid(d, l) => (
                l.clone(),
                (0, SliceOutcome::Empty { reason: format!("`{l}` is not a {} label for this task", d.as_str()) }),
            ),
        };
        (*dim, SliceResult { label, n_trials, outcome })
    });

    let mut breakdowns = Breakdowns::new();
    for (dim, r) in results {
        breakdowns.entry(dim).or_default().push(r);
    }
    report.breakdowns = Some(breakdowns);
    Ok(report)
}

/// The JSON document written by the `score` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub task: u8,
    pub n_trials: usize,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub min_dcf_norm: f64,
    pub eer: f64,
    pub argmin_threshold: f64,
    pub params: DetCostParams,
    pub breakdowns: Breakdowns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_csv_path: Option<String>,
}

impl ScoreReport {
    pub fn new(keys: &[TrialKey], report: &MetricsReport, params: DetCostParams, det_csv_path: Option<String>) -> Self {
        ScoreReport {
            schema_version: crate::SCHEMA_VERSION,
            task: task_of(keys).number(),
            n_trials: keys.len(),
            n_target: report.n_target,
            n_nontarget: report.n_nontarget,
            min_dcf_norm: report.min_dcf_norm,
            eer: report.eer,
            argmin_threshold: report.argmin_threshold,
            params,
            breakdowns: report.breakdowns.clone().unwrap_or_default(),
            det_csv_path,
        }
    }

    /// JSON with every floating-point value rounded to six decimals.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut v);
        v
    }

    /// Human summary; EER also shown as a percentage.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "task {}: {} trials ({} target, {} nontarget)\nminDCF_norm = {:.6}\nEER = {:.6} ({:.2}%)",
            self.task,
            self.n_trials,
            self.n_target,
            self.n_nontarget,
            self.min_dcf_norm,
            self.eer,
            self.eer * 100.0
        );
        for (dim, rows) in self.breakdowns.iter().filter(|(d, _)| **d != SliceDimension::Overall) {
            for r in rows {
                let detail = match &r.outcome {
                    SliceOutcome::Metrics { min_dcf_norm, eer, .. } => {
                        format!("minDCF_norm = {min_dcf_norm:.6}, EER = {eer:.6}")
                    }
                    SliceOutcome::Rate { rate: RateKind::Miss, value, .. } => format!("P_miss = {value:.6}"),
                    SliceOutcome::Rate { rate: RateKind::FalseAlarm, value, .. } => format!("P_fa = {value:.6}"),
                    SliceOutcome::Empty { reason } => format!("empty ({reason})"),
                };
                out.push_str(&format!("\n{} {} ({} trials): {detail}", dim.as_str(), r.label, r.n_trials));
            }
        }
        out
    }
}

pub fn round6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

pub fn round_floats(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("is f64");
            if let Some(r) = serde_json::Number::from_f64(round6(x)) {
                *n = r;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_floats),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}
