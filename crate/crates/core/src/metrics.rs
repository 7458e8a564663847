//! Detection metrics: DCF, normalized minimum DCF, EER and DET sweeps.
//!
//! Conventions:
//! - a trial is accepted iff `score >= threshold`;
//! - candidate thresholds are the distinct observed scores plus one sentinel
//!   below the minimum and one above the maximum (the empirical step sweep,
//!   not the ROC convex hull);
//! - miss and false-alarm rates are integer counts divided once, so results
//!   do not depend on how the sort was parallelized;
//! - the minimum DCF keeps the lowest threshold among ties;
//! - the EER is read off the sweep exactly when some point has
//!   `p_miss == p_fa`, otherwise it is linearly interpolated between the two
//!   points bracketing the sign change of `p_miss - p_fa`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;
use crate::scorer::Breakdowns;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("key needs at least one target and one nontarget trial ({n_target} targets, {n_nontarget} nontargets)")]
    DegenerateKey { n_target: usize, n_nontarget: usize },
    #[error("{scores} scores for {keys} key entries")]
    LengthMismatch { scores: usize, keys: usize },
    #[error("score at position {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("no operating points to export")]
    EmptySweep,
}

/// Costs and prior of the detection cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetCostParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
}

impl Default for DetCostParams {
    /// `C_miss = 10`, `C_fa = 1`, `P_target = 0.01`.
    fn default() -> Self {
        DetCostParams { c_miss: 10.0, c_fa: 1.0, p_target: 0.01 }
    }
}

impl DetCostParams {
    pub fn new(c_miss: f64, c_fa: f64, p_target: f64) -> Result<Self, MetricsError> {
        if !(c_miss > 0.0 && c_miss.is_finite()) {
            return Err(MetricsError::InvalidParams(format!("c_miss must be positive, got {c_miss}")));
        }
        if !(c_fa > 0.0 && c_fa.is_finite()) {
            return Err(MetricsError::InvalidParams(format!("c_fa must be positive, got {c_fa}")));
        }
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(MetricsError::InvalidParams(format!("p_target must be in (0,1), got {p_target}")));
        }
        Ok(DetCostParams { c_miss, c_fa, p_target })
    }

    /// Cost of the better of the two trivial systems (accept all, reject all).
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }

    /// Per-error weights of the normalized cost. The cheaper error class gets
    /// weight exactly 1; the other gets the cost ratio, formed from the cost
    /// ratio and prior odds separately so round constants stay round.
    pub fn normalized_weights(&self) -> (f64, f64) {
        if self.c_miss * self.p_target <= self.c_fa * (1.0 - self.p_target) {
            (1.0, (self.c_fa / self.c_miss) * ((1.0 - self.p_target) / self.p_target))
        } else {
            ((self.c_miss / self.c_fa) * (self.p_target / (1.0 - self.p_target)), 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Raw and normalized DCF at one operating point.
pub fn dcf_at(point: &OperatingPoint, params: &DetCostParams) -> (f64, f64) {
    let dcf = params.c_miss * point.p_miss * params.p_target
        + params.c_fa * point.p_fa * (1.0 - params.p_target);
    let (w_miss, w_fa) = params.normalized_weights();
    (dcf, w_miss * point.p_miss + w_fa * point.p_fa)
}

/// Error counts at every candidate threshold, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub thresholds: Vec<f64>,
    /// Targets scoring strictly below each threshold.
    pub misses: Vec<usize>,
    /// Nontargets scoring at or above each threshold.
    pub false_alarms: Vec<usize>,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl Sweep {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn point(&self, i: usize) -> OperatingPoint {
        OperatingPoint {
            threshold: self.thresholds[i],
            p_miss: self.misses[i] as f64 / self.n_target as f64,
            p_fa: self.false_alarms[i] as f64 / self.n_nontarget as f64,
        }
    }

    pub fn points(&self) -> Vec<OperatingPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

fn step_below(x: f64) -> f64 {
    let y = x - 1.0;
    if y < x && y.is_finite() {
        y
    } else {
        x.next_down()
    }
}

fn step_above(x: f64) -> f64 {
    let y = x + 1.0;
    if y > x && y.is_finite() {
        y
    } else {
        x.next_up()
    }
}

fn check_inputs(scores: &[f64], is_target: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != is_target.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), keys: is_target.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index });
    }
    let n_target = is_target.iter().filter(|&&t| t).count();
    let n_nontarget = is_target.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(MetricsError::DegenerateKey { n_target, n_nontarget });
    }
    Ok((n_target, n_nontarget))
}

pub fn sweep(scores: &[f64], is_target: &[bool]) -> Result<Sweep, MetricsError> {
    sweep_with(scores, is_target, Execution::default())
}

pub fn sweep_with(scores: &[f64], is_target: &[bool], exec: Execution) -> Result<Sweep, MetricsError> {
    let (n_target, n_nontarget) = check_inputs(scores, is_target)?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(is_target.iter().copied()).collect();
    exec.sort_by(&mut pairs, |a, b| a.0.total_cmp(&b.0));

    let mut thresholds = Vec::with_capacity(pairs.len() + 2);
    let mut misses = Vec::with_capacity(pairs.len() + 2);
    let mut false_alarms = Vec::with_capacity(pairs.len() + 2);

    thresholds.push(step_below(pairs[0].0));
    misses.push(0);
    false_alarms.push(n_nontarget);

    let (mut targets_below, mut nontargets_below) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let value = pairs[i].0;
        thresholds.push(value);
        misses.push(targets_below);
        false_alarms.push(n_nontarget - nontargets_below);
        // -0.0 and 0.0 compare equal and form one threshold.
        while i < pairs.len() && pairs[i].0 == value {
            if pairs[i].1 {
                targets_below += 1;
            } else {
                nontargets_below += 1;
            }
            i += 1;
        }
    }

    thresholds.push(step_above(pairs[pairs.len() - 1].0));
    misses.push(n_target);
    false_alarms.push(0);

    Ok(Sweep { thresholds, misses, false_alarms, n_target, n_nontarget })
}

/// Operating points over all candidate thresholds, ascending.
pub fn det_sweep(scores: &[f64], is_target: &[bool]) -> Result<Vec<OperatingPoint>, MetricsError> {
    Ok(sweep(scores, is_target)?.points())
}

/// The minimizing operating point of the DCF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDcf {
    pub min_dcf: f64,
    pub min_dcf_norm: f64,
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

pub fn min_dcf_of(sweep: &Sweep, params: &DetCostParams) -> MinDcf {
    let mut best: Option<MinDcf> = None;
    for i in 0..sweep.len() {
        let p = sweep.point(i);
        let (dcf, norm) = dcf_at(&p, params);
        if best.is_none_or(|b| norm < b.min_dcf_norm) {
            best = Some(MinDcf {
                min_dcf: dcf,
                min_dcf_norm: norm,
                threshold: p.threshold,
                p_miss: p.p_miss,
                p_fa: p.p_fa,
            });
        }
    }
    best.expect("a sweep always has the two sentinel points")
}

/// Normalized minimum DCF and the threshold that attains it.
pub fn min_dcf(scores: &[f64], is_target: &[bool], params: &DetCostParams) -> Result<(f64, f64), MetricsError> {
    let m = min_dcf_of(&sweep(scores, is_target)?, params);
    Ok((m.min_dcf_norm, m.threshold))
}

pub fn eer_of(sweep: &Sweep) -> f64 {
    let (nt, nn) = (sweep.n_target as u128, sweep.n_nontarget as u128);
    // Sign of p_miss - p_fa without rounding: miss/nt - fa/nn ~ miss*nn - fa*nt.
    let sign = |i: usize| (sweep.misses[i] as u128 * nn).cmp(&(sweep.false_alarms[i] as u128 * nt));
    let mut prev = 0;
    for i in 0..sweep.len() {
        match sign(i) {
            std::cmp::Ordering::Equal => return sweep.misses[i] as f64 / sweep.n_target as f64,
            std::cmp::Ordering::Less => prev = i,
            std::cmp::Ordering::Greater => {
                let a = sweep.point(prev);
                let b = sweep.point(i);
                let gap_a = a.p_fa - a.p_miss;
                let gap_b = b.p_miss - b.p_fa;
                let t = gap_a / (gap_a + gap_b);
                return a.p_miss + t * (b.p_miss - a.p_miss);
            }
        }
    }
    unreachable!("the sweep ends at p_miss = 1, p_fa = 0")
}

pub fn eer(scores: &[f64], is_target: &[bool]) -> Result<f64, MetricsError> {
    Ok(eer_of(&sweep(scores, is_target)?))
}

/// CSV with header `threshold,p_miss,p_fa`, six decimals per value.
pub fn export_det(points: &[OperatingPoint]) -> Result<String, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::EmptySweep);
    }
    let mut out = String::from("threshold,p_miss,p_fa\n");
    for p in points {
        out.push_str(&format!("{:.6},{:.6},{:.6}\n", p.threshold, p.p_miss, p.p_fa));
    }
    Ok(out)
}

/// Overall metrics for one scored trial list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub min_dcf_norm: f64,
    pub eer: f64,
    pub argmin_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub det_points: Vec<OperatingPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdowns: Option<Breakdowns>,
}

pub fn evaluate(scores: &[f64], is_target: &[bool], params: &DetCostParams) -> Result<MetricsReport, MetricsError> {
    evaluate_with(scores, is_target, params, Execution::default())
}

pub fn evaluate_with(
    scores: &[f64],
    is_target: &[bool],
    params: &DetCostParams,
    exec: Execution,
) -> Result<MetricsReport, MetricsError> {
    let s = sweep_with(scores, is_target, exec)?;
    let m = min_dcf_of(&s, params);
    Ok(MetricsReport {
        min_dcf_norm: m.min_dcf_norm,
        eer: eer_of(&s),
        argmin_threshold: m.threshold,
        n_target: s.n_target,
        n_nontarget: s.n_nontarget,
        det_points: s.points(),
        breakdowns: None,
    })
}
