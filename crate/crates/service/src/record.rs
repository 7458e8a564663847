use chrono::{DateTime, Utc};
use evalkit::metrics::MetricsReport;
use evalkit::{SubmissionMetadata, ValidationError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Queued,
    Scored,
    Rejected,
}

/// Headline metrics of a scored submission, full precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub min_dcf_norm: f64,
    pub eer: f64,
    pub argmin_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl From<&MetricsReport> for RecordMetrics {
    fn from(r: &MetricsReport) -> Self {
        RecordMetrics {
            min_dcf_norm: r.min_dcf_norm,
            eer: r.eer,
            argmin_threshold: r.argmin_threshold,
            n_target: r.n_target,
            n_nontarget: r.n_nontarget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub submission_id: String,
    pub team_id: String,
    pub task: u8,
    pub received_at: DateTime<Utc>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ValidationError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RecordMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<SubmissionMetadata>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub archive_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored_at: Option<DateTime<Utc>>,
}

impl SubmissionRecord {
    /// Status-dependent fields are consistent.
    pub fn is_well_formed(&self) -> bool {
        match self.status {
            Status::Scored => self.metrics.is_some() && self.errors.is_empty(),
            Status::Rejected => !self.errors.is_empty() && self.metrics.is_none(),
            Status::Queued => self.metrics.is_none() && self.errors.is_empty(),
        }
    }
}
