//! Evaluation toolkit for short-duration speaker verification challenges.
//!
//! The crate covers the whole organizer-side pipeline: reading and writing the
//! challenge's text manifests, keying trials into target and nontarget classes,
//! computing the normalized minimum detection cost and equal error rate,
//! validating submission archives, auditing audio corpora with an energy VAD,
//! and generating synthetic corpora with known statistical properties.
//!
//! Data-parallel inner loops (sorting score sweeps, per-slice scoring, per-file
//! audio analysis) go through [`par::Execution`]; with the `parallel` feature
//! disabled every path runs sequentially and produces identical results.

pub mod audio;
pub mod formats;
pub mod metrics;
pub mod par;
pub mod scorer;
pub mod submission;
pub mod synth;
pub mod trials;

pub use formats::{
    EnrollmentRecordTd, EnrollmentRecordTi, FormatError, ScoreVector, SubmissionMetadata, Trial,
    TrainLabelTd, TrainLabelTi,
};
pub use metrics::{DetCostParams, MetricsError, MetricsReport, OperatingPoint};
pub use par::Execution;
pub use scorer::{ScoreError, SliceSpec};
pub use submission::{ErrorCode, SubmissionPayload, ValidationError};
pub use trials::{Partition, Task, TrialKey, TrialType, UtteranceMeta};

/// Version tag embedded in every machine-readable JSON document the toolkit emits.
pub const SCHEMA_VERSION: u32 = 1;
