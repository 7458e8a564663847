//! Submission archive validation.
//!
//! A submission is a ZIP holding exactly two files at its root, `answer.txt`
//! and `metadata`. Validation never stops at the first problem: layout errors,
//! answer errors and metadata errors are all collected in one pass so a
//! participant sees every defect at once.

use std::io::{Cursor, Read, Write};

use serde::{Deserialize, Serialize};

use crate::formats::{self, FormatError, ScoreVector, SubmissionMetadata, Trial};

pub const ANSWER_ENTRY: &str = "answer.txt";
pub const METADATA_ENTRY: &str = "metadata";

/// Default cap on the summed uncompressed size of all entries.
pub const DEFAULT_MAX_UNCOMPRESSED: u64 = 256 * 1024 * 1024;

/// Closed taxonomy of validation failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCode {
    NotAZip,
    MissingAnswerFile,
    MissingMetadataFile,
    ContainsDirectories,
    UnexpectedEntries,
    FilesNotAtRoot,
    CountMismatch,
    NonNumericScore,
    NonFiniteScore,
    HeaderLinePresent,
    MissingKey,
    NonIntegerFusedCount,
    FusedCountOutOfRange,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 13] = [
        ErrorCode::NotAZip,
        ErrorCode::MissingAnswerFile,
        ErrorCode::MissingMetadataFile,
        ErrorCode::ContainsDirectories,
        ErrorCode::UnexpectedEntries,
        ErrorCode::FilesNotAtRoot,
        ErrorCode::CountMismatch,
        ErrorCode::NonNumericScore,
        ErrorCode::NonFiniteScore,
        ErrorCode::HeaderLinePresent,
        ErrorCode::MissingKey,
        ErrorCode::NonIntegerFusedCount,
        ErrorCode::FusedCountOutOfRange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotAZip => "NotAZip",
            ErrorCode::MissingAnswerFile => "MissingAnswerFile",
            ErrorCode::MissingMetadataFile => "MissingMetadataFile",
            ErrorCode::ContainsDirectories => "ContainsDirectories",
            ErrorCode::UnexpectedEntries => "UnexpectedEntries",
            ErrorCode::FilesNotAtRoot => "FilesNotAtRoot",
            ErrorCode::CountMismatch => "CountMismatch",
            ErrorCode::NonNumericScore => "NonNumericScore",
            ErrorCode::NonFiniteScore => "NonFiniteScore",
            ErrorCode::HeaderLinePresent => "HeaderLinePresent",
            ErrorCode::MissingKey => "MissingKey",
            ErrorCode::NonIntegerFusedCount => "NonIntegerFusedCount",
            ErrorCode::FusedCountOutOfRange => "FusedCountOutOfRange",
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub entry: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub code: ErrorCode,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

impl ValidationError {
    fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        ValidationError { code, detail: detail.into(), location: None }
    }

    fn at(mut self, entry: &str, line: Option<usize>) -> Self {
        self.location = Some(Location { entry: entry.to_string(), line });
        self
    }
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)?;
        if let Some(loc) = &self.location {
            write!(f, " ({}", loc.entry)?;
            if let Some(line) = loc.line {
                write!(f, ":{line}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A submission that passed every check.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionPayload {
    pub answer: ScoreVector,
    pub metadata: SubmissionMetadata,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_uncompressed: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_uncompressed: DEFAULT_MAX_UNCOMPRESSED }
    }
}

/// Whatever could be recovered from the archive plus every layout error.
#[derive(Debug, Default)]
struct Opened {
    answer: Option<String>,
    metadata: Option<String>,
    errors: Vec<ValidationError>,
}

fn unsafe_path(name: &str) -> bool {
    name.starts_with('/') || name.contains('\\') || name.split('/').any(|c| c == "..")
}

fn open(bytes: &[u8], limits: Limits) -> Opened {
    let mut out = Opened::default();
    let not_zip = |detail: String| Opened {
        errors: vec![ValidationError::new(ErrorCode::NotAZip, detail)],
        ..Opened::default()
    };
    if bytes.is_empty() {
        return not_zip("archive is empty".into());
    }
    let mut archive = match zip::ZipArchive::new(Cursor::new(bytes)) {
        Ok(a) => a,
        Err(e) => return not_zip(format!("cannot read ZIP structure: {e}")),
    };

    let mut answer_idx = None;
    let mut metadata_idx = None;
    let mut nested_answer = false;
    let mut nested_metadata = false;
    let mut directories = Vec::new();
    let mut total: u64 = 0;

    for i in 0..archive.len() {
        let entry = match archive.by_index_raw(i) {
            Ok(e) => e,
            Err(e) => return not_zip(format!("cannot read entry {i}: {e}")),
        };
        let name = entry.name().to_string();
        total = total.saturating_add(entry.size());
        if entry.is_dir() {
            directories.push(name);
            continue;
        }
        if unsafe_path(&name) {
            out.errors.push(
                ValidationError::new(ErrorCode::UnexpectedEntries, "entry path is absolute or escapes the archive root")
                    .at(&name, None),
            );
            continue;
        }
        if entry.encrypted() {
            out.errors.push(ValidationError::new(ErrorCode::UnexpectedEntries, "encrypted entries are not accepted").at(&name, None));
            continue;
        }
        let slot = match name.as_str() {
            ANSWER_ENTRY => Some(&mut answer_idx),
            METADATA_ENTRY => Some(&mut metadata_idx),
            _ => None,
        };
        match slot {
            Some(idx) if idx.is_none() => *idx = Some(i),
            Some(_) => out.errors.push(ValidationError::new(ErrorCode::UnexpectedEntries, "duplicate entry").at(&name, None)),
            None => {
                let base = name.rsplit('/').next().unwrap_or(&name);
                let nested = name.contains('/') && (base == ANSWER_ENTRY || base == METADATA_ENTRY);
                if nested {
                    nested_answer |= base == ANSWER_ENTRY;
                    nested_metadata |= base == METADATA_ENTRY;
                    out.errors.push(
                        ValidationError::new(ErrorCode::FilesNotAtRoot, format!("`{base}` must be at the archive root"))
                            .at(&name, None),
                    );
                } else {
                    out.errors.push(
                        ValidationError::new(ErrorCode::UnexpectedEntries, "only answer.txt and metadata are allowed")
                            .at(&name, None),
                    );
                }
            }
        }
    }

    if !directories.is_empty() {
        out.errors.push(ValidationError::new(
            ErrorCode::ContainsDirectories,
            format!("archive contains folders: {}", directories.join(", ")),
        ));
    }
    if total > limits.max_uncompressed {
        out.errors.push(ValidationError::new(
            ErrorCode::UnexpectedEntries,
            format!("uncompressed size {total} exceeds the {} byte limit", limits.max_uncompressed),
        ));
        return out;
    }
    if answer_idx.is_none() && !nested_answer {
        out.errors.push(ValidationError::new(ErrorCode::MissingAnswerFile, "answer.txt not found at the archive root"));
    }
    if metadata_idx.is_none() && !nested_metadata {
        out.errors.push(ValidationError::new(ErrorCode::MissingMetadataFile, "metadata not found at the archive root"));
    }

    let mut read_entry = |idx: usize, name: &str, errors: &mut Vec<ValidationError>| -> Option<String> {
        let mut buf = Vec::new();
        let res = archive.by_index(idx).and_then(|f| {
            f.take(limits.max_uncompressed + 1).read_to_end(&mut buf).map_err(zip::result::ZipError::from)
        });
        match res {
            Ok(_) if buf.len() as u64 > limits.max_uncompressed => {
                errors.push(ValidationError::new(ErrorCode::UnexpectedEntries, "entry exceeds the size limit").at(name, None));
                None
            }
            Ok(_) => Some(String::from_utf8_lossy(&buf).into_owned()),
            Err(e) => {
                errors.push(ValidationError::new(ErrorCode::NotAZip, format!("cannot decompress: {e}")).at(name, None));
                None
            }
        }
    };
    let mut errors = std::mem::take(&mut out.errors);
    out.answer = answer_idx.and_then(|i| read_entry(i, ANSWER_ENTRY, &mut errors));
    out.metadata = metadata_idx.and_then(|i| read_entry(i, METADATA_ENTRY, &mut errors));
    out.errors = errors;
    out
}

/// Extracts `(answer.txt, metadata)` texts, or every layout error found.
pub fn open_submission_zip(bytes: &[u8]) -> Result<(String, String), Vec<ValidationError>> {
    open_submission_zip_with(bytes, Limits::default())
}

pub fn open_submission_zip_with(bytes: &[u8], limits: Limits) -> Result<(String, String), Vec<ValidationError>> {
    let opened = open(bytes, limits);
    match opened {
        Opened { answer: Some(a), metadata: Some(m), errors } if errors.is_empty() => Ok((a, m)),
        Opened { errors, .. } => Err(errors),
    }
}

fn from_format(entry: &str, e: FormatError) -> ValidationError {
    let code = match &e {
        FormatError::CountMismatch { .. } => ErrorCode::CountMismatch,
        FormatError::NonNumericScore { .. } => ErrorCode::NonNumericScore,
        FormatError::NonFiniteScore { .. } => ErrorCode::NonFiniteScore,
        FormatError::HeaderLinePresent { .. } => ErrorCode::HeaderLinePresent,
        // A repeated key leaves no single value, which is reported like an absent one.
        FormatError::MissingKey { .. } | FormatError::DuplicateKey { .. } => ErrorCode::MissingKey,
        FormatError::NonIntegerFusedCount { .. } => ErrorCode::NonIntegerFusedCount,
        FormatError::FusedCountOutOfRange { .. } => ErrorCode::FusedCountOutOfRange,
        _ => ErrorCode::UnexpectedEntries,
    };
    let line = e.line();
    ValidationError::new(code, e.to_string()).at(entry, line)
}

/// Validates an archive against the official trial list.
pub fn validate_submission(bytes: &[u8], trials: &[Trial]) -> Result<SubmissionPayload, Vec<ValidationError>> {
    validate_submission_with(bytes, trials.len(), Limits::default())
}

/// Same as [`validate_submission`] when only the trial count matters.
pub fn validate_submission_with(
    bytes: &[u8],
    n_trials: usize,
    limits: Limits,
) -> Result<SubmissionPayload, Vec<ValidationError>> {
    let Opened { answer, metadata, mut errors } = open(bytes, limits);
    let answer = answer.and_then(|text| match formats::parse_answer_all(&text, n_trials) {
        Ok(v) => Some(v),
        Err(es) => {
            errors.extend(es.into_iter().map(|e| from_format(ANSWER_ENTRY, e)));
            None
        }
    });
    let metadata = metadata.and_then(|text| match formats::parse_metadata_all(&text) {
        Ok(m) => Some(m),
        Err(es) => {
            errors.extend(es.into_iter().map(|e| from_format(METADATA_ENTRY, e)));
            None
        }
    });
    match (answer, metadata) {
        (Some(answer), Some(meta)) if errors.is_empty() => Ok(SubmissionPayload {
            answer,
            metadata: meta.metadata,
            warnings: meta.warnings,
        }),
        _ => Err(errors),
    }
}

/// Machine-readable outcome of a validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub ok: bool,
    pub n_scores: usize,
    pub errors: Vec<ValidationError>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn from_result(result: &Result<SubmissionPayload, Vec<ValidationError>>) -> Self {
        match result {
            Ok(p) => ValidationReport {
                schema_version: crate::SCHEMA_VERSION,
                ok: true,
                n_scores: p.answer.len(),
                errors: Vec::new(),
                warnings: p.warnings.clone(),
            },
            Err(errors) => ValidationReport {
                schema_version: crate::SCHEMA_VERSION,
                ok: false,
                n_scores: 0,
                errors: errors.clone(),
                warnings: Vec::new(),
            },
        }
    }
}

/// Builds a ZIP from `(name, contents)` pairs. Names ending in `/` become
/// directory entries. Output is byte-deterministic.
pub fn pack_entries(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    for (name, data) in entries {
        if name.ends_with('/') {
            writer.add_directory(*name, options).expect("in-memory zip write");
        } else {
            writer.start_file(*name, options).expect("in-memory zip write");
            writer.write_all(data).expect("in-memory zip write");
        }
    }
    writer.finish().expect("in-memory zip write").into_inner()
}

/// A well-formed submission archive.
pub fn pack_submission(answer: &str, metadata: &str) -> Vec<u8> {
    pack_entries(&[(ANSWER_ENTRY, answer.as_bytes()), (METADATA_ENTRY, metadata.as_bytes())])
}
