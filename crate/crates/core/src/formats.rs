//! Readers and writers for the challenge's text manifests.
//!
//! Input is accepted liberally: fields may be separated by any run of ASCII
//! spaces or tabs, lines may end in LF or CRLF, and blank lines are skipped.
//! Output is canonical: one space between fields (tabs for the key file), LF
//! line endings, and the fixed header line for each format.
//!
//! Every parser consumes every line. Anything that is not a valid record is an
//! error carrying the 1-based line number where it was found.

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trials::{Partition, Task, TrialKey, TrialType};

pub const ENROLLMENT_TD_HEADER: &str =
    "model-id phrase-id enroll-file-id1 enroll-file-id2 enroll-file-id3";
pub const ENROLLMENT_TI_HEADER: &str = "model-id enroll-file-ids ...";
pub const TRIALS_HEADER: &str = "model-id evaluation-file-id";
pub const TRAIN_LABELS_TD_HEADER: &str = "train-file-id speaker-id phrase-id";
pub const TRAIN_LABELS_TI_HEADER: &str = "train-file-id speaker-id";
pub const KEY_HEADER: &str = "model-id\ttest-file-id\ttrial-type\tis-target\tpartition";

pub const META_DESCRIPTION_KEY: &str = "public-description";
pub const META_FUSED_COUNT_KEY: &str = "fused-systems-count";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("input is empty; a header line is required")]
    MissingHeader,
    #[error("line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {line}: duplicate model id `{id}`")]
    DuplicateModelId { line: usize, id: String },
    #[error("line {line}: duplicate file id `{id}`")]
    DuplicateFileId { line: usize, id: String },
    #[error("line {line}: invalid phrase id `{value}` (expected 01..10)")]
    InvalidPhraseId { line: usize, value: String },
    #[error("expected {expected} scores, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("line {line}: `{token}` is not a number")]
    NonNumericScore { line: usize, token: String },
    #[error("line {line}: `{token}` is not a finite number")]
    NonFiniteScore { line: usize, token: String },
    #[error("line {line}: the trial-file header must not appear in answer.txt")]
    HeaderLinePresent { line: usize },
    #[error("required key `{key}` is missing or empty")]
    MissingKey { key: String },
    #[error("line {line}: key `{key}` appears more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: fused-systems-count `{value}` is not an integer")]
    NonIntegerFusedCount { line: usize, value: String },
    #[error("line {line}: fused-systems-count {value} is below 1")]
    FusedCountOutOfRange { line: usize, value: i64 },
}

impl FormatError {
    /// The 1-based line the error refers to, when it refers to a single line.
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::MissingHeader => Some(1),
            FormatError::MalformedLine { line, .. }
            | FormatError::DuplicateModelId { line, .. }
            | FormatError::DuplicateFileId { line, .. }
            | FormatError::InvalidPhraseId { line, .. }
            | FormatError::NonNumericScore { line, .. }
            | FormatError::NonFiniteScore { line, .. }
            | FormatError::HeaderLinePresent { line }
            | FormatError::DuplicateKey { line, .. }
            | FormatError::NonIntegerFusedCount { line, .. }
            | FormatError::FusedCountOutOfRange { line, .. } => Some(*line),
            FormatError::CountMismatch { .. } | FormatError::MissingKey { .. } => None,
        }
    }
}

/// One of the ten fixed pass-phrases, rendered as a two-digit id `01`..`10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhraseId(u8);

impl PhraseId {
    pub const ALL: [PhraseId; 10] = [
        PhraseId(1),
        PhraseId(2),
        PhraseId(3),
        PhraseId(4),
        PhraseId(5),
        PhraseId(6),
        PhraseId(7),
        PhraseId(8),
        PhraseId(9),
        PhraseId(10),
    ];

    pub fn new(n: u8) -> Option<Self> {
        (1..=10).contains(&n).then_some(PhraseId(n))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PhraseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}", self.0)
    }
}

impl FromStr for PhraseId {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        if s.len() != 2 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(());
        }
        s.parse::<u8>().ok().and_then(PhraseId::new).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollmentRecordTd {
    pub model_id: String,
    pub phrase_id: PhraseId,
    pub enrollment_ids: [String; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollmentRecordTi {
    pub model_id: String,
    pub enrollment_ids: Vec<String>,
}

/// Enrollment file contents for either task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Enrollment {
    Td(Vec<EnrollmentRecordTd>),
    Ti(Vec<EnrollmentRecordTi>),
}

impl Enrollment {
    pub fn task(&self) -> Task {
        match self {
            Enrollment::Td(_) => Task::TextDependent,
            Enrollment::Ti(_) => Task::TextIndependent,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Enrollment::Td(r) => r.len(),
            Enrollment::Ti(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(model_id, enrollment utterance ids)` for every model, in file order.
    pub fn models(&self) -> Vec<(&str, Vec<&str>)> {
        match self {
            Enrollment::Td(r) => r
                .iter()
                .map(|m| {
                    (m.model_id.as_str(), m.enrollment_ids.iter().map(String::as_str).collect())
                })
                .collect(),
            Enrollment::Ti(r) => r
                .iter()
                .map(|m| {
                    (m.model_id.as_str(), m.enrollment_ids.iter().map(String::as_str).collect())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub model_id: String,
    pub test_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainLabelTd {
    pub file_id: String,
    pub speaker_id: String,
    pub phrase_id: PhraseId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainLabelTi {
    pub file_id: String,
    pub speaker_id: String,
}

/// Ordered LLR scores, all finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Returns `None` if any value is NaN or infinite.
    pub fn new(scores: Vec<f64>) -> Option<Self> {
        scores.iter().all(|s| s.is_finite()).then_some(ScoreVector(scores))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionMetadata {
    pub public_description: String,
    pub fused_systems_count: u32,
}

/// Parsed metadata plus notes about lines that were accepted but ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedMetadata {
    pub metadata: SubmissionMetadata,
    pub warnings: Vec<String>,
}

/// Records of a headed manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    /// The first line did not match the canonical header but would have
    /// parsed as a record. It was still discarded as the header.
    pub header_looks_like_data: bool,
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split([' ', '\t']).filter(|t| !t.is_empty())
}

/// Lines with their 1-based numbers, CR stripped.
fn numbered_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

fn is_blank(line: &str) -> bool {
    line.chars().all(|c| c == ' ' || c == '\t')
}

fn check_identifier(line: usize, token: &str) -> Result<(), FormatError> {
    if token.chars().any(char::is_whitespace) {
        return Err(FormatError::MalformedLine {
            line,
            detail: format!("identifier `{}` contains whitespace", token.escape_debug()),
        });
    }
    Ok(())
}

fn malformed(line: usize, detail: impl Into<String>) -> FormatError {
    FormatError::MalformedLine { line, detail: detail.into() }
}

/// Shared driver for headed manifests: discards the header, then feeds each
/// nonblank line's fields to `parse_line`.
pub(crate) fn parse_headed<T>(
    content: &str,
    canonical_header: &str,
    mut parse_line: impl FnMut(usize, &[&str]) -> Result<T, FormatError>,
    mut on_record: impl FnMut(usize, &T) -> Result<(), FormatError>,
) -> Result<Parsed<T>, FormatError> {
    let mut lines = numbered_lines(content);
    let Some((_, header)) = lines.find(|(_, l)| !is_blank(l)) else {
        return Err(FormatError::MissingHeader);
    };
    let header_fields: Vec<&str> = split_fields(header).collect();
    let canonical: Vec<&str> = split_fields(canonical_header).collect();
    let header_looks_like_data = header_fields != canonical && parse_line(1, &header_fields).is_ok();

    let mut records = Vec::new();
    for (no, line) in lines {
        if is_blank(line) {
            continue;
        }
        let fields: Vec<&str> = split_fields(line).collect();
        for f in &fields {
            check_identifier(no, f)?;
        }
        let record = parse_line(no, &fields)?;
        on_record(no, &record)?;
        records.push(record);
    }
    Ok(Parsed { records, header_looks_like_data })
}

fn parse_phrase(line: usize, token: &str) -> Result<PhraseId, FormatError> {
    token
        .parse()
        .map_err(|_| FormatError::InvalidPhraseId { line, value: token.to_string() })
}

pub fn parse_enrollment_td(content: &str) -> Result<Parsed<EnrollmentRecordTd>, FormatError> {
    let mut seen = HashSet::new();
    parse_headed(
        content,
        ENROLLMENT_TD_HEADER,
        |line, f| {
            if f.len() != 5 {
                return Err(malformed(line, format!("expected 5 fields, found {}", f.len())));
            }
            Ok(EnrollmentRecordTd {
                model_id: f[0].to_string(),
                phrase_id: parse_phrase(line, f[1])?,
                enrollment_ids: [f[2].to_string(), f[3].to_string(), f[4].to_string()],
            })
        },
        |line, r| {
            if !seen.insert(r.model_id.clone()) {
                return Err(FormatError::DuplicateModelId { line, id: r.model_id.clone() });
            }
            Ok(())
        },
    )
}

pub fn parse_enrollment_ti(content: &str) -> Result<Parsed<EnrollmentRecordTi>, FormatError> {
    let mut seen = HashSet::new();
    parse_headed(
        content,
        ENROLLMENT_TI_HEADER,
        |line, f| {
            if f.len() < 2 {
                return Err(malformed(line, format!("expected at least 2 fields, found {}", f.len())));
            }
            let ids: Vec<String> = f[1..].iter().map(|s| s.to_string()).collect();
            let mut unique = HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !unique.insert(id.as_str())) {
                return Err(malformed(line, format!("enrollment id `{dup}` listed twice")));
            }
            Ok(EnrollmentRecordTi { model_id: f[0].to_string(), enrollment_ids: ids })
        },
        |line, r| {
            if !seen.insert(r.model_id.clone()) {
                return Err(FormatError::DuplicateModelId { line, id: r.model_id.clone() });
            }
            Ok(())
        },
    )
}

pub fn parse_enrollment(content: &str, task: Task) -> Result<Enrollment, FormatError> {
    Ok(match task {
        Task::TextDependent => Enrollment::Td(parse_enrollment_td(content)?.records),
        Task::TextIndependent => Enrollment::Ti(parse_enrollment_ti(content)?.records),
    })
}

pub fn parse_trials(content: &str) -> Result<Parsed<Trial>, FormatError> {
    parse_headed(
        content,
        TRIALS_HEADER,
        |line, f| {
            if f.len() != 2 {
                return Err(malformed(line, format!("expected 2 fields, found {}", f.len())));
            }
            Ok(Trial { model_id: f[0].to_string(), test_id: f[1].to_string() })
        },
        |_, _| Ok(()),
    )
}

pub fn parse_train_labels_td(content: &str) -> Result<Parsed<TrainLabelTd>, FormatError> {
    let mut seen = HashSet::new();
    parse_headed(
        content,
        TRAIN_LABELS_TD_HEADER,
        |line, f| {
            if f.len() != 3 {
                return Err(malformed(line, format!("expected 3 fields, found {}", f.len())));
            }
            Ok(TrainLabelTd {
                file_id: f[0].to_string(),
                speaker_id: f[1].to_string(),
                phrase_id: parse_phrase(line, f[2])?,
            })
        },
        |line, r| {
            if !seen.insert(r.file_id.clone()) {
                return Err(FormatError::DuplicateFileId { line, id: r.file_id.clone() });
            }
            Ok(())
        },
    )
}

pub fn parse_train_labels_ti(content: &str) -> Result<Parsed<TrainLabelTi>, FormatError> {
    let mut seen = HashSet::new();
    parse_headed(
        content,
        TRAIN_LABELS_TI_HEADER,
        |line, f| {
            if f.len() != 2 {
                return Err(malformed(line, format!("expected 2 fields, found {}", f.len())));
            }
            Ok(TrainLabelTi { file_id: f[0].to_string(), speaker_id: f[1].to_string() })
        },
        |line, r| {
            if !seen.insert(r.file_id.clone()) {
                return Err(FormatError::DuplicateFileId { line, id: r.file_id.clone() });
            }
            Ok(())
        },
    )
}

/// Why a token failed the score grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTokenError {
    NonNumeric,
    NonFinite,
}

/// Parses one score: optional sign, digits with an optional fraction, optional
/// exponent. NaN and infinity spellings, and values that overflow, are
/// rejected as non-finite.
pub fn parse_score_token(token: &str) -> Result<f64, ScoreTokenError> {
    let unsigned = token.strip_prefix(['+', '-']).unwrap_or(token);
    let lower = unsigned.to_ascii_lowercase();
    if matches!(lower.as_str(), "nan" | "inf" | "infinity") {
        return Err(ScoreTokenError::NonFinite);
    }
    let bytes = unsigned.as_bytes();
    let mut i = 0;
    let int_digits = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
    i += int_digits;
    let mut frac_digits = 0;
    if bytes.get(i) == Some(&b'.') {
        i += 1;
        frac_digits = bytes[i..].iter().take_while(|b| b.is_ascii_digit()).count();
        i += frac_digits;
    }
    if int_digits + frac_digits == 0 {
        return Err(ScoreTokenError::NonNumeric);
    }
    if matches!(bytes.get(i), Some(b'e' | b'E')) {
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_digits = bytes[i..].iter().take_while(|b| b.is_ascii_digit()).count();
        if exp_digits == 0 {
            return Err(ScoreTokenError::NonNumeric);
        }
        i += exp_digits;
    }
    if i != bytes.len() {
        return Err(ScoreTokenError::NonNumeric);
    }
    let value: f64 = token.parse().map_err(|_| ScoreTokenError::NonNumeric)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ScoreTokenError::NonFinite)
    }
}

/// Splits answer text into lines, allowing exactly one trailing newline.
fn answer_lines(content: &str) -> Vec<(usize, &str)> {
    let body = content
        .strip_suffix('\n')
        .map(|b| b.strip_suffix('\r').unwrap_or(b))
        .unwrap_or(content);
    if body.is_empty() {
        return Vec::new();
    }
    numbered_lines(body).collect()
}

fn is_trials_header(line: &str) -> bool {
    let fields: Vec<String> = split_fields(line).map(str::to_ascii_lowercase).collect();
    fields.iter().map(String::as_str).eq(split_fields(TRIALS_HEADER))
}

/// Parses answer.txt, collecting every error instead of stopping at the first.
pub fn parse_answer_all(content: &str, expected_count: usize) -> Result<ScoreVector, Vec<FormatError>> {
    let mut errors = Vec::new();
    let mut scores = Vec::with_capacity(expected_count);
    let mut found = 0;
    for (no, line) in answer_lines(content) {
        if no == 1 && is_trials_header(line) {
            errors.push(FormatError::HeaderLinePresent { line: no });
            continue;
        }
        found += 1;
        let token = line.trim_matches([' ', '\t']);
        match parse_score_token(token) {
            Ok(v) => scores.push(v),
            Err(ScoreTokenError::NonNumeric) => {
                errors.push(FormatError::NonNumericScore { line: no, token: token.to_string() })
            }
            Err(ScoreTokenError::NonFinite) => {
                errors.push(FormatError::NonFiniteScore { line: no, token: token.to_string() })
            }
        }
    }
    if found != expected_count {
        errors.push(FormatError::CountMismatch { expected: expected_count, found });
    }
    if errors.is_empty() {
        Ok(ScoreVector(scores))
    } else {
        Err(errors)
    }
}

pub fn parse_answer(content: &str, expected_count: usize) -> Result<ScoreVector, FormatError> {
    parse_answer_all(content, expected_count).map_err(|mut e| e.swap_remove(0))
}

/// Parses the submission metadata file, collecting every error.
pub fn parse_metadata_all(content: &str) -> Result<ParsedMetadata, Vec<FormatError>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut description: Option<String> = None;
    let mut fused: Option<(usize, String)> = None;

    for (no, line) in numbered_lines(content) {
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            warnings.push(format!("line {no}: ignored, not a `key: value` line"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let slot = match key {
            META_DESCRIPTION_KEY => description.is_some(),
            META_FUSED_COUNT_KEY => fused.is_some(),
            _ => {
                warnings.push(format!("line {no}: unknown key `{key}`"));
                continue;
            }
        };
        if slot {
            errors.push(FormatError::DuplicateKey { line: no, key: key.to_string() });
            continue;
        }
        if key == META_DESCRIPTION_KEY {
            description = Some(value.to_string());
        } else {
            fused = Some((no, value.to_string()));
        }
    }

    let description = match description {
        Some(d) if !d.is_empty() => Some(d),
        _ => {
            errors.push(FormatError::MissingKey { key: META_DESCRIPTION_KEY.to_string() });
            None
        }
    };
    let fused_count = match fused {
        None => {
            errors.push(FormatError::MissingKey { key: META_FUSED_COUNT_KEY.to_string() });
            None
        }
        Some((_, v)) if v.is_empty() => {
            errors.push(FormatError::MissingKey { key: META_FUSED_COUNT_KEY.to_string() });
            None
        }
        Some((line, v)) => match v.parse::<i64>() {
            Err(_) => {
                errors.push(FormatError::NonIntegerFusedCount { line, value: v });
                None
            }
            Ok(n) if n < 1 => {
                errors.push(FormatError::FusedCountOutOfRange { line, value: n });
                None
            }
            Ok(n) => match u32::try_from(n) {
                Ok(n) => Some(n),
                Err(_) => {
                    errors.push(FormatError::NonIntegerFusedCount { line, value: v });
                    None
                }
            },
        },
    };

    match (description, fused_count) {
        (Some(public_description), Some(fused_systems_count)) if errors.is_empty() => {
            Ok(ParsedMetadata {
                metadata: SubmissionMetadata { public_description, fused_systems_count },
                warnings,
            })
        }
        _ => Err(errors),
    }
}

pub fn parse_metadata(content: &str) -> Result<ParsedMetadata, FormatError> {
    parse_metadata_all(content).map_err(|mut e| e.swap_remove(0))
}

pub fn parse_key(content: &str) -> Result<Parsed<TrialKey>, FormatError> {
    let mut task: Option<Task> = None;
    parse_headed(
        content,
        KEY_HEADER,
        |line, f| {
            if f.len() != 5 {
                return Err(malformed(line, format!("expected 5 fields, found {}", f.len())));
            }
            let trial_type: TrialType = f[2]
                .parse()
                .map_err(|_| malformed(line, format!("unknown trial type `{}`", f[2])))?;
            let is_target = match f[3] {
                "0" => false,
                "1" => true,
                other => return Err(malformed(line, format!("is-target must be 0 or 1, got `{other}`"))),
            };
            let partition: Partition = f[4]
                .parse()
                .map_err(|_| malformed(line, format!("unknown partition `{}`", f[4])))?;
            TrialKey::new(f[0], f[1], trial_type, is_target, partition)
                .map_err(|detail| malformed(line, detail))
        },
        |line, k| {
            let t = k.trial_type.task();
            match task {
                None => task = Some(t),
                Some(prev) if prev != t => {
                    return Err(malformed(line, "key mixes text-dependent and text-independent trial types"))
                }
                _ => {}
            }
            Ok(())
        },
    )
}

fn write_lines<I, S>(header: &str, lines: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::with_capacity(header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    out
}

pub fn write_enrollment_td(records: &[EnrollmentRecordTd]) -> String {
    write_lines(
        ENROLLMENT_TD_HEADER,
        records.iter().map(|r| {
            format!(
                "{} {} {}",
                r.model_id,
                r.phrase_id,
                r.enrollment_ids.join(" ")
            )
        }),
    )
}

pub fn write_enrollment_ti(records: &[EnrollmentRecordTi]) -> String {
    write_lines(
        ENROLLMENT_TI_HEADER,
        records.iter().map(|r| format!("{} {}", r.model_id, r.enrollment_ids.join(" "))),
    )
}

pub fn write_enrollment(enrollment: &Enrollment) -> String {
    match enrollment {
        Enrollment::Td(r) => write_enrollment_td(r),
        Enrollment::Ti(r) => write_enrollment_ti(r),
    }
}

pub fn write_trials(trials: &[Trial]) -> String {
    write_lines(TRIALS_HEADER, trials.iter().map(|t| format!("{} {}", t.model_id, t.test_id)))
}

pub fn write_train_labels_td(labels: &[TrainLabelTd]) -> String {
    write_lines(
        TRAIN_LABELS_TD_HEADER,
        labels.iter().map(|l| format!("{} {} {}", l.file_id, l.speaker_id, l.phrase_id)),
    )
}

pub fn write_train_labels_ti(labels: &[TrainLabelTi]) -> String {
    write_lines(
        TRAIN_LABELS_TI_HEADER,
        labels.iter().map(|l| format!("{} {}", l.file_id, l.speaker_id)),
    )
}

/// One score per line using the shortest representation that round-trips.
pub fn write_answer(scores: &[f64]) -> String {
    let mut out = String::with_capacity(scores.len() * 12);
    for s in scores {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

pub fn write_metadata(meta: &SubmissionMetadata) -> String {
    format!(
        "{META_DESCRIPTION_KEY}: {}\n{META_FUSED_COUNT_KEY}: {}\n",
        meta.public_description, meta.fused_systems_count
    )
}

pub fn write_key(keys: &[TrialKey]) -> String {
    write_lines(
        KEY_HEADER,
        keys.iter().map(|k| {
            format!(
                "{}\t{}\t{}\t{}\t{}",
                k.model_id,
                k.test_id,
                k.trial_type,
                u8::from(k.is_target),
                k.partition
            )
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enrollment_td_example_line() {
        let text = format!("{ENROLLMENT_TD_HEADER}\nmodel_00000 07 enr_007492 enr_023277 enr_012882\n");
        let parsed = parse_enrollment_td(&text).unwrap();
        assert_eq!(
            parsed.records,
            vec![EnrollmentRecordTd {
                model_id: "model_00000".into(),
                phrase_id: PhraseId::new(7).unwrap(),
                enrollment_ids: ["enr_007492".into(), "enr_023277".into(), "enr_012882".into()],
            }]
        );
        assert!(!parsed.header_looks_like_data);
    }

    #[test]
    fn header_only_files_are_empty() {
        assert!(parse_enrollment_td(ENROLLMENT_TD_HEADER).unwrap().records.is_empty());
        assert!(parse_trials("model-id evaluation-file-id\n").unwrap().records.is_empty());
        assert!(parse_enrollment_ti("model-id enroll-file-ids ...\r\n\r\n").unwrap().records.is_empty());
    }

    #[test]
    fn enrollment_ti_variable_width() {
        let text = "model-id enroll-file-ids ...\nmodel_15008 enr_177720 enr_334136 enr_226306 enr_057733 enr_190105\n";
        let r = &parse_enrollment_ti(text).unwrap().records[0];
        assert_eq!(r.model_id, "model_15008");
        assert_eq!(r.enrollment_ids.len(), 5);
    }

    #[test]
    fn enrollment_errors_carry_lines() {
        let text = format!("{ENROLLMENT_TD_HEADER}\nm1 07 a b c\nm1 08 d e f\n");
        assert_eq!(
            parse_enrollment_td(&text),
            Err(FormatError::DuplicateModelId { line: 3, id: "m1".into() })
        );
        let text = format!("{ENROLLMENT_TD_HEADER}\nm1 11 a b c\n");
        assert_eq!(
            parse_enrollment_td(&text),
            Err(FormatError::InvalidPhraseId { line: 2, value: "11".into() })
        );
        let text = format!("{ENROLLMENT_TD_HEADER}\nm1 7 a b c\n");
        assert!(matches!(parse_enrollment_td(&text), Err(FormatError::InvalidPhraseId { line: 2, .. })));
        let text = format!("{ENROLLMENT_TD_HEADER}\nm1 07 a b\n");
        assert!(matches!(parse_enrollment_td(&text), Err(FormatError::MalformedLine { line: 2, .. })));
        let text = "h\nm1\n";
        assert!(matches!(parse_enrollment_ti(text), Err(FormatError::MalformedLine { line: 2, .. })));
        let text = "h\nm1 a a\n";
        assert!(matches!(parse_enrollment_ti(text), Err(FormatError::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn trials_parse_and_reject() {
        let t = parse_trials("model-id evaluation-file-id\nmodel_00000 evl_000018\n").unwrap();
        assert_eq!(t.records, vec![Trial { model_id: "model_00000".into(), test_id: "evl_000018".into() }]);
        assert_eq!(
            parse_trials("model-id evaluation-file-id\nmodel_00000\n"),
            Err(FormatError::MalformedLine { line: 2, detail: "expected 2 fields, found 1".into() })
        );
        assert_eq!(parse_trials(""), Err(FormatError::MissingHeader));
    }

    #[test]
    fn data_like_header_sets_flag() {
        let t = parse_trials("model_00000 evl_000001\nmodel_00000 evl_000002\n").unwrap();
        assert!(t.header_looks_like_data);
        assert_eq!(t.records.len(), 1);
    }

    #[test]
    fn crlf_and_tabs_accepted() {
        let t = parse_trials("model-id\tevaluation-file-id\r\nm1 \t e1\r\n\r\n").unwrap();
        assert_eq!(t.records[0].test_id, "e1");
    }

    #[test]
    fn train_labels() {
        let td = parse_train_labels_td("train-file-id speaker-id phrase-id\ntrn_000001\tspk_000001\t09\n").unwrap();
        assert_eq!(td.records[0].phrase_id.to_string(), "09");
        let ti = parse_train_labels_ti("train-file-id speaker-id\ntrn_101064 spk_001000\n").unwrap();
        assert_eq!(ti.records[0].speaker_id, "spk_001000");
        assert!(matches!(
            parse_train_labels_td("h\ntrn_1 spk_1\n"),
            Err(FormatError::MalformedLine { line: 2, .. })
        ));
        assert_eq!(
            parse_train_labels_ti("h\nt1 s1\nt1 s2\n"),
            Err(FormatError::DuplicateFileId { line: 3, id: "t1".into() })
        );
    }

    #[test]
    fn score_grammar() {
        assert_eq!(parse_score_token("-6.1284"), Ok(-6.1284));
        assert_eq!(parse_score_token("+3"), Ok(3.0));
        assert_eq!(parse_score_token(".5"), Ok(0.5));
        assert_eq!(parse_score_token("5."), Ok(5.0));
        assert_eq!(parse_score_token("1e-3"), Ok(1e-3));
        assert_eq!(parse_score_token("1E+3"), Ok(1e3));
        for bad in ["", "-", ".", "e5", "1e", "1.2.3", "0x10", "1,5", "abc", "1 2"] {
            assert_eq!(parse_score_token(bad), Err(ScoreTokenError::NonNumeric), "{bad}");
        }
        for nf in ["nan", "NaN", "-inf", "Infinity", "1e999"] {
            assert_eq!(parse_score_token(nf), Err(ScoreTokenError::NonFinite), "{nf}");
        }
    }

    #[test]
    fn answer_examples() {
        let v = parse_answer("-6.1284\n-97.8528\n-16.8025", 3).unwrap();
        assert_eq!(&*v, &[-6.1284, -97.8528, -16.8025]);
        assert!(parse_answer("", 0).unwrap().is_empty());
        assert_eq!(
            parse_answer("1\n2\n3\n4\n5\n", 7),
            Err(FormatError::CountMismatch { expected: 7, found: 5 })
        );
        assert_eq!(
            parse_answer("model-id evaluation-file-id\n1\n2\n", 2),
            Err(FormatError::HeaderLinePresent { line: 1 })
        );
    }

    #[test]
    fn answer_trailing_newline_rules() {
        assert_eq!(parse_answer("1\n2\n", 2).unwrap().len(), 2);
        assert_eq!(parse_answer("1\r\n2\r\n", 2).unwrap().len(), 2);
        // A second trailing newline is an empty score line.
        let errs = parse_answer_all("1\n2\n\n", 2).unwrap_err();
        assert!(errs.contains(&FormatError::NonNumericScore { line: 3, token: String::new() }));
        assert_eq!(parse_answer("\n", 0).unwrap().len(), 0);
    }

    #[test]
    fn answer_collects_all_errors() {
        let errs = parse_answer_all("1\nfoo\nnan\n", 4).unwrap_err();
        assert_eq!(
            errs,
            vec![
                FormatError::NonNumericScore { line: 2, token: "foo".into() },
                FormatError::NonFiniteScore { line: 3, token: "nan".into() },
                FormatError::CountMismatch { expected: 4, found: 3 },
            ]
        );
    }

    #[test]
    fn metadata_cases() {
        let m = parse_metadata("public-description: A system.\n\nfused-systems-count: 2\nteam: x\n").unwrap();
        assert_eq!(m.metadata.fused_systems_count, 2);
        assert_eq!(m.warnings.len(), 1);
        assert_eq!(
            parse_metadata("public-description: x\nfused-systems-count: abc\n"),
            Err(FormatError::NonIntegerFusedCount { line: 2, value: "abc".into() })
        );
        assert_eq!(
            parse_metadata("fused-systems-count: 1\n"),
            Err(FormatError::MissingKey { key: "public-description".into() })
        );
        assert_eq!(
            parse_metadata("public-description: x\nfused-systems-count: 0\n"),
            Err(FormatError::FusedCountOutOfRange { line: 2, value: 0 })
        );
        assert_eq!(
            parse_metadata("public-description: x\npublic-description: y\nfused-systems-count: 1\n"),
            Err(FormatError::DuplicateKey { line: 2, key: "public-description".into() })
        );
        assert_eq!(
            parse_metadata("public-description:   \nfused-systems-count: 1\n"),
            Err(FormatError::MissingKey { key: "public-description".into() })
        );
    }

    #[test]
    fn key_write_and_parse() {
        assert_eq!(write_key(&[]), format!("{KEY_HEADER}\n"));
        let k = TrialKey::new("model_00000", "evl_000018", TrialType::Tc, true, Partition::None).unwrap();
        let text = write_key(std::slice::from_ref(&k));
        assert_eq!(text.lines().nth(1).unwrap(), "model_00000\tevl_000018\tTC\t1\tnone");
        assert_eq!(parse_key(&text).unwrap().records, vec![k]);
    }

    #[test]
    fn key_rejects_inconsistent_rows() {
        let text = format!("{KEY_HEADER}\nm e TW\t1\tnone\n");
        assert!(matches!(parse_key(&text), Err(FormatError::MalformedLine { line: 2, .. })));
        let text = format!("{KEY_HEADER}\nm e TC\t1\tnone\nm f TRG\t1\tsame-lang\n");
        assert!(matches!(parse_key(&text), Err(FormatError::MalformedLine { line: 3, .. })));
        let text = format!("{KEY_HEADER}\nm e TC\t1\tcross-lang\n");
        assert!(matches!(parse_key(&text), Err(FormatError::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn writers_are_canonical() {
        let text = "model-id  evaluation-file-id\r\nm1\t\te1\r\n";
        let t = parse_trials(text).unwrap();
        assert_eq!(write_trials(&t.records), "model-id evaluation-file-id\nm1 e1\n");
        let m = SubmissionMetadata { public_description: "d".into(), fused_systems_count: 3 };
        assert_eq!(parse_metadata(&write_metadata(&m)).unwrap().metadata, m);
    }
}
