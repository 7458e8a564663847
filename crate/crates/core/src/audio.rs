//! RIFF/WAVE reading, an energy VAD and corpus duration audits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::Enrollment;
use crate::par::Execution;
use crate::trials::Task;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiff,
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("data chunk declares {declared} bytes but only {available} are present")]
    TruncatedData { declared: u64, available: u64 },
    #[error("malformed WAVE header: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    /// Sample frames (one sample per channel).
    pub n_samples: u64,
    pub duration: f64,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(WavError::Malformed("fmt chunk shorter than 16 bytes".into()));
    }
    let tag = u16_at(body, 0);
    let fmt = Fmt {
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits: u16_at(body, 14),
    };
    match tag {
        FORMAT_PCM => {}
        FORMAT_EXTENSIBLE => {
            // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
            if body.len() < 40 {
                return Err(WavError::Malformed("extensible fmt chunk shorter than 40 bytes".into()));
            }
            let sub = u16_at(body, 24);
            if sub != FORMAT_PCM {
                return Err(WavError::UnsupportedCodec(format!("extensible subformat 0x{sub:04x}")));
            }
        }
        other => return Err(WavError::UnsupportedCodec(format!("format tag 0x{other:04x}"))),
    }
    if !matches!(fmt.bits, 8 | 16 | 24 | 32) {
        return Err(WavError::UnsupportedCodec(format!("{}-bit samples", fmt.bits)));
    }
    if fmt.channels == 0 || fmt.sample_rate == 0 {
        return Err(WavError::Malformed("zero channels or sample rate".into()));
    }
    if u32::from(fmt.block_align) != u32::from(fmt.channels) * u32::from(fmt.bits / 8) {
        return Err(WavError::Malformed(format!(
            "block align {} inconsistent with {} channels of {} bits",
            fmt.block_align, fmt.channels, fmt.bits
        )));
    }
    Ok(fmt)
}

fn decode_sample(b: &[u8], bits: u16) -> f64 {
    match bits {
        8 => (f64::from(b[0]) - 128.0) / 128.0,
        16 => f64::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0,
        24 => f64::from(i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) / 8_388_608.0,
        32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0,
        _ => unreachable!("bit depth checked in parse_fmt"),
    }
}

/// Decodes a PCM WAVE file. Multi-channel audio is averaged to mono; the
/// caller sees `channels > 1` in the returned info.
pub fn read_wav(bytes: &[u8]) -> Result<(WavInfo, Vec<f64>), WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiff);
    }
    let mut fmt: Option<Fmt> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                let end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
                let end = end.ok_or_else(|| WavError::Malformed("fmt chunk runs past end of file".into()))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| WavError::Malformed("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body_start;
                if size > available {
                    return Err(WavError::TruncatedData { declared: size as u64, available: available as u64 });
                }
                let data = &bytes[body_start..body_start + size];
                let block = usize::from(fmt.block_align);
                let width = usize::from(fmt.bits / 8);
                let channels = usize::from(fmt.channels);
                let samples: Vec<f64> = data
                    .chunks_exact(block)
                    .map(|frame| {
                        let sum: f64 = frame.chunks_exact(width).map(|s| decode_sample(s, fmt.bits)).sum();
                        sum / channels as f64
                    })
                    .collect();
                let n = samples.len() as u64;
                let info = WavInfo {
                    sample_rate: fmt.sample_rate,
                    channels: fmt.channels,
                    bits_per_sample: fmt.bits,
                    n_samples: n,
                    duration: n as f64 / f64::from(fmt.sample_rate),
                };
                return Ok((info, samples));
            }
            _ => {}
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    Err(WavError::Malformed(if fmt.is_none() { "no fmt chunk" } else { "no data chunk" }.into()))
}

fn encode_sample(x: f64, bits: u16, out: &mut Vec<u8>) {
    let x = x.clamp(-1.0, 1.0);
    match bits {
        8 => out.push(((x * 127.0).round() + 128.0) as u8),
        16 => out.extend_from_slice(&((x * 32_767.0).round() as i16).to_le_bytes()),
        24 => out.extend_from_slice(&((x * 8_388_607.0).round() as i32).to_le_bytes()[..3]),
        32 => out.extend_from_slice(&((x * 2_147_483_647.0).round() as i32).to_le_bytes()),
        _ => panic!("unsupported fixture bit depth {bits}"),
    }
}

/// Writes interleaved samples as a canonical PCM WAVE file. Fixture helper.
pub fn write_wav(interleaved: &[f64], sample_rate: u32, channels: u16, bits: u16) -> Vec<u8> {
    let block_align = channels * (bits / 8);
    let mut data = Vec::with_capacity(interleaved.len() * usize::from(bits / 8));
    for &x in interleaved {
        encode_sample(x, bits, &mut data);
    }
    let mut out = Vec::with_capacity(44 + data.len() + 1);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data.len() + (data.len() & 1)) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&data);
    if data.len() & 1 == 1 {
        out.push(0);
    }
    out
}

/// Mono 16-bit PCM, the corpus format.
pub fn write_wav_mono16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    write_wav(samples, sample_rate, 1, 16)
}

/// `n` samples of a sine tone.
pub fn tone(n: usize, sample_rate: u32, freq_hz: f64, amplitude: f64) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * freq_hz / f64::from(sample_rate);
    (0..n).map(|i| amplitude * (w * i as f64 + 0.25).sin()).collect()
}

pub fn silence(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadParams {
    pub frame_ms: f64,
    pub shift_ms: f64,
    /// Frames whose energy is within this many dB of the loudest frame are speech.
    pub threshold_db: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        VadParams { frame_ms: 25.0, shift_ms: 10.0, threshold_db: 30.0 }
    }
}

impl VadParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.frame_ms) || !ok(self.shift_ms) || !self.threshold_db.is_finite() || self.threshold_db < 0.0 {
            return Err("frame and shift must be positive, threshold non-negative".into());
        }
        if self.shift_ms > self.frame_ms {
            return Err("shift must not exceed frame length".into());
        }
        Ok(())
    }

    /// (frame, shift) in samples, each at least one.
    pub fn frame_samples(&self, sample_rate: u32) -> (usize, usize) {
        let to_samples = |ms: f64| ((ms * f64::from(sample_rate) / 1000.0).round() as usize).max(1);
        (to_samples(self.frame_ms), to_samples(self.shift_ms))
    }
}

/// Per-frame speech decisions. Short inputs form a single frame.
pub fn speech_frames(samples: &[f64], sample_rate: u32, params: &VadParams) -> Vec<bool> {
    if samples.is_empty() {
        return Vec::new();
    }
    let (frame, shift) = params.frame_samples(sample_rate);
    let energies: Vec<f64> = if samples.len() <= frame {
        vec![samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64]
    } else {
        let count = (samples.len() - frame) / shift + 1;
        (0..count)
            .map(|i| samples[i * shift..i * shift + frame].iter().map(|x| x * x).sum::<f64>() / frame as f64)
            .collect()
    };
    let max = energies.iter().copied().fold(0.0, f64::max);
    let floor = max * 10f64.powf(-params.threshold_db / 10.0);
    energies.iter().map(|&e| e > 0.0 && e >= floor).collect()
}

/// Net speech in samples: `count * shift + (frame - shift)` clamped to the
/// signal length.
pub fn net_speech_samples(samples: &[f64], sample_rate: u32, params: &VadParams) -> u64 {
    let frames = speech_frames(samples, sample_rate, params);
    let (frame, shift) = params.frame_samples(sample_rate);
    if samples.len() <= frame {
        return if frames.first() == Some(&true) { samples.len() as u64 } else { 0 };
    }
    let count = frames.iter().filter(|&&s| s).count() as u64;
    if count == 0 {
        return 0;
    }
    (count * shift as u64 + (frame - shift) as u64).min(samples.len() as u64)
}

pub fn net_speech_duration(samples: &[f64], sample_rate: u32, params: &VadParams) -> f64 {
    net_speech_samples(samples, sample_rate, params) as f64 / f64::from(sample_rate)
}

/// Sample count of a file for which a constant tone nets exactly its whole
/// duration: `frame + (frames - 1) * shift`.
pub fn aligned_len(frames: usize, sample_rate: u32, params: &VadParams) -> usize {
    let (frame, shift) = params.frame_samples(sample_rate);
    frame + frames.saturating_sub(1) * shift
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditParams {
    pub vad: VadParams,
    /// Tolerance in seconds added to both ends of every range check.
    pub slack_s: f64,
    pub model_range_s: (f64, f64),
    pub test_range_s: (f64, f64),
}

impl Default for AuditParams {
    fn default() -> Self {
        AuditParams { vad: VadParams::default(), slack_s: 0.0, model_range_s: (4.0, 180.0), test_range_s: (1.0, 8.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingFile,
    UnreadableFile,
    UtteranceCount,
    ModelDuration,
    TestDuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileAudit {
    pub path: String,
    pub sample_rate: u32,
    pub channels: u16,
    pub duration: f64,
    pub net_speech: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAudit {
    pub n_utterances: usize,
    pub net_speech: f64,
    /// False when some utterance could not be measured.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub task: u8,
    pub params: AuditParams,
    pub files: BTreeMap<String, FileAudit>,
    pub models: BTreeMap<String, ModelAudit>,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width violations table, one row per violation.
    pub fn violations_table(&self) -> String {
        let mut out = format!("{:<16} {:<28} {:>10}  {}\n", "KIND", "SUBJECT", "VALUE", "DETAIL");
        for v in &self.violations {
            let kind = serde_json::to_value(v.kind).ok().and_then(|k| k.as_str().map(String::from)).unwrap_or_default();
            let value = v.value.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!("{kind:<16} {:<28} {value:>10}  {}\n", v.subject, v.detail));
        }
        out.push_str(&format!(
            "{} files, {} models, {} violations\n",
            self.files.len(),
            self.models.len(),
            self.violations.len()
        ));
        out
    }
}

enum FileOutcome {
    Measured(FileAudit, Option<String>),
    Missing,
    Unreadable(String),
}

fn resolve_enrollment(wav_dir: &Path, id: &str) -> PathBuf {
    let nested = wav_dir.join("enrollment").join(format!("{id}.wav"));
    if nested.exists() {
        nested
    } else {
        wav_dir.join(format!("{id}.wav"))
    }
}

fn measure(path: &Path, vad: &VadParams) -> FileOutcome {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return FileOutcome::Missing,
        Err(e) => return FileOutcome::Unreadable(e.to_string()),
    };
    match read_wav(&bytes) {
        Ok((info, samples)) => {
            let warning = (info.channels != 1)
                .then(|| format!("{}: {} channels averaged to mono", path.display(), info.channels));
            let audit = FileAudit {
                path: path.display().to_string(),
                sample_rate: info.sample_rate,
                channels: info.channels,
                duration: info.duration,
                net_speech: net_speech_duration(&samples, info.sample_rate, vad),
            };
            FileOutcome::Measured(audit, warning)
        }
        Err(e) => FileOutcome::Unreadable(e.to_string()),
    }
}

fn outside(x: f64, (lo, hi): (f64, f64), slack: f64) -> bool {
    x < lo - slack || x > hi + slack
}

pub fn audit_corpus(enrollment: &Enrollment, wav_dir: &Path, task: Task, params: &AuditParams) -> AuditReport {
    audit_corpus_with(enrollment, wav_dir, task, params, Execution::default())
}

/// Measures every enrollment utterance (and, for text-independent corpora,
/// every file under `wav_dir/evaluation`) and flags range violations.
pub fn audit_corpus_with(
    enrollment: &Enrollment,
    wav_dir: &Path,
    task: Task,
    params: &AuditParams,
    exec: Execution,
) -> AuditReport {
    let models = enrollment.models();
    let enroll_ids: BTreeSet<&str> = models.iter().flat_map(|(_, ids)| ids.iter().copied()).collect();
    let mut jobs: Vec<(String, PathBuf, bool)> =
        enroll_ids.iter().map(|id| (id.to_string(), resolve_enrollment(wav_dir, id), false)).collect();

    if task == Task::TextIndependent {
        let eval_dir = wav_dir.join("evaluation");
        if let Ok(entries) = std::fs::read_dir(&eval_dir) {
            let mut tests: Vec<(String, PathBuf, bool)> = entries
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "wav"))
                .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p.clone(), true)))
                .collect();
            tests.sort();
            jobs.extend(tests);
        }
    }

    let outcomes = exec.map(&jobs, |(_, path, _)| measure(path, &params.vad));

    let mut files = BTreeMap::new();
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut unmeasured = BTreeSet::new();
    for ((id, path, is_test), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            FileOutcome::Measured(audit, warning) => {
                warnings.extend(warning);
                if *is_test && outside(audit.net_speech, params.test_range_s, params.slack_s) {
                    violations.push(Violation {
                        kind: ViolationKind::TestDuration,
                        subject: id.clone(),
                        value: Some(audit.net_speech),
                        detail: format!(
                            "net speech outside [{}, {}] s",
                            params.test_range_s.0, params.test_range_s.1
                        ),
                    });
                }
                files.insert(id.clone(), audit);
            }
            FileOutcome::Missing => {
                unmeasured.insert(id.clone());
                violations.push(Violation {
                    kind: ViolationKind::MissingFile,
                    subject: id.clone(),
                    value: None,
                    detail: format!("{} not found", path.display()),
                });
            }
            FileOutcome::Unreadable(err) => {
                unmeasured.insert(id.clone());
                violations.push(Violation {
                    kind: ViolationKind::UnreadableFile,
                    subject: id.clone(),
                    value: None,
                    detail: err,
                });
            }
        }
    }

    let mut model_audits = BTreeMap::new();
    for (model, ids) in &models {
        let net_speech: f64 = ids.iter().filter_map(|id| files.get(*id)).map(|f| f.net_speech).sum();
        let complete = ids.iter().all(|id| !unmeasured.contains(*id));
        if task == Task::TextDependent && ids.len() != 3 {
            violations.push(Violation {
                kind: ViolationKind::UtteranceCount,
                subject: model.to_string(),
                value: Some(ids.len() as f64),
                detail: "text-dependent models enroll with exactly 3 utterances".into(),
            });
        }
        if task == Task::TextIndependent && complete && outside(net_speech, params.model_range_s, params.slack_s) {
            violations.push(Violation {
                kind: ViolationKind::ModelDuration,
                subject: model.to_string(),
                value: Some(net_speech),
                detail: format!(
                    "net enrollment speech outside [{}, {}] s",
                    params.model_range_s.0, params.model_range_s.1
                ),
            });
        }
        model_audits.insert(model.to_string(), ModelAudit { n_utterances: ids.len(), net_speech, complete });
    }

    violations.sort_by(|a, b| (a.kind, &a.subject).cmp(&(b.kind, &b.subject)));
    AuditReport {
        schema_version: crate::SCHEMA_VERSION,
        task: task.number(),
        params: *params,
        files,
        models: model_audits,
        violations,
        warnings,
    }
}
