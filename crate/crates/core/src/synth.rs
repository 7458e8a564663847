//! Deterministic synthetic corpora and score files.
//!
//! A bundle carries every text file the evaluation pipeline consumes
//! (enrollment, trials, train labels, ground-truth sidecar, key) plus a
//! manifest with the seed, the generator parameters, the PRNG description and
//! a SHA-256 of every file. No audio is produced.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed_from_u64(seed)`; the
//! corpus uses stream 0 and scores use stream 1, so regenerating scores never
//! perturbs the corpus.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formats::{
    self, Enrollment, EnrollmentRecordTd, EnrollmentRecordTi, PhraseId, ScoreVector, SubmissionMetadata, TrainLabelTd,
    TrainLabelTi, Trial,
};
use crate::submission;
use crate::trials::{self, Gender, GenerationPolicy, KeyError, Language, MetaTable, Task, TrialKey, UtteranceMeta};

pub const PRNG_NAME: &str =
    "ChaCha8Rng (rand_chacha 0.9) via seed_from_u64; stream 0 corpus, stream 1 scores; normals by rand_distr 0.5 Normal";

const CORPUS_STREAM: u64 = 0;
const SCORE_STREAM: u64 = 1;
const METADATA_STREAM: u64 = 2;

/// Phrase order used when fewer than ten phrases are requested. Pairs of
/// same-language phrases come first so wrong-phrase trials exist early.
const PHRASE_ORDER: [u8; 10] = [1, 2, 6, 7, 3, 8, 4, 9, 5, 10];

pub const ENROLLMENT_FILE: &str = "docs/model_enrollment.txt";
pub const TRIALS_FILE: &str = "docs/trials.txt";
pub const TRAIN_LABELS_FILE: &str = "docs/train_labels.txt";
pub const META_FILE: &str = "meta.tsv";
pub const KEY_FILE: &str = "key.tsv";
pub const ANSWER_FILE: &str = "answer.txt";
pub const METADATA_FILE: &str = "metadata";
pub const SUBMISSION_FILE: &str = "submission.zip";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
    #[error("parameters cannot produce a usable corpus: {0}")]
    InfeasibleSpec(String),
}

/// Class-conditional Gaussian score model, in LLR units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mu_target: f64,
    pub mu_nontarget: f64,
    pub sigma: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel { mu_target: 1.0, mu_nontarget: -1.0, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_speakers: usize,
    pub n_phrases: usize,
    /// Text-dependent: utterances per speaker per phrase (three enroll, the
    /// rest are tests). Text-independent: utterances per speaker.
    pub utterances_per_speaker: usize,
    /// Fraction of male speakers.
    pub gender_split: f64,
    /// Fraction of text-independent test utterances recorded in English.
    pub language_mix: f64,
    pub score_model: ScoreModel,
    /// Optional per-trial-type cap applied by seeded reservoir sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials_per_type: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_speakers: 10,
            n_phrases: 2,
            utterances_per_speaker: 5,
            gender_split: 0.5,
            language_mix: 0.5,
            score_model: ScoreModel::default(),
            max_trials_per_type: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_speakers == 0 || self.n_phrases == 0 || self.utterances_per_speaker == 0 {
            return bad("all counts must be at least 1");
        }
        if self.n_phrases > 10 {
            return bad("at most 10 phrases exist");
        }
        if !(0.0..=1.0).contains(&self.gender_split) || !(0.0..=1.0).contains(&self.language_mix) {
            return bad("fractions must lie in [0, 1]");
        }
        let m = &self.score_model;
        if !(m.sigma > 0.0 && m.sigma.is_finite()) || !m.mu_target.is_finite() || !m.mu_nontarget.is_finite() {
            return bad("score model needs finite means and sigma > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub task: u8,
    pub seed: u64,
    pub prng: String,
    pub spec: SynthSpec,
    /// SHA-256 (hex) of every other file in the bundle.
    pub files: BTreeMap<String, String>,
}

/// A generated corpus in memory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub task: Task,
    pub spec: SynthSpec,
    pub enrollment: Enrollment,
    pub trials: Vec<Trial>,
    pub keys: Vec<TrialKey>,
    pub meta: MetaTable,
    pub train_labels_td: Vec<TrainLabelTd>,
    pub train_labels_ti: Vec<TrainLabelTi>,
    /// Relative path to contents, manifest excluded.
    pub files: BTreeMap<String, Vec<u8>>,
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

impl Bundle {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema_version: crate::SCHEMA_VERSION,
            task: self.task.number(),
            seed: self.spec.seed,
            prng: PRNG_NAME.to_string(),
            spec: self.spec.clone(),
            files: self.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        }
    }

    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Adds answer.txt, metadata and the packed submission.zip.
    pub fn add_submission(&mut self, scores: &[f64], metadata: &SubmissionMetadata) {
        let answer = formats::write_answer(scores);
        let meta = formats::write_metadata(metadata);
        let zip = submission::pack_submission(&answer, &meta);
        self.files.insert(ANSWER_FILE.into(), answer.into_bytes());
        self.files.insert(METADATA_FILE.into(), meta.into_bytes());
        self.files.insert(SUBMISSION_FILE.into(), zip);
    }

    /// Every file plus the manifest, in path order.
    pub fn rendered(&self) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = self.files.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        out.push((MANIFEST_FILE.to_string(), self.manifest_json().into_bytes()));
        out
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        for (name, data) in self.rendered() {
            let path = dir.join(&name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, data)?;
        }
        Ok(())
    }
}

fn corpus_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CORPUS_STREAM);
    rng
}

/// Number of male speakers: as close to `n * split` as possible without
/// leaving a gender group of exactly one speaker, who could never be paired
/// with an impostor.
fn male_count(n: usize, split: f64) -> usize {
    let target = n as f64 * split;
    (0..=n)
        .filter(|&m| n < 2 || (m != 1 && n - m != 1))
        .min_by(|&a, &b| {
            let da = (a as f64 - target).abs();
            let db = (b as f64 - target).abs();
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(0)
}

fn genders(n: usize, split: f64) -> Vec<Gender> {
    let m = male_count(n, split);
    (0..n).map(|i| if i < m { Gender::Male } else { Gender::Female }).collect()
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn policy(spec: &SynthSpec, task: Task) -> GenerationPolicy {
    let mut p = GenerationPolicy::uncapped(spec.seed);
    if let Some(cap) = spec.max_trials_per_type {
        let types: &[trials::TrialType] = match task {
            Task::TextDependent => &trials::TrialType::TEXT_DEPENDENT,
            Task::TextIndependent => &trials::TrialType::TEXT_INDEPENDENT,
        };
        p.caps = types.iter().map(|&t| (t, cap)).collect();
    }
    p
}

/// Generates a complete corpus for `task`.
pub fn synth_corpus(spec: &SynthSpec, task: Task) -> Result<Bundle, SynthError> {
    spec.validate()?;
    let mut rng = corpus_rng(spec.seed);
    let genders = genders(spec.n_speakers, spec.gender_split);
    let speaker = |i: usize| format!("spk_{i:06}");

    let mut enroll_rows = Vec::new();
    // (speaker index, phrase, language) of each test utterance before ids are assigned.
    let mut pending_tests: Vec<(usize, Option<PhraseId>, Language)> = Vec::new();
    let mut enr_counter = 0usize;
    let mut next_enr = || {
        let id = format!("enr_{enr_counter:06}");
        enr_counter += 1;
        id
    };

    let enrollment = match task {
        Task::TextDependent => {
            if spec.utterances_per_speaker < 3 {
                return Err(SynthError::InfeasibleSpec(
                    "text-dependent models enroll with three utterances of one phrase".into(),
                ));
            }
            let phrases: Vec<PhraseId> = PHRASE_ORDER[..spec.n_phrases]
                .iter()
                .map(|&n| PhraseId::new(n).expect("fixed phrase table"))
                .collect();
            let mut records = Vec::new();
            for (s, &gender) in genders.iter().enumerate() {
                for &p in &phrases {
                    let lang = trials::phrase_language(p);
                    let ids = [next_enr(), next_enr(), next_enr()];
                    for id in &ids {
                        enroll_rows.push(UtteranceMeta {
                            utterance_id: id.clone(),
                            speaker_id: speaker(s),
                            phrase_id: Some(p),
                            language: lang,
                            gender: Some(gender),
                        });
                    }
                    records.push((s, p, ids));
                    pending_tests.extend((3..spec.utterances_per_speaker).map(|_| (s, Some(p), lang)));
                }
            }
            shuffle(&mut records, &mut rng);
            Enrollment::Td(
                records
                    .into_iter()
                    .enumerate()
                    .map(|(i, (_, p, ids))| EnrollmentRecordTd {
                        model_id: format!("model_{i:05}"),
                        phrase_id: p,
                        enrollment_ids: ids,
                    })
                    .collect(),
            )
        }
        Task::TextIndependent => {
            if spec.utterances_per_speaker < 2 {
                return Err(SynthError::InfeasibleSpec(
                    "text-independent speakers need one enrollment and one test utterance".into(),
                ));
            }
            let mut records = Vec::new();
            for (s, &gender) in genders.iter().enumerate() {
                let max_enroll = spec.utterances_per_speaker.div_ceil(2).min(spec.utterances_per_speaker - 1);
                let k = rng.random_range(1..=max_enroll);
                let ids: Vec<String> = (0..k).map(|_| next_enr()).collect();
                for id in &ids {
                    enroll_rows.push(UtteranceMeta {
                        utterance_id: id.clone(),
                        speaker_id: speaker(s),
                        phrase_id: None,
                        language: Language::Persian,
                        gender: Some(gender),
                    });
                }
                records.push(ids);
                for _ in k..spec.utterances_per_speaker {
                    let lang = if rng.random::<f64>() < spec.language_mix { Language::English } else { Language::Persian };
                    pending_tests.push((s, None, lang));
                }
            }
            shuffle(&mut records, &mut rng);
            Enrollment::Ti(
                records
                    .into_iter()
                    .enumerate()
                    .map(|(i, ids)| EnrollmentRecordTi { model_id: format!("model_{i:05}"), enrollment_ids: ids })
                    .collect(),
            )
        }
    };

    shuffle(&mut pending_tests, &mut rng);
    let test_rows: Vec<UtteranceMeta> = pending_tests
        .into_iter()
        .enumerate()
        .map(|(i, (s, phrase, lang))| UtteranceMeta {
            utterance_id: format!("evl_{i:06}"),
            speaker_id: speaker(s),
            phrase_id: phrase,
            language: lang,
            gender: Some(genders[s]),
        })
        .collect();

    let mut meta = MetaTable::from_rows(enroll_rows).expect("generated ids are unique");
    meta.merge_missing(test_rows.iter().cloned());

    let generated = trials::generate_trials(&enrollment, &test_rows, &meta, &policy(spec, task)).map_err(|e| match e {
        KeyError::EmptyResult => SynthError::InfeasibleSpec("no trials satisfy the constraints".into()),
        other => SynthError::InfeasibleSpec(other.to_string()),
    })?;
    let (trial_list, keys): (Vec<Trial>, Vec<TrialKey>) = generated.into_iter().unzip();

    // Training speakers are disjoint from evaluation speakers.
    let mut train_labels_td = Vec::new();
    let mut train_labels_ti = Vec::new();
    let mut trn = 0usize;
    for s in 0..spec.n_speakers {
        let spk = speaker(spec.n_speakers + s);
        match task {
            Task::TextDependent => {
                for &n in &PHRASE_ORDER[..spec.n_phrases] {
                    for _ in 0..spec.utterances_per_speaker {
                        train_labels_td.push(TrainLabelTd {
                            file_id: format!("trn_{trn:06}"),
                            speaker_id: spk.clone(),
                            phrase_id: PhraseId::new(n).expect("fixed phrase table"),
                        });
                        trn += 1;
                    }
                }
            }
            Task::TextIndependent => {
                for _ in 0..spec.utterances_per_speaker {
                    train_labels_ti.push(TrainLabelTi { file_id: format!("trn_{trn:06}"), speaker_id: spk.clone() });
                    trn += 1;
                }
            }
        }
    }

    let mut files = BTreeMap::new();
    files.insert(ENROLLMENT_FILE.to_string(), formats::write_enrollment(&enrollment).into_bytes());
    files.insert(TRIALS_FILE.to_string(), formats::write_trials(&trial_list).into_bytes());
    let labels = match task {
        Task::TextDependent => formats::write_train_labels_td(&train_labels_td),
        Task::TextIndependent => formats::write_train_labels_ti(&train_labels_ti),
    };
    files.insert(TRAIN_LABELS_FILE.to_string(), labels.into_bytes());
    files.insert(META_FILE.to_string(), trials::write_meta_table(&meta).into_bytes());
    files.insert(KEY_FILE.to_string(), formats::write_key(&keys).into_bytes());

    Ok(Bundle {
        task,
        spec: spec.clone(),
        enrollment,
        trials: trial_list,
        keys,
        meta,
        train_labels_td,
        train_labels_ti,
        files,
    })
}

/// Gaussian scores aligned with `keys`: targets from N(mu_target, sigma^2),
/// nontargets from N(mu_nontarget, sigma^2).
pub fn synth_scores(keys: &[TrialKey], model: &ScoreModel, seed: u64) -> ScoreVector {
    let flags: Vec<bool> = keys.iter().map(|k| k.is_target).collect();
    synth_scores_for_flags(&flags, model, seed)
}

pub fn synth_scores_for_flags(is_target: &[bool], model: &ScoreModel, seed: u64) -> ScoreVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SCORE_STREAM);
    let target = Normal::new(model.mu_target, model.sigma).expect("sigma validated positive");
    let nontarget = Normal::new(model.mu_nontarget, model.sigma).expect("sigma validated positive");
    let scores = is_target
        .iter()
        .map(|&t| if t { target.sample(&mut rng) } else { nontarget.sample(&mut rng) })
        .collect();
    ScoreVector::new(scores).expect("normal draws are finite")
}

/// Seeded metadata with a varied single-line description.
pub fn synth_metadata(seed: u64) -> SubmissionMetadata {
    const WORDS: [&str; 8] = ["x-vector", "PLDA", "cosine", "ResNet", "fusion", "i-vector", "LDA", "s-norm"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(METADATA_STREAM);
    let n = rng.random_range(1..=6);
    let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    SubmissionMetadata {
        public_description: format!("Synthetic system: {}.", words.join(" + ")),
        fused_systems_count: rng.random_range(1..=5),
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// EER of two equal-variance Gaussians: `Phi(-(mu_t - mu_n) / (2 sigma))`.
pub fn expected_eer_gaussian(model: &ScoreModel) -> f64 {
    normal_cdf(-(model.mu_target - model.mu_nontarget) / (2.0 * model.sigma))
}
