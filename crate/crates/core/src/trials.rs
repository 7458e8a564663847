//! Trial classification, answer keys, and trial-list generation.
//!
//! Text-dependent trials fall into four types by whether the test speaker and
//! the test phrase match the model. Only target-correct trials are targets.
//! Text-independent trials are target or nontarget by speaker alone, and are
//! partitioned by whether the test language matches the enrollment language.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, Enrollment, FormatError, PhraseId, Trial};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Task 1.
    TextDependent,
    /// Task 2.
    TextIndependent,
}

impl Task {
    pub fn from_number(n: u8) -> Option<Task> {
        match n {
            1 => Some(Task::TextDependent),
            2 => Some(Task::TextIndependent),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Task::TextDependent => 1,
            Task::TextIndependent => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrialType {
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "TW")]
    Tw,
    #[serde(rename = "IC")]
    Ic,
    #[serde(rename = "IW")]
    Iw,
    #[serde(rename = "TRG")]
    Trg,
    #[serde(rename = "NON")]
    Non,
}

impl TrialType {
    pub const TEXT_DEPENDENT: [TrialType; 4] = [TrialType::Tc, TrialType::Tw, TrialType::Ic, TrialType::Iw];
    pub const TEXT_INDEPENDENT: [TrialType; 2] = [TrialType::Trg, TrialType::Non];

    pub fn task(self) -> Task {
        match self {
            TrialType::Trg | TrialType::Non => Task::TextIndependent,
            _ => Task::TextDependent,
        }
    }

    pub fn is_target(self) -> bool {
        matches!(self, TrialType::Tc | TrialType::Trg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrialType::Tc => "TC",
            TrialType::Tw => "TW",
            TrialType::Ic => "IC",
            TrialType::Iw => "IW",
            TrialType::Trg => "TRG",
            TrialType::Non => "NON",
        }
    }
}

impl fmt::Display for TrialType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "TC" => TrialType::Tc,
            "TW" => TrialType::Tw,
            "IC" => TrialType::Ic,
            "IW" => TrialType::Iw,
            "TRG" => TrialType::Trg,
            "NON" => TrialType::Non,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    None,
    SameLang,
    CrossLang,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::None => "none",
            Partition::SameLang => "same-lang",
            Partition::CrossLang => "cross-lang",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "none" => Ok(Partition::None),
            "same-lang" => Ok(Partition::SameLang),
            "cross-lang" => Ok(Partition::CrossLang),
            _ => Err(()),
        }
    }
}

/// Ground truth for one trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialKey {
    pub model_id: String,
    pub test_id: String,
    pub trial_type: TrialType,
    pub is_target: bool,
    pub partition: Partition,
}

impl TrialKey {
    /// Checks that the target flag agrees with the trial type and that
    /// text-dependent trials carry no language partition.
    pub fn new(
        model_id: impl Into<String>,
        test_id: impl Into<String>,
        trial_type: TrialType,
        is_target: bool,
        partition: Partition,
    ) -> Result<Self, String> {
        if trial_type.is_target() != is_target {
            return Err(format!("trial type {trial_type} requires is-target={}", u8::from(trial_type.is_target())));
        }
        match (trial_type.task(), partition) {
            (Task::TextDependent, Partition::None) => {}
            (Task::TextDependent, p) => return Err(format!("text-dependent trial cannot have partition {p}")),
            (Task::TextIndependent, Partition::None) => {
                return Err("text-independent trial needs a language partition".to_string())
            }
            _ => {}
        }
        Ok(TrialKey {
            model_id: model_id.into(),
            test_id: test_id.into(),
            trial_type,
            is_target,
            partition,
        })
    }

    pub fn trial(&self) -> Trial {
        Trial { model_id: self.model_id.clone(), test_id: self.test_id.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "fa")]
    Persian,
    #[serde(rename = "en")]
    English,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Persian => "fa",
            Language::English => "en",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "m")]
    Male,
    #[serde(rename = "f")]
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
        }
    }
}

/// Phrases 01-05 are Persian, 06-10 English.
pub fn phrase_language(phrase: PhraseId) -> Language {
    if phrase.get() <= 5 {
        Language::Persian
    } else {
        Language::English
    }
}

/// Ground-truth attributes of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceMeta {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: Option<PhraseId>,
    pub language: Language,
    pub gender: Option<Gender>,
}

pub const META_HEADER: &str = "utt-id\tspeaker-id\tphrase-id\tlanguage\tgender";

/// Utterance metadata indexed by utterance id, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetaTable {
    rows: Vec<UtteranceMeta>,
    index: HashMap<String, usize>,
}

impl MetaTable {
    /// Fails with the duplicated id if an utterance appears twice.
    pub fn from_rows(rows: Vec<UtteranceMeta>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if index.insert(r.utterance_id.clone(), i).is_some() {
                return Err(r.utterance_id.clone());
            }
        }
        Ok(MetaTable { rows, index })
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceMeta> {
        self.index.get(utterance_id).map(|&i| &self.rows[i])
    }

    pub fn rows(&self) -> &[UtteranceMeta] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds rows for utterances not yet present; existing rows win.
    pub fn merge_missing(&mut self, rows: impl IntoIterator<Item = UtteranceMeta>) {
        for r in rows {
            if !self.index.contains_key(&r.utterance_id) {
                self.index.insert(r.utterance_id.clone(), self.rows.len());
                self.rows.push(r);
            }
        }
    }
}

pub fn parse_meta_table(content: &str) -> Result<MetaTable, FormatError> {
    let mut seen = HashSet::new();
    let parsed = formats::parse_headed(
        content,
        META_HEADER,
        |line, f| {
            let bad = |detail: String| FormatError::MalformedLine { line, detail };
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            let phrase_id = match f[2] {
                "-" => None,
                p => Some(p.parse().map_err(|_| FormatError::InvalidPhraseId { line, value: p.to_string() })?),
            };
            let language = match f[3] {
                "fa" => Language::Persian,
                "en" => Language::English,
                other => return Err(bad(format!("unknown language `{other}`"))),
            };
            let gender = match f[4] {
                "-" => None,
                "m" => Some(Gender::Male),
                "f" => Some(Gender::Female),
                other => return Err(bad(format!("unknown gender `{other}`"))),
            };
            Ok(UtteranceMeta {
                utterance_id: f[0].to_string(),
                speaker_id: f[1].to_string(),
                phrase_id,
                language,
                gender,
            })
        },
        |line, r| {
            if !seen.insert(r.utterance_id.clone()) {
                return Err(FormatError::DuplicateFileId { line, id: r.utterance_id.clone() });
            }
            Ok(())
        },
    )?;
    Ok(MetaTable::from_rows(parsed.records).expect("uniqueness checked while parsing"))
}

pub fn write_meta_table(table: &MetaTable) -> String {
    let mut out = String::from(META_HEADER);
    out.push('\n');
    for r in table.rows() {
        let phrase = r.phrase_id.map_or_else(|| "-".to_string(), |p| p.to_string());
        let gender = r.gender.map_or("-", Gender::as_str);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.utterance_id,
            r.speaker_id,
            phrase,
            r.language.as_str(),
            gender
        ));
    }
    out
}

/// The four-way text-dependent classification.
pub fn classify_trial<S: PartialEq + ?Sized, P: PartialEq + ?Sized>(
    model_speaker: &S,
    model_phrase: &P,
    test_speaker: &S,
    test_phrase: &P,
) -> TrialType {
    match (model_speaker == test_speaker, model_phrase == test_phrase) {
        (true, true) => TrialType::Tc,
        (true, false) => TrialType::Tw,
        (false, true) => TrialType::Ic,
        (false, false) => TrialType::Iw,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("trial {index}: unknown model id `{id}`")]
    UnknownModelId { index: usize, id: String },
    #[error("trial {index}: unknown test id `{id}`")]
    UnknownTestId { index: usize, id: String },
    #[error("no phrase metadata for `{id}`")]
    MissingPhrase { id: String },
    #[error("no gender metadata for `{id}`")]
    MissingGender { id: String },
    #[error("model `{model}`: enrollment utterance `{id}` has no metadata")]
    UnknownEnrollmentId { model: String, id: String },
    #[error("model `{model}`: enrollment utterances come from more than one speaker")]
    InconsistentEnrollment { model: String },
    #[error("model `{model}` has no enrollment utterances")]
    EmptyEnrollment { model: String },
    #[error("no trials satisfy the generation constraints")]
    EmptyResult,
}

/// What the evaluator knows about an enrolled model.
#[derive(Debug, Clone)]
struct ModelInfo<'a> {
    speaker: &'a str,
    phrase: Option<PhraseId>,
    language: Language,
    gender: Option<Gender>,
    enrollment: HashSet<&'a str>,
}

fn model_table<'a>(
    enrollment: &'a Enrollment,
    meta: &'a MetaTable,
) -> Result<HashMap<&'a str, ModelInfo<'a>>, KeyError> {
    let phrases: HashMap<&str, PhraseId> = match enrollment {
        Enrollment::Td(r) => r.iter().map(|m| (m.model_id.as_str(), m.phrase_id)).collect(),
        Enrollment::Ti(_) => HashMap::new(),
    };
    let mut out = HashMap::new();
    for (model, utts) in enrollment.models() {
        let Some(first) = utts.first() else {
            return Err(KeyError::EmptyEnrollment { model: model.to_string() });
        };
        let lookup = |id: &str| {
            meta.get(id).ok_or_else(|| KeyError::UnknownEnrollmentId {
                model: model.to_string(),
                id: id.to_string(),
            })
        };
        let head = lookup(first)?;
        for u in &utts[1..] {
            if lookup(u)?.speaker_id != head.speaker_id {
                return Err(KeyError::InconsistentEnrollment { model: model.to_string() });
            }
        }
        let phrase = phrases.get(model).copied();
        out.insert(
            model,
            ModelInfo {
                speaker: head.speaker_id.as_str(),
                phrase,
                language: phrase.map_or(head.language, phrase_language),
                gender: head.gender,
                enrollment: utts.into_iter().collect(),
            },
        );
    }
    Ok(out)
}

fn key_for(model_id: &str, model: &ModelInfo<'_>, test: &UtteranceMeta, task: Task) -> Result<TrialKey, KeyError> {
    let (trial_type, partition) = match task {
        Task::TextDependent => {
            let model_phrase = model.phrase.ok_or_else(|| KeyError::MissingPhrase { id: model_id.to_string() })?;
            let test_phrase = test
                .phrase_id
                .ok_or_else(|| KeyError::MissingPhrase { id: test.utterance_id.clone() })?;
            (
                classify_trial(model.speaker, &model_phrase, test.speaker_id.as_str(), &test_phrase),
                Partition::None,
            )
        }
        Task::TextIndependent => {
            let t = if model.speaker == test.speaker_id { TrialType::Trg } else { TrialType::Non };
            let p = if model.language == test.language { Partition::SameLang } else { Partition::CrossLang };
            (t, p)
        }
    };
    Ok(TrialKey {
        model_id: model_id.to_string(),
        test_id: test.utterance_id.clone(),
        trial_type,
        is_target: trial_type.is_target(),
        partition,
    })
}

/// Keys every trial, preserving order. The task is taken from the enrollment.
pub fn build_key(trials: &[Trial], enrollment: &Enrollment, meta: &MetaTable) -> Result<Vec<TrialKey>, KeyError> {
    build_key_with(trials, enrollment, meta, Execution::default())
}

pub fn build_key_with(
    trials: &[Trial],
    enrollment: &Enrollment,
    meta: &MetaTable,
    exec: Execution,
) -> Result<Vec<TrialKey>, KeyError> {
    let models = model_table(enrollment, meta)?;
    let task = enrollment.task();
    let indexed: Vec<(usize, &Trial)> = trials.iter().enumerate().collect();
    exec.map(&indexed, |&(i, t)| {
        let model = models
            .get(t.model_id.as_str())
            .ok_or_else(|| KeyError::UnknownModelId { index: i + 1, id: t.model_id.clone() })?;
        let test = meta
            .get(&t.test_id)
            .ok_or_else(|| KeyError::UnknownTestId { index: i + 1, id: t.test_id.clone() })?;
        key_for(&t.model_id, model, test, task)
    })
    .into_iter()
    .collect()
}

/// Per-type sampling caps for trial generation. Types without a cap keep
/// every eligible trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationPolicy {
    pub caps: BTreeMap<TrialType, usize>,
    pub seed: u64,
}

impl GenerationPolicy {
    pub fn uncapped(seed: u64) -> Self {
        GenerationPolicy { caps: BTreeMap::new(), seed }
    }
}

fn stream_for(t: TrialType) -> u64 {
    t as u64 + 1
}

/// Deterministic reservoir sample of `k` positions out of `0..n`, returned sorted.
fn reservoir(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut chosen: Vec<usize> = (0..k).collect();
    for i in k..n {
        let j = rng.random_range(0..=i);
        if j < k {
            chosen[j] = i;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Crosses every model with every test utterance, drops pairs that violate the
/// challenge constraints, and down-samples each trial type per `policy`.
///
/// Constraints: no cross-gender pairs; a model is never tested on its own
/// enrollment utterances; text-dependent models are only tested on utterances
/// in their phrase's language.
pub fn generate_trials(
    enrollment: &Enrollment,
    tests: &[UtteranceMeta],
    meta: &MetaTable,
    policy: &GenerationPolicy,
) -> Result<Vec<(Trial, TrialKey)>, KeyError> {
    let models = model_table(enrollment, meta)?;
    let task = enrollment.task();
    for t in tests {
        if t.gender.is_none() {
            return Err(KeyError::MissingGender { id: t.utterance_id.clone() });
        }
    }

    let mut by_type: BTreeMap<TrialType, Vec<TrialKey>> = BTreeMap::new();
    for (model_id, _) in enrollment.models() {
        let model = &models[model_id];
        let gender = model.gender.ok_or_else(|| KeyError::MissingGender { id: model_id.to_string() })?;
        for test in tests {
            if test.gender != Some(gender) || model.enrollment.contains(test.utterance_id.as_str()) {
                continue;
            }
            if task == Task::TextDependent && test.language != model.language {
                continue;
            }
            let key = key_for(model_id, model, test, task)?;
            by_type.entry(key.trial_type).or_default().push(key);
        }
    }

    // Sampled keys are re-merged in enumeration order (model-major, then test).
    let mut order: HashMap<(&str, &str), usize> = HashMap::new();
    let mut n = 0;
    for (model_id, _) in enrollment.models() {
        for test in tests {
            order.insert((model_id, test.utterance_id.as_str()), n);
            n += 1;
        }
    }

    let mut selected: Vec<TrialKey> = Vec::new();
    for (t, keys) in by_type {
        match policy.caps.get(&t) {
            Some(&cap) => {
                let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
                rng.set_stream(stream_for(t));
                let picks = reservoir(keys.len(), cap, &mut rng);
                let mut keys: Vec<Option<TrialKey>> = keys.into_iter().map(Some).collect();
                selected.extend(picks.into_iter().map(|i| keys[i].take().expect("each pick is unique")));
            }
            None => selected.extend(keys),
        }
    }
    selected.sort_by_key(|k| order[&(k.model_id.as_str(), k.test_id.as_str())]);

    if selected.is_empty() {
        return Err(KeyError::EmptyResult);
    }
    Ok(selected.into_iter().map(|k| (k.trial(), k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{EnrollmentRecordTd, EnrollmentRecordTi};

    fn p(n: u8) -> PhraseId {
        PhraseId::new(n).unwrap()
    }

    fn utt(id: &str, spk: &str, phrase: Option<u8>, lang: Language, gender: Gender) -> UtteranceMeta {
        UtteranceMeta {
            utterance_id: id.into(),
            speaker_id: spk.into(),
            phrase_id: phrase.map(p),
            language: lang,
            gender: Some(gender),
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_trial("spk_A", "07", "spk_A", "07"), TrialType::Tc);
        assert_eq!(classify_trial("spk_A", "07", "spk_A", "03"), TrialType::Tw);
        assert_eq!(classify_trial("spk_A", "07", "spk_B", "07"), TrialType::Ic);
        assert_eq!(classify_trial("spk_A", "07", "spk_B", "03"), TrialType::Iw);
    }

    #[test]
    fn only_tc_and_trg_are_targets() {
        for t in TrialType::TEXT_DEPENDENT {
            assert_eq!(t.is_target(), t == TrialType::Tc);
        }
        assert!(TrialType::Trg.is_target());
        assert!(!TrialType::Non.is_target());
    }

    fn td_fixture() -> (Enrollment, MetaTable) {
        use Gender::*;
        use Language::*;
        let enrollment = Enrollment::Td(vec![EnrollmentRecordTd {
            model_id: "model_0".into(),
            phrase_id: p(7),
            enrollment_ids: ["e0".into(), "e1".into(), "e2".into()],
        }]);
        let meta = MetaTable::from_rows(vec![
            utt("e0", "A", Some(7), English, Male),
            utt("e1", "A", Some(7), English, Male),
            utt("e2", "A", Some(7), English, Male),
            utt("t_tc", "A", Some(7), English, Male),
            utt("t_f", "B", Some(8), English, Female),
        ])
        .unwrap();
        (enrollment, meta)
    }

    #[test]
    fn build_key_td() {
        let (enrollment, meta) = td_fixture();
        let trials = vec![Trial { model_id: "model_0".into(), test_id: "t_tc".into() }];
        let keys = build_key(&trials, &enrollment, &meta).unwrap();
        assert_eq!(keys[0].trial_type, TrialType::Tc);
        assert!(keys[0].is_target);
        assert_eq!(keys[0].partition, Partition::None);

        let bad = vec![Trial { model_id: "model_9".into(), test_id: "t_tc".into() }];
        assert_eq!(
            build_key(&bad, &enrollment, &meta),
            Err(KeyError::UnknownModelId { index: 1, id: "model_9".into() })
        );
        let bad = vec![Trial { model_id: "model_0".into(), test_id: "nope".into() }];
        assert!(matches!(build_key(&bad, &enrollment, &meta), Err(KeyError::UnknownTestId { .. })));
    }

    #[test]
    fn build_key_ti_cross_language() {
        use Gender::*;
        use Language::*;
        let enrollment = Enrollment::Ti(vec![EnrollmentRecordTi {
            model_id: "m".into(),
            enrollment_ids: vec!["e0".into()],
        }]);
        let meta = MetaTable::from_rows(vec![
            utt("e0", "A", None, Persian, Male),
            utt("t0", "A", None, English, Male),
            utt("t1", "B", None, Persian, Male),
        ])
        .unwrap();
        let trials = vec![
            Trial { model_id: "m".into(), test_id: "t0".into() },
            Trial { model_id: "m".into(), test_id: "t1".into() },
        ];
        let keys = build_key(&trials, &enrollment, &meta).unwrap();
        assert_eq!((keys[0].trial_type, keys[0].is_target, keys[0].partition), (TrialType::Trg, true, Partition::CrossLang));
        assert_eq!((keys[1].trial_type, keys[1].is_target, keys[1].partition), (TrialType::Non, false, Partition::SameLang));
    }

    #[test]
    fn missing_phrase_is_reported() {
        let (enrollment, mut meta) = td_fixture();
        meta.merge_missing([UtteranceMeta {
            utterance_id: "t_nophrase".into(),
            speaker_id: "A".into(),
            phrase_id: None,
            language: Language::English,
            gender: Some(Gender::Male),
        }]);
        let trials = vec![Trial { model_id: "model_0".into(), test_id: "t_nophrase".into() }];
        assert_eq!(
            build_key(&trials, &enrollment, &meta),
            Err(KeyError::MissingPhrase { id: "t_nophrase".into() })
        );
    }

    #[test]
    fn generation_excludes_cross_gender() {
        let (enrollment, meta) = td_fixture();
        let tests: Vec<UtteranceMeta> = ["t_tc", "t_f"].iter().map(|id| meta.get(id).unwrap().clone()).collect();
        let out = generate_trials(&enrollment, &tests, &meta, &GenerationPolicy::uncapped(0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.trial_type, TrialType::Tc);
    }

    #[test]
    fn generation_skips_self_enrollment_and_reports_empty() {
        let (enrollment, meta) = td_fixture();
        let tests = vec![meta.get("e0").unwrap().clone()];
        assert_eq!(
            generate_trials(&enrollment, &tests, &meta, &GenerationPolicy::uncapped(0)),
            Err(KeyError::EmptyResult)
        );
    }

    #[test]
    fn generation_cardinality_two_by_four() {
        use Gender::*;
        use Language::*;
        let enrollment = Enrollment::Ti(vec![
            EnrollmentRecordTi { model_id: "m0".into(), enrollment_ids: vec!["e0".into()] },
            EnrollmentRecordTi { model_id: "m1".into(), enrollment_ids: vec!["e1".into()] },
        ]);
        let mut rows = vec![utt("e0", "A", None, Persian, Male), utt("e1", "B", None, Persian, Male)];
        for i in 0..4 {
            rows.push(utt(&format!("t{i}"), if i % 2 == 0 { "A" } else { "C" }, None, Persian, Male));
        }
        let meta = MetaTable::from_rows(rows).unwrap();
        let tests: Vec<UtteranceMeta> = meta.rows()[2..].to_vec();
        let out = generate_trials(&enrollment, &tests, &meta, &GenerationPolicy::uncapped(3)).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out[0].0, Trial { model_id: "m0".into(), test_id: "t0".into() });
        assert_eq!(out[7].0, Trial { model_id: "m1".into(), test_id: "t3".into() });
    }

    #[test]
    fn generation_requires_gender() {
        let (enrollment, meta) = td_fixture();
        let mut t = meta.get("t_tc").unwrap().clone();
        t.gender = None;
        assert_eq!(
            generate_trials(&enrollment, &[t], &meta, &GenerationPolicy::uncapped(0)),
            Err(KeyError::MissingGender { id: "t_tc".into() })
        );
    }

    #[test]
    fn reservoir_is_sorted_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let picks = reservoir(100, 7, &mut rng);
        assert_eq!(picks.len(), 7);
        assert!(picks.windows(2).all(|w| w[0] < w[1]));
        assert!(picks.iter().all(|&i| i < 100));
    }

    #[test]
    fn meta_table_round_trip() {
        let (_, meta) = td_fixture();
        let text = write_meta_table(&meta);
        assert!(text.starts_with(META_HEADER));
        assert_eq!(parse_meta_table(&text).unwrap(), meta);
        let dup = format!("{META_HEADER}\na s - fa m\na s - fa m\n");
        assert!(matches!(parse_meta_table(&dup), Err(FormatError::DuplicateFileId { line: 3, .. })));
    }
}
