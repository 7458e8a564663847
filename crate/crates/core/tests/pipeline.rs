use evalkit::formats;
use evalkit::metrics::DetCostParams;
use evalkit::scorer::{breakdown_report, parse_slices, score_answer};
use evalkit::submission::validate_submission;
use evalkit::synth::{self, synth_corpus, synth_metadata, synth_scores, ScoreModel, SynthSpec};
use evalkit::trials::{self, Task, TrialType};

#[test]
fn synth_keygen_score_closure_td() {
    let spec = SynthSpec { seed: 7, n_speakers: 12, n_phrases: 4, ..SynthSpec::default() };
    let mut bundle = synth_corpus(&spec, Task::TextDependent).unwrap();

    let text = |name: &str| String::from_utf8(bundle.files[name].clone()).unwrap();
    let enrollment = formats::parse_enrollment(&text(synth::ENROLLMENT_FILE), Task::TextDependent).unwrap();
    let trial_list = formats::parse_trials(&text(synth::TRIALS_FILE)).unwrap().records;
    let meta = trials::parse_meta_table(&text(synth::META_FILE)).unwrap();
    let keys = trials::build_key(&trial_list, &enrollment, &meta).unwrap();
    assert_eq!(keys, bundle.keys);
    for t in TrialType::TEXT_DEPENDENT {
        assert!(keys.iter().any(|k| k.trial_type == t), "{t} missing");
    }
    assert!(keys.iter().all(|k| k.is_target == (k.trial_type == TrialType::Tc)));

    let scores = synth_scores(&keys, &spec.score_model, 1);
    bundle.add_submission(&scores, &synth_metadata(1));
    let payload = validate_submission(&bundle.files[synth::SUBMISSION_FILE], &trial_list).unwrap();
    let report = score_answer(&payload.answer, &keys, &DetCostParams::default()).unwrap();
    assert!((0.0..=1.0).contains(&report.min_dcf_norm));
}

#[test]
fn ti_partitions_and_breakdowns() {
    let spec = SynthSpec {
        seed: 3,
        n_speakers: 20,
        utterances_per_speaker: 8,
        score_model: ScoreModel { mu_target: 2.0, mu_nontarget: -2.0, sigma: 1.0 },
        ..SynthSpec::default()
    };
    let bundle = synth_corpus(&spec, Task::TextIndependent).unwrap();
    let scores = synth_scores(&bundle.keys, &spec.score_model, 9);
    let slices = parse_slices("overall,partition,trial-type").unwrap();
    let report = breakdown_report(&scores, &bundle.keys, &DetCostParams::default(), &slices, None).unwrap();
    let breakdowns = report.breakdowns.unwrap();
    let partitions: Vec<&str> = breakdowns
        .values()
        .flatten()
        .map(|r| r.label.as_str())
        .filter(|l| l.ends_with("-lang"))
        .collect();
    assert_eq!(partitions, ["same-lang", "cross-lang"]);
}

#[test]
fn capped_generation_is_seeded() {
    let spec = SynthSpec { seed: 11, n_speakers: 10, max_trials_per_type: Some(15), ..SynthSpec::default() };
    let a = synth_corpus(&spec, Task::TextDependent).unwrap();
    let b = synth_corpus(&spec, Task::TextDependent).unwrap();
    assert_eq!(a.keys, b.keys);
    for t in TrialType::TEXT_DEPENDENT {
        assert!(a.keys.iter().filter(|k| k.trial_type == t).count() <= 15);
    }
    let other = synth_corpus(&SynthSpec { seed: 12, ..spec }, Task::TextDependent).unwrap();
    assert_ne!(a.keys, other.keys);
}

#[test]
fn manifest_hashes_cover_every_file() {
    let bundle = synth_corpus(&SynthSpec::default(), Task::TextDependent).unwrap();
    let manifest = bundle.manifest();
    assert_eq!(manifest.files.len(), bundle.files.len());
    assert!(manifest.files.values().all(|h| h.len() == 64));
    assert!(manifest.prng.starts_with("ChaCha8Rng"));
}
