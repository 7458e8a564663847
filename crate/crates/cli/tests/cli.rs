use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evalkit::audio::{aligned_len, tone, write_wav_mono16, VadParams};

const KEY: &str = "model-id\ttest-file-id\ttrial-type\tis-target\tpartition\n\
m1\tt1\tTC\t1\tnone\n\
m1\tt2\tTC\t1\tnone\n\
m1\tt3\tTC\t1\tnone\n\
m1\tt4\tIC\t0\tnone\n\
m1\tt5\tTW\t0\tnone\n\
m1\tt6\tIW\t0\tnone\n";

const ANSWER: &str = "0.8\n0.6\n0.4\n0.7\n0.1\n-0.2\n";

fn evalkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evalkit")).args(args).output().expect("run evalkit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path, name: &str, content: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p.display().to_string()
}

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/submissions")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn score_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let key = fixture(dir.path(), "key.tsv", KEY);
    let answer = fixture(dir.path(), "answer.txt", ANSWER);
    let report = dir.path().join("r.json");
    let det = dir.path().join("det.csv");
    let out = evalkit(&[
        "score", "--key", &key, "--answer", &answer, "--report", report.to_str().unwrap(), "--det", det.to_str().unwrap(),
        "--slices", "overall,trial-type",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("33.33%"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["min_dcf_norm"], 0.666667);
    assert_eq!(json["eer"], 0.333333);
    assert_eq!(json["schema_version"], 1);
    assert!(std::fs::read_to_string(&det).unwrap().starts_with("threshold,p_miss,p_fa\n"));
}

#[test]
fn score_json_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let key = fixture(dir.path(), "key.tsv", KEY);
    let answer = fixture(dir.path(), "answer.txt", ANSWER);
    let report = dir.path().join("r.json");
    let out = evalkit(&["score", "--json", "--key", &key, "--answer", &answer, "--report", report.to_str().unwrap()]);
    assert!(out.status.success());
    let printed: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();

    let keys = evalkit::formats::parse_key(KEY).unwrap().records;
    let scores = evalkit::formats::parse_answer(ANSWER, keys.len()).unwrap();
    let params = evalkit::DetCostParams::default();
    let lib = evalkit::scorer::score_answer(&scores, &keys, &params).unwrap();
    let expected = evalkit::scorer::ScoreReport::new(&keys, &lib, params, None).to_json();
    assert_eq!(printed, expected);
}

#[test]
fn usage_errors_exit_2() {
    let out = evalkit(&["score"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(evalkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(evalkit(&["validate", "--task", "3", "--trials", "x", "y"]).status.code(), Some(2));
    assert_eq!(evalkit(&["score", "--key", "k", "--answer", "a", "--report", "r", "--params", "1,2"]).status.code(), Some(2));
    assert_eq!(evalkit(&["synth", "--task", "1", "--speakers", "2", "--phrases", "2", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn validate_good_and_bad_archives() {
    let trials = corpus("trials.txt");
    let out = evalkit(&["validate", "--task", "1", "--trials", &trials, &corpus("good_basic.zip")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("OK"));

    let out = evalkit(&["validate", "--json", "--task", "1", "--trials", &trials, &corpus("count_mismatch.zip")]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["ok"], false);
    assert_eq!(json["errors"][0]["code"], "CountMismatch");
}

#[test]
fn domain_errors_exit_1_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let key = fixture(dir.path(), "key.tsv", KEY);
    let answer = fixture(dir.path(), "answer.txt", "0.8\n0.6\n");
    let report = dir.path().join("r.json");
    let out = evalkit(&["score", "--key", &key, "--answer", &answer, "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!report.exists());
    assert_eq!(evalkit(&["det", "--key", "/nonexistent", "--answer", &answer, "--out", "x"]).status.code(), Some(1));
}

#[test]
fn synth_keygen_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bundle");
    let o = out_dir.to_str().unwrap();
    let run = evalkit(&["synth", "--task", "1", "--seed", "3", "--speakers", "6", "--phrases", "2", "--out", o]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let again = dir.path().join("again");
    evalkit(&["synth", "--task", "1", "--seed", "3", "--speakers", "6", "--phrases", "2", "--out", again.to_str().unwrap()]);
    for f in ["manifest.json", "key.tsv", "submission.zip", "docs/trials.txt"] {
        assert_eq!(std::fs::read(out_dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let key2 = dir.path().join("key2.tsv");
    let p = |f: &str| out_dir.join(f).display().to_string();
    let run = evalkit(&[
        "keygen", "--labels", &p("docs/train_labels.txt"), "--enrollment", &p("docs/model_enrollment.txt"),
        "--trials", &p("docs/trials.txt"), "--meta", &p("meta.tsv"), "--task", "1", "--out", key2.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read(&key2).unwrap(), std::fs::read(out_dir.join("key.tsv")).unwrap());

    let run = evalkit(&["validate", "--task", "1", "--trials", &p("docs/trials.txt"), &p("submission.zip")]);
    assert_eq!(run.status.code(), Some(0));
    let report = dir.path().join("r.json");
    let run = evalkit(&[
        "--jobs", "2", "score", "--key", &p("key.tsv"), "--answer", &p("answer.txt"), "--report",
        report.to_str().unwrap(), "--slices", "overall,trial-type,phrase", "--enrollment", &p("docs/model_enrollment.txt"),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn audit_flags_short_models() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("wav/enrollment");
    std::fs::create_dir_all(&wav).unwrap();
    let vad = VadParams::default();
    std::fs::write(wav.join("e1.wav"), write_wav_mono16(&tone(aligned_len(300, 16000, &vad), 16000, 220.0, 0.5), 16000)).unwrap();
    let enrollment = fixture(dir.path(), "enroll.txt", "model-id enroll-file-ids ...\nm1 e1\n");
    let wav_dir = dir.path().join("wav");
    let report = dir.path().join("audit.json");
    let out = evalkit(&[
        "audit", "--enrollment", &enrollment, "--wav-dir", wav_dir.to_str().unwrap(), "--task", "2", "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("model_duration"));
    let out = evalkit(&[
        "audit", "--enrollment", &enrollment, "--wav-dir", wav_dir.to_str().unwrap(), "--task", "2", "--slack", "1.1",
        "--vad", "25,10,30",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}
