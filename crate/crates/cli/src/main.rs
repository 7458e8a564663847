//! `evalkit`: validate, score, key, synthesize, audit and serve.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use evalkit::audio::{audit_corpus_with, AuditParams, VadParams};
use evalkit::formats::{self, Enrollment, PhraseId};
use evalkit::metrics::{export_det, DetCostParams};
use evalkit::scorer::{breakdown_report_with, score_answer_with, ScoreReport, SliceSpec};
use evalkit::submission::{validate_submission, ValidationReport};
use evalkit::synth::{synth_corpus, synth_metadata, synth_scores, ScoreModel, SynthSpec};
use evalkit::trials::{self, phrase_language, Language, Task, UtteranceMeta};
use evalkit::Execution;

#[derive(Debug, Parser)]
#[command(name = "evalkit", version, about = "Speaker verification challenge evaluation toolkit")]
struct Cli {
    /// Print machine-readable JSON on stdout instead of the human summary.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for parallel scoring slices and audits (1 = sequential).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a submission archive against the official trial list.
    Validate {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        trials: PathBuf,
        zip: PathBuf,
    },
    /// Score an answer file against a trial key.
    Score {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        answer: PathBuf,
        /// c_miss,c_fa,p_target
        #[arg(long, value_parser = parse_params)]
        params: Option<DetCostParams>,
        /// Comma-separated slices, e.g. overall,trial-type,partition,phrase=01
        #[arg(long, value_delimiter = ',')]
        slices: Vec<SliceSpec>,
        /// Enrollment file, needed for phrase slices.
        #[arg(long)]
        enrollment: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        det: Option<PathBuf>,
    },
    /// Build a trial key from trials, enrollment and utterance metadata.
    Keygen {
        /// Training labels whose rows fill gaps in the metadata sidecar.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        enrollment: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic corpus with scores and a submission.
    Synth {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        speakers: usize,
        #[arg(long)]
        phrases: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        utterances: usize,
        #[arg(long, default_value_t = 0.5)]
        gender_split: f64,
        #[arg(long, default_value_t = 0.5)]
        language_mix: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        mu_target: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        mu_nontarget: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        max_trials_per_type: Option<usize>,
    },
    /// Measure net speech of a WAV corpus and flag duration violations.
    Audit {
        #[arg(long)]
        enrollment: PathBuf,
        #[arg(long)]
        wav_dir: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        /// frame_ms,shift_ms,threshold_db
        #[arg(long, value_parser = parse_vad)]
        vad: Option<VadParams>,
        /// Seconds of tolerance on every range bound.
        #[arg(long, default_value_t = 0.0)]
        slack: f64,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the DET operating points as CSV.
    Det {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        answer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the leaderboard HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse::<u8>().ok().and_then(Task::from_number).ok_or_else(|| format!("task must be 1 or 2, got `{s}`"))
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected {N} comma-separated numbers"))
}

fn parse_params(s: &str) -> Result<DetCostParams, String> {
    let [c_miss, c_fa, p_target] = parse_floats::<3>(s)?;
    DetCostParams::new(c_miss, c_fa, p_target).map_err(|e| e.to_string())
}

fn parse_vad(s: &str) -> Result<VadParams, String> {
    let [frame_ms, shift_ms, threshold_db] = parse_floats::<3>(s)?;
    let vad = VadParams { frame_ms, shift_ms, threshold_db };
    vad.validate()?;
    Ok(vad)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(data)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("json value serializes"));
}

fn load_keys(path: &Path) -> Result<Vec<evalkit::TrialKey>> {
    let parsed = formats::parse_key(&read_text(path)?).with_context(|| format!("parsing key {}", path.display()))?;
    Ok(parsed.records)
}

fn load_answer(path: &Path, expected: usize) -> Result<evalkit::ScoreVector> {
    formats::parse_answer(&read_text(path)?, expected).with_context(|| format!("parsing answer {}", path.display()))
}

struct Run {
    json: bool,
    exec: Execution,
}

/// Outcome of a subcommand that completed without an operational error:
/// `false` means a domain-level failure was reported.
type Verdict = Result<bool>;

impl Run {
    fn validate(&self, task: Task, trials_path: &Path, zip: &Path) -> Verdict {
        let trials = formats::parse_trials(&read_text(trials_path)?)
            .with_context(|| format!("parsing trials {}", trials_path.display()))?
            .records;
        let bytes = std::fs::read(zip).with_context(|| format!("reading {}", zip.display()))?;
        let result = validate_submission(&bytes, &trials);
        let report = ValidationReport::from_result(&result);
        if self.json {
            let mut v = serde_json::to_value(&report)?;
            v["task"] = task.number().into();
            print_json(&v);
        } else if report.ok {
            println!("OK");
            println!("{} scores for {} trials (task {})", report.n_scores, trials.len(), task.number());
            for w in &report.warnings {
                println!("warning: {w}");
            }
        } else {
            println!("FAILED: {} error(s)", report.errors.len());
            for e in &report.errors {
                println!("  {e}");
            }
        }
        Ok(report.ok)
    }

    #[allow(clippy::too_many_arguments)]
    fn score(
        &self,
        key: &Path,
        answer: &Path,
        params: DetCostParams,
        slices: Option<&[SliceSpec]>,
        enrollment: Option<&Path>,
        report_path: &Path,
        det: Option<&Path>,
    ) -> Verdict {
        let keys = load_keys(key)?;
        let scores = load_answer(answer, keys.len())?;
        let phrases: Option<HashMap<String, PhraseId>> = match enrollment {
            Some(path) => match formats::parse_enrollment(&read_text(path)?, Task::TextDependent) {
                Ok(Enrollment::Td(records)) => Some(records.into_iter().map(|r| (r.model_id, r.phrase_id)).collect()),
                Ok(Enrollment::Ti(_)) => None,
                Err(e) => bail!("parsing enrollment {}: {e}", path.display()),
            },
            None => None,
        };
        let metrics = match slices {
            Some(slices) => breakdown_report_with(&scores, &keys, &params, slices, phrases.as_ref(), self.exec)?,
            None => score_answer_with(&scores, &keys, &params, self.exec)?,
        };
        if let Some(det) = det {
            write_atomic(det, export_det(&metrics.det_points)?.as_bytes())?;
        }
        let report = ScoreReport::new(&keys, &metrics, params, det.map(|p| p.display().to_string()));
        let json = report.to_json();
        let mut pretty = serde_json::to_string_pretty(&json)?;
        pretty.push('\n');
        write_atomic(report_path, pretty.as_bytes())?;
        if self.json {
            print_json(&json);
        } else {
            println!("{}", report.summary());
        }
        Ok(true)
    }

    fn keygen(
        &self,
        labels: Option<&Path>,
        enrollment: &Path,
        trials_path: &Path,
        meta_path: &Path,
        task: Task,
        out: &Path,
    ) -> Verdict {
        let enrollment = formats::parse_enrollment(&read_text(enrollment)?, task)?;
        let trials = formats::parse_trials(&read_text(trials_path)?)?.records;
        let mut meta = trials::parse_meta_table(&read_text(meta_path)?)?;
        if let Some(path) = labels {
            meta.merge_missing(label_rows(&read_text(path)?, task)?);
        }
        let keys = trials::build_key_with(&trials, &enrollment, &meta, self.exec)?;
        write_atomic(out, formats::write_key(&keys).as_bytes())?;
        let targets = keys.iter().filter(|k| k.is_target).count();
        if self.json {
            print_json(&serde_json::json!({
                "schema_version": evalkit::SCHEMA_VERSION,
                "task": task.number(),
                "n_trials": keys.len(),
                "n_target": targets,
                "out": out.display().to_string(),
            }));
        } else {
            println!("wrote {} key rows ({} target) to {}", keys.len(), targets, out.display());
        }
        Ok(true)
    }

    fn synth(&self, task: Task, spec: SynthSpec, out: &Path) -> Verdict {
        let mut bundle = synth_corpus(&spec, task)?;
        let scores = synth_scores(&bundle.keys, &spec.score_model, spec.seed);
        bundle.add_submission(&scores, &synth_metadata(spec.seed));
        for (name, data) in bundle.rendered() {
            write_atomic(&out.join(name), &data)?;
        }
        if self.json {
            print_json(&serde_json::to_value(bundle.manifest())?);
        } else {
            println!(
                "wrote {} models, {} trials ({} target) to {}",
                bundle.enrollment.len(),
                bundle.keys.len(),
                bundle.keys.iter().filter(|k| k.is_target).count(),
                out.display()
            );
        }
        Ok(true)
    }

    fn audit(&self, enrollment: &Path, wav_dir: &Path, task: Task, params: AuditParams, report_path: Option<&Path>) -> Verdict {
        let enrollment = formats::parse_enrollment(&read_text(enrollment)?, task)?;
        let report = audit_corpus_with(&enrollment, wav_dir, task, &params, self.exec);
        let json = report.to_json();
        if let Some(path) = report_path {
            write_atomic(path, json.as_bytes())?;
        }
        if self.json {
            print_json(&serde_json::from_str(&json)?);
        } else {
            print!("{}", report.violations_table());
            for w in &report.warnings {
                println!("warning: {w}");
            }
        }
        Ok(report.violations.is_empty())
    }

    fn det(&self, key: &Path, answer: &Path, out: &Path) -> Verdict {
        let keys = load_keys(key)?;
        let scores = load_answer(answer, keys.len())?;
        let report = score_answer_with(&scores, &keys, &DetCostParams::default(), self.exec)?;
        write_atomic(out, export_det(&report.det_points)?.as_bytes())?;
        if self.json {
            print_json(&serde_json::json!({
                "schema_version": evalkit::SCHEMA_VERSION,
                "n_points": report.det_points.len(),
                "out": out.display().to_string(),
            }));
        } else {
            println!("wrote {} DET points to {}", report.det_points.len(), out.display());
        }
        Ok(true)
    }

    fn serve(&self, config: &Path) -> Verdict {
        tracing_subscriber::fmt()
            .with_env_filter(
                tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
            )
            .init();
        let config = evalkit_service::Config::load(config)?;
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        runtime.block_on(evalkit_service::serve(config)).map_err(|e| anyhow::anyhow!(e))?;
        Ok(true)
    }
}

/// Training-label rows as metadata. Text-dependent rows take their language
/// from the phrase; text-independent rows are assumed Persian.
fn label_rows(content: &str, task: Task) -> Result<Vec<UtteranceMeta>> {
    Ok(match task {
        Task::TextDependent => formats::parse_train_labels_td(content)?
            .records
            .into_iter()
            .map(|l| UtteranceMeta {
                utterance_id: l.file_id,
                speaker_id: l.speaker_id,
                phrase_id: Some(l.phrase_id),
                language: phrase_language(l.phrase_id),
                gender: None,
            })
            .collect(),
        Task::TextIndependent => formats::parse_train_labels_ti(content)?
            .records
            .into_iter()
            .map(|l| UtteranceMeta {
                utterance_id: l.file_id,
                speaker_id: l.speaker_id,
                phrase_id: None,
                language: Language::Persian,
                gender: None,
            })
            .collect(),
    })
}

fn execution(jobs: Option<usize>) -> Result<Execution> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}

fn dispatch(cli: Cli) -> Verdict {
    let run = Run { json: cli.json, exec: execution(cli.jobs)? };
    match cli.command {
        Command::Validate { task, trials, zip } => run.validate(task, &trials, &zip),
        Command::Score { key, answer, params, slices, enrollment, report, det } => run.score(
            &key,
            &answer,
            params.unwrap_or_default(),
            (!slices.is_empty()).then_some(slices.as_slice()),
            enrollment.as_deref(),
            &report,
            det.as_deref(),
        ),
        Command::Keygen { labels, enrollment, trials, meta, task, out } => {
            run.keygen(labels.as_deref(), &enrollment, &trials, &meta, task, &out)
        }
        Command::Synth {
            task,
            seed,
            speakers,
            phrases,
            out,
            utterances,
            gender_split,
            language_mix,
            mu_target,
            mu_nontarget,
            sigma,
            max_trials_per_type,
        } => {
            let spec = SynthSpec {
                seed,
                n_speakers: speakers,
                n_phrases: phrases,
                utterances_per_speaker: utterances,
                gender_split,
                language_mix,
                score_model: ScoreModel { mu_target, mu_nontarget, sigma },
                max_trials_per_type,
            };
            run.synth(task, spec, &out)
        }
        Command::Audit { enrollment, wav_dir, task, vad, slack, report } => {
            let params = AuditParams { vad: vad.unwrap_or_default(), slack_s: slack, ..AuditParams::default() };
            run.audit(&enrollment, &wav_dir, task, params, report.as_deref())
        }
        Command::Det { key, answer, out } => run.det(&key, &answer, &out),
        Command::Serve { config } => run.serve(&config),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    let json = cli.json;
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if json {
                print_json(&serde_json::json!({
                    "schema_version": evalkit::SCHEMA_VERSION,
                    "ok": false,
                    "error": format!("{e:#}"),
                }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
