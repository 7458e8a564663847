use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use evalkit::formats;
use evalkit::metrics::DetCostParams;
use evalkit::scorer::score_answer;
use evalkit::submission::{validate_submission_with, Limits};
use evalkit::{Task, TrialKey, ValidationError};
use thiserror::Error;

use crate::clock::Clock;
use crate::config::Config;
use crate::journal::Journal;
use crate::leaderboard::{self, Leaderboard};
use crate::record::{RecordMetrics, Status, SubmissionRecord};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("cannot load key for task {task}: {detail}")]
    Key { task: u8, detail: String },
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("no such submission")]
    NotFound,
    #[error("daily quota of {limit} submissions reached; resets at {resets_at}")]
    QuotaExceeded { limit: u32, resets_at: DateTime<Utc> },
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Start of the UTC day after `now`.
pub fn next_utc_midnight(now: DateTime<Utc>) -> DateTime<Utc> {
    let day = now.date_naive().and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
    day + Duration::days(1)
}

/// Parses a task path segment.
pub fn parse_task(segment: &str) -> Result<u8, ServiceError> {
    match segment {
        "1" => Ok(1),
        "2" => Ok(2),
        other => Err(ServiceError::UnknownTask(other.to_string())),
    }
}

fn tokens_equal(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

enum Outcome {
    Scored(RecordMetrics, formats::SubmissionMetadata, Vec<String>),
    Valid(formats::SubmissionMetadata, Vec<String>),
    Rejected(Vec<ValidationError>),
}

fn evaluate(bytes: &[u8], keys: &[TrialKey], limits: Limits, score: bool) -> Outcome {
    let payload = match validate_submission_with(bytes, keys.len(), limits) {
        Ok(p) => p,
        Err(errors) => return Outcome::Rejected(errors),
    };
    if !score {
        return Outcome::Valid(payload.metadata, payload.warnings);
    }
    match score_answer(&payload.answer, keys, &DetCostParams::default()) {
        Ok(report) => Outcome::Scored(RecordMetrics::from(&report), payload.metadata, payload.warnings),
        // Keys are checked for both classes at startup and lengths were validated.
        Err(e) => unreachable!("validated answer failed to score: {e}"),
    }
}

type Records = BTreeMap<String, SubmissionRecord>;

type AdmissionLock = Arc<tokio::sync::Mutex<()>>;

/// The leaderboard service: quota, persistence, scoring and rankings.
pub struct Service {
    config: Config,
    clock: Arc<dyn Clock>,
    keys: BTreeMap<u8, Arc<Vec<TrialKey>>>,
    journal: Mutex<Journal>,
    snapshot: RwLock<Arc<Records>>,
    admission: Mutex<HashMap<(String, u8), AdmissionLock>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("data_dir", &self.config.data_dir).finish_non_exhaustive()
    }
}

fn load_key(path: &std::path::Path, task: u8) -> Result<Vec<TrialKey>, StartupError> {
    let err = |detail: String| StartupError::Key { task, detail };
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let keys = formats::parse_key(&text).map_err(|e| err(e.to_string()))?.records;
    let expected = Task::from_number(task).expect("task is 1 or 2");
    if keys.iter().any(|k| k.trial_type.task() != expected) {
        return Err(err("key rows belong to the other task".into()));
    }
    if !keys.iter().any(|k| k.is_target) || keys.iter().all(|k| k.is_target) {
        return Err(err("key needs both target and nontarget trials".into()));
    }
    Ok(keys)
}

impl Service {
    /// Loads keys and replays the journal. Queued records are not re-scored
    /// until [`Service::resume_queued`] runs inside a Tokio runtime.
    pub fn open(config: Config, clock: Arc<dyn Clock>) -> Result<Self, StartupError> {
        let mut keys = BTreeMap::new();
        for task in [1u8, 2] {
            if let Some(path) = config.key_path(task) {
                keys.insert(task, Arc::new(load_key(path, task)?));
            }
        }
        Self::with_keys(config, clock, keys)
    }

    /// Like [`Service::open`] with keys supplied in memory.
    pub fn with_keys(
        config: Config,
        clock: Arc<dyn Clock>,
        keys: BTreeMap<u8, Arc<Vec<TrialKey>>>,
    ) -> Result<Self, StartupError> {
        let (journal, replayed) = Journal::open(&config.data_dir)?;
        let next = replayed
            .iter()
            .filter_map(|r| r.submission_id.strip_prefix("sub-")?.parse::<u64>().ok())
            .max()
            .map_or(1, |n| n + 1);
        let records: Records = replayed.into_iter().map(|r| (r.submission_id.clone(), r)).collect();
        tracing::info!(records = records.len(), "journal replayed");
        Ok(Service {
            config,
            clock,
            keys,
            journal: Mutex::new(journal),
            snapshot: RwLock::new(Arc::new(records)),
            admission: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(next),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Current immutable view of all records.
    pub fn records(&self) -> Arc<Records> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Team id owning `token`.
    pub fn authenticate(&self, token: &str) -> Option<&str> {
        self.config.teams.iter().find(|t| tokens_equal(&t.token, token)).map(|t| t.id.as_str())
    }

    fn configured(&self, task: u8) -> Result<Arc<Vec<TrialKey>>, ServiceError> {
        self.keys.get(&task).cloned().ok_or_else(|| ServiceError::UnknownTask(task.to_string()))
    }

    fn charged_today(&self, records: &Records, team: &str, task: u8, now: DateTime<Utc>) -> u32 {
        let today = now.date_naive();
        records
            .values()
            .filter(|r| r.team_id == team && r.task == task && r.received_at.date_naive() == today)
            .filter(|r| self.config.charge_rejected || r.status != Status::Rejected)
            .count() as u32
    }

    /// Submissions `team` may still make for `task` today.
    pub fn remaining(&self, team: &str, task: u8) -> u32 {
        let used = self.charged_today(&self.records(), team, task, self.now());
        self.config.daily_quota.saturating_sub(used)
    }

    fn admission_lock(&self, team: &str, task: u8) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.admission.lock().expect("admission lock");
        locks.entry((team.to_string(), task)).or_default().clone()
    }

    fn publish(&self, record: SubmissionRecord) -> Result<(), ServiceError> {
        // Journal before snapshot so nothing visible can be lost.
        self.journal.lock().expect("journal lock").append(&record)?;
        let mut snap = self.snapshot.write().expect("snapshot lock");
        let mut next = (**snap).clone();
        next.insert(record.submission_id.clone(), record);
        *snap = Arc::new(next);
        Ok(())
    }

    fn limits(&self) -> Limits {
        Limits::default()
    }

    /// Admits, validates, persists and (for small keys) scores one archive.
    pub async fn submit(self: &Arc<Self>, team: &str, task: u8, bytes: Vec<u8>) -> Result<SubmissionRecord, ServiceError> {
        let keys = self.configured(task)?;
        let lock = self.admission_lock(team, task);
        let _admitted = lock.lock().await;

        let now = self.now();
        if self.charged_today(&self.records(), team, task, now) >= self.config.daily_quota {
            return Err(ServiceError::QuotaExceeded { limit: self.config.daily_quota, resets_at: next_utc_midnight(now) });
        }

        let sync = keys.len() <= self.config.sync_trial_limit;
        let limits = self.limits();
        let (bytes, outcome) = tokio::task::spawn_blocking(move || {
            let outcome = evaluate(&bytes, &keys, limits, sync);
            (bytes, outcome)
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;

        let digest = self.journal.lock().expect("journal lock").store_archive(&bytes)?;
        let id = format!("sub-{:06}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let mut record = SubmissionRecord {
            submission_id: id,
            team_id: team.to_string(),
            task,
            received_at: now,
            status: Status::Queued,
            errors: Vec::new(),
            metrics: None,
            metadata: None,
            warnings: Vec::new(),
            archive_sha256: digest,
            scored_at: None,
        };
        match outcome {
            Outcome::Scored(metrics, metadata, warnings) => {
                record.status = Status::Scored;
                record.metrics = Some(metrics);
                record.metadata = Some(metadata);
                record.warnings = warnings;
                record.scored_at = Some(self.now());
            }
            Outcome::Valid(metadata, warnings) => {
                record.metadata = Some(metadata);
                record.warnings = warnings;
            }
            Outcome::Rejected(errors) => {
                record.status = Status::Rejected;
                record.errors = errors;
            }
        }
        self.publish(record.clone())?;
        drop(_admitted);

        if record.status == Status::Queued {
            self.spawn_scoring(record.clone());
        }
        tracing::info!(team, task, id = %record.submission_id, status = ?record.status, "submission admitted");
        Ok(record)
    }

    fn spawn_scoring(self: &Arc<Self>, record: SubmissionRecord) {
        let service = Arc::clone(self);
        tokio::spawn(async move {
            let id = record.submission_id.clone();
            if let Err(e) = service.score_queued(record).await {
                tracing::error!(%id, "background scoring failed: {e}");
            }
        });
    }

    async fn score_queued(self: &Arc<Self>, mut record: SubmissionRecord) -> Result<(), ServiceError> {
        let keys = self.configured(record.task)?;
        let bytes = self.journal.lock().expect("journal lock").load_archive(&record.archive_sha256)?;
        let limits = self.limits();
        let outcome = tokio::task::spawn_blocking(move || evaluate(&bytes, &keys, limits, true))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        match outcome {
            Outcome::Scored(metrics, _, _) => {
                record.status = Status::Scored;
                record.metrics = Some(metrics);
                record.scored_at = Some(self.now());
            }
            Outcome::Rejected(errors) => {
                record.status = Status::Rejected;
                record.errors = errors;
            }
            Outcome::Valid(..) => unreachable!("scoring requested"),
        }
        self.publish(record)
    }

    /// Schedules scoring for records left queued by a previous process.
    pub fn resume_queued(self: &Arc<Self>) -> usize {
        let queued: Vec<SubmissionRecord> =
            self.records().values().filter(|r| r.status == Status::Queued).cloned().collect();
        let n = queued.len();
        for r in queued {
            self.spawn_scoring(r);
        }
        n
    }

    /// A record owned by `team`.
    pub fn get(&self, team: &str, task: u8, id: &str) -> Result<SubmissionRecord, ServiceError> {
        let records = self.records();
        let record = records.get(id).filter(|r| r.task == task).ok_or(ServiceError::NotFound)?;
        if record.team_id != team {
            return Err(ServiceError::Unauthorized);
        }
        Ok(record.clone())
    }

    pub fn leaderboard(&self, task: u8) -> Result<Leaderboard, ServiceError> {
        self.configured(task)?;
        let now = self.now();
        if let Some(freeze_at) = self.config.freeze_at.filter(|&f| now >= f) {
            return Ok(Leaderboard { task, frozen: true, freeze_at: Some(freeze_at), entries: None });
        }
        let records = self.records();
        Ok(Leaderboard {
            task,
            frozen: false,
            freeze_at: self.config.freeze_at,
            entries: Some(leaderboard::rank(records.values(), task)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn midnight_rollover() {
        let t = Utc.with_ymd_and_hms(2021, 3, 1, 23, 59, 59).unwrap();
        assert_eq!(next_utc_midnight(t), Utc.with_ymd_and_hms(2021, 3, 2, 0, 0, 0).unwrap());
    }

    #[test]
    fn task_segments() {
        assert_eq!(parse_task("1").unwrap(), 1);
        assert!(matches!(parse_task("3"), Err(ServiceError::UnknownTask(_))));
        assert!(matches!(parse_task("01"), Err(ServiceError::UnknownTask(_))));
    }

    #[test]
    fn token_comparison() {
        assert!(tokens_equal("abc", "abc"));
        assert!(!tokens_equal("abc", "abd"));
        assert!(!tokens_equal("abc", "abcd"));
    }
}
