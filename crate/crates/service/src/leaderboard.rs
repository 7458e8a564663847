use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::record::{Status, SubmissionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub team_id: String,
    pub best_min_dcf_norm: f64,
    /// EER of the submission that holds the best minDCF.
    pub best_eer: f64,
    pub best_submission_id: String,
    pub submission_count: usize,
    pub last_improved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub task: u8,
    pub frozen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<LeaderboardEntry>>,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Ranks teams by best minDCF, then that submission's EER, then who got
/// there first. Values are rounded to four decimals after ranking.
pub fn rank<'a>(records: impl IntoIterator<Item = &'a SubmissionRecord>, task: u8) -> Vec<LeaderboardEntry> {
    let mut per_team: BTreeMap<&str, Vec<&SubmissionRecord>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.task == task) {
        per_team.entry(&r.team_id).or_default().push(r);
    }
    type Row<'r> = (f64, f64, DateTime<Utc>, &'r str, &'r str, usize);
    let mut rows: Vec<Row> = Vec::new();
    for (team, recs) in per_team {
        let best = recs
            .iter()
            .filter(|r| r.status == Status::Scored)
            .filter_map(|r| r.metrics.map(|m| (m, r)))
            .min_by(|(a, ra), (b, rb)| {
                a.min_dcf_norm
                    .total_cmp(&b.min_dcf_norm)
                    .then(a.eer.total_cmp(&b.eer))
                    .then(ra.received_at.cmp(&rb.received_at))
                    .then(ra.submission_id.cmp(&rb.submission_id))
            });
        if let Some((m, r)) = best {
            rows.push((m.min_dcf_norm, m.eer, r.received_at, team, &r.submission_id, recs.len()));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(b.3)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (dcf, eer, at, team, id, count))| LeaderboardEntry {
            rank: i + 1,
            team_id: team.to_string(),
            best_min_dcf_norm: round4(dcf),
            best_eer: round4(eer),
            best_submission_id: id.to_string(),
            submission_count: count,
            last_improved_at: at,
        })
        .collect()
}
