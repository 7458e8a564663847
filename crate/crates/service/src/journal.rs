//! Append-only JSONL journal of submission records plus content-addressed
//! archive storage.
//!
//! Every line is a complete record; a later line with the same id replaces
//! the earlier one on replay. A torn final line (crash mid-write) is skipped.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::record::SubmissionRecord;

const JOURNAL_FILE: &str = "journal.jsonl";
const ARCHIVE_DIR: &str = "archives";

#[derive(Debug)]
pub struct Journal {
    root: PathBuf,
    file: File,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

impl Journal {
    /// Opens (creating if needed) the journal under `root` and returns the
    /// replayed records in first-seen order, latest version of each.
    pub fn open(root: &Path) -> io::Result<(Journal, Vec<SubmissionRecord>)> {
        fs::create_dir_all(root.join(ARCHIVE_DIR))?;
        let path = root.join(JOURNAL_FILE);
        let records = if path.exists() { replay(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((Journal { root: root.to_path_buf(), file }, records))
    }

    /// Appends one record and flushes it to stable storage.
    pub fn append(&mut self, record: &SubmissionRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn archive_path(&self, sha256: &str) -> PathBuf {
        self.root.join(ARCHIVE_DIR).join(format!("{sha256}.zip"))
    }

    /// Stores `bytes` under their SHA-256 and returns the digest.
    pub fn store_archive(&self, bytes: &[u8]) -> io::Result<String> {
        let digest = sha256_hex(bytes);
        let path = self.archive_path(&digest);
        if !path.exists() {
            let tmp = path.with_extension("zip.tmp");
            {
                let mut f = File::create(&tmp)?;
                f.write_all(bytes)?;
                f.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
        }
        Ok(digest)
    }

    pub fn load_archive(&self, sha256: &str) -> io::Result<Vec<u8>> {
        fs::read(self.archive_path(sha256))
    }
}

fn replay(path: &Path) -> io::Result<Vec<SubmissionRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<io::Result<_>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut latest: std::collections::HashMap<String, SubmissionRecord> = std::collections::HashMap::new();
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SubmissionRecord>(line) {
            Ok(rec) => {
                if !latest.contains_key(&rec.submission_id) {
                    order.push(rec.submission_id.clone());
                }
                latest.insert(rec.submission_id.clone(), rec);
            }
            Err(e) if i == last => {
                tracing::warn!("skipping torn journal tail: {e}");
            }
            Err(e) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, format!("journal line {}: {e}", i + 1)));
            }
        }
    }
    Ok(order.into_iter().filter_map(|id| latest.remove(&id)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Status;
    use chrono::{TimeZone, Utc};

    fn rec(id: &str, status: Status) -> SubmissionRecord {
        SubmissionRecord {
            submission_id: id.into(),
            team_id: "t".into(),
            task: 1,
            received_at: Utc.with_ymd_and_hms(2021, 3, 1, 12, 0, 0).unwrap(),
            status,
            errors: Vec::new(),
            metrics: None,
            metadata: None,
            warnings: Vec::new(),
            archive_sha256: "00".into(),
            scored_at: None,
        }
    }

    #[test]
    fn replay_keeps_latest_version() {
        let dir = tempfile::tempdir().unwrap();
        {
            let (mut j, recs) = Journal::open(dir.path()).unwrap();
            assert!(recs.is_empty());
            j.append(&rec("a", Status::Queued)).unwrap();
            j.append(&rec("b", Status::Rejected)).unwrap();
            j.append(&rec("a", Status::Scored)).unwrap();
        }
        let (_, recs) = Journal::open(dir.path()).unwrap();
        let got: Vec<(&str, Status)> = recs.iter().map(|r| (r.submission_id.as_str(), r.status)).collect();
        assert_eq!(got, [("a", Status::Scored), ("b", Status::Rejected)]);
    }

    #[test]
    fn torn_tail_is_skipped_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        {
            let (mut j, _) = Journal::open(dir.path()).unwrap();
            j.append(&rec("a", Status::Scored)).unwrap();
        }
        let path = dir.path().join(JOURNAL_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"submission_id\":\"b\",");
        fs::write(&path, &text).unwrap();
        assert_eq!(Journal::open(dir.path()).unwrap().1.len(), 1);

        fs::write(&path, format!("garbage\n{text}\n")).unwrap();
        assert!(Journal::open(dir.path()).is_err());
    }

    #[test]
    fn archives_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let (j, _) = Journal::open(dir.path()).unwrap();
        let d = j.store_archive(b"abc").unwrap();
        assert_eq!(d, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(j.store_archive(b"abc").unwrap(), d);
        assert_eq!(j.load_archive(&d).unwrap(), b"abc");
    }
}
