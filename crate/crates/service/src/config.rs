use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{var}: {detail}")]
    Env { var: &'static str, detail: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Team {
    pub id: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    #[serde(default = "default_quota")]
    pub daily_quota: u32,
    #[serde(default)]
    pub freeze_at: Option<DateTime<Utc>>,
    /// Whether rejected archives count against the daily quota.
    #[serde(default = "default_true")]
    pub charge_rejected: bool,
    /// Keys with more trials than this are scored in the background.
    #[serde(default = "default_sync_limit")]
    pub sync_trial_limit: usize,
    #[serde(default = "default_upload_limit")]
    pub max_upload_bytes: usize,
    #[serde(default)]
    pub key_task1: Option<PathBuf>,
    #[serde(default)]
    pub key_task2: Option<PathBuf>,
    #[serde(default)]
    pub teams: Vec<Team>,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_quota() -> u32 {
    10
}

fn default_true() -> bool {
    true
}

fn default_sync_limit() -> usize {
    2_000_000
}

fn default_upload_limit() -> usize {
    64 * 1024 * 1024
}

impl Config {
    /// Minimal config rooted at `data_dir`, for tests and embedding.
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Config {
            data_dir: data_dir.into(),
            bind: default_bind(),
            daily_quota: default_quota(),
            freeze_at: None,
            charge_rejected: true,
            sync_trial_limit: default_sync_limit(),
            max_upload_bytes: default_upload_limit(),
            key_task1: None,
            key_task2: None,
            teams: Vec::new(),
        }
    }

    /// Reads a TOML file, applies `EVALKIT_*` overrides from the process
    /// environment and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        config.check()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("EVALKIT_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup("EVALKIT_DAILY_QUOTA") {
            self.daily_quota = v
                .parse()
                .map_err(|_| ConfigError::Env { var: "EVALKIT_DAILY_QUOTA", detail: format!("`{v}` is not a count") })?;
        }
        if let Some(v) = lookup("EVALKIT_FREEZE_AT") {
            let at = DateTime::parse_from_rfc3339(&v)
                .map_err(|e| ConfigError::Env { var: "EVALKIT_FREEZE_AT", detail: e.to_string() })?;
            self.freeze_at = Some(at.with_timezone(&Utc));
        }
        if let Some(v) = lookup("EVALKIT_KEY_TASK1") {
            self.key_task1 = Some(v.into());
        }
        if let Some(v) = lookup("EVALKIT_KEY_TASK2") {
            self.key_task2 = Some(v.into());
        }
        if let Some(v) = lookup("EVALKIT_BIND") {
            self.bind = v
                .parse()
                .map_err(|_| ConfigError::Env { var: "EVALKIT_BIND", detail: format!("`{v}` is not host:port") })?;
        }
        Ok(())
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        self.key_task1.as_mut().map(fix);
        self.key_task2.as_mut().map(fix);
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let mut ids = std::collections::HashSet::new();
        let mut tokens = std::collections::HashSet::new();
        for t in &self.teams {
            if t.id.is_empty() || t.token.is_empty() {
                return Err(ConfigError::Invalid("team id and token must be nonempty".into()));
            }
            if !ids.insert(&t.id) {
                return Err(ConfigError::Invalid(format!("duplicate team `{}`", t.id)));
            }
            if !tokens.insert(&t.token) {
                return Err(ConfigError::Invalid(format!("team `{}` reuses another team's token", t.id)));
            }
        }
        Ok(())
    }

    pub fn key_path(&self, task: u8) -> Option<&Path> {
        match task {
            1 => self.key_task1.as_deref(),
            2 => self.key_task2.as_deref(),
            _ => None,
        }
    }
}
