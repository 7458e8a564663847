#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use evalkit::submission::pack_submission;
use evalkit::synth::{synth_corpus, SynthSpec};
use evalkit::trials::Task;
use evalkit::{formats, TrialKey};
use evalkit_service::{Config, ManualClock, Service, Team};
use http_body_util::BodyExt;
use tower::ServiceExt;

pub const TOKEN_A: &str = "token-alpha";
pub const TOKEN_B: &str = "token-beta";

pub fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, 15, 9, 0, 0).unwrap()
}

pub fn keys() -> Vec<TrialKey> {
    let spec = SynthSpec { seed: 4, n_speakers: 4, ..SynthSpec::default() };
    synth_corpus(&spec, Task::TextDependent).unwrap().keys
}

pub fn config(dir: &Path) -> Config {
    let mut c = Config::new(dir);
    c.teams = vec![
        Team { id: "alpha".into(), token: TOKEN_A.into() },
        Team { id: "beta".into(), token: TOKEN_B.into() },
    ];
    c
}

pub fn open(config: Config, clock: Arc<ManualClock>) -> Arc<Service> {
    let keys: BTreeMap<u8, Arc<Vec<TrialKey>>> = BTreeMap::from([(1, Arc::new(keys()))]);
    Arc::new(Service::with_keys(config, clock, keys).unwrap())
}

/// Scores that rank every target above every nontarget.
pub fn oracle_archive(keys: &[TrialKey]) -> Vec<u8> {
    let scores: Vec<f64> = keys.iter().map(|k| if k.is_target { 1.0 } else { 0.0 }).collect();
    pack_submission(&formats::write_answer(&scores), "public-description: oracle\nfused-systems-count: 1\n")
}

/// Scores that leak nothing: a fixed ramp independent of the labels.
pub fn ramp_archive(keys: &[TrialKey], offset: usize) -> Vec<u8> {
    let scores: Vec<f64> = (0..keys.len()).map(|i| ((i * 7 + offset) % 13) as f64).collect();
    pack_submission(&formats::write_answer(&scores), "public-description: ramp\nfused-systems-count: 2\n")
}

pub fn bad_archive() -> Vec<u8> {
    pack_submission("1\n", "public-description: short\nfused-systems-count: 1\n")
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = if bytes.is_empty() { serde_json::Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, json)
}

pub fn post(task: &str, token: Option<&str>, body: Vec<u8>) -> Request<Body> {
    let mut b = Request::post(format!("/api/v1/tasks/{task}/submissions")).header("content-type", "application/zip");
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    b.body(Body::from(body)).unwrap()
}

pub fn get(path: &str, token: Option<&str>) -> Request<Body> {
    let mut b = Request::get(path);
    if let Some(t) = token {
        b = b.header("authorization", format!("Bearer {t}"));
    }
    b.body(Body::empty()).unwrap()
}
