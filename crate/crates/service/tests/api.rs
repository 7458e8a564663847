mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use chrono::Duration;
use common::*;
use evalkit_service::{router, ManualClock, Status};

#[tokio::test]
async fn quota_resets_at_utc_midnight() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let app = router(open(config(dir.path()), clock.clone()));
    let keys = keys();
    for i in 0..10 {
        let (status, body) = send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, i))).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        clock.advance(Duration::minutes(30));
    }
    let (status, body) = send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 99))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(body["error"], "QuotaExceeded");

    // The other team and the other day are unaffected.
    assert_eq!(send(&app, post("1", Some(TOKEN_B), ramp_archive(&keys, 0))).await.0, StatusCode::CREATED);
    clock.set(start() + Duration::days(1) - Duration::hours(9));
    assert_eq!(send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 0))).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn rejected_archives_are_charged_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let service = open(config(dir.path()), clock.clone());
    let app = router(service.clone());
    let (status, body) = send(&app, post("1", Some(TOKEN_A), bad_archive())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["status"], "rejected");
    assert_eq!(body["errors"][0]["code"], "CountMismatch");
    assert_eq!(service.remaining("alpha", 1), 9);

    let dir2 = tempfile::tempdir().unwrap();
    let mut lenient = config(dir2.path());
    lenient.charge_rejected = false;
    let service = open(lenient, clock);
    let app = router(service.clone());
    assert_eq!(send(&app, post("1", Some(TOKEN_A), bad_archive())).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(service.remaining("alpha", 1), 10);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_submissions_never_exceed_quota() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let app = router(open(config(dir.path()), clock));
    let keys = keys();
    for i in 0..5 {
        assert_eq!(send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, i))).await.0, StatusCode::CREATED);
    }
    let barrier = Arc::new(tokio::sync::Barrier::new(20));
    let handles: Vec<_> = (0..20)
        .map(|i| {
            let app = app.clone();
            let barrier = barrier.clone();
            let body = ramp_archive(&keys, 100 + i);
            tokio::spawn(async move {
                barrier.wait().await;
                send(&app, post("1", Some(TOKEN_A), body)).await.0
            })
        })
        .collect();
    let mut created = 0;
    let mut limited = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::CREATED => created += 1,
            StatusCode::TOO_MANY_REQUESTS => limited += 1,
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!((created, limited), (5, 15));
}

#[tokio::test]
async fn records_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let keys = keys();
    let mut ids = Vec::new();
    {
        let app = router(open(config(dir.path()), clock.clone()));
        for i in 0..3 {
            let (_, body) = send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, i))).await;
            ids.push(body["submission_id"].as_str().unwrap().to_string());
        }
        send(&app, post("1", Some(TOKEN_A), bad_archive())).await;
    }
    let service = open(config(dir.path()), clock);
    assert_eq!(service.records().len(), 4);
    assert_eq!(service.remaining("alpha", 1), 6);
    let app = router(service);
    for id in &ids {
        let (status, body) = send(&app, get(&format!("/api/v1/tasks/1/submissions/{id}"), Some(TOKEN_A))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["status"], "scored");
    }
    // Fresh ids continue after the replayed ones.
    let (_, body) = send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 9))).await;
    assert_eq!(body["submission_id"], "sub-000005");
}

#[tokio::test]
async fn oracle_scores_rank_first_and_freeze_hides_rankings() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let mut cfg = config(dir.path());
    cfg.freeze_at = Some(start() + Duration::days(2));
    let app = router(open(cfg, clock.clone()));
    let keys = keys();
    let (_, body) = send(&app, post("1", Some(TOKEN_B), oracle_archive(&keys))).await;
    assert_eq!(body["metrics"]["min_dcf_norm"], 0.0);
    send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 0))).await;

    let (status, board) = send(&app, get("/api/v1/tasks/1/leaderboard", None)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(board["frozen"], false);
    assert_eq!(board["entries"][0]["team_id"], "beta");
    assert_eq!(board["entries"][1]["team_id"], "alpha");

    clock.set(start() + Duration::days(2));
    let (_, board) = send(&app, get("/api/v1/tasks/1/leaderboard", None)).await;
    assert_eq!(board["frozen"], true);
    assert!(board.get("entries").is_none());
    // Submissions are still accepted while frozen.
    assert_eq!(send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 1))).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn access_rules() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let app = router(open(config(dir.path()), clock));
    let keys = keys();
    assert_eq!(send(&app, post("1", None, ramp_archive(&keys, 0))).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, post("1", Some("nope"), ramp_archive(&keys, 0))).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, post("3", Some(TOKEN_A), ramp_archive(&keys, 0))).await.0, StatusCode::NOT_FOUND);
    // Task 2 has no key configured.
    assert_eq!(send(&app, post("2", Some(TOKEN_A), ramp_archive(&keys, 0))).await.0, StatusCode::NOT_FOUND);

    let (_, body) = send(&app, post("1", Some(TOKEN_A), ramp_archive(&keys, 0))).await;
    let id = body["submission_id"].as_str().unwrap();
    let path = format!("/api/v1/tasks/1/submissions/{id}");
    assert_eq!(send(&app, get(&path, Some(TOKEN_A))).await.0, StatusCode::OK);
    assert_eq!(send(&app, get(&path, Some(TOKEN_B))).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, get(&path, None)).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, get("/api/v1/tasks/1/submissions/sub-999999", Some(TOKEN_A))).await.0, StatusCode::NOT_FOUND);
    let (status, health) = send(&app, get("/api/v1/health", None)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
}

#[tokio::test]
async fn large_keys_score_in_background_and_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(start()));
    let mut cfg = config(dir.path());
    cfg.sync_trial_limit = 0;
    let service = open(cfg.clone(), clock.clone());
    let app = router(service.clone());
    let (status, body) = send(&app, post("1", Some(TOKEN_A), oracle_archive(&keys()))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["status"], "queued");
    let id = body["submission_id"].as_str().unwrap().to_string();
    wait_scored(&service, &id).await;

    // A queued record found on startup is re-scored.
    let mut queued = service.get("alpha", 1, &id).unwrap();
    queued.submission_id = "sub-000050".into();
    queued.status = Status::Queued;
    queued.metrics = None;
    queued.scored_at = None;
    let line = serde_json::to_string(&queued).unwrap();
    drop(app);
    drop(service);
    let journal = dir.path().join("journal.jsonl");
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str(&line);
    text.push('\n');
    std::fs::write(&journal, text).unwrap();

    let service = open(cfg, clock);
    assert_eq!(service.resume_queued(), 1);
    wait_scored(&service, "sub-000050").await;
}

async fn wait_scored(service: &evalkit_service::Service, id: &str) {
    for _ in 0..200 {
        if service.get("alpha", 1, id).unwrap().status == Status::Scored {
            return;
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    panic!("{id} never scored");
}
