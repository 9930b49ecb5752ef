//! HTTP classifier backend.
//!
//! `POST {base}/classify` with `{"texts": [...]}` and expects
//! `{"labels": [...]}` with one label in {-1, 1, 9} per text.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_batch: usize,
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Concurrent batch requests.
    pub parallelism: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
            max_batch: 64,
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
            parallelism: 4,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/classify", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    labels: Vec<i64>,
}

enum Attempt {
    Transient(String),
    Fatal(Error),
}

fn post_once(client: &reqwest::blocking::Client, url: &str, texts: &[String]) -> std::result::Result<Vec<Label>, Attempt> {
    let resp = client
        .post(url)
        .json(&ClassifyRequest { texts })
        .send()
        .map_err(|e| Attempt::Transient(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(Attempt::Transient(format!("HTTP {status}")));
    }
    let body = resp.bytes().map_err(|e| Attempt::Transient(e.to_string()))?;
    let parsed: ClassifyResponse = serde_json::from_slice(&body)
        .map_err(|e| Attempt::Fatal(Error::Protocol(format!("bad response body: {e}"))))?;
    if parsed.labels.len() != texts.len() {
        return Err(Attempt::Fatal(Error::Protocol(format!(
            "sent {} texts, received {} labels",
            texts.len(),
            parsed.labels.len()
        ))));
    }
    parsed
        .labels
        .into_iter()
        .map(|v| {
            Label::from_value(v)
                .ok_or_else(|| Attempt::Fatal(Error::Protocol(format!("unknown label value {v}"))))
        })
        .collect()
}

fn classify_batch(client: &reqwest::blocking::Client, cfg: &RemoteConfig, texts: &[String]) -> Result<Vec<Label>> {
    let url = cfg.endpoint();
    let mut backoff = cfg.initial_backoff;
    let mut last = String::new();
    for attempt in 0..cfg.attempts.max(1) {
        if attempt > 0 {
            thread::sleep(backoff);
            backoff *= 2;
        }
        match post_once(client, &url, texts) {
            Ok(labels) => return Ok(labels),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Transient(msg)) => {
                log::warn!("classifier request attempt {} failed: {msg}", attempt + 1);
                last = msg;
            }
        }
    }
    Err(Error::BackendUnavailable(format!(
        "{url} failed after {} attempts: {last}",
        cfg.attempts.max(1)
    )))
}

/// Classify `texts` through the remote endpoint, preserving order.
///
/// Texts are split into batches of at most `max_batch`; up to `parallelism`
/// batches are in flight at once and results are reassembled in submission
/// order.
pub fn classify_remote(texts: &[String], cfg: &RemoteConfig) -> Result<Vec<Label>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    if cfg.max_batch == 0 {
        return Err(Error::contract("max_batch must be positive"));
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
    let batches: Vec<&[String]> = texts.chunks(cfg.max_batch).collect();
    let results: Vec<Mutex<Option<Result<Vec<Label>>>>> =
        batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.parallelism.clamp(1, batches.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() {
                    break;
                }
                let res = classify_batch(&client, cfg, batches[i]);
                *results[i].lock().expect("result slot poisoned") = Some(res);
            });
        }
    });
    let mut labels = Vec::with_capacity(texts.len());
    for slot in results {
        let res = slot
            .into_inner()
            .expect("result slot poisoned")
            .expect("every batch is processed");
        labels.extend(res?);
    }
    Ok(labels)
}
