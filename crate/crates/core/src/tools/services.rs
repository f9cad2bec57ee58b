//! Retrieval and sandbox service clients, plus in-process mocks.
//!
//! Wire formats:
//!
//! * retrieval: `POST {base_url}/retrieve` with `{"query_list": [..], "topk": k}`,
//!   reply `{"passages": [[..], ..]}` (one list per query);
//! * sandbox: `POST {base_url}/run_code` with `{"code": "..", "timeout": secs}`,
//!   reply `{"stdout": "..", "stderr": "..", "exit_status": int|null, "timed_out": bool}`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("service deadline exceeded")]
    Timeout,
    #[error("service error: {0}")]
    Failed(String),
}

fn map_http_error(e: reqwest::Error) -> ServiceError {
    if e.is_timeout() {
        ServiceError::Timeout
    } else if e.is_connect() || e.is_request() {
        ServiceError::Unavailable(e.to_string())
    } else {
        ServiceError::Failed(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub query_list: Vec<String>,
    pub topk: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResponse {
    pub passages: Vec<Vec<String>>,
}

#[async_trait]
pub trait RetrievalService: Send + Sync {
    /// Passages for a single query.
    async fn retrieve(&self, query: &str) -> Result<Vec<String>, ServiceError>;
}

#[derive(Debug, Clone)]
pub struct HttpRetrieval {
    base_url: String,
    topk: usize,
    timeout: Duration,
    client: reqwest::Client,
}

impl HttpRetrieval {
    pub fn new(base_url: impl Into<String>, topk: usize, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            topk,
            timeout,
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl RetrievalService for HttpRetrieval {
    async fn retrieve(&self, query: &str) -> Result<Vec<String>, ServiceError> {
        let url = format!("{}/retrieve", self.base_url.trim_end_matches('/'));
        let body = RetrievalRequest {
            query_list: vec![query.to_string()],
            topk: self.topk,
        };
        let resp = self
            .client
            .post(url)
            .timeout(self.timeout)
            .json(&body)
            .send()
            .await
            .map_err(map_http_error)?;
        if !resp.status().is_success() {
            return Err(ServiceError::Failed(format!(
                "retrieval returned {}",
                resp.status()
            )));
        }
        let parsed: RetrievalResponse = resp
            .json()
            .await
            .map_err(|e| ServiceError::Failed(e.to_string()))?;
        Ok(parsed.passages.into_iter().next().unwrap_or_default())
    }
}

/// Seeded in-memory retrieval. Tracks request count and peak concurrency.
#[derive(Debug, Default)]
pub struct MockRetrieval {
    passages: HashMap<String, Vec<String>>,
    fallback: Vec<String>,
    delay: Duration,
    fail: bool,
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockRetrieval {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_passage(mut self, query: impl Into<String>, passage: impl Into<String>) -> Self {
        self.passages
            .entry(query.into())
            .or_default()
            .push(passage.into());
        self
    }

    /// Returned for queries with no seeded passage.
    pub fn with_fallback(mut self, passage: impl Into<String>) -> Self {
        self.fallback.push(passage.into());
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Every request fails with a service error.
    pub fn failing() -> Self {
        Self {
            fail: true,
            ..Self::default()
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl RetrievalService for MockRetrieval {
    async fn retrieve(&self, query: &str) -> Result<Vec<String>, ServiceError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if self.fail {
            return Err(ServiceError::Failed("mock retrieval failure".into()));
        }
        Ok(self
            .passages
            .get(query)
            .cloned()
            .unwrap_or_else(|| self.fallback.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxRequest {
    pub code: String,
    /// Wall-clock limit in seconds.
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SandboxOutput {
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub exit_status: Option<i32>,
    #[serde(default)]
    pub timed_out: bool,
}

impl SandboxOutput {
    pub fn succeeded(&self) -> bool {
        !self.timed_out && self.exit_status == Some(0) && self.stderr.trim().is_empty()
    }

    /// stdout followed by stderr, verbatim.
    pub fn combined(&self) -> String {
        match (self.stdout.is_empty(), self.stderr.is_empty()) {
            (_, true) => self.stdout.clone(),
            (true, false) => self.stderr.clone(),
            (false, false) => format!(
                "{}{}{}",
                self.stdout,
                if self.stdout.ends_with('\n') {
                    ""
                } else {
                    "\n"
                },
                self.stderr
            ),
        }
    }
}

#[async_trait]
pub trait SandboxService: Send + Sync {
    async fn run(&self, code: &str, limit: Duration) -> Result<SandboxOutput, ServiceError>;
}

#[derive(Debug, Clone)]
pub struct HttpSandbox {
    base_url: String,
    client: reqwest::Client,
}

impl HttpSandbox {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl SandboxService for HttpSandbox {
    async fn run(&self, code: &str, limit: Duration) -> Result<SandboxOutput, ServiceError> {
        let url = format!("{}/run_code", self.base_url.trim_end_matches('/'));
        let body = SandboxRequest {
            code: code.to_string(),
            timeout: limit.as_secs_f64(),
        };
        // Leave the service room to report its own timeout first.
        let resp = self
            .client
            .post(url)
            .timeout(limit + Duration::from_secs(5))
            .json(&body)
            .send()
            .await
            .map_err(map_http_error)?;
        if !resp.status().is_success() {
            return Err(ServiceError::Failed(format!(
                "sandbox returned {}",
                resp.status()
            )));
        }
        resp.json()
            .await
            .map_err(|e| ServiceError::Failed(e.to_string()))
    }
}

/// What a mock run does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockRun {
    Output(SandboxOutput),
    /// Never finishes within any limit.
    Hang,
    Fail(String),
}

type Interpreter = dyn Fn(&str) -> MockRun + Send + Sync;

/// In-process sandbox stand-in.
pub struct MockSandbox {
    interpreter: Box<Interpreter>,
    runs: AtomicUsize,
}

impl MockSandbox {
    pub fn new<F>(interpreter: F) -> Self
    where
        F: Fn(&str) -> MockRun + Send + Sync + 'static,
    {
        Self {
            interpreter: Box::new(interpreter),
            runs: AtomicUsize::new(0),
        }
    }

    /// Understands `print(<literal>)` lines, `raise` statements and
    /// `while True:` (which hangs). Anything else prints nothing.
    pub fn toy() -> Self {
        Self::new(toy_interpreter)
    }

    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::SeqCst)
    }
}

impl std::fmt::Debug for MockSandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockSandbox")
            .field("runs", &self.runs())
            .finish()
    }
}

fn toy_interpreter(code: &str) -> MockRun {
    let mut stdout = String::new();
    for line in code.lines().map(str::trim) {
        if line.starts_with("while True") {
            return MockRun::Hang;
        }
        if let Some(rest) = line.strip_prefix("raise ") {
            let stderr = format!(
                "Traceback (most recent call last):\n  File \"<sandbox>\", line 1\n{}\n",
                rest.trim()
            );
            return MockRun::Output(SandboxOutput {
                stdout,
                stderr,
                exit_status: Some(1),
                timed_out: false,
            });
        }
        if let Some(arg) = line
            .strip_prefix("print(")
            .and_then(|r| r.strip_suffix(')'))
        {
            stdout.push_str(&eval_literal(arg.trim()));
            stdout.push('\n');
        }
    }
    MockRun::Output(SandboxOutput {
        stdout,
        stderr: String::new(),
        exit_status: Some(0),
        timed_out: false,
    })
}

/// String literals print unquoted; `a+b` over integers is summed.
fn eval_literal(arg: &str) -> String {
    for q in ['"', '\''] {
        if arg.len() >= 2 && arg.starts_with(q) && arg.ends_with(q) {
            return arg[1..arg.len() - 1].to_string();
        }
    }
    let terms: Option<Vec<i64>> = arg
        .split('+')
        .map(|t| t.trim().parse::<i64>().ok())
        .collect();
    match terms {
        Some(ts) if !ts.is_empty() => ts.iter().sum::<i64>().to_string(),
        _ => arg.to_string(),
    }
}

#[async_trait]
impl SandboxService for MockSandbox {
    async fn run(&self, code: &str, limit: Duration) -> Result<SandboxOutput, ServiceError> {
        self.runs.fetch_add(1, Ordering::SeqCst);
        match (self.interpreter)(code) {
            MockRun::Output(out) => Ok(out),
            MockRun::Hang => {
                tokio::time::sleep(limit).await;
                Ok(SandboxOutput {
                    stdout: String::new(),
                    stderr: format!("execution exceeded {:.3}s limit", limit.as_secs_f64()),
                    exit_status: None,
                    timed_out: true,
                })
            }
            MockRun::Fail(msg) => Err(ServiceError::Unavailable(msg)),
        }
    }
}
