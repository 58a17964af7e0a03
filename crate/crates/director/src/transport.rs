//! Ways of getting an answer for a request: a live HTTP endpoint, the
//! embedded fixture table, or a previously recorded audit log.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::audit::AuditRecord;
use crate::error::{DirectorError, Result};
use crate::protocol::{DirectorRequest, DirectorResponse, Task};

pub const URL_VAR: &str = "C3V_DIRECTOR_URL";
pub const KEY_VAR: &str = "C3V_DIRECTOR_KEY";

pub trait Transport: Send + Sync {
    fn name(&self) -> &str;

    fn send(&self, request: &DirectorRequest) -> Result<DirectorResponse>;
}

/// Blocking client for `POST {url}/director`.
pub struct HttpTransport {
    url: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, key: Option<String>, timeout: Duration) -> Result<Self> {
        let url = url.into().trim_end_matches('/').to_string();
        if url.is_empty() {
            return Err(DirectorError::Config(format!("{URL_VAR} is empty")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DirectorError::Config(format!("http client: {e}")))?;
        Ok(Self { url, key, client })
    }

    pub fn from_env(timeout: Duration) -> Result<Self> {
        let url = std::env::var(URL_VAR)
            .map_err(|_| DirectorError::Config(format!("live director mode requires {URL_VAR} to be set")))?;
        let key = std::env::var(KEY_VAR).ok().filter(|k| !k.is_empty());
        Self::new(url, key, timeout)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, request: &DirectorRequest) -> Result<DirectorResponse> {
        let mut builder = self.client.post(format!("{}/director", self.url)).json(request);
        if let Some(key) = &self.key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| DirectorError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(DirectorError::Unreachable(format!("HTTP {status}: {}", body.trim())));
        }
        resp.json::<DirectorResponse>()
            .map_err(|e| DirectorError::malformed(request.task, format!("response envelope: {e}")))
    }
}

pub fn prompt_key(prompt: &str) -> String {
    let normalized = prompt.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    hex::encode(Sha256::digest(normalized.as_bytes()))
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureEntry {
    task: Task,
    prompt: String,
    #[serde(default)]
    payload: Option<Value>,
    /// Verbatim answer text, for fixtures that are deliberately malformed.
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone)]
enum Answer {
    Payload(Value),
    Content(String),
}

pub const EMBEDDED_FIXTURES: &str = include_str!("../fixtures/mock_director.json");

/// Answers from a fixture table keyed by task and prompt hash. Path answers
/// are resampled by arc length when the requested count differs from the
/// fixture's.
#[derive(Debug, Clone)]
pub struct MockTransport {
    table: HashMap<(Task, String), Answer>,
}

impl MockTransport {
    pub fn embedded() -> Self {
        Self::from_json(EMBEDDED_FIXTURES).expect("embedded fixture table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<FixtureEntry> =
            serde_json::from_str(text).map_err(|e| DirectorError::Config(format!("fixture table: {e}")))?;
        let mut table = HashMap::new();
        for e in entries {
            let answer = match (e.payload, e.content) {
                (Some(p), None) => Answer::Payload(p),
                (None, Some(c)) => Answer::Content(c),
                _ => {
                    return Err(DirectorError::Config(format!(
                        "fixture {} {:?} needs exactly one of payload or content",
                        e.task, e.prompt
                    )))
                }
            };
            if table.insert((e.task, prompt_key(&e.prompt)), answer).is_some() {
                return Err(DirectorError::Config(format!("duplicate fixture {} {:?}", e.task, e.prompt)));
            }
        }
        Ok(Self { table })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DirectorError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Entries of `other` replace same-keyed entries here.
    pub fn merged(mut self, other: MockTransport) -> Self {
        self.table.extend(other.table);
        self
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Transport for MockTransport {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &DirectorRequest) -> Result<DirectorResponse> {
        let answer = self
            .table
            .get(&(request.task, prompt_key(&request.prompt)))
            .ok_or_else(|| DirectorError::MissingFixture {
                task: request.task,
                prompt: request.prompt.clone(),
            })?;
        let payload = match answer {
            Answer::Content(c) => return Ok(DirectorResponse { content: c.clone() }),
            Answer::Payload(p) => p,
        };
        if request.task == Task::Path {
            let wanted = request.context.get("n").and_then(Value::as_u64);
            if let (Some(n), Some(points)) = (wanted, fixture_points(payload)) {
                if n as usize != points.len() && points.len() >= 2 && n >= 2 {
                    let resampled = resample_polyline(&points, n as usize);
                    return Ok(DirectorResponse::fenced_json(&serde_json::json!({ "points": resampled })));
                }
            }
        }
        Ok(DirectorResponse::fenced_json(payload))
    }
}

fn fixture_points(payload: &Value) -> Option<Vec<[f64; 2]>> {
    serde_json::from_value(payload.get("points")?.clone()).ok()
}

/// `n ≥ 2` points at equal arc-length spacing along the polyline, ends exact.
pub fn resample_polyline(points: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let seg: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    let total: f64 = seg.iter().sum();
    let last = points[points.len() - 1];
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let mut before = 0.0;
    for i in 0..n {
        if i == n - 1 {
            out.push(last);
            break;
        }
        let s = total * i as f64 / (n - 1) as f64;
        while k + 1 < seg.len() && before + seg[k] < s {
            before += seg[k];
            k += 1;
        }
        let t = if seg[k] > 0.0 { ((s - before) / seg[k]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (points[k], points[k + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// Replays recorded answers in order per (task, prompt).
pub struct ReplayTransport {
    queues: Mutex<HashMap<(Task, String), VecDeque<String>>>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = AuditRecord>) -> Self {
        let mut queues: HashMap<(Task, String), VecDeque<String>> = HashMap::new();
        for r in records {
            if let Some(content) = r.response {
                queues.entry((r.task, prompt_key(&r.prompt))).or_default().push_back(content);
            }
        }
        Self {
            queues: Mutex::new(queues),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::from_records(crate::audit::read_records(path)?))
    }
}

impl Transport for ReplayTransport {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &DirectorRequest) -> Result<DirectorResponse> {
        let mut queues = self.queues.lock().expect("replay queue lock");
        queues
            .get_mut(&(request.task, prompt_key(&request.prompt)))
            .and_then(VecDeque::pop_front)
            .map(|content| DirectorResponse { content })
            .ok_or_else(|| DirectorError::MissingFixture {
                task: request.task,
                prompt: request.prompt.clone(),
            })
    }
}
