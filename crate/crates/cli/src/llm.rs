//! Zero-shot LLM baseline over a chat-completions endpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use semgraph::detector::LabelScheme;
use semgraph::stats::{score, MetricPair};

use crate::config::{hex, LlmConfig};
use crate::error::{io_err, CliError, CliResult};

pub fn build_prompt(labels: &[String], title: &str, article: &str) -> String {
    format!(
        "Please classify the following news article by its political bias. Please only classify the article as {}, and return no other text.\ntitle: {title}\narticle: {article}\nbias: ",
        labels.join(", ")
    )
}

/// Index of the label the response names, ignoring case and any whitespace
/// or punctuation around it.
pub fn parse_label(response: &str, labels: &[String]) -> Option<usize> {
    let trimmed = response.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    labels.iter().position(|l| l.eq_ignore_ascii_case(trimmed))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChatError {
    /// 401 or 403; the run stops.
    Auth(u16),
    Http(String),
}

pub trait ChatClient: Sync {
    fn complete(&self, model: &str, prompt: &str) -> Result<String, ChatError>;
}

/// Client for OpenAI-compatible chat-completions endpoints.
pub struct OpenAiClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl OpenAiClient {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration, max_retries: u32) -> CliResult<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CliError::Internal(format!("HTTP client: {e}")))?;
        Ok(OpenAiClient {
            http,
            endpoint: endpoint.to_string(),
            api_key,
            max_retries,
            backoff: Duration::from_millis(500),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn send(&self, body: &serde_json::Value) -> Result<String, (ChatError, bool)> {
        let mut req = self.http.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            let kind = if e.is_timeout() { "timeout" } else { "request failed" };
            (ChatError::Http(format!("{kind}: {e}")), true)
        })?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err((ChatError::Auth(status.as_u16()), false));
        }
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((ChatError::Http(format!("HTTP {status}")), retry));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| (ChatError::Http(format!("malformed response body: {e}")), false))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (ChatError::Http("response has no choices[0].message.content".into()), false))
    }
}

impl ChatClient for OpenAiClient {
    fn complete(&self, model: &str, prompt: &str) -> Result<String, ChatError> {
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let mut attempt = 0;
        loop {
            match self.send(&body) {
                Ok(text) => return Ok(text),
                Err((err, retry)) => {
                    if !retry || attempt >= self.max_retries {
                        return Err(err);
                    }
                    log::debug!("retrying after {err:?}");
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Responses seen so far for a (model, prompt) pair, in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub responses: Vec<String>,
}

pub fn cache_key(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(prompt.as_bytes());
    hex(&h.finalize())
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<BTreeMap<String, CacheEntry>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, starting empty when it does not exist.
    pub fn open(path: &Path) -> CliResult<Self> {
        let entries = if path.is_file() {
            semgraph::corpus::read_jsonl::<CacheEntry>(path)?
                .into_iter()
                .map(|e| (e.key.clone(), e))
                .collect()
        } else {
            BTreeMap::new()
        };
        Ok(ResponseCache {
            entries: Mutex::new(entries),
            path: Some(path.to_path_buf()),
        })
    }

    fn get(&self, key: &str, attempt: usize) -> Option<String> {
        let entries = self.entries.lock().expect("cache lock");
        entries.get(key).and_then(|e| e.responses.get(attempt).cloned())
    }

    fn put(&self, key: &str, model: &str, attempt: usize, response: String) {
        let mut entries = self.entries.lock().expect("cache lock");
        let entry = entries.entry(key.to_string()).or_insert_with(|| CacheEntry {
            key: key.to_string(),
            model: model.to_string(),
            responses: Vec::new(),
        });
        if entry.responses.len() == attempt {
            entry.responses.push(response);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> CliResult<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let entries: Vec<CacheEntry> = self.entries.lock().expect("cache lock").values().cloned().collect();
        semgraph::corpus::write_jsonl(path, &entries)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LlmArticle {
    pub id: String,
    pub title: String,
    pub body: String,
    /// Class index under the run's scheme.
    pub truth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Parsed,
    Unparseable,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmPrediction {
    pub id: String,
    pub true_label: String,
    pub pred_label: Option<String>,
    pub outcome: Outcome,
    pub attempts: usize,
    pub last_response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRun {
    pub model: String,
    pub scheme: LabelScheme,
    pub labels: Vec<String>,
    pub n: usize,
    pub scores: MetricPair,
    pub unparseable: usize,
    pub errors: usize,
    pub predictions: Vec<LlmPrediction>,
}

/// Classifies one article: an unmatched response is retried once and then
/// recorded as unparseable.
fn classify_one(
    client: &dyn ChatClient,
    cfg: &LlmConfig,
    labels: &[String],
    article: &LlmArticle,
    cache: &ResponseCache,
) -> Result<LlmPrediction, ChatError> {
    let prompt = build_prompt(labels, &article.title, &article.body);
    let key = cache_key(&cfg.model, &prompt);
    let mut pred = LlmPrediction {
        id: article.id.clone(),
        true_label: labels[article.truth].clone(),
        pred_label: None,
        outcome: Outcome::Unparseable,
        attempts: 0,
        last_response: None,
        error: None,
    };
    for attempt in 0..2 {
        let response = match cache.get(&key, attempt) {
            Some(r) => r,
            None => match client.complete(&cfg.model, &prompt) {
                Ok(r) => {
                    cache.put(&key, &cfg.model, attempt, r.clone());
                    r
                }
                Err(ChatError::Auth(status)) => return Err(ChatError::Auth(status)),
                Err(ChatError::Http(msg)) => {
                    log::warn!("article {}: {msg}", article.id);
                    pred.outcome = Outcome::Error;
                    pred.error = Some(msg);
                    return Ok(pred);
                }
            },
        };
        pred.attempts = attempt + 1;
        let parsed = parse_label(&response, labels);
        pred.last_response = Some(response);
        if let Some(idx) = parsed {
            pred.pred_label = Some(labels[idx].clone());
            pred.outcome = Outcome::Parsed;
            return Ok(pred);
        }
    }
    Ok(pred)
}

/// Runs the baseline with at most `cfg.max_in_flight` concurrent requests.
/// Unparseable and failed articles count as misclassified.
pub fn llm_baseline(
    client: &dyn ChatClient,
    cfg: &LlmConfig,
    articles: &[LlmArticle],
    cache: &ResponseCache,
) -> CliResult<LlmRun> {
    cfg.validate()?;
    if articles.is_empty() {
        return Err(CliError::Config("no articles to classify".into()));
    }
    let labels = cfg.labels();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let abort = AtomicBool::new(false);
    let results: Vec<Option<Result<LlmPrediction, ChatError>>> = pool.install(|| {
        articles
            .par_iter()
            .map(|a| {
                if abort.load(Ordering::Relaxed) {
                    return None;
                }
                let r = classify_one(client, cfg, &labels, a, cache);
                if matches!(r, Err(ChatError::Auth(_))) {
                    abort.store(true, Ordering::Relaxed);
                }
                Some(r)
            })
            .collect()
    });
    let mut predictions = Vec::with_capacity(articles.len());
    for r in results.into_iter().flatten() {
        match r {
            Ok(p) => predictions.push(p),
            Err(ChatError::Auth(status)) => return Err(CliError::Auth { status }),
            Err(ChatError::Http(msg)) => return Err(CliError::Internal(msg)),
        }
    }

    let truths: Vec<usize> = articles.iter().map(|a| a.truth).collect();
    let preds: Vec<usize> = predictions
        .iter()
        .map(|p| {
            p.pred_label
                .as_ref()
                .and_then(|l| labels.iter().position(|x| x == l))
                .unwrap_or(usize::MAX)
        })
        .collect();
    Ok(LlmRun {
        model: cfg.model.clone(),
        scheme: cfg.scheme,
        n: articles.len(),
        scores: score(&preds, &truths)?,
        unparseable: predictions.iter().filter(|p| p.outcome == Outcome::Unparseable).count(),
        errors: predictions.iter().filter(|p| p.outcome == Outcome::Error).count(),
        labels,
        predictions,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn predictions_csv(run: &LlmRun) -> String {
    let mut out = String::from("doc_id,true_label,pred_label,outcome,attempts\n");
    for p in &run.predictions {
        let outcome = match p.outcome {
            Outcome::Parsed => "parsed",
            Outcome::Unparseable => "unparseable",
            Outcome::Error => "error",
        };
        out.push_str(&format!(
            "{},{},{},{outcome},{}\n",
            csv_field(&p.id),
            p.true_label,
            p.pred_label.as_deref().unwrap_or(""),
            p.attempts
        ));
    }
    out
}
