//! JSON-over-HTTP clients for the external services: sentence classifiers,
//! the detox rewriter, the perturber, and the scorer bridge.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::audit::{ProbabilityClassifier, SentimentClassifier};
use crate::corpus::Sentiment;
use crate::error::{Error, Result};
use crate::intervene::{PerturbRequest, Perturber, Rewriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    200
}
fn default_concurrency() -> usize {
    4
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            concurrency: default_concurrency(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    config: HttpConfig,
    agent: ureq::Agent,
    service: String,
}

enum Failure {
    Retry(String),
    Fatal(String),
}

impl HttpClient {
    pub fn new(service: impl Into<String>, config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            service: service.into(),
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    pub fn get_json<R: DeserializeOwned>(&self, path: &str) -> Result<R> {
        let url = self.url(path);
        self.with_retries(&url, || {
            let resp = self.agent.get(&url).call();
            Self::decode(resp)
        })
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = self.url(path);
        self.with_retries(&url, || {
            let resp = self.agent.post(&url).send_json(body);
            Self::decode(resp)
        })
    }

    fn decode<R: DeserializeOwned>(
        resp: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> std::result::Result<R, Failure> {
        let mut resp = resp.map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Failure::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(format!("HTTP {status}: {body}")));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| Failure::Fatal(format!("bad response body: {e}")))
    }

    fn with_retries<R>(&self, url: &str, mut attempt: impl FnMut() -> std::result::Result<R, Failure>) -> Result<R> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut tries = 0;
        loop {
            match attempt() {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(msg)) => return Err(Error::external(&self.service, format!("{url}: {msg}"))),
                Err(Failure::Retry(msg)) => {
                    if tries >= self.config.retries {
                        return Err(Error::external(
                            &self.service,
                            format!("{url}: {msg} (after {} attempts)", tries + 1),
                        ));
                    }
                    log::debug!("{url}: {msg}; retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
            }
        }
    }
}

/// Applies `f` to every item with at most `limit` calls in flight. Results
/// keep input order.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let limit = limit.clamp(1, items.len().max(1));
    if limit == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..limit {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    sentences: &'a [&'a str],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    scores: Option<Vec<f64>>,
}

/// Client for `POST /classify`.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    http: HttpClient,
}

impl RemoteClassifier {
    pub fn new(config: HttpConfig) -> Self {
        Self {
            http: HttpClient::new("classifier", config),
        }
    }

    fn call(&self, sentences: &[&str]) -> Result<ClassifyResponse> {
        self.http.post_json("/classify", &ClassifyRequest { sentences })
    }
}

fn length_check<T>(got: Vec<T>, want: usize) -> Result<Vec<T>> {
    if got.len() != want {
        return Err(Error::external(
            "classifier",
            format!("expected {want} results, got {}", got.len()),
        ));
    }
    Ok(got)
}

impl ProbabilityClassifier for RemoteClassifier {
    fn scores(&self, sentences: &[&str]) -> Result<Vec<f64>> {
        let resp = self.call(sentences)?;
        let scores = resp
            .scores
            .ok_or_else(|| Error::external("classifier", "response has no `scores`"))?;
        let scores = length_check(scores, sentences.len())?;
        if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::external("classifier", format!("probability {bad} outside [0, 1]")));
        }
        Ok(scores)
    }
}

impl SentimentClassifier for RemoteClassifier {
    fn labels(&self, sentences: &[&str]) -> Result<Vec<Sentiment>> {
        let resp = self.call(sentences)?;
        let labels = resp
            .labels
            .ok_or_else(|| Error::external("classifier", "response has no `labels`"))?;
        length_check(labels, sentences.len())?
            .iter()
            .map(|l| parse_sentiment(l))
            .collect()
    }
}

fn parse_sentiment(label: &str) -> Result<Sentiment> {
    match label.to_ascii_lowercase().as_str() {
        "pos" | "positive" => Ok(Sentiment::Pos),
        "neu" | "neutral" => Ok(Sentiment::Neu),
        "neg" | "negative" => Ok(Sentiment::Neg),
        other => Err(Error::external("classifier", format!("unknown sentiment label `{other}`"))),
    }
}

/// Client for `POST /rewrite`.
#[derive(Debug, Clone)]
pub struct RemoteRewriter {
    http: HttpClient,
}

impl RemoteRewriter {
    pub fn new(config: HttpConfig) -> Self {
        Self {
            http: HttpClient::new("rewriter", config),
        }
    }
}

impl Rewriter for RemoteRewriter {
    fn rewrite(&self, prompt: &str, sentence: &str) -> Result<String> {
        #[derive(Deserialize)]
        struct Resp {
            rewritten: String,
        }
        let resp: Resp = self
            .http
            .post_json("/rewrite", &serde_json::json!({ "prompt": prompt, "sentence": sentence }))?;
        Ok(resp.rewritten)
    }
}

/// Client for `POST /perturb`.
#[derive(Debug, Clone)]
pub struct RemotePerturber {
    http: HttpClient,
}

impl RemotePerturber {
    pub fn new(config: HttpConfig) -> Self {
        Self {
            http: HttpClient::new("perturber", config),
        }
    }
}

impl Perturber for RemotePerturber {
    fn perturb(&self, request: &PerturbRequest) -> Result<String> {
        #[derive(Deserialize)]
        struct Resp {
            perturbed: String,
        }
        let resp: Resp = self.http.post_json("/perturb", request)?;
        Ok(resp.perturbed)
    }
}
