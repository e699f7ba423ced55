//! Likelihood and embedding interface over language models.
//!
//! Everything that scores text goes through [`Scorer`]. Two implementations
//! ship here: [`NGramModel`], an add-k smoothed n-gram model that makes every
//! benchmark computation exactly reproducible without an ML runtime, and
//! [`RemoteScorer`], a client for the scorer bridge HTTP protocol. Either can
//! be wrapped in a [`CachedScorer`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{HttpClient, HttpConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub sequence_logprob: bool,
    pub masked_logprob: bool,
    pub embed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Ngram,
    Remote,
    /// Anything implemented outside this crate, including test stubs.
    Custom,
}

/// Log-probability of a whole token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub total: f64,
    /// `total` divided by the token count.
    pub mean: f64,
}

impl SequenceScore {
    pub fn from_total(total: f64, len: usize) -> Self {
        Self {
            total,
            mean: total / len as f64,
        }
    }
}

pub trait Scorer: Send + Sync {
    /// Model id plus version; stable for the lifetime of the scorer.
    fn identity(&self) -> &str;

    fn kind(&self) -> ScorerKind {
        ScorerKind::Custom
    }

    fn capabilities(&self) -> Capabilities;

    fn sequence_logprob(&self, tokens: &[String]) -> Result<SequenceScore>;

    /// Log-probability of each whitespace token at `targets`, in order.
    fn masked_logprob(&self, tokens: &[String], targets: &[usize]) -> Result<Vec<f64>> {
        let _ = (tokens, targets);
        Err(self.unsupported("masked_logprob"))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let _ = text;
        Err(self.unsupported("embed"))
    }

    fn sequence_logprob_batch(&self, batch: &[Vec<String>]) -> Vec<Result<SequenceScore>> {
        batch.iter().map(|t| self.sequence_logprob(t)).collect()
    }

    /// Cheap reachability check.
    fn ping(&self) -> Result<()> {
        Ok(())
    }

    fn unsupported(&self, capability: &'static str) -> Error {
        Error::Unsupported {
            identity: self.identity().to_owned(),
            capability,
        }
    }
}

pub type ScorerHandle = Arc<dyn Scorer>;

pub trait Embedder: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

impl<S: Scorer + ?Sized> Embedder for S {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.embed(text)
    }
}

pub(crate) fn check_tokens(tokens: &[String]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Empty("cannot score an empty token list"));
    }
    Ok(())
}

pub(crate) fn check_targets(tokens: &[String], targets: &[usize]) -> Result<()> {
    if let Some(bad) = targets.iter().find(|&&i| i >= tokens.len()) {
        return Err(Error::InvalidInput(format!(
            "target index {bad} out of range for {} tokens",
            tokens.len()
        )));
    }
    Ok(())
}

/// Bag-of-words embedding: token counts hashed into `dim` buckets, then
/// L2-normalized. Word order is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl HashedEmbedder {
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let mut words: Vec<&str> = lower.iter().map(String::as_str).filter(|t| text::is_word(t)).collect();
        if words.is_empty() {
            words = lower.iter().map(String::as_str).collect();
        }
        if words.is_empty() {
            return Err(Error::Empty("cannot embed an empty sentence"));
        }
        let mut v = vec![0.0; self.dim];
        for w in words {
            v[(text::fnv1a(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

impl Embedder for HashedEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_tokens(&text::tokenize(text))
    }
}

const UNK: u32 = 0;
const BOS: u32 = u32::MAX;
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Add-k smoothed n-gram model over lowercased tokens.
///
/// `P(w | ctx) = (c(ctx, w) + k) / (c(ctx) + k·|V|)` using the longest
/// context suffix seen in training; the empty context (unigram) is always
/// available. Tokens seen fewer than `min_count` times map to `<unk>`, which
/// is part of the vocabulary. Sentences are padded on the left with
/// beginning-of-sentence markers that are never predicted.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    k: f64,
    vocab: HashMap<String, u32>,
    /// `levels[m]` holds contexts of length `m`.
    levels: Vec<HashMap<Vec<u32>, ContextCounts>>,
    identity: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    pub smoothing_k: f64,
    pub min_count: u64,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing_k: 0.5,
            min_count: 2,
        }
    }
}

pub fn train_ngram(corpus: &Corpus, config: NGramConfig) -> Result<NGramModel> {
    if config.order == 0 {
        return Err(Error::InvalidInput("n-gram order must be at least 1".into()));
    }
    if !config.smoothing_k.is_finite() || config.smoothing_k <= 0.0 {
        return Err(Error::InvalidInput("smoothing k must be positive".into()));
    }
    if corpus.token_count() == 0 {
        return Err(Error::Empty("cannot train on an empty corpus"));
    }

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in corpus.sentences() {
        for t in s.lower_tokens() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<&str> = freq
        .iter()
        .filter(|(_, &c)| c >= config.min_count)
        .map(|(t, _)| *t)
        .collect();
    kept.sort_unstable();
    let mut vocab: HashMap<String, u32> = HashMap::with_capacity(kept.len() + 1);
    vocab.insert(UNK_TOKEN.to_owned(), UNK);
    for (i, t) in kept.iter().enumerate() {
        vocab.insert((*t).to_owned(), i as u32 + 1);
    }

    let mut levels: Vec<HashMap<Vec<u32>, ContextCounts>> = vec![HashMap::new(); config.order];
    let mut stream_hash = text::fnv1a(b"");
    for s in corpus.sentences() {
        let ids: Vec<u32> = s
            .lower_tokens()
            .iter()
            .map(|t| vocab.get(t).copied().unwrap_or(UNK))
            .collect();
        for t in s.lower_tokens() {
            stream_hash = stream_hash.rotate_left(5) ^ text::fnv1a(t.as_bytes());
        }
        let mut history = vec![BOS; config.order - 1];
        history.extend_from_slice(&ids);
        for pos in config.order - 1..history.len() {
            let w = history[pos];
            for (m, level) in levels.iter_mut().enumerate() {
                let ctx = history[pos - m..pos].to_vec();
                let entry = level.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(w).or_default() += 1;
            }
        }
    }

    let identity = format!(
        "ngram:order={},k={},min_count={},vocab={},corpus={:016x}",
        config.order,
        config.smoothing_k,
        config.min_count,
        vocab.len(),
        stream_hash
    );
    Ok(NGramModel {
        order: config.order,
        k: config.smoothing_k,
        vocab,
        levels,
        identity,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.k
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    /// Vocabulary in a deterministic order, `<unk>` first.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut v: Vec<(&str, u32)> = self.vocab.iter().map(|(t, &i)| (t.as_str(), i)).collect();
        v.sort_by_key(|(_, i)| *i);
        v.into_iter().map(|(t, _)| t).collect()
    }

    fn id(&self, token: &str) -> u32 {
        self.vocab.get(&token.to_lowercase()).copied().unwrap_or(UNK)
    }

    fn prob_ids(&self, history: &[u32], w: u32) -> f64 {
        let v = self.vocab.len() as f64;
        let max_m = (self.order - 1).min(history.len());
        for m in (0..=max_m).rev() {
            let ctx = &history[history.len() - m..];
            if let Some(c) = self.levels[m].get(ctx) {
                let cw = c.next.get(&w).copied().unwrap_or(0) as f64;
                return (cw + self.k) / (c.total as f64 + self.k * v);
            }
        }
        unreachable!("unigram level is populated for any trained model")
    }

    /// `P(word | context)` where `context` is the preceding tokens of the
    /// sentence (no padding needed).
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let mut history = vec![BOS; self.order - 1];
        history.extend(context.iter().map(|t| self.id(t)));
        self.prob_ids(&history, self.id(word))
    }

    /// Per-position `ln P(token_i | left context)`.
    pub fn token_logprobs(&self, tokens: &[String]) -> Vec<f64> {
        let mut history = vec![BOS; self.order - 1];
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            let w = self.id(t);
            out.push(self.prob_ids(&history, w).ln());
            history.push(w);
        }
        out
    }

    /// Contexts seen in training at the highest order, for normalization
    /// checks. Tokens are returned as vocabulary strings, with `None` for the
    /// sentence-start marker.
    pub fn seen_contexts(&self) -> Vec<Vec<Option<&str>>> {
        let by_id: HashMap<u32, &str> = self.vocab.iter().map(|(t, &i)| (i, t.as_str())).collect();
        let mut out: Vec<Vec<Option<&str>>> = self.levels[self.order - 1]
            .keys()
            .map(|ctx| ctx.iter().map(|i| by_id.get(i).copied()).collect())
            .collect();
        out.sort();
        out
    }

    /// Distribution over the vocabulary after a raw id context. Used by
    /// [`Self::seen_contexts`] consumers through [`Self::prob_after`].
    pub fn prob_after(&self, context: &[Option<&str>], word: &str) -> f64 {
        let history: Vec<u32> = context.iter().map(|t| t.map_or(BOS, |t| self.id(t))).collect();
        self.prob_ids(&history, self.id(word))
    }
}

impl Scorer for NGramModel {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Ngram
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            sequence_logprob: true,
            masked_logprob: true,
            embed: true,
        }
    }

    fn sequence_logprob(&self, tokens: &[String]) -> Result<SequenceScore> {
        check_tokens(tokens)?;
        let total = self.token_logprobs(tokens).iter().sum();
        Ok(SequenceScore::from_total(total, tokens.len()))
    }

    /// Causal approximation: each target scored from its left context only.
    fn masked_logprob(&self, tokens: &[String], targets: &[usize]) -> Result<Vec<f64>> {
        check_targets(tokens, targets)?;
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let all = self.token_logprobs(tokens);
        Ok(targets.iter().map(|&i| all[i]).collect())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        HashedEmbedder::default().embed_text(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Masked,
    Causal,
}

/// Body of the bridge's `GET /info`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeInfo {
    pub model_id: String,
    pub model_type: ModelType,
    pub embedding_dim: usize,
    pub max_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
}

#[derive(Debug, Serialize)]
struct LogprobRequest<'a> {
    sentences: Vec<String>,
    mode: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_indices: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
struct LogprobResponse {
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
    #[serde(default)]
    token_logprobs: Option<Vec<Vec<f64>>>,
}

/// Client for the scorer bridge (`/info`, `/logprob`, `/embed`).
///
/// Sentences travel as their whitespace-joined tokens; the bridge maps
/// whitespace tokens onto subwords. For masked models the sequence score is
/// the pseudo-log-likelihood over every token.
#[derive(Debug)]
pub struct RemoteScorer {
    http: HttpClient,
    info: BridgeInfo,
    identity: String,
    pooling: String,
    batch_size: usize,
}

impl RemoteScorer {
    pub fn connect(config: HttpConfig) -> Result<Self> {
        let http = HttpClient::new("scorer bridge", config);
        let info: BridgeInfo = http.get_json("/info")?;
        let identity = match &info.revision {
            Some(rev) => format!("remote:{}@{}", info.model_id, rev),
            None => format!("remote:{}", info.model_id),
        };
        Ok(Self {
            http,
            info,
            identity,
            pooling: "mean".into(),
            batch_size: 32,
        })
    }

    pub fn with_pooling(mut self, pooling: impl Into<String>) -> Self {
        self.pooling = pooling.into();
        self
    }

    pub fn info(&self) -> &BridgeInfo {
        &self.info
    }

    fn logprob_call(&self, req: &LogprobRequest<'_>) -> Result<LogprobResponse> {
        self.http.post_json("/logprob", req)
    }

    fn sequence_batch(&self, batch: &[Vec<String>]) -> Result<Vec<SequenceScore>> {
        let sentences: Vec<String> = batch.iter().map(|t| t.join(" ")).collect();
        let totals: Vec<f64> = match self.info.model_type {
            ModelType::Causal => {
                let resp = self.logprob_call(&LogprobRequest {
                    sentences,
                    mode: "sequence",
                    target_indices: None,
                })?;
                resp.logprobs
                    .ok_or_else(|| Error::external("scorer bridge", "response has no `logprobs`"))?
            }
            ModelType::Masked => {
                let targets = batch.iter().map(|t| (0..t.len()).collect()).collect();
                let resp = self.logprob_call(&LogprobRequest {
                    sentences,
                    mode: "pll",
                    target_indices: Some(targets),
                })?;
                resp.token_logprobs
                    .ok_or_else(|| Error::external("scorer bridge", "response has no `token_logprobs`"))?
                    .iter()
                    .map(|v| v.iter().sum())
                    .collect()
            }
        };
        if totals.len() != batch.len() {
            return Err(Error::external("scorer bridge", "result count does not match request"));
        }
        Ok(totals
            .into_iter()
            .zip(batch)
            .map(|(t, toks)| SequenceScore::from_total(t, toks.len()))
            .collect())
    }
}

impl Scorer for RemoteScorer {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Remote
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            sequence_logprob: true,
            masked_logprob: self.info.model_type == ModelType::Masked,
            embed: self.info.embedding_dim > 0,
        }
    }

    fn sequence_logprob(&self, tokens: &[String]) -> Result<SequenceScore> {
        check_tokens(tokens)?;
        Ok(self.sequence_batch(std::slice::from_ref(&tokens.to_vec()))?[0])
    }

    fn sequence_logprob_batch(&self, batch: &[Vec<String>]) -> Vec<Result<SequenceScore>> {
        let mut out = Vec::with_capacity(batch.len());
        for group in batch.chunks(self.batch_size) {
            if group.iter().any(Vec::is_empty) {
                // Item by item, so only the empty entries fail.
                out.extend(group.iter().map(|t| self.sequence_logprob(t)));
                continue;
            }
            match self.sequence_batch(group) {
                Ok(scores) => out.extend(scores.into_iter().map(Ok)),
                Err(e) => {
                    let msg = e.to_string();
                    out.extend(group.iter().map(|_| Err(Error::external("scorer bridge", msg.clone()))));
                }
            }
        }
        out
    }

    fn masked_logprob(&self, tokens: &[String], targets: &[usize]) -> Result<Vec<f64>> {
        check_targets(tokens, targets)?;
        if self.info.model_type != ModelType::Masked {
            return Err(self.unsupported("masked_logprob"));
        }
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.logprob_call(&LogprobRequest {
            sentences: vec![tokens.join(" ")],
            mode: "pll",
            target_indices: Some(vec![targets.to_vec()]),
        })?;
        let mut rows = resp
            .token_logprobs
            .ok_or_else(|| Error::external("scorer bridge", "response has no `token_logprobs`"))?;
        if rows.len() != 1 || rows[0].len() != targets.len() {
            return Err(Error::external("scorer bridge", "result shape does not match request"));
        }
        Ok(rows.remove(0))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::Empty("cannot embed an empty sentence"));
        }
        #[derive(Deserialize)]
        struct Resp {
            vectors: Vec<Vec<f64>>,
        }
        let mut resp: Resp = self.http.post_json(
            "/embed",
            &serde_json::json!({ "sentences": [text], "pooling": self.pooling }),
        )?;
        if resp.vectors.len() != 1 {
            return Err(Error::external("scorer bridge", "expected one vector"));
        }
        Ok(resp.vectors.remove(0))
    }

    fn ping(&self) -> Result<()> {
        let info: BridgeInfo = self.http.get_json("/info")?;
        if info != self.info {
            return Err(Error::external(
                "scorer bridge",
                format!("model changed from {} to {}", self.info.model_id, info.model_id),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    value: serde_json::Value,
    scorer_identity: String,
}

/// Memoizes another scorer. Keys hash the scorer identity, the operation and
/// the canonical JSON of its input; with a file attached, new entries are
/// appended as JSONL and reloaded on the next run.
pub struct CachedScorer {
    inner: ScorerHandle,
    memory: RwLock<HashMap<String, serde_json::Value>>,
    file: Mutex<Option<(PathBuf, File)>>,
}

impl CachedScorer {
    pub fn in_memory(inner: ScorerHandle) -> Self {
        Self {
            inner,
            memory: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    pub fn with_file(inner: ScorerHandle, path: &Path) -> Result<Self> {
        let mut memory = HashMap::new();
        if path.exists() {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in raw.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(r) if r.scorer_identity == inner.identity() => {
                        memory.insert(r.key, r.value);
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("{}: skipping cache record: {e}", path.display()),
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            memory: RwLock::new(memory),
            file: Mutex::new(Some((path.to_owned(), file))),
        })
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key<I: Serialize + ?Sized>(&self, op: &str, input: &I) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.inner.identity().as_bytes());
        h.update([0]);
        h.update(op.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(input)?);
        let mut hex = String::with_capacity(64);
        for b in h.finalize().iter() {
            let _ = write!(hex, "{b:02x}");
        }
        Ok(hex)
    }

    fn lookup<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let memory = self.memory.read().expect("cache lock");
        memory.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    fn store<T: Serialize>(&self, key: String, value: &T) -> Result<()> {
        let value = serde_json::to_value(value)?;
        let mut file = self.file.lock().expect("cache file lock");
        if let Some((path, f)) = file.as_mut() {
            let record = CacheRecord {
                key: key.clone(),
                value: value.clone(),
                scorer_identity: self.inner.identity().to_owned(),
            };
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.memory.write().expect("cache lock").insert(key, value);
        Ok(())
    }

    fn memo<I, T>(&self, op: &str, input: &I, compute: impl FnOnce() -> Result<T>) -> Result<T>
    where
        I: Serialize + ?Sized,
        T: Serialize + DeserializeOwned,
    {
        let key = self.key(op, input)?;
        if let Some(hit) = self.lookup(&key) {
            return Ok(hit);
        }
        let value = compute()?;
        self.store(key, &value)?;
        Ok(value)
    }
}

impl Scorer for CachedScorer {
    fn identity(&self) -> &str {
        self.inner.identity()
    }

    fn kind(&self) -> ScorerKind {
        self.inner.kind()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn sequence_logprob(&self, tokens: &[String]) -> Result<SequenceScore> {
        self.memo("sequence_logprob", tokens, || self.inner.sequence_logprob(tokens))
    }

    fn sequence_logprob_batch(&self, batch: &[Vec<String>]) -> Vec<Result<SequenceScore>> {
        let keys: Vec<Result<String>> = batch.iter().map(|t| self.key("sequence_logprob", t)).collect();
        let mut out: Vec<Option<Result<SequenceScore>>> = keys
            .iter()
            .map(|k| k.as_ref().ok().and_then(|k| self.lookup(k)).map(Ok))
            .collect();
        let missing: Vec<usize> = (0..batch.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let todo: Vec<Vec<String>> = missing.iter().map(|&i| batch[i].clone()).collect();
            for (&i, r) in missing.iter().zip(self.inner.sequence_logprob_batch(&todo)) {
                if let (Ok(score), Ok(key)) = (&r, &keys[i]) {
                    if let Err(e) = self.store(key.clone(), score) {
                        log::warn!("score cache write failed: {e}");
                    }
                }
                out[i] = Some(r);
            }
        }
        out.into_iter().map(|r| r.expect("filled")).collect()
    }

    fn masked_logprob(&self, tokens: &[String], targets: &[usize]) -> Result<Vec<f64>> {
        self.memo("masked_logprob", &(tokens, targets), || self.inner.masked_logprob(tokens, targets))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.memo("embed", text, || self.inner.embed(text))
    }

    fn ping(&self) -> Result<()> {
        self.inner.ping()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn model(sentences: &[&str], order: usize, k: f64) -> NGramModel {
        train_ngram(
            &Corpus::from_sentences("t", 0, sentences),
            NGramConfig {
                order,
                smoothing_k: k,
                min_count: 2,
            },
        )
        .unwrap()
    }

    #[test]
    fn bigram_add_k_closed_form() {
        let k = 0.5;
        let m = model(&["a b a b"], 2, k);
        // vocabulary {<unk>, a, b}; "a" is followed by "b" both times
        assert_eq!(m.vocabulary(), ["<unk>", "a", "b"]);
        let expected = (2.0 + k) / (2.0 + k * 3.0);
        assert!((m.prob(&["a"], "b") - expected).abs() < 1e-15);
    }

    #[test]
    fn unigram_is_proportional_to_count_plus_k() {
        let k = 0.5;
        let m = model(&["a b a b a"], 1, k);
        // counts a=3, b=2, <unk>=0, N=5
        let denom = 5.0 + k * 3.0;
        assert!((m.prob(&[], "a") - 3.5 / denom).abs() < 1e-15);
        assert!((m.prob(&["b"], "b") - 2.5 / denom).abs() < 1e-15);
        assert!((m.prob(&[], "zzz") - 0.5 / denom).abs() < 1e-15);
    }

    #[test]
    fn unseen_context_backs_off() {
        let k = 0.5;
        let m = model(&["a b a b c c"], 2, k);
        // "c" as a context was seen (c -> c); unknown tokens map to <unk>, never a context
        let uni_b = (2.0 + k) / (6.0 + k * 4.0);
        assert!((m.prob(&["qqq"], "b") - uni_b).abs() < 1e-15);
    }

    #[test]
    fn distributions_normalize() {
        let m = model(&["the cat sat on the mat", "the dog sat on the log", "a cat and a dog"], 3, 0.5);
        let vocab = m.vocabulary();
        for ctx in m.seen_contexts() {
            let total: f64 = vocab.iter().map(|w| m.prob_after(&ctx, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{ctx:?} sums to {total}");
        }
    }

    #[test]
    fn masked_matches_sequence_decomposition() {
        let m = model(&["the cat sat", "the cat ran", "a dog sat"], 2, 0.5);
        let t = toks("the dog sat");
        let all = m.masked_logprob(&t, &[0, 1, 2]).unwrap();
        let seq = m.sequence_logprob(&t).unwrap();
        assert!((all.iter().sum::<f64>() - seq.total).abs() < 1e-12);
        assert!((seq.mean - seq.total / 3.0).abs() < 1e-15);
        assert!(m.masked_logprob(&t, &[]).unwrap().is_empty());
        assert!(m.masked_logprob(&t, &[3]).is_err());
        assert!(m.sequence_logprob(&[]).is_err());
    }

    #[test]
    fn single_unknown_token_under_unigram() {
        let m = model(&["a a b b"], 1, 1.0);
        let lp = m.sequence_logprob(&toks("zebra")).unwrap().total;
        assert!((lp - (1.0f64 / (4.0 + 3.0)).ln()).abs() < 1e-15);
    }

    #[test]
    fn hashed_embedding_properties() {
        let e = HashedEmbedder::default();
        let a = e.embed_text("a b").unwrap();
        let b = e.embed_text("b a").unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(e.embed_text("").is_err());
    }

    #[test]
    fn cache_is_transparent() {
        let m: ScorerHandle = Arc::new(model(&["the cat sat", "the cat ran"], 2, 0.5));
        let cached = CachedScorer::in_memory(m.clone());
        let t = toks("the cat sat");
        let first = cached.sequence_logprob(&t).unwrap();
        let second = cached.sequence_logprob(&t).unwrap();
        assert_eq!(first, m.sequence_logprob(&t).unwrap());
        assert_eq!(first, second);
        assert_eq!(cached.len(), 1);
        assert_eq!(cached.masked_logprob(&t, &[1]).unwrap(), m.masked_logprob(&t, &[1]).unwrap());
    }

    #[test]
    fn cache_file_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let m: ScorerHandle = Arc::new(model(&["the cat sat", "the cat ran"], 2, 0.5));
        let t = toks("the cat ran");
        let first = {
            let c = CachedScorer::with_file(m.clone(), &path).unwrap();
            c.sequence_logprob_batch(std::slice::from_ref(&t)).remove(0).unwrap()
        };
        let c = CachedScorer::with_file(m, &path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sequence_logprob(&t).unwrap(), first);
    }
}
