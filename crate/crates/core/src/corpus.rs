//! Corpus loading, segmentation, chunking and persistence.
//!
//! Two on-disk formats are supported:
//!
//! * `plaintext`: UTF-8, one sentence per line, a blank line between
//!   documents. Each line is segmented on its own, so a line holding several
//!   sentences is split on load.
//! * `jsonl`: one object per line with a required `"text"` field and optional
//!   `"doc_id"` and `"flags"` fields. Records sharing a `doc_id` belong to the
//!   same document; without one, every record is its own document.
//!
//! Provenance travels in a sidecar `<stem>.manifest.json`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Counts, InterventionManifest};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Pos,
    Neu,
    Neg,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toxic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
}

impl Flags {
    pub fn is_empty(&self) -> bool {
        *self == Flags::default()
    }

    /// Toxicity annotations are present on this sentence.
    pub fn has_toxicity(&self) -> bool {
        self.toxic.is_some() && self.hate.is_some()
    }

    pub fn is_flagged(&self) -> bool {
        self.toxic == Some(true) || self.hate == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    id: u64,
    doc_id: u64,
    text: String,
    tokens: Vec<String>,
    lower: Vec<String>,
    pub flags: Flags,
}

impl Sentence {
    /// Builds a sentence from raw text, normalizing whitespace and
    /// tokenizing. Returns `None` for text that is empty after normalization.
    pub fn new(id: u64, doc_id: u64, text: &str) -> Option<Self> {
        let text = text::normalize_whitespace(text);
        if text.is_empty() {
            return None;
        }
        let tokens = text::tokenize(&text);
        let lower = tokens.iter().map(|t| t.to_lowercase()).collect();
        Some(Self {
            id,
            doc_id,
            text,
            tokens,
            lower,
            flags: Flags::default(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn doc_id(&self) -> u64 {
        self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lower_tokens(&self) -> &[String] {
        &self.lower
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags = flags;
        self
    }
}

/// Segments raw text into sentences of a single document (doc id 0).
pub fn segment_and_tokenize(raw_text: &str) -> Vec<Sentence> {
    text::split_sentences(raw_text)
        .iter()
        .enumerate()
        .filter_map(|(i, s)| Sentence::new(i as u64, 0, s))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub name: String,
    sentences: Vec<Sentence>,
    pub provenance: Vec<InterventionManifest>,
}

impl Corpus {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    /// Builds a corpus from `(doc_id, text)` pairs, segmenting each text.
    pub fn from_documents<'a, I>(name: impl Into<String>, docs: I) -> Self
    where
        I: IntoIterator<Item = (u64, &'a str)>,
    {
        let mut corpus = Self::new(name);
        for (doc, raw) in docs {
            for s in text::split_sentences(raw) {
                corpus.push(doc, &s);
            }
        }
        corpus
    }

    /// Every string becomes one sentence of document `doc_id`, unsegmented.
    pub fn from_sentences<S: AsRef<str>>(name: impl Into<String>, doc_id: u64, sentences: &[S]) -> Self {
        let mut corpus = Self::new(name);
        for s in sentences {
            corpus.push(doc_id, s.as_ref());
        }
        corpus
    }

    /// Appends one sentence, assigning the next id. Blank text is ignored.
    pub fn push(&mut self, doc_id: u64, text: &str) -> Option<&mut Sentence> {
        let id = self.sentences.last().map_or(0, |s| s.id + 1);
        let sentence = Sentence::new(id, doc_id, text)?;
        self.sentences.push(sentence);
        self.sentences.last_mut()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// New corpus holding `sentences` (renumbered in order) with `entry`
    /// appended to this corpus's provenance.
    pub fn derive(&self, sentences: Vec<Sentence>, entry: InterventionManifest) -> Corpus {
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.id = i as u64;
                s
            })
            .collect();
        let mut provenance = self.provenance.clone();
        provenance.push(entry);
        Corpus {
            name: self.name.clone(),
            sentences,
            provenance,
        }
    }

    /// Consecutive runs of sentences sharing a document id.
    pub fn documents(&self) -> impl Iterator<Item = &[Sentence]> {
        self.sentences.chunk_by(|a, b| a.doc_id == b.doc_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Plaintext,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plaintext" | "txt" | "text" => Ok(Format::Plaintext),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidInput(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Plaintext => "plaintext",
            Format::Jsonl => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => Format::Jsonl,
            _ => Format::Plaintext,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Flags::is_empty")]
    flags: Flags,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    name: String,
    provenance: Vec<InterventionManifest>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = String::from_utf8(bytes).map_err(|_| Error::Utf8 {
        path: path.to_owned(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let mut corpus = Corpus::new(name);

    match format {
        Format::Plaintext => {
            let mut doc = 0u64;
            let mut doc_has_text = false;
            for line in raw.lines() {
                if line.trim().is_empty() {
                    if doc_has_text {
                        doc += 1;
                        doc_has_text = false;
                    }
                    continue;
                }
                for s in text::split_sentences(line) {
                    corpus.push(doc, &s);
                    doc_has_text = true;
                }
            }
        }
        Format::Jsonl => {
            let mut record_no = 0u64;
            for (lineno, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: JsonRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
                let doc = record.doc_id.unwrap_or(record_no);
                record_no += 1;
                for s in text::split_sentences(&record.text) {
                    if let Some(sentence) = corpus.push(doc, &s) {
                        sentence.flags = record.flags;
                    }
                }
            }
        }
    }

    if corpus.is_empty() {
        log::warn!("{}: corpus is empty", path.display());
    }

    let sidecar = manifest_path(path);
    if sidecar.exists() {
        let raw = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let parsed: Sidecar = serde_json::from_str(&raw)?;
        corpus.provenance = parsed.provenance;
    }
    let mut entry = InterventionManifest::new(
        "load",
        serde_json::json!({ "path": path.display().to_string(), "format": format.as_str() }),
    );
    entry.counts = Counts {
        input_sentences: 0,
        output_sentences: corpus.len(),
        modified: 0,
        discarded: 0,
    };
    corpus.provenance.push(entry);
    Ok(corpus)
}

/// Writes the corpus and its provenance sidecar.
pub fn write_corpus(corpus: &Corpus, path: &Path, format: Format) -> Result<()> {
    let mut out = String::new();
    match format {
        Format::Plaintext => {
            for (i, doc) in corpus.documents().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                for s in doc {
                    out.push_str(&s.text);
                    out.push('\n');
                }
            }
        }
        Format::Jsonl => {
            for s in &corpus.sentences {
                let record = JsonRecord {
                    text: s.text.clone(),
                    doc_id: Some(s.doc_id),
                    flags: s.flags,
                };
                out.push_str(&serde_json::to_string(&record)?);
                out.push('\n');
            }
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let sidecar = manifest_path(path);
    let body = serde_json::to_string_pretty(&Sidecar {
        name: corpus.name.clone(),
        provenance: corpus.provenance.clone(),
    })?;
    fs::write(&sidecar, body + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}

/// A window of at most `n` consecutive tokens from one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub tokens: Vec<String>,
    pub doc_id: u64,
    /// Index of the first token within its document.
    pub start: usize,
}

/// Tiles every document with non-overlapping windows of `n` tokens; only the
/// last window of a document may be shorter.
pub fn chunk_tokens(corpus: &Corpus, n: usize) -> Result<Vec<Chunk>> {
    if n == 0 {
        return Err(Error::InvalidInput("chunk length must be at least 1".into()));
    }
    let mut chunks = Vec::new();
    for doc in corpus.documents() {
        let tokens: Vec<&String> = doc.iter().flat_map(|s| s.tokens.iter()).collect();
        for (i, window) in tokens.chunks(n).enumerate() {
            chunks.push(Chunk {
                tokens: window.iter().map(|t| (*t).clone()).collect(),
                doc_id: doc[0].doc_id,
                start: i * n,
            });
        }
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub sentences: usize,
    pub tokens: usize,
    pub documents: usize,
    pub unique_tokens: usize,
}

impl CorpusSummary {
    /// Token-count ratio of `self` over `base`.
    pub fn token_ratio(&self, base: &CorpusSummary) -> f64 {
        self.tokens as f64 / base.tokens as f64
    }
}

pub fn corpus_summary(corpus: &Corpus) -> CorpusSummary {
    let unique: HashSet<&str> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.lower.iter().map(String::as_str))
        .collect();
    let docs: HashSet<u64> = corpus.sentences.iter().map(|s| s.doc_id).collect();
    CorpusSummary {
        sentences: corpus.len(),
        tokens: corpus.token_count(),
        documents: docs.len(),
        unique_tokens: unique.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        let s = segment_and_tokenize("Dr. Smith left. She ran.");
        assert_eq!(s.len(), 2);
        let s = segment_and_tokenize("hello");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens(), ["hello"]);
        assert_eq!(segment_and_tokenize("A! B? C.").len(), 3);
        assert!(segment_and_tokenize("   ").is_empty());
    }

    #[test]
    fn tokens_are_whitespace_split_of_normalized_text() {
        let s = Sentence::new(0, 0, "  Hello,   world!  ").unwrap();
        assert_eq!(s.text(), "Hello, world!");
        assert_eq!(s.tokens(), ["Hello", ",", "world", "!"]);
        assert_eq!(s.lower_tokens(), ["hello", ",", "world", "!"]);
    }

    #[test]
    fn chunking_tiles_documents() {
        let words: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let corpus = Corpus::from_sentences("c", 0, &[words.join(" ")]);
        let lens: Vec<usize> = chunk_tokens(&corpus, 128).unwrap().iter().map(|c| c.tokens.len()).collect();
        assert_eq!(lens, [128, 128, 44]);

        let short: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let corpus = Corpus::from_sentences("c", 0, &[short.join(" ")]);
        assert_eq!(chunk_tokens(&corpus, 128).unwrap().len(), 1);

        assert!(chunk_tokens(&Corpus::new("e"), 128).unwrap().is_empty());
        assert!(chunk_tokens(&corpus, 0).is_err());
    }

    #[test]
    fn chunks_do_not_cross_documents() {
        let corpus = Corpus::from_documents("c", [(0, "a b c."), (1, "d e.")]);
        let chunks = chunk_tokens(&corpus, 3).unwrap();
        let shape: Vec<(u64, usize, usize)> = chunks.iter().map(|c| (c.doc_id, c.start, c.tokens.len())).collect();
        assert_eq!(shape, [(0, 0, 3), (0, 3, 1), (1, 0, 3)]);
    }

    #[test]
    fn summary_counts() {
        let corpus = Corpus::from_sentences("c", 0, &["a b", "a"]);
        assert_eq!(
            corpus_summary(&corpus),
            CorpusSummary {
                sentences: 2,
                tokens: 3,
                documents: 1,
                unique_tokens: 2
            }
        );
        assert_eq!(corpus_summary(&Corpus::new("e")), CorpusSummary::default());
    }

    #[test]
    fn derive_renumbers_and_records() {
        let corpus = Corpus::from_sentences("c", 0, &["a.", "b.", "c."]);
        let kept = vec![corpus.sentences()[2].clone(), corpus.sentences()[0].clone()];
        let out = corpus.derive(kept, InterventionManifest::new("reverse", serde_json::Value::Null));
        let ids: Vec<u64> = out.sentences().iter().map(Sentence::id).collect();
        assert_eq!(ids, [0, 1]);
        assert_eq!(out.provenance.last().unwrap().operation, "reverse");
    }
}
