//! Pre-model interventions that turn one corpus into another.
//!
//! Every operation returns a new corpus whose provenance ends with the
//! operation's [`InterventionManifest`]; the input is never modified.
//! Stochastic operations take an explicit seed and are pure functions of
//! their inputs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::ProbabilityClassifier;
use crate::checkpoint::Checkpoint;
use crate::client::bounded_map;
use crate::corpus::{chunk_tokens, Corpus, Flags, Sentence};
use crate::error::{Error, Result};
use crate::manifest::{ChunkOutcome, Counts, InterventionManifest};
use crate::text::{self, CasePattern};

/// Which following tokens a context rule applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextToken {
    Any,
    /// A word that is neither a pronoun nor a function word; a cheap noun
    /// proxy.
    ContentWord,
    /// No following word: end of sentence or punctuation.
    End,
    In { words: Vec<String> },
    NotIn { words: Vec<String> },
}

impl NextToken {
    fn matches(&self, next: Option<&str>) -> bool {
        let word = next.filter(|t| text::is_word(t));
        match self {
            NextToken::Any => true,
            NextToken::End => word.is_none(),
            NextToken::ContentWord => word.is_some_and(|w| {
                let w = w.to_lowercase();
                !text::function_words().contains(w.as_str()) && !text::pronouns().contains(w.as_str())
            }),
            NextToken::In { words } => word.is_some_and(|w| words.iter().any(|x| x.eq_ignore_ascii_case(w))),
            NextToken::NotIn { words } => !word.is_some_and(|w| words.iter().any(|x| x.eq_ignore_ascii_case(w))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRule {
    pub term: String,
    pub when_next: NextToken,
    pub replacement: String,
}

/// Bidirectional swap pairs plus ordered context rules for terms that map to
/// more than one counterpart (`her` → `his`/`him`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPairTable {
    pairs: Vec<(String, String)>,
    rules: Vec<ContextRule>,
    forward: HashMap<String, String>,
}

impl WordPairTable {
    pub fn new(pairs: Vec<(String, String)>, rules: Vec<ContextRule>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("word pair table is empty".into()));
        }
        let mut pairs_lower = Vec::with_capacity(pairs.len());
        let mut left = HashSet::new();
        let mut right = HashSet::new();
        for (a, b) in pairs {
            let (a, b) = (a.trim().to_lowercase(), b.trim().to_lowercase());
            if a.is_empty() || b.is_empty() || a.contains(char::is_whitespace) || b.contains(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("pair ({a}, {b}) must be two single tokens")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("pair ({a}, {b}) swaps a term with itself")));
            }
            left.insert(a.clone());
            right.insert(b.clone());
            pairs_lower.push((a, b));
        }
        if let Some(both) = left.intersection(&right).next() {
            return Err(Error::InvalidInput(format!("`{both}` appears on both sides of the table")));
        }
        let mut forward = HashMap::new();
        for (a, b) in &pairs_lower {
            forward.entry(a.clone()).or_insert_with(|| b.clone());
            forward.entry(b.clone()).or_insert_with(|| a.clone());
        }
        let rules: Vec<ContextRule> = rules
            .into_iter()
            .map(|r| ContextRule {
                term: r.term.to_lowercase(),
                replacement: r.replacement.to_lowercase(),
                ..r
            })
            .collect();
        if let Some(r) = rules.iter().find(|r| !forward.contains_key(&r.term)) {
            return Err(Error::InvalidInput(format!("context rule for `{}` names no table term", r.term)));
        }
        Ok(Self {
            pairs: pairs_lower,
            rules,
            forward,
        })
    }

    /// Pronoun, kinship and title pairs with rules for `her` and `his`.
    pub fn default_gender() -> Self {
        let pairs = parse_pairs_csv(include_str!("../data/gender_pairs.csv"), Path::new("gender_pairs.csv"))
            .expect("bundled table parses");
        let rules = serde_json::from_str(include_str!("../data/gender_rules.json")).expect("bundled rules parse");
        Self::new(pairs, rules).expect("bundled table is valid")
    }

    /// Reads `term_a,term_b` CSV and, when given, a JSON array of rules.
    pub fn load(pairs_path: &Path, rules_path: Option<&Path>) -> Result<Self> {
        let raw = fs::read_to_string(pairs_path).map_err(|e| Error::io(pairs_path, e))?;
        let pairs = parse_pairs_csv(&raw, pairs_path)?;
        let rules = match rules_path {
            Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Vec::new(),
        };
        Self::new(pairs, rules)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn contains(&self, token: &str) -> bool {
        self.forward.contains_key(&token.to_lowercase())
    }

    fn counterpart(&self, lower: &str, next: Option<&str>) -> Option<&str> {
        let default = self.forward.get(lower)?;
        let ruled = self
            .rules
            .iter()
            .filter(|r| r.term == lower)
            .find(|r| r.when_next.matches(next))
            .map(|r| r.replacement.as_str());
        Some(ruled.unwrap_or(default))
    }

    /// Swaps every table term in one simultaneous pass, keeping each token's
    /// capitalization pattern. `None` when nothing matched.
    pub fn swap(&self, sentence: &str) -> Option<String> {
        let spans = text::token_spans(sentence);
        let mut out = String::with_capacity(sentence.len() + 8);
        let mut last = 0;
        let mut changed = false;
        for (i, span) in spans.iter().enumerate() {
            let tok = &sentence[span.clone()];
            let next = spans.get(i + 1).map(|r| &sentence[r.clone()]);
            if let Some(rep) = self.counterpart(&tok.to_lowercase(), next) {
                out.push_str(&sentence[last..span.start]);
                out.push_str(&CasePattern::of(tok).apply(rep));
                last = span.end;
                changed = true;
            }
        }
        if !changed {
            return None;
        }
        out.push_str(&sentence[last..]);
        Some(out)
    }
}

fn parse_pairs_csv(raw: &str, source: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(raw.as_bytes());
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: source.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: "expected term_a,term_b".into(),
            });
        }
        if i == 0 && &record[0] == "term_a" {
            continue;
        }
        pairs.push((record[0].to_owned(), record[1].to_owned()));
    }
    Ok(pairs)
}

fn counts(input: usize, output: usize, modified: usize, discarded: usize) -> Counts {
    Counts {
        input_sentences: input,
        output_sentences: output,
        modified,
        discarded,
    }
}

fn copy_with_text(s: &Sentence, text: &str) -> Option<Sentence> {
    Sentence::new(0, s.doc_id(), text)
}

/// Counterfactual augmentation: every sentence containing a table term is
/// followed by its swapped copy.
pub fn cda_augment(corpus: &Corpus, table: &WordPairTable) -> Corpus {
    let mut out = Vec::with_capacity(corpus.len() * 2);
    let mut added = 0usize;
    let mut added_tokens = 0usize;
    for s in corpus.sentences() {
        out.push(s.clone());
        if let Some(swapped) = table.swap(s.text()).and_then(|t| copy_with_text(s, &t)) {
            added_tokens += swapped.tokens().len();
            out.push(swapped);
            added += 1;
        }
    }
    let n = corpus.len();
    let mut m = InterventionManifest::new("cda_augment", serde_json::json!({ "pairs": table.pairs().len() }));
    m.counts = counts(n, n + added, added, 0);
    m.metrics.insert(
        "growth_ratio".into(),
        if n == 0 { 1.0 } else { (n + added) as f64 / n as f64 },
    );
    let tokens = corpus.token_count();
    m.metrics.insert(
        "token_growth_ratio".into(),
        if tokens == 0 { 1.0 } else { (tokens + added_tokens) as f64 / tokens as f64 },
    );
    corpus.derive(out, m)
}

/// Counterfactual substitution: table terms are swapped in place.
pub fn cds_substitute(corpus: &Corpus, table: &WordPairTable) -> Corpus {
    let mut modified = 0usize;
    let out: Vec<Sentence> = corpus
        .sentences()
        .iter()
        .map(|s| match table.swap(s.text()).and_then(|t| copy_with_text(s, &t)) {
            Some(swapped) => {
                modified += 1;
                swapped.with_flags(Flags {
                    sentiment: None,
                    ..Flags::default()
                })
            }
            None => s.clone(),
        })
        .collect();
    let n = corpus.len();
    let mut m = InterventionManifest::new("cds_substitute", serde_json::json!({ "pairs": table.pairs().len() }));
    m.counts = counts(n, n, modified, 0);
    corpus.derive(out, m)
}

/// Appends `n_duplicates` uniformly sampled (with replacement) sentences,
/// each right after its original.
pub fn duplicate_random(corpus: &Corpus, n_duplicates: usize, seed: u64) -> Result<Corpus> {
    if corpus.is_empty() && n_duplicates > 0 {
        return Err(Error::Empty("cannot duplicate sentences of an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0usize; corpus.len()];
    for _ in 0..n_duplicates {
        times[rng.random_range(0..corpus.len())] += 1;
    }
    let mut out = Vec::with_capacity(corpus.len() + n_duplicates);
    for (s, &k) in corpus.sentences().iter().zip(&times) {
        for _ in 0..=k {
            out.push(s.clone());
        }
    }
    let n = corpus.len();
    let mut m = InterventionManifest::new("duplicate_random", serde_json::json!({ "n_duplicates": n_duplicates }));
    m.seed = Some(seed);
    m.counts = counts(n, n + n_duplicates, n_duplicates, 0);
    m.metrics.insert(
        "growth_ratio".into(),
        if n == 0 { 1.0 } else { (n + n_duplicates) as f64 / n as f64 },
    );
    Ok(corpus.derive(out, m))
}

fn require_toxicity_flags(corpus: &Corpus) -> Result<()> {
    if let Some(s) = corpus.sentences().iter().find(|s| !s.flags.has_toxicity()) {
        return Err(Error::InvalidInput(format!(
            "sentence {} has no toxicity annotation; run the audit with toxicity classifiers first",
            s.id()
        )));
    }
    Ok(())
}

/// Drops every sentence flagged toxic or hateful.
pub fn remove_toxic(corpus: &Corpus) -> Result<Corpus> {
    require_toxicity_flags(corpus)?;
    let kept: Vec<Sentence> = corpus.sentences().iter().filter(|s| !s.flags.is_flagged()).cloned().collect();
    let n = corpus.len();
    let removed = n - kept.len();
    if kept.is_empty() && n > 0 {
        log::warn!("every sentence was flagged; output corpus is empty");
    }
    let mut m = InterventionManifest::new("remove_toxic", serde_json::Value::Null);
    m.counts = counts(n, kept.len(), 0, removed);
    m.metrics.insert(
        "removed_pct".into(),
        if n == 0 { 0.0 } else { 100.0 * removed as f64 / n as f64 },
    );
    Ok(corpus.derive(kept, m))
}

/// Removal ablation: drops `n_remove` uniformly sampled unflagged sentences.
pub fn remove_random(corpus: &Corpus, n_remove: usize, seed: u64) -> Result<Corpus> {
    require_toxicity_flags(corpus)?;
    let clean: Vec<usize> = (0..corpus.len()).filter(|&i| !corpus.sentences()[i].flags.is_flagged()).collect();
    if n_remove > clean.len() {
        return Err(Error::InvalidInput(format!(
            "cannot remove {n_remove} sentences; only {} are unflagged",
            clean.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop: HashSet<usize> = rand::seq::index::sample(&mut rng, clean.len(), n_remove)
        .into_iter()
        .map(|j| clean[j])
        .collect();
    let kept: Vec<Sentence> = corpus
        .sentences()
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    let n = corpus.len();
    let mut m = InterventionManifest::new("remove_random", serde_json::json!({ "n_remove": n_remove }));
    m.seed = Some(seed);
    m.counts = counts(n, kept.len(), 0, n_remove);
    m.metrics.insert(
        "removed_pct".into(),
        if n == 0 { 0.0 } else { 100.0 * n_remove as f64 / n as f64 },
    );
    Ok(corpus.derive(kept, m))
}

pub trait Rewriter: Send + Sync {
    fn rewrite(&self, prompt: &str, sentence: &str) -> Result<String>;
}

pub const DEFAULT_DETOX_PROMPT: &str = include_str!("../data/detox_prompt.txt");

#[derive(Debug, Clone)]
pub struct DetoxOptions {
    /// Instruction text; `{sentence}` is replaced by the sentence.
    pub prompt_template: String,
    pub max_attempts: usize,
    pub threshold: f64,
    pub concurrency: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for DetoxOptions {
    fn default() -> Self {
        Self {
            prompt_template: DEFAULT_DETOX_PROMPT.to_owned(),
            max_attempts: 3,
            threshold: 0.5,
            concurrency: 4,
            checkpoint: None,
        }
    }
}

fn detox_one(
    sentence: &str,
    rewriter: &dyn Rewriter,
    classifier: &dyn ProbabilityClassifier,
    opts: &DetoxOptions,
) -> Result<Option<String>> {
    let mut current = sentence.to_owned();
    for _ in 0..opts.max_attempts {
        let prompt = opts.prompt_template.replace("{sentence}", &current);
        let candidate = text::normalize_whitespace(&rewriter.rewrite(&prompt, &current)?);
        if candidate.is_empty() {
            continue;
        }
        let p = classifier.scores(&[candidate.as_str()])?;
        if p.first().is_some_and(|&p| p < opts.threshold) {
            return Ok(Some(candidate));
        }
        current = candidate;
    }
    Ok(None)
}

/// Rewrites every flagged sentence until the toxicity classifier accepts it,
/// feeding each rejected attempt back to the rewriter, and discards sentences
/// still toxic after `max_attempts`. Accepted rewrites are re-segmented and
/// marked clean; unflagged sentences pass through untouched.
pub fn detox_rewrite(
    corpus: &Corpus,
    rewriter: &dyn Rewriter,
    classifier: &dyn ProbabilityClassifier,
    opts: &DetoxOptions,
) -> Result<Corpus> {
    require_toxicity_flags(corpus)?;
    let ck: Mutex<Checkpoint<Option<String>>> = Mutex::new(Checkpoint::open_or_ephemeral(opts.checkpoint.as_deref())?);
    let flagged: Vec<&Sentence> = corpus.sentences().iter().filter(|s| s.flags.is_flagged()).collect();
    let wave = opts.concurrency.max(1) * 4;
    for group in flagged.chunks(wave) {
        let todo: Vec<&Sentence> = {
            let ck = ck.lock().expect("checkpoint lock");
            group.iter().copied().filter(|s| ck.get(s.id()).is_none()).collect()
        };
        let results = bounded_map(&todo, opts.concurrency, |s| detox_one(s.text(), rewriter, classifier, opts));
        let mut ck = ck.lock().expect("checkpoint lock");
        for (s, r) in todo.iter().zip(results) {
            match r {
                Ok(v) => ck.record(s.id(), v)?,
                Err(e) => return Err(ck.abort(e)),
            }
        }
    }

    let ck = ck.into_inner().expect("checkpoint lock");
    let clean = Flags {
        toxic: Some(false),
        hate: Some(false),
        sentiment: None,
    };
    let mut out = Vec::with_capacity(corpus.len());
    let (mut rewritten, mut discarded) = (0usize, 0usize);
    for s in corpus.sentences() {
        if !s.flags.is_flagged() {
            out.push(s.clone());
            continue;
        }
        match ck.get(s.id()).expect("every flagged sentence processed") {
            Some(new_text) => {
                rewritten += 1;
                out.extend(
                    text::split_sentences(new_text)
                        .iter()
                        .filter_map(|t| Sentence::new(0, s.doc_id(), t))
                        .map(|x| x.with_flags(clean)),
                );
            }
            None => discarded += 1,
        }
    }
    let n = corpus.len();
    let mut m = InterventionManifest::new(
        "detox_rewrite",
        serde_json::json!({ "max_attempts": opts.max_attempts, "threshold": opts.threshold }),
    );
    m.counts = counts(n, out.len(), rewritten, discarded);
    m.metrics.insert(
        "discard_pct".into(),
        if n == 0 { 0.0 } else { 100.0 * discarded as f64 / n as f64 },
    );
    Ok(corpus.derive(out, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbCategory {
    Gender,
    Race,
}

impl PerturbCategory {
    pub const ALL: [PerturbCategory; 2] = [PerturbCategory::Gender, PerturbCategory::Race];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbCategory::Gender => "gender",
            PerturbCategory::Race => "race",
        }
    }

    pub fn subcategories(self) -> &'static [&'static str] {
        match self {
            PerturbCategory::Gender => &["man", "woman", "non-binary"],
            PerturbCategory::Race => &["White", "Black", "Asian", "Hispanic", "Native-American", "Pacific-Islander"],
        }
    }
}

/// Words that may be perturbed, each with the categories it is eligible for.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetWords(pub BTreeMap<String, Vec<PerturbCategory>>);

impl TargetWords {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: TargetWords = serde_json::from_str(&raw)?;
        Ok(TargetWords(
            parsed
                .0
                .into_iter()
                .filter(|(_, cats)| !cats.is_empty())
                .map(|(w, cats)| (w.to_lowercase(), cats))
                .collect(),
        ))
    }

    pub fn insert(&mut self, word: &str, categories: &[PerturbCategory]) {
        self.0.insert(word.to_lowercase(), categories.to_vec());
    }
}

/// Body of `POST /perturb`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbRequest {
    pub chunk: String,
    pub target_word: String,
    pub category: String,
    pub subcategory: String,
}

pub trait Perturber: Send + Sync {
    fn perturb(&self, request: &PerturbRequest) -> Result<String>;
}

#[derive(Debug, Clone)]
pub struct PerturbOptions {
    pub chunk_len: usize,
    pub seed: u64,
    pub concurrency: usize,
    pub checkpoint: Option<PathBuf>,
}

impl PerturbOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            chunk_len: 128,
            seed,
            concurrency: 4,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChunkResult {
    attempts: usize,
    changed: Option<(String, String)>,
    text: String,
}

fn perturb_chunk(
    index: usize,
    tokens: &[String],
    perturber: &dyn Perturber,
    targets: &TargetWords,
    seed: u64,
) -> Result<ChunkResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let original = text::detokenize(tokens);
    let mut seen = HashSet::new();
    let mut found: Vec<(String, &Vec<PerturbCategory>)> = Vec::new();
    for t in tokens {
        let lower = t.to_lowercase();
        if let Some(cats) = targets.0.get(&lower) {
            if seen.insert(lower.clone()) {
                found.push((lower, cats));
            }
        }
    }
    found.shuffle(&mut rng);
    let mut attempts = 0;
    for (word, cats) in found {
        let category = *cats.choose(&mut rng).expect("target categories are non-empty");
        let sub = *category.subcategories().choose(&mut rng).expect("subcategories are non-empty");
        attempts += 1;
        let out = perturber.perturb(&PerturbRequest {
            chunk: original.clone(),
            target_word: word,
            category: category.as_str().to_owned(),
            subcategory: sub.to_owned(),
        })?;
        let out = text::normalize_whitespace(&out);
        if !out.is_empty() && out != text::normalize_whitespace(&original) {
            return Ok(ChunkResult {
                attempts,
                changed: Some((category.as_str().to_owned(), sub.to_owned())),
                text: out,
            });
        }
    }
    Ok(ChunkResult {
        attempts,
        changed: None,
        text: original,
    })
}

/// Perturbation augmentation over fixed-length token chunks.
///
/// For every chunk the target words it contains are visited in a seeded
/// random order; each is sent with a random eligible category and
/// subcategory until the perturber returns a different chunk or the words run
/// out. Documents with at least one changed chunk are rebuilt from their
/// chunk texts and re-segmented; other documents are kept byte-identical.
pub fn perturb_corpus(
    corpus: &Corpus,
    perturber: &dyn Perturber,
    targets: &TargetWords,
    opts: &PerturbOptions,
) -> Result<Corpus> {
    let chunks = chunk_tokens(corpus, opts.chunk_len)?;
    let mut ck: Checkpoint<ChunkResult> = Checkpoint::open_or_ephemeral(opts.checkpoint.as_deref())?;
    let indexed: Vec<(usize, &crate::corpus::Chunk)> = chunks.iter().enumerate().collect();
    let wave = opts.concurrency.max(1) * 4;
    for group in indexed.chunks(wave) {
        let todo: Vec<&(usize, &crate::corpus::Chunk)> = group.iter().filter(|(i, _)| ck.get(*i as u64).is_none()).collect();
        let results = bounded_map(&todo, opts.concurrency, |(i, c)| {
            perturb_chunk(*i, &c.tokens, perturber, targets, opts.seed)
        });
        for ((i, _), r) in todo.iter().zip(results) {
            match r {
                Ok(v) => ck.record(*i as u64, v)?,
                Err(e) => return Err(ck.abort(e)),
            }
        }
    }

    let results: Vec<&ChunkResult> = (0..chunks.len()).map(|i| ck.get(i as u64).expect("every chunk processed")).collect();
    let mut by_doc: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in chunks.iter().enumerate() {
        by_doc.entry(c.doc_id).or_default().push(i);
    }

    let mut out = Vec::with_capacity(corpus.len());
    let mut modified = 0usize;
    for doc in corpus.documents() {
        let idx = by_doc.get(&doc[0].doc_id()).map(Vec::as_slice).unwrap_or(&[]);
        if idx.iter().all(|&i| results[i].changed.is_none()) {
            out.extend(doc.iter().cloned());
            continue;
        }
        let joined = idx.iter().map(|&i| results[i].text.as_str()).collect::<Vec<_>>().join(" ");
        let rebuilt: Vec<Sentence> = text::split_sentences(&joined)
            .iter()
            .filter_map(|t| Sentence::new(0, doc[0].doc_id(), t))
            .collect();
        modified += rebuilt.len();
        out.extend(rebuilt);
    }

    let n = corpus.len();
    let mut m = InterventionManifest::new("perturb_corpus", serde_json::json!({ "chunk_len": opts.chunk_len, "targets": targets.0.len() }));
    m.seed = Some(opts.seed);
    m.counts = counts(n, out.len(), modified, 0);
    m.chunks = chunks
        .iter()
        .zip(&results)
        .map(|(c, r)| ChunkOutcome {
            doc_id: c.doc_id,
            start: c.start,
            attempts: r.attempts,
            changed: r.changed.clone(),
        })
        .collect();
    Ok(corpus.derive(out, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub pct: f64,
    pub subcategories: BTreeMap<String, f64>,
}

/// Share of chunks changed, overall and per (sub)category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTable {
    pub chunks: usize,
    pub any_change_pct: f64,
    pub no_change_pct: f64,
    pub categories: BTreeMap<String, CategoryShare>,
}

pub fn perturbation_stats(manifest: &InterventionManifest) -> PerturbationTable {
    let total = manifest.chunks.len();
    let pct = |c: usize| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
    let mut categories = BTreeMap::new();
    for cat in PerturbCategory::ALL {
        let mut subs = BTreeMap::new();
        let mut cat_count = 0usize;
        for sub in cat.subcategories() {
            let c = manifest
                .chunks
                .iter()
                .filter(|o| o.changed.as_ref().is_some_and(|(k, s)| k == cat.as_str() && s == sub))
                .count();
            cat_count += c;
            subs.insert((*sub).to_owned(), pct(c));
        }
        categories.insert(
            cat.as_str().to_owned(),
            CategoryShare {
                pct: pct(cat_count),
                subcategories: subs,
            },
        );
    }
    let changed = manifest.chunks.iter().filter(|o| o.changed.is_some()).count();
    PerturbationTable {
        chunks: total,
        any_change_pct: pct(changed),
        no_change_pct: if total == 0 { 0.0 } else { pct(total - changed) },
        categories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(c: &Corpus) -> Vec<&str> {
        c.sentences().iter().map(Sentence::text).collect()
    }

    fn simple_table() -> WordPairTable {
        WordPairTable::new(
            vec![("he".into(), "she".into()), ("man".into(), "woman".into())],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn cda_single_pair() {
        let corpus = Corpus::from_sentences("c", 0, &["He left.", "The cat sat."]);
        let out = cda_augment(&corpus, &simple_table());
        assert_eq!(texts(&out), ["He left.", "She left.", "The cat sat."]);
        let m = out.provenance.last().unwrap();
        assert_eq!(m.operation, "cda_augment");
        assert!((m.metric("growth_ratio").unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn cda_context_rule_for_her() {
        let table = WordPairTable::default_gender();
        let corpus = Corpus::from_sentences("c", 0, &["He told her."]);
        assert_eq!(texts(&cda_augment(&corpus, &table)), ["He told her.", "She told him."]);
        assert_eq!(table.swap("She took her book.").unwrap(), "He took his book.");
        assert_eq!(table.swap("The book is his.").unwrap(), "The book is hers.");
        assert_eq!(table.swap("HE and his dad").unwrap(), "SHE and her mom");
    }

    #[test]
    fn cda_without_matches_is_identity() {
        let corpus = Corpus::from_sentences("c", 0, &["The cat sat.", "It rained."]);
        let out = cda_augment(&corpus, &simple_table());
        assert_eq!(texts(&out), texts(&corpus));
        assert_eq!(out.provenance.last().unwrap().metric("growth_ratio"), Some(1.0));
    }

    #[test]
    fn cds_is_an_involution_for_symmetric_tables() {
        let corpus = Corpus::from_sentences("c", 0, &["He is a nurse.", "The Man and the woman.", "Nothing here."]);
        let once = cds_substitute(&corpus, &simple_table());
        assert_eq!(texts(&once)[0], "She is a nurse.");
        assert_eq!(once.len(), corpus.len());
        assert_eq!(once.provenance.last().unwrap().counts.modified, 2);
        let twice = cds_substitute(&once, &simple_table());
        assert_eq!(texts(&twice), texts(&corpus));
    }

    #[test]
    fn table_validation() {
        assert!(WordPairTable::new(vec![], vec![]).is_err());
        assert!(WordPairTable::new(vec![("he".into(), "she".into()), ("she".into(), "it".into())], vec![]).is_err());
        let bad_rule = ContextRule {
            term: "zz".into(),
            when_next: NextToken::Any,
            replacement: "y".into(),
        };
        assert!(WordPairTable::new(vec![("he".into(), "she".into())], vec![bad_rule]).is_err());
    }

    #[test]
    fn duplication_is_seeded() {
        let corpus = Corpus::from_sentences("c", 0, &["a.", "b.", "c.", "d."]);
        let a = duplicate_random(&corpus, 3, 7).unwrap();
        let b = duplicate_random(&corpus, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        assert_eq!(texts(&duplicate_random(&corpus, 0, 7).unwrap()), texts(&corpus));
        assert!(duplicate_random(&Corpus::new("e"), 1, 7).is_err());
    }

    fn flagged(flags: &[bool]) -> Corpus {
        let texts: Vec<String> = (0..flags.len()).map(|i| format!("Sentence {i}.")).collect();
        let c = Corpus::from_sentences("c", 0, &texts);
        let sentences = c
            .sentences()
            .iter()
            .zip(flags)
            .map(|(s, &f)| {
                s.clone().with_flags(Flags {
                    toxic: Some(f),
                    hate: Some(false),
                    sentiment: None,
                })
            })
            .collect();
        c.derive(sentences, InterventionManifest::new("flag", serde_json::Value::Null))
    }

    #[test]
    fn remove_toxic_requires_flags() {
        let plain = Corpus::from_sentences("c", 0, &["a."]);
        let err = remove_toxic(&plain).unwrap_err().to_string();
        assert!(err.contains("audit"), "{err}");
    }

    #[test]
    fn remove_toxic_boundaries() {
        let none = flagged(&[false, false]);
        assert_eq!(texts(&remove_toxic(&none).unwrap()), texts(&none));
        let all = flagged(&[true, true]);
        assert!(remove_toxic(&all).unwrap().is_empty());
        let some = flagged(&[false, true, false]);
        let once = remove_toxic(&some).unwrap();
        assert_eq!(texts(&once), ["Sentence 0.", "Sentence 2."]);
        assert_eq!(texts(&remove_toxic(&once).unwrap()), texts(&once));
    }

    #[test]
    fn remove_random_spares_flagged() {
        let c = flagged(&[false, true, false, false, true]);
        let out = remove_random(&c, 2, 3).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.sentences().iter().filter(|s| s.flags.is_flagged()).count(), 2);
        assert_eq!(out, remove_random(&c, 2, 3).unwrap());
        assert!(remove_random(&c, 4, 3).is_err());
        assert_eq!(texts(&remove_random(&c, 0, 3).unwrap()), texts(&c));
    }

    struct Echo;
    impl Rewriter for Echo {
        fn rewrite(&self, _: &str, sentence: &str) -> Result<String> {
            Ok(sentence.to_owned())
        }
    }
    impl Perturber for Echo {
        fn perturb(&self, r: &PerturbRequest) -> Result<String> {
            Ok(r.chunk.clone())
        }
    }

    #[test]
    fn identity_rewriter_discards_flagged() {
        let c = flagged(&[false, true, false]);
        let tox = crate::audit::LexiconToxicity::new(["1".to_owned()].into_iter().collect());
        let out = detox_rewrite(&c, &Echo, &tox, &DetoxOptions::default()).unwrap();
        assert_eq!(texts(&out), ["Sentence 0.", "Sentence 2."]);
        assert_eq!(out.provenance.last().unwrap().counts.discarded, 1);
    }

    #[test]
    fn echo_perturber_exhausts_targets() {
        let corpus = Corpus::from_sentences("c", 0, &["The man and the woman walked home."]);
        let mut targets = TargetWords::default();
        targets.insert("man", &[PerturbCategory::Gender]);
        targets.insert("woman", &[PerturbCategory::Gender, PerturbCategory::Race]);
        let out = perturb_corpus(&corpus, &Echo, &targets, &PerturbOptions::new(1)).unwrap();
        assert_eq!(texts(&out), texts(&corpus));
        let m = out.provenance.last().unwrap();
        assert_eq!(m.chunks.len(), 1);
        assert_eq!(m.chunks[0].attempts, 2);
        let table = perturbation_stats(m);
        assert_eq!(table.any_change_pct, 0.0);
        assert_eq!(table.no_change_pct, 100.0);
    }

    #[test]
    fn empty_manifest_stats_are_zero() {
        let t = perturbation_stats(&InterventionManifest::new("perturb_corpus", serde_json::Value::Null));
        assert_eq!(t.any_change_pct, 0.0);
        assert!(t.categories.values().all(|c| c.pct == 0.0 && c.subcategories.values().all(|v| *v == 0.0)));
    }

    #[test]
    fn synthetic_manifest_stats() {
        let mut m = InterventionManifest::new("perturb_corpus", serde_json::Value::Null);
        for i in 0..100 {
            let changed = match i {
                0..=49 => Some(("gender".to_owned(), ["man", "woman"][i % 2].to_owned())),
                50..=59 => Some(("race".to_owned(), "Asian".to_owned())),
                _ => None,
            };
            m.chunks.push(ChunkOutcome { doc_id: 0, start: i * 128, attempts: 1, changed });
        }
        let t = perturbation_stats(&m);
        assert_eq!(t.categories["gender"].pct, 50.0);
        assert_eq!(t.categories["gender"].subcategories["man"], 25.0);
        assert_eq!(t.categories["race"].pct, 10.0);
        assert_eq!(t.any_change_pct, 60.0);
    }
}
