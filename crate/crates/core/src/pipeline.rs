//! Declarative run configurations and the pipeline runners behind the CLI.
//!
//! A run config is one JSON file with shared settings and one section per
//! pipeline. Relative paths are resolved against the config file's
//! directory. Reports are written with sorted keys and no timestamps so that
//! identical runs produce identical files; wall-clock details go to a
//! `<report>.meta.json` sidecar.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::{self, ShiftRecord};
use crate::audit::{self, AuditReport, LexiconSentiment, LexiconToxicity, ProbabilityClassifier, SentimentClassifier};
use crate::bench::{self, BenchReport, BenchSuite, CompositeScores, TrajectorySeries};
use crate::client::{HttpConfig, RemoteClassifier, RemotePerturber, RemoteRewriter};
use crate::corpus::{self, Format};
use crate::error::{Error, Result};
use crate::intervene::{self, DetoxOptions, PerturbOptions, TargetWords, WordPairTable};
use crate::lexicon::{EmotionLexicon, Lexicon};
use crate::projection::{self, EmbeddingMatrix, InlpConfig, SubspaceSize};
use crate::scorer::{
    self, CachedScorer, Capabilities, Embedder, HashedEmbedder, NGramConfig, RemoteScorer, Scorer, ScorerHandle,
    SequenceScore,
};

pub const ENV_SCORER: &str = "CORPUSBIAS_SCORER_ENDPOINT";
pub const ENV_CLASSIFIER: &str = "CORPUSBIAS_CLASSIFIER_ENDPOINT";
pub const ENV_REWRITER: &str = "CORPUSBIAS_REWRITER_ENDPOINT";
pub const ENV_PERTURBER: &str = "CORPUSBIAS_PERTURBER_ENDPOINT";
pub const ENV_CACHE_DIR: &str = "CORPUSBIAS_CACHE_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_EXTERNAL: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_external() {
        EXIT_EXTERNAL
    } else {
        EXIT_VALIDATION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Audit,
    Intervene,
    Bench,
    Debias,
    Analyze,
    Sweep,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Audit => "audit",
            Pipeline::Intervene => "intervene",
            Pipeline::Bench => "bench",
            Pipeline::Debias => "debias",
            Pipeline::Analyze => "analyze",
            Pipeline::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("pipeline", format!("unknown pipeline `{s}`")))
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub pipeline: Option<Pipeline>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(default)]
    pub intervene: Option<IntervenConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub debias: Option<DebiasConfig>,
    #[serde(default)]
    pub analyze: Option<AnalyzeConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Where a classifier comes from: the bundled word lists or a remote
/// `/classify` service.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierSpec {
    Lexicon,
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Trains the built-in n-gram model on a corpus file.
    Ngram {
        corpus: PathBuf,
        #[serde(default)]
        format: Option<String>,
        #[serde(default)]
        order: Option<usize>,
        #[serde(default)]
        smoothing_k: Option<f64>,
        #[serde(default)]
        min_count: Option<u64>,
    },
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        timeout_secs: Option<f64>,
        #[serde(default)]
        retries: Option<u32>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderSpec {
    Hashed {
        #[serde(default)]
        dim: Option<usize>,
    },
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hashed { dim: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub format: Option<String>,
    /// Category → subcategory → terms, as JSON.
    pub lexicon: Option<PathBuf>,
    /// Topic lexicon for stance; defaults to `lexicon`.
    #[serde(default)]
    pub topics: Option<PathBuf>,
    #[serde(default)]
    pub emotion_lexicon: Option<PathBuf>,
    #[serde(default)]
    pub sentiment: Option<ClassifierSpec>,
    #[serde(default)]
    pub toxicity: Option<ClassifierSpec>,
    #[serde(default)]
    pub hate: Option<ClassifierSpec>,
    #[serde(default)]
    pub toxicity_threshold: Option<f64>,
    #[serde(default)]
    pub coherence: Option<EmbedderSpec>,
    /// Where to write the corpus with sentiment/toxicity flags.
    #[serde(default)]
    pub annotated_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Cda,
    Cds,
    DuplicateRandom,
    RemoveToxic,
    RemoveRandom,
    Detox,
    Perturb,
}

impl Operation {
    fn name(self) -> &'static str {
        match self {
            Operation::Cda => "cda",
            Operation::Cds => "cds",
            Operation::DuplicateRandom => "duplicate_random",
            Operation::RemoveToxic => "remove_toxic",
            Operation::RemoveRandom => "remove_random",
            Operation::Detox => "detox",
            Operation::Perturb => "perturb",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervenConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub format: Option<String>,
    pub operation: Operation,
    /// Word-pair CSV; the bundled gender table when absent.
    #[serde(default)]
    pub pairs: Option<PathBuf>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Sentences to duplicate or remove. Defaults to the size of the
    /// operation being ablated: CDA-matched sentences for duplication,
    /// flagged sentences for removal.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub targets: Option<PathBuf>,
    #[serde(default)]
    pub chunk_len: Option<usize>,
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub max_attempts: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub classifier: Option<ClassifierSpec>,
    #[serde(default)]
    pub rewriter_endpoint: Option<String>,
    #[serde(default)]
    pub perturber_endpoint: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub output_format: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPaths {
    #[serde(default)]
    pub blimp: Option<PathBuf>,
    #[serde(default)]
    pub blimp_supplement: Option<PathBuf>,
    #[serde(default)]
    pub ewok: Option<PathBuf>,
    #[serde(default)]
    pub crows: Option<PathBuf>,
    #[serde(default)]
    pub stereoset: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub scorer: ScorerSpec,
    pub benchmarks: BenchmarkPaths,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCheckpoint {
    pub step: u64,
    pub scorer: ScorerSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub run_label: String,
    pub checkpoints: Vec<SweepCheckpoint>,
    pub benchmarks: BenchmarkPaths,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DebiasMethod {
    Inlp,
    Sentdebias,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebiasConfig {
    pub method: DebiasMethod,
    /// Labelled training embeddings for INLP.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// JSON array of integer labels, for binary embedding files.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub max_rounds: Option<usize>,
    #[serde(default)]
    pub stop_margin: Option<f64>,
    /// Counterfactual sentence pairs for Sent-Debias.
    #[serde(default)]
    pub pairs: Option<PathBuf>,
    #[serde(default)]
    pub embedder: Option<EmbedderSpec>,
    #[serde(default)]
    pub components: Option<usize>,
    #[serde(default)]
    pub variance: Option<f64>,
    /// Embeddings to transform with the fitted projection.
    #[serde(default)]
    pub apply_to: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelReports {
    pub model: String,
    /// Bench report of the untreated model.
    pub baseline: PathBuf,
    /// Method name → bench report of the treated model.
    #[serde(default)]
    pub treated: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default)]
    pub models: Vec<ModelReports>,
    /// Model pairs to compare with CCA.
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub ridge: Option<f64>,
    /// Trajectory JSON files from `sweep` runs.
    #[serde(default)]
    pub trajectories: Vec<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_json(raw: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(raw).map_err(|e| Error::config("--config", e.to_string()))?;
        cfg.base_dir = base_dir.to_owned();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    fn input(&self, key: &str, p: &Path) -> Result<PathBuf> {
        let path = self.resolve(p);
        if !path.exists() {
            return Err(Error::config(key, format!("file not found: {}", path.display())));
        }
        Ok(path)
    }

    fn opt_input(&self, key: &str, p: Option<&PathBuf>) -> Result<Option<PathBuf>> {
        p.map(|p| self.input(key, p)).transpose()
    }

    fn output_dir(&self) -> Result<PathBuf> {
        let dir = self.resolve(&self.output_dir);
        fs::create_dir_all(&dir).map_err(|e| Error::config("output_dir", format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn seed(&self, what: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("seed", format!("{what} is stochastic and needs a seed")))
    }
}

/// Command-line settings that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resume: Option<PathBuf>,
}

/// What a finished run produced. `exit_code` is 2 when the run completed
/// with gaps caused by unreachable services.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    pub message: Option<String>,
}

impl RunOutcome {
    fn ok(outputs: Vec<PathBuf>) -> Self {
        Self {
            outputs,
            exit_code: EXIT_OK,
            message: None,
        }
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::config(name, "section is required for this pipeline"))
}

fn endpoint(env: &str, configured: Option<&String>, key: &str) -> Result<String> {
    std::env::var(env)
        .ok()
        .filter(|v| !v.is_empty())
        .or_else(|| configured.cloned())
        .ok_or_else(|| Error::config(key, format!("no endpoint configured and {env} is unset")))
}

fn parse_format(key: &str, format: Option<&String>, path: &Path) -> Result<Format> {
    match format {
        Some(f) => f.parse().map_err(|_| Error::config(key, format!("unknown corpus format `{f}`"))),
        None => Ok(Format::from_path(path)),
    }
}

fn write_report<T: Serialize>(path: &Path, report: &T, config: &Path) -> Result<Vec<PathBuf>> {
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    let meta_path = path.with_extension("meta.json");
    let meta = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config.display().to_string(),
        "finished_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec![path.to_owned(), meta_path])
}

fn read_json<T: for<'de> Deserialize<'de>>(key: &str, path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::config(key, format!("{}: {e}", path.display())))
}

/// Runs `pipeline` with the config at `config_path`.
pub fn run(pipeline: Pipeline, config_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(p) = cfg.pipeline {
        if p != pipeline {
            return Err(Error::config(
                "pipeline",
                format!("config is for `{p}` but `{pipeline}` was requested"),
            ));
        }
    }
    if overrides.seed.is_some() {
        cfg.seed = overrides.seed;
    }
    if cfg.concurrency == 0 {
        return Err(Error::config("concurrency", "must be at least 1"));
    }
    match pipeline {
        Pipeline::Audit => run_audit(&cfg, config_path, overrides),
        Pipeline::Intervene => run_intervene(&cfg, config_path, overrides),
        Pipeline::Bench => run_bench(&cfg, config_path),
        Pipeline::Debias => run_debias(&cfg, config_path),
        Pipeline::Analyze => run_analyze(&cfg, config_path),
        Pipeline::Sweep => run_sweep(&cfg, config_path),
    }
}

/// Checkpoint file for a resumable step: `--resume` when given, otherwise
/// a default inside the output directory. Removed once the step succeeds.
fn checkpoint_path(out: &Path, name: &str, overrides: &Overrides) -> PathBuf {
    overrides
        .resume
        .clone()
        .unwrap_or_else(|| out.join(format!("{name}.checkpoint.jsonl")))
}

fn finish_checkpoint(path: &Path) {
    if path.exists() {
        if let Err(e) = fs::remove_file(path) {
            log::warn!("could not remove checkpoint {}: {e}", path.display());
        }
    }
}

fn http(base_url: String, concurrency: usize) -> HttpConfig {
    HttpConfig {
        concurrency,
        ..HttpConfig::new(base_url)
    }
}

fn probability_classifier(
    spec: &ClassifierSpec,
    key: &str,
    lexicon: LexiconToxicity,
    concurrency: usize,
) -> Result<Box<dyn ProbabilityClassifier>> {
    Ok(match spec {
        ClassifierSpec::Lexicon => Box::new(lexicon),
        ClassifierSpec::Remote { endpoint: e } => Box::new(RemoteClassifier::new(http(
            endpoint(ENV_CLASSIFIER, e.as_ref(), key)?,
            concurrency,
        ))),
    })
}

fn embedder(spec: &EmbedderSpec, key: &str, concurrency: usize) -> Result<Box<dyn Embedder>> {
    Ok(match spec {
        EmbedderSpec::Hashed { dim } => Box::new(HashedEmbedder {
            dim: dim.unwrap_or(HashedEmbedder::default().dim),
        }),
        EmbedderSpec::Remote { endpoint: e } => Box::new(RemoteScorer::connect(http(
            endpoint(ENV_SCORER, e.as_ref(), key)?,
            concurrency,
        ))?),
    })
}

fn run_audit(cfg: &RunConfig, config_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let a = section(&cfg.audit, "audit")?;
    let corpus_path = cfg.input("audit.corpus", &a.corpus)?;
    let lexicon_path = a
        .lexicon
        .as_ref()
        .ok_or_else(|| Error::config("audit.lexicon", "a keyword lexicon is required"))?;
    let lexicon = Lexicon::load(&cfg.input("audit.lexicon", lexicon_path)?)?;
    let topics = match cfg.opt_input("audit.topics", a.topics.as_ref())? {
        Some(p) => Lexicon::load(&p)?,
        None => lexicon.clone(),
    };
    let emotion = cfg
        .opt_input("audit.emotion_lexicon", a.emotion_lexicon.as_ref())?
        .map(|p| EmotionLexicon::load(&p))
        .transpose()?;
    let threshold = a.toxicity_threshold.unwrap_or(0.5);
    let format = parse_format("audit.format", a.format.as_ref(), &corpus_path)?;
    let out = cfg.output_dir()?;

    let mut corpus = corpus::load_corpus(&corpus_path, format)?;
    let mut report = AuditReport {
        corpus: corpus::corpus_summary(&corpus),
        keyword_pct: audit::keyword_frequency(&corpus, &lexicon)?,
        structural: audit::structural_stats(&corpus)?,
        emotion: emotion.as_ref().map(|e| audit::emotion_scores(&corpus, e)),
        sentiment: None,
        toxicity: None,
        coherence: None,
    };
    if let Some(spec) = &a.sentiment {
        let classifier: Box<dyn SentimentClassifier> = match spec {
            ClassifierSpec::Lexicon => Box::new(LexiconSentiment::default()),
            ClassifierSpec::Remote { endpoint: e } => Box::new(RemoteClassifier::new(http(
                endpoint(ENV_CLASSIFIER, e.as_ref(), "audit.sentiment.endpoint")?,
                cfg.concurrency,
            ))),
        };
        let (r, annotated) = audit::sentiment_analysis(&corpus, classifier.as_ref(), &topics);
        report.sentiment = Some(r);
        corpus = annotated;
    }
    if let Some(spec) = &a.toxicity {
        let tox = probability_classifier(spec, "audit.toxicity.endpoint", LexiconToxicity::toxic(), cfg.concurrency)?;
        let hate_spec = a.hate.as_ref().unwrap_or(spec);
        let hate = probability_classifier(hate_spec, "audit.hate.endpoint", LexiconToxicity::hate(), cfg.concurrency)?;
        let ck = checkpoint_path(&out, "toxicity", overrides);
        let (rates, annotated) = audit::toxicity_rates(&corpus, tox.as_ref(), hate.as_ref(), threshold, Some(&ck))?;
        finish_checkpoint(&ck);
        report.toxicity = Some(rates);
        corpus = annotated;
    }
    let coherence_spec = a.coherence.clone().unwrap_or_default();
    let emb = embedder(&coherence_spec, "audit.coherence.endpoint", cfg.concurrency)?;
    report.coherence = match audit::first_order_coherence(&corpus, emb.as_ref()) {
        Ok(c) => Some(c),
        Err(e) if e.is_external() => return Err(e),
        Err(e) => {
            log::warn!("coherence skipped: {e}");
            None
        }
    };

    let mut outputs = write_report(&out.join("audit_report.json"), &report, config_path)?;
    if let Some(p) = &a.annotated_output {
        let p = cfg.resolve(p);
        corpus::write_corpus(&corpus, &p, Format::from_path(&p))?;
        outputs.push(p);
    }
    Ok(RunOutcome::ok(outputs))
}

fn run_intervene(cfg: &RunConfig, config_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let iv = section(&cfg.intervene, "intervene")?;
    let corpus_path = cfg.input("intervene.corpus", &iv.corpus)?;
    let format = parse_format("intervene.format", iv.format.as_ref(), &corpus_path)?;
    let out = cfg.output_dir()?;
    let table = || -> Result<WordPairTable> {
        match cfg.opt_input("intervene.pairs", iv.pairs.as_ref())? {
            Some(p) => WordPairTable::load(&p, cfg.opt_input("intervene.rules", iv.rules.as_ref())?.as_deref()),
            None => Ok(WordPairTable::default_gender()),
        }
    };
    let classifier = || -> Result<Box<dyn ProbabilityClassifier>> {
        probability_classifier(
            iv.classifier.as_ref().unwrap_or(&ClassifierSpec::Lexicon),
            "intervene.classifier.endpoint",
            LexiconToxicity::toxic(),
            cfg.concurrency,
        )
    };
    let threshold = iv.threshold.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config("intervene.threshold", "must lie in [0, 1]"));
    }
    // Stochastic operations need a seed before any work starts.
    let seed = match iv.operation {
        Operation::DuplicateRandom | Operation::RemoveRandom | Operation::Perturb => Some(cfg.seed(iv.operation.name())?),
        _ => None,
    };
    let input = corpus::load_corpus(&corpus_path, format)?;
    let mut extra_outputs = Vec::new();
    let output = match iv.operation {
        Operation::Cda => intervene::cda_augment(&input, &table()?),
        Operation::Cds => intervene::cds_substitute(&input, &table()?),
        Operation::DuplicateRandom => {
            let n = match iv.n {
                Some(n) => n,
                None => {
                    let t = table()?;
                    input.sentences().iter().filter(|s| t.swap(s.text()).is_some()).count()
                }
            };
            intervene::duplicate_random(&input, n, seed.expect("seeded"))?
        }
        Operation::RemoveToxic => intervene::remove_toxic(&input)?,
        Operation::RemoveRandom => {
            let n = iv
                .n
                .unwrap_or_else(|| input.sentences().iter().filter(|s| s.flags.is_flagged()).count());
            intervene::remove_random(&input, n, seed.expect("seeded"))?
        }
        Operation::Detox => {
            let rewriter = RemoteRewriter::new(http(
                endpoint(ENV_REWRITER, iv.rewriter_endpoint.as_ref(), "intervene.rewriter_endpoint")?,
                cfg.concurrency,
            ));
            let prompt_template = match cfg.opt_input("intervene.prompt_template", iv.prompt_template.as_ref())? {
                Some(p) => fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?,
                None => intervene::DEFAULT_DETOX_PROMPT.to_owned(),
            };
            let ck = checkpoint_path(&out, "detox", overrides);
            let opts = DetoxOptions {
                prompt_template,
                max_attempts: iv.max_attempts.unwrap_or(3),
                threshold,
                concurrency: cfg.concurrency,
                checkpoint: Some(ck.clone()),
            };
            let result = intervene::detox_rewrite(&input, &rewriter, classifier()?.as_ref(), &opts)?;
            finish_checkpoint(&ck);
            result
        }
        Operation::Perturb => {
            let targets_path = iv
                .targets
                .as_ref()
                .ok_or_else(|| Error::config("intervene.targets", "perturbation needs a target-word file"))?;
            let targets = TargetWords::load(&cfg.input("intervene.targets", targets_path)?)?;
            let perturber = RemotePerturber::new(http(
                endpoint(ENV_PERTURBER, iv.perturber_endpoint.as_ref(), "intervene.perturber_endpoint")?,
                cfg.concurrency,
            ));
            let ck = checkpoint_path(&out, "perturb", overrides);
            let opts = PerturbOptions {
                chunk_len: iv.chunk_len.unwrap_or(128),
                seed: seed.expect("seeded"),
                concurrency: cfg.concurrency,
                checkpoint: Some(ck.clone()),
            };
            let result = intervene::perturb_corpus(&input, &perturber, &targets, &opts)?;
            finish_checkpoint(&ck);
            let stats = intervene::perturbation_stats(result.provenance.last().expect("perturb manifest"));
            extra_outputs.extend(write_report(&out.join("perturbation_stats.json"), &stats, config_path)?);
            result
        }
    };

    let path = match &iv.output {
        Some(p) => cfg.resolve(p),
        None => out.join(format!("{}.jsonl", iv.operation.name())),
    };
    let out_format = parse_format("intervene.output_format", iv.output_format.as_ref(), &path)?;
    corpus::write_corpus(&output, &path, out_format)?;
    let mut outputs = vec![path.clone(), corpus::manifest_path(&path)];
    outputs.extend(extra_outputs);
    Ok(RunOutcome::ok(outputs))
}

fn cache_dir(configured: Option<&PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    std::env::var_os(ENV_CACHE_DIR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| configured.map(|p| cfg.resolve(p)))
}

fn build_scorer(spec: &ScorerSpec, key: &str, cfg: &RunConfig, cache: Option<&Path>) -> Result<ScorerHandle> {
    let base: ScorerHandle = match spec {
        ScorerSpec::Ngram {
            corpus: path,
            format,
            order,
            smoothing_k,
            min_count,
        } => {
            let path = cfg.input(&format!("{key}.corpus"), path)?;
            let fmt = parse_format(&format!("{key}.format"), format.as_ref(), &path)?;
            let defaults = NGramConfig::default();
            let config = NGramConfig {
                order: order.unwrap_or(defaults.order),
                smoothing_k: smoothing_k.unwrap_or(defaults.smoothing_k),
                min_count: min_count.unwrap_or(defaults.min_count),
            };
            Arc::new(scorer::train_ngram(&corpus::load_corpus(&path, fmt)?, config)?)
        }
        ScorerSpec::Remote {
            endpoint: e,
            timeout_secs,
            retries,
        } => {
            let mut http_cfg = http(endpoint(ENV_SCORER, e.as_ref(), &format!("{key}.endpoint"))?, cfg.concurrency);
            if let Some(t) = timeout_secs {
                http_cfg.timeout_secs = *t;
            }
            if let Some(r) = retries {
                http_cfg.retries = *r;
            }
            Arc::new(RemoteScorer::connect(http_cfg)?)
        }
    };
    Ok(match cache {
        Some(dir) => Arc::new(CachedScorer::with_file(base, &dir.join("scores.jsonl"))?),
        None => base,
    })
}

fn load_suite(paths: &BenchmarkPaths, key: &str, cfg: &RunConfig) -> Result<BenchSuite> {
    let p = |name: &str, v: &Option<PathBuf>| cfg.opt_input(&format!("{key}.{name}"), v.as_ref());
    let mut suite = BenchSuite::default();
    if let Some(x) = p("blimp", &paths.blimp)? {
        suite.blimp = bench::load_minimal_pairs(&x)?;
    }
    if let Some(x) = p("blimp_supplement", &paths.blimp_supplement)? {
        suite.blimp_supplement = bench::load_minimal_pairs(&x)?;
    }
    if let Some(x) = p("ewok", &paths.ewok)? {
        suite.ewok = bench::load_ewok(&x)?;
    }
    if let Some(x) = p("crows", &paths.crows)? {
        suite.crows = bench::load_crows(&x)?;
    }
    if let Some(x) = p("stereoset", &paths.stereoset)? {
        suite.stereoset = bench::load_stereoset(&x)?;
    }
    if suite.blimp.is_empty()
        && suite.blimp_supplement.is_empty()
        && suite.ewok.is_empty()
        && suite.crows.is_empty()
        && suite.stereoset.is_empty()
    {
        return Err(Error::config(key, "no benchmark files given"));
    }
    Ok(suite)
}

fn run_bench(cfg: &RunConfig, config_path: &Path) -> Result<RunOutcome> {
    let b = section(&cfg.bench, "bench")?;
    let suite = load_suite(&b.benchmarks, "bench.benchmarks", cfg)?;
    let out = cfg.output_dir()?;
    let scorer = build_scorer(&b.scorer, "bench.scorer", cfg, cache_dir(b.cache_dir.as_ref(), cfg).as_deref())?;
    let report = bench::run_bench(scorer.as_ref(), &suite, cfg.concurrency)?;
    Ok(RunOutcome::ok(write_report(&out.join("bench_report.json"), &report, config_path)?))
}

/// Stands in for a checkpoint whose scorer could not be constructed so the
/// sweep records a gap for it.
struct Unavailable {
    identity: String,
    reason: String,
}

impl Scorer for Unavailable {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            sequence_logprob: false,
            masked_logprob: false,
            embed: false,
        }
    }

    fn sequence_logprob(&self, _: &[String]) -> Result<SequenceScore> {
        Err(Error::external(&self.identity, &self.reason))
    }

    fn ping(&self) -> Result<()> {
        Err(Error::external(&self.identity, &self.reason))
    }
}

fn run_sweep(cfg: &RunConfig, config_path: &Path) -> Result<RunOutcome> {
    let s = section(&cfg.sweep, "sweep")?;
    if s.checkpoints.is_empty() {
        return Err(Error::config("sweep.checkpoints", "at least one checkpoint is required"));
    }
    let suite = load_suite(&s.benchmarks, "sweep.benchmarks", cfg)?;
    let out = cfg.output_dir()?;
    let cache = cache_dir(s.cache_dir.as_ref(), cfg);
    let mut handles: Vec<(u64, ScorerHandle)> = Vec::with_capacity(s.checkpoints.len());
    for (i, c) in s.checkpoints.iter().enumerate() {
        let key = format!("sweep.checkpoints[{i}].scorer");
        let handle = match build_scorer(&c.scorer, &key, cfg, cache.as_deref()) {
            Ok(h) => h,
            Err(e) if e.is_external() => Arc::new(Unavailable {
                identity: format!("checkpoint@{}", c.step),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        };
        handles.push((c.step, handle));
    }
    let mut series = bench::checkpoint_sweep(&s.run_label, &handles, &suite, cfg.concurrency)
        .map_err(|e| Error::config("sweep.checkpoints", e.to_string()))?;
    series.seed = cfg.seed;
    let mut outputs = write_report(&out.join("trajectory.json"), &series, config_path)?;
    outputs.extend(analysis::emit_plot_data(std::slice::from_ref(&series), &out.join("trajectory.csv"))?);
    let gaps = series.gaps();
    Ok(RunOutcome {
        outputs,
        exit_code: if gaps > 0 { EXIT_EXTERNAL } else { EXIT_OK },
        message: (gaps > 0).then(|| format!("{gaps} checkpoint(s) could not be evaluated; see gap markers")),
    })
}

#[derive(Debug, Serialize)]
struct DebiasReport {
    method: &'static str,
    dim: usize,
    removed_directions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_accuracies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    majority_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    idempotence_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explained_variance: Option<Vec<f64>>,
    directions: Vec<Vec<f64>>,
}

fn load_embeddings(cfg: &RunConfig, key: &str, path: &Path, labels: Option<&PathBuf>) -> Result<EmbeddingMatrix> {
    let m = EmbeddingMatrix::load(&cfg.input(key, path)?)?;
    match cfg.opt_input("debias.labels", labels)? {
        Some(p) => {
            let labels: Vec<i64> = read_json("debias.labels", &p)?;
            EmbeddingMatrix::new(m.rows().clone(), Some(labels))
        }
        None => Ok(m),
    }
}

type ApplyFn = dyn Fn(&EmbeddingMatrix) -> Result<EmbeddingMatrix>;

fn run_debias(cfg: &RunConfig, config_path: &Path) -> Result<RunOutcome> {
    let d = section(&cfg.debias, "debias")?;
    let out = cfg.output_dir()?;
    let mut outputs = Vec::new();
    let (report, apply): (DebiasReport, Box<ApplyFn>) = match d.method {
        DebiasMethod::Inlp => {
            let path = d
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::config("debias.embeddings", "INLP needs labelled embeddings"))?;
            let data = load_embeddings(cfg, "debias.embeddings", path, d.labels.as_ref())?;
            if data.labels().is_none() {
                return Err(Error::config("debias.labels", "INLP needs labels"));
            }
            let defaults = InlpConfig::default();
            let result = projection::inlp_fit(
                &data,
                InlpConfig {
                    max_rounds: d.max_rounds.unwrap_or(defaults.max_rounds),
                    stop_margin: d.stop_margin.unwrap_or(defaults.stop_margin),
                },
            )?;
            let p = result.projection.clone();
            let matrix_path = out.join("projection.bin");
            EmbeddingMatrix::new(p.matrix().clone(), None)?.save(&matrix_path)?;
            outputs.push(matrix_path);
            (
                DebiasReport {
                    method: "inlp",
                    dim: p.dim(),
                    removed_directions: p.removed_directions().len(),
                    probe_accuracies: Some(result.accuracies.clone()),
                    majority_rate: Some(result.majority_rate),
                    idempotence_error: Some(p.idempotence_error()),
                    explained_variance: None,
                    directions: p.removed_directions().iter().map(|v| v.iter().copied().collect()).collect(),
                },
                Box::new(move |m| projection::apply_projection(&p, m)),
            )
        }
        DebiasMethod::Sentdebias => {
            let path = d
                .pairs
                .as_ref()
                .ok_or_else(|| Error::config("debias.pairs", "Sent-Debias needs counterfactual pairs"))?;
            let pairs = projection::load_pairs(&cfg.input("debias.pairs", path)?)?;
            let emb = embedder(&d.embedder.clone().unwrap_or_default(), "debias.embedder.endpoint", cfg.concurrency)?;
            let size = match (d.components, d.variance) {
                (Some(_), Some(_)) => {
                    return Err(Error::config("debias.components", "give either components or variance, not both"))
                }
                (Some(k), None) => SubspaceSize::Components(k),
                (None, Some(v)) => SubspaceSize::Variance(v),
                (None, None) => SubspaceSize::default(),
            };
            let subspace = projection::sentdebias_fit(&pairs, emb.as_ref(), size)?;
            let s = subspace.clone();
            (
                DebiasReport {
                    method: "sentdebias",
                    dim: subspace.dim(),
                    removed_directions: subspace.components.len(),
                    probe_accuracies: None,
                    majority_rate: None,
                    idempotence_error: None,
                    explained_variance: Some(subspace.explained_variance.clone()),
                    directions: subspace.components.iter().map(|v| v.iter().copied().collect()).collect(),
                },
                Box::new(move |m| projection::sentdebias_apply(&s, m)),
            )
        }
    };
    if let Some(p) = &d.apply_to {
        let m = EmbeddingMatrix::load(&cfg.input("debias.apply_to", p)?)?;
        let path = out.join("debiased.bin");
        apply(&m)?.save(&path)?;
        outputs.push(path);
    }
    outputs.extend(write_report(&out.join("debias_report.json"), &report, config_path)?);
    Ok(RunOutcome::ok(outputs))
}

#[derive(Debug, Serialize)]
struct CcaEntry {
    model_a: String,
    model_b: String,
    rho1: f64,
    ridge: String,
}

#[derive(Debug, Serialize)]
struct CorrelationEntry {
    label: String,
    points: usize,
    pearson: f64,
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    shifts: Vec<ShiftRecord>,
    cca: Vec<CcaEntry>,
    /// Correlation between composite performance and composite bias.
    correlations: Vec<CorrelationEntry>,
}

fn composites_of(key: &str, path: &Path) -> Result<CompositeScores> {
    let report: BenchReport = read_json(key, path)?;
    report
        .composites
        .ok_or_else(|| Error::config(key, format!("{} has no composite scores", path.display())))
}

fn run_analyze(cfg: &RunConfig, config_path: &Path) -> Result<RunOutcome> {
    let a = section(&cfg.analyze, "analyze")?;
    let out = cfg.output_dir()?;
    let mut shifts = Vec::new();
    let mut correlations = Vec::new();
    let mut all_points: Vec<(f64, f64)> = Vec::new();
    for (i, m) in a.models.iter().enumerate() {
        let key = format!("analyze.models[{i}]");
        let baseline = composites_of(&format!("{key}.baseline"), &cfg.input(&format!("{key}.baseline"), &m.baseline)?)?;
        all_points.push((baseline.performance.composite_performance, baseline.bias.composite_bias));
        let mut treated = BTreeMap::new();
        for (method, p) in &m.treated {
            let k = format!("{key}.treated.{method}");
            let c = composites_of(&k, &cfg.input(&k, p)?)?;
            all_points.push((c.performance.composite_performance, c.bias.composite_bias));
            treated.insert(method.clone(), c);
        }
        shifts.extend(analysis::shift_table(&m.model, &baseline, &treated)?);
    }
    if all_points.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = all_points.iter().copied().unzip();
        match analysis::pearson(&x, &y) {
            Ok(r) => correlations.push(CorrelationEntry {
                label: "bench_reports".into(),
                points: x.len(),
                pearson: r,
            }),
            Err(e) => log::warn!("bench report correlation skipped: {e}"),
        }
    }
    let mut cca = Vec::new();
    for (a_model, b_model) in &a.pairs {
        let rho1 = analysis::cca_model_pair(&shifts, a_model, b_model, a.ridge)
            .map_err(|e| Error::config("analyze.pairs", format!("{a_model} vs {b_model}: {e}")))?;
        cca.push(CcaEntry {
            model_a: a_model.clone(),
            model_b: b_model.clone(),
            rho1,
            ridge: a.ridge.map_or_else(|| "relative 1e-6".to_owned(), |r| r.to_string()),
        });
    }
    let mut series: Vec<TrajectorySeries> = Vec::new();
    for (i, p) in a.trajectories.iter().enumerate() {
        let key = format!("analyze.trajectories[{i}]");
        let s: TrajectorySeries = read_json(&key, &cfg.input(&key, p)?)?;
        let (x, y): (Vec<f64>, Vec<f64>) = s
            .points
            .iter()
            .filter_map(|pt| pt.scores.map(|c| (c.performance.composite_performance, c.bias.composite_bias)))
            .unzip();
        if let Ok(r) = analysis::pearson(&x, &y) {
            correlations.push(CorrelationEntry {
                label: format!("{}{}", s.run_label, s.seed.map(|x| format!("/seed{x}")).unwrap_or_default()),
                points: x.len(),
                pearson: r,
            });
        }
        series.push(s);
    }
    if shifts.is_empty() && series.is_empty() {
        return Err(Error::config("analyze", "nothing to analyze: give models or trajectories"));
    }
    let mut outputs = Vec::new();
    if !shifts.is_empty() {
        outputs.push(analysis::emit_shift_data(&shifts, &out.join("shifts.csv"))?);
    }
    if !series.is_empty() {
        outputs.extend(analysis::emit_plot_data(&series, &out.join("trajectories.csv"))?);
    }
    let report = AnalysisReport {
        shifts,
        cca,
        correlations,
    };
    outputs.extend(write_report(&out.join("analysis_report.json"), &report, config_path)?);
    Ok(RunOutcome::ok(outputs))
}
