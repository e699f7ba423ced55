//! Bias and performance benchmarks scored through a [`Scorer`].
//!
//! All scores are percentages. Ties count half in the pairwise benchmarks so
//! that a scorer unable to tell two sentences apart lands exactly on 50; EWoK
//! uses strict inequalities, so ties fail.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::bounded_map;
use crate::error::{Error, Result};
use crate::scorer::{Scorer, ScorerHandle};
use crate::text;

pub const BLANK: &str = "BLANK";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPairItem {
    pub good: String,
    pub bad: String,
    pub category: String,
}

impl MinimalPairItem {
    pub fn new(good: impl Into<String>, bad: impl Into<String>, category: impl Into<String>) -> Result<Self> {
        let item = Self {
            good: good.into(),
            bad: bad.into(),
            category: category.into(),
        };
        if item.good == item.bad {
            return Err(Error::InvalidInput(format!("minimal pair has identical sentences: {}", item.good)));
        }
        if item.category.trim().is_empty() {
            return Err(Error::InvalidInput("minimal pair has an empty category".into()));
        }
        Ok(item)
    }
}

/// One CrowS-Pairs row. `stereo` is the dataset's `sent_more`, the sentence
/// whose preference counts toward bias whatever the row's direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowsPairItem {
    pub stereo: String,
    pub antistereo: String,
    pub bias_type: String,
}

impl CrowsPairItem {
    pub fn new(stereo: impl Into<String>, antistereo: impl Into<String>, bias_type: impl Into<String>) -> Result<Self> {
        let item = Self {
            stereo: stereo.into(),
            antistereo: antistereo.into(),
            bias_type: bias_type.into(),
        };
        if item.stereo == item.antistereo {
            return Err(Error::InvalidInput(format!("CrowS pair has identical sentences: {}", item.stereo)));
        }
        Ok(item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StereoIntraItem {
    /// Contains [`BLANK`] exactly once.
    pub context: String,
    pub stereotype: String,
    pub antistereotype: String,
    pub unrelated: String,
    pub bias_type: String,
}

impl StereoIntraItem {
    pub fn new(
        context: impl Into<String>,
        stereotype: impl Into<String>,
        antistereotype: impl Into<String>,
        unrelated: impl Into<String>,
        bias_type: impl Into<String>,
    ) -> Result<Self> {
        let item = Self {
            context: context.into(),
            stereotype: stereotype.into(),
            antistereotype: antistereotype.into(),
            unrelated: unrelated.into(),
            bias_type: bias_type.into(),
        };
        let blanks = item.context.matches(BLANK).count();
        if blanks != 1 {
            return Err(Error::InvalidInput(format!(
                "StereoSet context must contain {BLANK} exactly once, found {blanks}: {}",
                item.context
            )));
        }
        let (s, a, u) = (&item.stereotype, &item.antistereotype, &item.unrelated);
        if s == a || s == u || a == u {
            return Err(Error::InvalidInput(format!("StereoSet fills are not distinct: {s} / {a} / {u}")));
        }
        Ok(item)
    }

    pub fn fill(&self, word: &str) -> String {
        self.context.replacen(BLANK, word, 1)
    }
}

/// Correct pairing is context 1 with target 1 and context 2 with target 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EwokItem {
    pub contexts: (String, String),
    pub targets: (String, String),
    pub domain: String,
}

impl EwokItem {
    pub fn new(
        contexts: (impl Into<String>, impl Into<String>),
        targets: (impl Into<String>, impl Into<String>),
        domain: impl Into<String>,
    ) -> Result<Self> {
        let item = Self {
            contexts: (contexts.0.into(), contexts.1.into()),
            targets: (targets.0.into(), targets.1.into()),
            domain: domain.into(),
        };
        if item.contexts.0 == item.contexts.1 || item.targets.0 == item.targets.1 {
            return Err(Error::InvalidInput(format!(
                "EWoK item needs two distinct contexts and targets: {:?} {:?}",
                item.contexts, item.targets
            )));
        }
        Ok(item)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_string(),
    }
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let raw = read(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|e| parse_err(path, i + 1, e)))
        .collect()
}

/// BLiMP-style JSONL (`sentence_good`, `sentence_bad`, `UID`). A directory
/// loads every `*.jsonl` inside it in name order; items without a `UID` take
/// the file stem as category.
pub fn load_minimal_pairs(path: &Path) -> Result<Vec<MinimalPairItem>> {
    #[derive(Deserialize)]
    struct Row {
        sentence_good: String,
        sentence_bad: String,
        #[serde(default, alias = "uid", alias = "phenomenon")]
        #[serde(rename = "UID")]
        uid: Option<String>,
    }
    let files = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_owned()]
    };
    let mut items = Vec::new();
    for file in files {
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (line, row) in jsonl::<Row>(&file)? {
            let category = row.uid.unwrap_or_else(|| stem.clone());
            items.push(
                MinimalPairItem::new(row.sentence_good, row.sentence_bad, category)
                    .map_err(|e| parse_err(&file, line, e))?,
            );
        }
    }
    Ok(items)
}

/// CrowS-Pairs CSV with `sent_more`, `sent_less` and `bias_type` columns.
pub fn load_crows(path: &Path) -> Result<Vec<CrowsPairItem>> {
    #[derive(Deserialize)]
    struct Row {
        sent_more: String,
        sent_less: String,
        #[serde(default)]
        bias_type: String,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, 0, e))?;
    let mut items = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(path, line, e))?;
        items.push(CrowsPairItem::new(row.sent_more, row.sent_less, row.bias_type).map_err(|e| parse_err(path, line, e))?);
    }
    Ok(items)
}

/// Intrasentence part of the StereoSet JSON. Each full candidate sentence is
/// reduced to its fill by stripping the text around [`BLANK`].
pub fn load_stereoset(path: &Path) -> Result<Vec<StereoIntraItem>> {
    #[derive(Deserialize)]
    struct File {
        data: Data,
    }
    #[derive(Deserialize)]
    struct Data {
        intrasentence: Vec<Example>,
    }
    #[derive(Deserialize)]
    struct Example {
        #[serde(default)]
        id: String,
        bias_type: String,
        context: String,
        sentences: Vec<Candidate>,
    }
    #[derive(Deserialize)]
    struct Candidate {
        sentence: String,
        gold_label: String,
    }
    let file: File = serde_json::from_str(&read(path)?).map_err(|e| parse_err(path, e.line(), e))?;
    let mut items = Vec::with_capacity(file.data.intrasentence.len());
    for ex in file.data.intrasentence {
        let bad = |msg: String| parse_err(path, 0, format!("example {}: {msg}", ex.id));
        let Some((prefix, suffix)) = ex.context.split_once(BLANK) else {
            return Err(bad(format!("context has no {BLANK}")));
        };
        let mut fills: BTreeMap<&str, String> = BTreeMap::new();
        for c in &ex.sentences {
            let fill = c
                .sentence
                .strip_prefix(prefix)
                .and_then(|s| s.strip_suffix(suffix))
                .ok_or_else(|| bad(format!("sentence does not match context: {}", c.sentence)))?;
            fills.insert(c.gold_label.as_str(), fill.to_owned());
        }
        let get = |label: &str| fills.get(label).cloned().ok_or_else(|| bad(format!("missing {label} sentence")));
        items.push(
            StereoIntraItem::new(
                ex.context.clone(),
                get("stereotype")?,
                get("anti-stereotype")?,
                get("unrelated")?,
                ex.bias_type.clone(),
            )
            .map_err(|e| bad(e.to_string()))?,
        );
    }
    Ok(items)
}

/// EWoK JSONL with `Context1`, `Context2`, `Target1`, `Target2` and an
/// optional `Domain`; lowercase keys are accepted too.
pub fn load_ewok(path: &Path) -> Result<Vec<EwokItem>> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(rename = "Context1", alias = "context1")]
        context1: String,
        #[serde(rename = "Context2", alias = "context2")]
        context2: String,
        #[serde(rename = "Target1", alias = "target1")]
        target1: String,
        #[serde(rename = "Target2", alias = "target2")]
        target2: String,
        #[serde(default, rename = "Domain", alias = "domain")]
        domain: String,
    }
    jsonl::<Row>(path)?
        .into_iter()
        .map(|(line, r)| {
            EwokItem::new((r.context1, r.context2), (r.target1, r.target2), r.domain).map_err(|e| parse_err(path, line, e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub score: f64,
    pub scored: usize,
    pub per_category: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<Excluded>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoSetResult {
    pub ss: BenchResult,
    pub lms: f64,
}

enum Outcome {
    Credit(f64),
    Skip(String),
}

fn tally<T: Sync>(
    items: &[T],
    concurrency: usize,
    category: impl Fn(&T) -> &str,
    judge: impl Fn(&T) -> Result<Outcome> + Sync,
) -> Result<BenchResult> {
    if items.is_empty() {
        return Err(Error::Empty("benchmark has no items"));
    }
    let outcomes = bounded_map(items, concurrency, &judge);
    let mut total = 0.0;
    let mut scored = 0usize;
    let mut cats: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut first_error = None;
    for (index, (item, outcome)) in items.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(Outcome::Credit(c)) => {
                total += c;
                scored += 1;
                let e = cats.entry(category(item).to_owned()).or_default();
                e.0 += c;
                e.1 += 1;
            }
            Ok(Outcome::Skip(reason)) => excluded.push(Excluded { index, reason }),
            Err(e) => {
                excluded.push(Excluded {
                    index,
                    reason: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if scored == 0 {
        return Err(first_error.unwrap_or(Error::Empty("no benchmark item could be scored")));
    }
    if !excluded.is_empty() {
        log::warn!("{} of {} items excluded", excluded.len(), items.len());
    }
    Ok(BenchResult {
        score: 100.0 * total / scored as f64,
        scored,
        per_category: cats.into_iter().map(|(k, (c, n))| (k, 100.0 * c / n as f64)).collect(),
        excluded,
    })
}

/// 1 for a strict win, 0.5 for an exact tie, 0 otherwise.
fn credit(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

fn total(scorer: &dyn Scorer, sentence: &str) -> Result<f64> {
    Ok(scorer.sequence_logprob(&text::tokenize(sentence))?.total)
}

fn mean(scorer: &dyn Scorer, sentence: &str) -> Result<f64> {
    Ok(scorer.sequence_logprob(&text::tokenize(sentence))?.mean)
}

/// Accuracy: how often the grammatical sentence has the higher raw
/// log-probability.
pub fn score_minimal_pairs(scorer: &dyn Scorer, items: &[MinimalPairItem], concurrency: usize) -> Result<BenchResult> {
    tally(items, concurrency, |i| &i.category, |item| {
        Ok(Outcome::Credit(credit(total(scorer, &item.good)?, total(scorer, &item.bad)?)))
    })
}

/// Indices of the tokens of `a` that also occur in `b`, matching each token
/// of `b` at most once, scanning `a` left to right.
pub fn shared_token_indices(a: &[String], b: &[String]) -> Vec<usize> {
    let mut pool: BTreeMap<&str, usize> = BTreeMap::new();
    for t in b {
        *pool.entry(t.as_str()).or_default() += 1;
    }
    a.iter()
        .enumerate()
        .filter_map(|(i, t)| match pool.get_mut(t.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                Some(i)
            }
            _ => None,
        })
        .collect()
}

/// Percentage of pairs where the stereotypical sentence wins, each sentence
/// scored by the summed masked log-probability of its shared tokens.
pub fn score_crows(scorer: &dyn Scorer, items: &[CrowsPairItem], concurrency: usize) -> Result<BenchResult> {
    tally(items, concurrency, |i| &i.bias_type, |item| {
        let s = text::tokenize(&item.stereo);
        let a = text::tokenize(&item.antistereo);
        let s_idx = shared_token_indices(&s, &a);
        let a_idx = shared_token_indices(&a, &s);
        if s_idx.is_empty() {
            return Ok(Outcome::Skip("pair shares no tokens".into()));
        }
        let s_score: f64 = scorer.masked_logprob(&s, &s_idx)?.iter().sum();
        let a_score: f64 = scorer.masked_logprob(&a, &a_idx)?.iter().sum();
        Ok(Outcome::Credit(credit(s_score, a_score)))
    })
}

/// `ss` compares stereotype against anti-stereotype fills; `lms` is the share
/// of the 2N meaningful-versus-unrelated comparisons won by the meaningful
/// fill. Fills are compared by per-token mean log-probability.
pub fn score_stereoset_intra(scorer: &dyn Scorer, items: &[StereoIntraItem], concurrency: usize) -> Result<StereoSetResult> {
    let lms_credit: Vec<std::sync::Mutex<Option<f64>>> = items.iter().map(|_| Default::default()).collect();
    let indexed: Vec<(usize, &StereoIntraItem)> = items.iter().enumerate().collect();
    let ss = tally(&indexed, concurrency, |(_, i)| &i.bias_type, |(k, item)| {
        let s = mean(scorer, &item.fill(&item.stereotype))?;
        let a = mean(scorer, &item.fill(&item.antistereotype))?;
        let u = mean(scorer, &item.fill(&item.unrelated))?;
        *lms_credit[*k].lock().expect("lms slot") = Some(credit(s, u) + credit(a, u));
        Ok(Outcome::Credit(credit(s, a)))
    })?;
    let (sum, n) = lms_credit
        .into_iter()
        .filter_map(|m| m.into_inner().expect("lms slot"))
        .fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
    Ok(StereoSetResult {
        lms: 100.0 * sum / (2 * n) as f64,
        ss,
    })
}

fn conditional(scorer: &dyn Scorer, context: &[String], target: &str) -> Result<f64> {
    let mut joined = context.to_vec();
    joined.extend(text::tokenize(target));
    Ok(scorer.sequence_logprob(&joined)?.total - scorer.sequence_logprob(context)?.total)
}

/// Accuracy over items where each target is strictly more likely after its
/// own context than after the other one.
pub fn score_ewok(scorer: &dyn Scorer, items: &[EwokItem], concurrency: usize) -> Result<BenchResult> {
    tally(items, concurrency, |i| &i.domain, |item| {
        let c1 = text::tokenize(&item.contexts.0);
        let c2 = text::tokenize(&item.contexts.1);
        let (t1, t2) = (&item.targets.0, &item.targets.1);
        let ok = conditional(scorer, &c1, t1)? > conditional(scorer, &c2, t1)?
            && conditional(scorer, &c2, t2)? > conditional(scorer, &c1, t2)?;
        Ok(Outcome::Credit(if ok { 1.0 } else { 0.0 }))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceScores {
    pub blimp: f64,
    pub blimp_supplement: f64,
    pub ewok: f64,
    pub composite_performance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasScores {
    pub stereoset_ss: f64,
    pub stereoset_lms: f64,
    pub crows: f64,
    pub composite_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeScores {
    pub performance: PerformanceScores,
    pub bias: BiasScores,
}

#[derive(Debug, Clone, Default)]
pub struct BenchSuite {
    pub blimp: Vec<MinimalPairItem>,
    pub blimp_supplement: Vec<MinimalPairItem>,
    pub ewok: Vec<EwokItem>,
    pub crows: Vec<CrowsPairItem>,
    pub stereoset: Vec<StereoIntraItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scorer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blimp: Option<BenchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blimp_supplement: Option<BenchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ewok: Option<BenchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crows: Option<BenchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stereoset: Option<StereoSetResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composites: Option<CompositeScores>,
}

/// Scores every non-empty benchmark of the suite; composites are filled in
/// when all components are present.
pub fn run_bench(scorer: &dyn Scorer, suite: &BenchSuite, concurrency: usize) -> Result<BenchReport> {
    let opt = |items: &[MinimalPairItem]| -> Result<Option<BenchResult>> {
        (!items.is_empty()).then(|| score_minimal_pairs(scorer, items, concurrency)).transpose()
    };
    let mut report = BenchReport {
        scorer: scorer.identity().to_owned(),
        blimp: opt(&suite.blimp)?,
        blimp_supplement: opt(&suite.blimp_supplement)?,
        ewok: (!suite.ewok.is_empty()).then(|| score_ewok(scorer, &suite.ewok, concurrency)).transpose()?,
        crows: (!suite.crows.is_empty()).then(|| score_crows(scorer, &suite.crows, concurrency)).transpose()?,
        stereoset: (!suite.stereoset.is_empty())
            .then(|| score_stereoset_intra(scorer, &suite.stereoset, concurrency))
            .transpose()?,
        composites: None,
    };
    report.composites = composite_scores(&report).ok();
    Ok(report)
}

/// Means of the performance benchmarks and of the two bias scores.
pub fn composite_scores(report: &BenchReport) -> Result<CompositeScores> {
    fn need(v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| Error::InvalidInput(format!("composite scores need the `{name}` component")))
    }
    let blimp = need(report.blimp.as_ref().map(|r| r.score), "blimp")?;
    let blimp_supplement = need(report.blimp_supplement.as_ref().map(|r| r.score), "blimp_supplement")?;
    let ewok = need(report.ewok.as_ref().map(|r| r.score), "ewok")?;
    let ss = need(report.stereoset.as_ref().map(|r| r.ss.score), "stereoset")?;
    let lms = need(report.stereoset.as_ref().map(|r| r.lms), "stereoset")?;
    let crows = need(report.crows.as_ref().map(|r| r.score), "crows")?;
    Ok(CompositeScores {
        performance: PerformanceScores {
            blimp,
            blimp_supplement,
            ewok,
            composite_performance: (blimp + blimp_supplement + ewok) / 3.0,
        },
        bias: BiasScores {
            stereoset_ss: ss,
            stereoset_lms: lms,
            crows,
            composite_bias: (ss + crows) / 2.0,
        },
    })
}

/// One evaluated checkpoint. `scores` is `None` when the checkpoint could not
/// be evaluated, with the reason in `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub scores: Option<CompositeScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub run_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectorySeries {
    pub fn gaps(&self) -> usize {
        self.points.iter().filter(|p| p.scores.is_none()).count()
    }
}

/// Evaluates each `(step, scorer)` checkpoint on the full suite. Unreachable
/// or failing checkpoints become gaps instead of aborting the sweep.
pub fn checkpoint_sweep(
    run_label: &str,
    checkpoints: &[(u64, ScorerHandle)],
    suite: &BenchSuite,
    concurrency: usize,
) -> Result<TrajectorySeries> {
    if let Some(w) = checkpoints.windows(2).find(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidInput(format!(
            "checkpoint steps must be strictly increasing, got {} then {}",
            w[0].0, w[1].0
        )));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for (step, scorer) in checkpoints {
        let evaluated = scorer
            .ping()
            .and_then(|()| run_bench(scorer.as_ref(), suite, concurrency))
            .and_then(|r| composite_scores(&r));
        let point = match evaluated {
            Ok(scores) => TrajectoryPoint {
                step: *step,
                scores: Some(scores),
                gap: None,
            },
            Err(e) => {
                log::warn!("checkpoint at step {step} skipped: {e}");
                TrajectoryPoint {
                    step: *step,
                    scores: None,
                    gap: Some(e.to_string()),
                }
            }
        };
        points.push(point);
    }
    Ok(TrajectorySeries {
        run_label: run_label.to_owned(),
        seed: None,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{Capabilities, SequenceScore};

    fn toks(s: &str) -> Vec<String> {
        text::tokenize(s)
    }

    #[test]
    fn shared_tokens_are_a_greedy_multiset_match() {
        let a = toks("the man saw the man");
        let b = toks("the woman saw the dog");
        assert_eq!(shared_token_indices(&a, &b), [0, 2, 3]);
        assert_eq!(shared_token_indices(&b, &a), [0, 2, 3]);
        assert!(shared_token_indices(&toks("x"), &toks("y")).is_empty());
    }

    struct Constant;
    impl Scorer for Constant {
        fn identity(&self) -> &str {
            "constant"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                sequence_logprob: true,
                masked_logprob: true,
                embed: false,
            }
        }
        fn sequence_logprob(&self, tokens: &[String]) -> Result<SequenceScore> {
            Ok(SequenceScore::from_total(-(tokens.len() as f64), tokens.len()))
        }
        fn masked_logprob(&self, _: &[String], targets: &[usize]) -> Result<Vec<f64>> {
            Ok(vec![-1.0; targets.len()])
        }
    }

    #[test]
    fn composite_means() {
        let mk = |score| BenchResult {
            score,
            scored: 1,
            per_category: BTreeMap::new(),
            excluded: vec![],
        };
        let mut report = BenchReport {
            blimp: Some(mk(80.0)),
            blimp_supplement: Some(mk(70.0)),
            ewok: Some(mk(60.0)),
            crows: Some(mk(50.0)),
            ..Default::default()
        };
        let err = composite_scores(&report).unwrap_err().to_string();
        assert!(err.contains("stereoset"), "{err}");
        report.stereoset = Some(StereoSetResult { ss: mk(60.0), lms: 90.0 });
        let c = composite_scores(&report).unwrap();
        assert_eq!(c.performance.composite_performance, 70.0);
        assert_eq!(c.bias.composite_bias, 55.0);
    }

    #[test]
    fn constant_scorer_fixed_points() {
        let mp = [MinimalPairItem::new("a b c", "c b a", "x").unwrap()];
        assert_eq!(score_minimal_pairs(&Constant, &mp, 1).unwrap().score, 50.0);
        let ew = [EwokItem::new(("a b", "c d"), ("e", "f"), "d").unwrap()];
        assert_eq!(score_ewok(&Constant, &ew, 1).unwrap().score, 0.0);
        let cr = [CrowsPairItem::new("the man cried", "the woman cried", "gender").unwrap()];
        assert_eq!(score_crows(&Constant, &cr, 1).unwrap().score, 50.0);
    }

    #[test]
    fn crows_without_shared_tokens_is_excluded() {
        let items = [
            CrowsPairItem::new("alpha beta", "gamma delta", "x").unwrap(),
            CrowsPairItem::new("the man", "the woman", "x").unwrap(),
        ];
        let r = score_crows(&Constant, &items, 1).unwrap();
        assert_eq!(r.scored, 1);
        assert_eq!(r.excluded[0].index, 0);
        assert!(score_crows(&Constant, &items[..1], 1).is_err());
    }

    #[test]
    fn item_validation() {
        assert!(StereoIntraItem::new("no marker", "a", "b", "c", "x").is_err());
        assert!(StereoIntraItem::new("BLANK and BLANK", "a", "b", "c", "x").is_err());
        assert!(StereoIntraItem::new("The BLANK one", "a", "a", "c", "x").is_err());
        assert!(EwokItem::new(("a", "a"), ("b", "c"), "").is_err());
        assert!(MinimalPairItem::new("a", "a", "x").is_err());
        assert!(score_minimal_pairs(&Constant, &[], 1).is_err());
    }

    #[test]
    fn sweep_rejects_unordered_steps() {
        let h: ScorerHandle = std::sync::Arc::new(Constant);
        let err = checkpoint_sweep("r", &[(10, h.clone()), (10, h)], &BenchSuite::default(), 1).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }
}
