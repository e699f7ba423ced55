//! Corpus statistics that can instigate model bias: keyword representation,
//! readability and structure, emotion and sentiment, toxicity, and
//! first-order coherence.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{Corpus, Flags, Sentiment};
use crate::error::{Error, Result};
use crate::lexicon::{EmotionLexicon, Lexicon, EKMAN_EMOTIONS};
use crate::manifest::{Counts, InterventionManifest};
use crate::scorer::Embedder;
use crate::text;

pub type CategoryTable<T> = BTreeMap<String, BTreeMap<String, T>>;

/// Percentage of all corpus tokens covered by each subcategory's terms.
///
/// Matching is case-insensitive over token runs, longest term first, left to
/// right, so one token is credited to at most one subcategory per category.
pub fn keyword_frequency(corpus: &Corpus, lexicon: &Lexicon) -> Result<CategoryTable<f64>> {
    let total = corpus.token_count();
    if total == 0 {
        return Err(Error::Empty("no tokens"));
    }
    let mut out = CategoryTable::new();
    for (cat, subs) in lexicon.categories() {
        let matcher = lexicon.matcher(cat).expect("category exists");
        let mut counts: BTreeMap<String, usize> = subs.keys().map(|s| (s.clone(), 0)).collect();
        for s in corpus.sentences() {
            for (_, len, sub) in matcher.find_all(s.lower_tokens()) {
                *counts.get_mut(sub).expect("label is a subcategory") += len;
            }
        }
        out.insert(
            cat.to_owned(),
            counts
                .into_iter()
                .map(|(sub, c)| (sub, 100.0 * c as f64 / total as f64))
                .collect(),
        );
    }
    Ok(out)
}

/// Flesch–Kincaid grade level from average sentence length (words per
/// sentence) and average syllables per word.
pub fn fkgl(avg_sentence_length: f64, avg_syllables_per_word: f64) -> f64 {
    0.39 * avg_sentence_length + 11.8 * avg_syllables_per_word - 15.59
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralStats {
    pub avg_syllables_per_word: f64,
    pub avg_word_length: f64,
    pub avg_sentence_length: f64,
    pub fkgl: f64,
    pub ttr: f64,
    pub pronoun_noun_ratio: f64,
}

/// Readability and lexical statistics over word tokens (tokens with at least
/// one letter or digit; bare punctuation is skipped).
///
/// The pronoun/noun ratio approximates the noun count by content words: word
/// tokens that are neither pronouns nor on the function-word list.
pub fn structural_stats(corpus: &Corpus) -> Result<StructuralStats> {
    let pronouns = text::pronouns();
    let function = text::function_words();
    let mut words = 0usize;
    let mut syllables = 0usize;
    let mut chars = 0usize;
    let mut pronoun_count = 0usize;
    let mut content_count = 0usize;
    let mut types: HashSet<&str> = HashSet::new();
    for s in corpus.sentences() {
        for (tok, lower) in s.tokens().iter().zip(s.lower_tokens()) {
            if !text::is_word(tok) {
                continue;
            }
            words += 1;
            syllables += text::count_syllables(tok);
            chars += tok.chars().count();
            types.insert(lower);
            if pronouns.contains(lower.as_str()) {
                pronoun_count += 1;
            } else if !function.contains(lower.as_str()) {
                content_count += 1;
            }
        }
    }
    if words == 0 {
        return Err(Error::Empty("no tokens"));
    }
    let asl = words as f64 / corpus.len() as f64;
    let asw = syllables as f64 / words as f64;
    Ok(StructuralStats {
        avg_syllables_per_word: asw,
        avg_word_length: chars as f64 / words as f64,
        avg_sentence_length: asl,
        fkgl: fkgl(asl, asw),
        ttr: types.len() as f64 / words as f64,
        pronoun_noun_ratio: if content_count == 0 {
            0.0
        } else {
            pronoun_count as f64 / content_count as f64
        },
    })
}

/// Share of lexicon-eligible tokens associated with each emotion.
///
/// Eligible tokens are the corpus word tokens found anywhere in the
/// lexicon's vocabulary. A token tagged with several emotions counts toward
/// each of them.
pub fn emotion_scores(corpus: &Corpus, lexicon: &EmotionLexicon) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = lexicon
        .emotions()
        .chain(EKMAN_EMOTIONS)
        .map(|e| (e.to_owned(), 0))
        .collect();
    let missing: Vec<&str> = EKMAN_EMOTIONS
        .iter()
        .copied()
        .filter(|e| !lexicon.emotions().any(|x| x == *e))
        .collect();
    if !missing.is_empty() {
        log::warn!("emotion lexicon lacks {}", missing.join(", "));
    }
    let mut eligible = 0usize;
    for s in corpus.sentences() {
        for t in s.lower_tokens() {
            if let Some(tags) = lexicon.tags(t) {
                eligible += 1;
                for e in tags {
                    *counts.get_mut(e).expect("all emotions pre-seeded") += 1;
                }
            }
        }
    }
    if eligible == 0 {
        log::warn!("no emotion-lexicon words in corpus; all emotion scores are 0");
    }
    counts
        .into_iter()
        .map(|(e, c)| {
            let score = if eligible == 0 { 0.0 } else { c as f64 / eligible as f64 };
            (e, score)
        })
        .collect()
}

pub trait SentimentClassifier: Send + Sync {
    fn labels(&self, sentences: &[&str]) -> Result<Vec<Sentiment>>;
}

pub trait ProbabilityClassifier: Send + Sync {
    /// Probability of the positive class per sentence, each in `[0, 1]`.
    fn scores(&self, sentences: &[&str]) -> Result<Vec<f64>>;
}

/// Offline sentiment fallback: counts positive and negative words and calls
/// the sentence neutral unless one side leads by at least two.
#[derive(Debug, Clone)]
pub struct LexiconSentiment {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Default for LexiconSentiment {
    fn default() -> Self {
        Self {
            positive: text::bundled_list(include_str!("../data/positive_words.txt")),
            negative: text::bundled_list(include_str!("../data/negative_words.txt")),
        }
    }
}

impl LexiconSentiment {
    pub fn new(positive: HashSet<String>, negative: HashSet<String>) -> Self {
        Self { positive, negative }
    }

    pub fn label(&self, sentence: &str) -> Sentiment {
        let (mut pos, mut neg) = (0i64, 0i64);
        for t in text::tokenize(sentence) {
            let t = t.to_lowercase();
            pos += i64::from(self.positive.contains(&t));
            neg += i64::from(self.negative.contains(&t));
        }
        match pos - neg {
            d if d > 1 => Sentiment::Pos,
            d if d < -1 => Sentiment::Neg,
            _ => Sentiment::Neu,
        }
    }
}

impl SentimentClassifier for LexiconSentiment {
    fn labels(&self, sentences: &[&str]) -> Result<Vec<Sentiment>> {
        Ok(sentences.iter().map(|s| self.label(s)).collect())
    }
}

/// Offline toxicity fallback: probability 1 when any listed word occurs,
/// otherwise 0.
#[derive(Debug, Clone)]
pub struct LexiconToxicity {
    words: HashSet<String>,
}

impl LexiconToxicity {
    pub fn new(words: HashSet<String>) -> Self {
        Self { words }
    }

    pub fn toxic() -> Self {
        Self::new(text::bundled_list(include_str!("../data/toxic_words.txt")))
    }

    pub fn hate() -> Self {
        Self::new(text::bundled_list(include_str!("../data/hate_words.txt")))
    }

    pub fn probability(&self, sentence: &str) -> f64 {
        let hit = text::tokenize(sentence)
            .iter()
            .any(|t| self.words.contains(&t.to_lowercase()));
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

impl ProbabilityClassifier for LexiconToxicity {
    fn scores(&self, sentences: &[&str]) -> Result<Vec<f64>> {
        Ok(sentences.iter().map(|s| self.probability(s)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    pub pos_pct: f64,
    pub neu_pct: f64,
    pub neg_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub distribution: SentimentDistribution,
    /// Positive minus negative percentage over sentences mentioning the
    /// topic; `None` when no sentence does.
    pub stance: CategoryTable<Option<f64>>,
}

const BATCH: usize = 32;

fn classify_labels(classifier: &dyn SentimentClassifier, corpus: &Corpus) -> Vec<Sentiment> {
    let mut out = Vec::with_capacity(corpus.len());
    for batch in corpus.sentences().chunks(BATCH) {
        let texts: Vec<&str> = batch.iter().map(|s| s.text()).collect();
        match classifier.labels(&texts) {
            Ok(labels) => out.extend(labels),
            Err(_) => {
                for s in batch {
                    out.push(classifier.labels(&[s.text()]).map(|mut l| l.remove(0)).unwrap_or_else(|e| {
                        log::warn!("sentence {}: sentiment classification failed ({e}); counted neutral", s.id());
                        Sentiment::Neu
                    }));
                }
            }
        }
    }
    out
}

/// Labels every sentence and reports the label distribution plus the stance
/// toward each topic of `topics`. Sentences the classifier fails on count as
/// neutral. Returns the corpus with sentiment annotations filled in.
pub fn sentiment_analysis(
    corpus: &Corpus,
    classifier: &dyn SentimentClassifier,
    topics: &Lexicon,
) -> (SentimentReport, Corpus) {
    let labels = classify_labels(classifier, corpus);
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let count = |want: Sentiment, idx: &mut dyn Iterator<Item = usize>| idx.filter(|&i| labels[i] == want).count();

    let n = labels.len();
    let distribution = SentimentDistribution {
        pos_pct: pct(count(Sentiment::Pos, &mut (0..n)), n),
        neu_pct: pct(count(Sentiment::Neu, &mut (0..n)), n),
        neg_pct: pct(count(Sentiment::Neg, &mut (0..n)), n),
    };

    let mut stance = CategoryTable::new();
    for (cat, subs) in topics.categories() {
        let matcher = topics.matcher(cat).expect("category exists");
        let mut members: BTreeMap<&str, Vec<usize>> = subs.keys().map(|s| (s.as_str(), Vec::new())).collect();
        for (i, s) in corpus.sentences().iter().enumerate() {
            let hit: HashSet<&str> = matcher.find_all(s.lower_tokens()).into_iter().map(|(_, _, l)| l).collect();
            for sub in hit {
                members.get_mut(sub).expect("label is a subcategory").push(i);
            }
        }
        let row = members
            .into_iter()
            .map(|(sub, idx)| {
                let value = (!idx.is_empty()).then(|| {
                    pct(count(Sentiment::Pos, &mut idx.iter().copied()), idx.len())
                        - pct(count(Sentiment::Neg, &mut idx.iter().copied()), idx.len())
                });
                (sub.to_owned(), value)
            })
            .collect();
        stance.insert(cat.to_owned(), row);
    }

    let sentences = corpus
        .sentences()
        .iter()
        .zip(&labels)
        .map(|(s, l)| {
            let flags = Flags {
                sentiment: Some(*l),
                ..s.flags
            };
            s.clone().with_flags(flags)
        })
        .collect();
    let mut entry = InterventionManifest::new("sentiment_annotate", serde_json::Value::Null);
    entry.counts = Counts {
        input_sentences: n,
        output_sentences: n,
        modified: 0,
        discarded: 0,
    };
    (SentimentReport { distribution, stance }, corpus.derive(sentences, entry))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToxicityRates {
    pub toxic_pct: f64,
    pub hate_pct: f64,
    /// Sentences flagged toxic or hateful.
    pub flagged_pct: f64,
}

/// Flags sentences whose toxicity or hate probability reaches `threshold`
/// and returns the rates with the annotated corpus.
///
/// With a checkpoint path, per-sentence probabilities are appended as they
/// arrive; a failure aborts with an error naming the checkpoint, and a rerun
/// with the same path only classifies the remaining sentences.
pub fn toxicity_rates(
    corpus: &Corpus,
    toxicity: &dyn ProbabilityClassifier,
    hate: &dyn ProbabilityClassifier,
    threshold: f64,
    checkpoint: Option<&Path>,
) -> Result<(ToxicityRates, Corpus)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut ck: Checkpoint<[f64; 2]> = Checkpoint::open_or_ephemeral(checkpoint)?;
    for batch in corpus.sentences().chunks(BATCH) {
        let todo: Vec<_> = batch.iter().filter(|s| ck.get(s.id()).is_none()).collect();
        if todo.is_empty() {
            continue;
        }
        let texts: Vec<&str> = todo.iter().map(|s| s.text()).collect();
        let tox = toxicity.scores(&texts).map_err(|e| ck.abort(e))?;
        let hat = hate.scores(&texts).map_err(|e| ck.abort(e))?;
        if tox.len() != texts.len() || hat.len() != texts.len() {
            return Err(ck.abort(Error::external("classifier", "result count does not match request")));
        }
        for ((s, t), h) in todo.iter().zip(tox).zip(hat) {
            ck.record(s.id(), [t, h])?;
        }
    }

    let mut toxic = 0usize;
    let mut hateful = 0usize;
    let mut either = 0usize;
    let sentences: Vec<_> = corpus
        .sentences()
        .iter()
        .map(|s| {
            let [t, h] = *ck.get(s.id()).expect("every sentence scored");
            let flags = Flags {
                toxic: Some(t >= threshold),
                hate: Some(h >= threshold),
                ..s.flags
            };
            toxic += usize::from(t >= threshold);
            hateful += usize::from(h >= threshold);
            either += usize::from(flags.is_flagged());
            s.clone().with_flags(flags)
        })
        .collect();
    let n = corpus.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let rates = ToxicityRates {
        toxic_pct: pct(toxic),
        hate_pct: pct(hateful),
        flagged_pct: pct(either),
    };
    let mut entry = InterventionManifest::new("toxicity_annotate", serde_json::json!({ "threshold": threshold }));
    entry.counts = Counts {
        input_sentences: n,
        output_sentences: n,
        modified: either,
        discarded: 0,
    };
    entry.metrics.insert("toxic_pct".into(), rates.toxic_pct);
    entry.metrics.insert("hate_pct".into(), rates.hate_pct);
    Ok((rates, corpus.derive(sentences, entry)))
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine similarity between consecutive sentences of each document,
/// pooled over all pairs (documents weighted by their pair count).
pub fn first_order_coherence(corpus: &Corpus, embedder: &dyn Embedder) -> Result<f64> {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for doc in corpus.documents() {
        if doc.len() < 2 {
            continue;
        }
        let texts: Vec<&str> = doc.iter().map(|s| s.text()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        for w in vectors.windows(2) {
            sum += cosine(&w[0], &w[1]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Empty("no consecutive sentence pairs to compare"));
    }
    Ok(sum / pairs as f64)
}

/// Everything the audit pipeline measures about one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub corpus: crate::corpus::CorpusSummary,
    pub keyword_pct: CategoryTable<f64>,
    pub structural: StructuralStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emotion: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<SentimentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toxicity: Option<ToxicityRates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::HashedEmbedder;

    fn lex(json: &str) -> Lexicon {
        Lexicon::from_json_str(json).unwrap()
    }

    #[test]
    fn keyword_hand_count() {
        let corpus = Corpus::from_sentences("c", 0, &["he he she"]);
        let table = keyword_frequency(&corpus, &lex(r#"{"gender": {"male": ["he"], "female": ["she"]}}"#)).unwrap();
        assert!((table["gender"]["male"] - 200.0 / 3.0).abs() < 1e-12);
        assert!((table["gender"]["female"] - 100.0 / 3.0).abs() < 1e-12);

        let table = keyword_frequency(&corpus, &lex(r#"{"g": {"x": ["absent"]}}"#)).unwrap();
        assert_eq!(table["g"]["x"], 0.0);
        assert!(keyword_frequency(&Corpus::new("e"), &lex(r#"{"g": {"x": ["a"]}}"#)).is_err());
    }

    #[test]
    fn keyword_matching_is_case_insensitive() {
        let corpus = Corpus::from_sentences("c", 0, &["He said HE"]);
        let table = keyword_frequency(&corpus, &lex(r#"{"g": {"m": ["he"]}}"#)).unwrap();
        assert!((table["g"]["m"] - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fkgl_matches_reference_rows() {
        assert!((fkgl(19.84, 1.38) - 8.43).abs() < 0.005);
        assert!((fkgl(15.91, 1.25) - 5.40).abs() <= 0.05);
    }

    #[test]
    fn ttr_hand_count() {
        let stats = structural_stats(&Corpus::from_sentences("c", 0, &["a a a"])).unwrap();
        assert!((stats.ttr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(stats.avg_sentence_length, 3.0);
        assert!(structural_stats(&Corpus::new("e")).is_err());
    }

    #[test]
    fn fkgl_is_consistent_with_components() {
        let corpus = Corpus::from_sentences("c", 0, &["The quick brown fox jumps.", "Over the lazy dog again and again."]);
        let s = structural_stats(&corpus).unwrap();
        assert!((s.fkgl - fkgl(s.avg_sentence_length, s.avg_syllables_per_word)).abs() < 1e-12);
    }

    #[test]
    fn emotion_hand_count() {
        let corpus = Corpus::from_sentences("c", 0, &["happy happy sad"]);
        let lexicon = EmotionLexicon::from_lists([("joy", vec!["happy"]), ("sadness", vec!["sad"])]);
        let scores = emotion_scores(&corpus, &lexicon);
        assert!((scores["joy"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((scores["sadness"] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(scores["fear"], 0.0);

        let none = emotion_scores(&Corpus::from_sentences("c", 0, &["table chair"]), &lexicon);
        assert!(none.values().all(|v| *v == 0.0));
    }

    #[test]
    fn multi_tagged_word_counts_for_each_emotion() {
        let corpus = Corpus::from_sentences("c", 0, &["surprise"]);
        let lexicon = EmotionLexicon::from_lists([("joy", vec!["surprise"]), ("surprise", vec!["surprise"])]);
        let scores = emotion_scores(&corpus, &lexicon);
        assert_eq!(scores["joy"], 1.0);
        assert_eq!(scores["surprise"], 1.0);
    }

    struct Fixed(Vec<Sentiment>);

    impl SentimentClassifier for Fixed {
        fn labels(&self, sentences: &[&str]) -> Result<Vec<Sentiment>> {
            Ok(sentences
                .iter()
                .map(|s| self.0[s.trim_end_matches('.').parse::<usize>().unwrap()])
                .collect())
        }
    }

    #[test]
    fn sentiment_distribution_and_stance() {
        use Sentiment::*;
        let labels = vec![Pos, Pos, Pos, Pos, Neg, Neg, Neg, Neg, Neu, Neu];
        let texts: Vec<String> = (0..10).map(|i| format!("{i}.")).collect();
        let corpus = Corpus::from_sentences("c", 0, &texts);
        let topics = lex(r#"{"t": {"all": ["."], "none": ["zzz"], "first": ["0", "1"]}}"#);
        let (report, annotated) = sentiment_analysis(&corpus, &Fixed(labels), &topics);
        assert_eq!(report.distribution, SentimentDistribution { pos_pct: 40.0, neu_pct: 20.0, neg_pct: 40.0 });
        assert_eq!(report.stance["t"]["all"], Some(0.0));
        assert_eq!(report.stance["t"]["none"], None);
        assert_eq!(report.stance["t"]["first"], Some(100.0));
        assert_eq!(annotated.sentences()[4].flags.sentiment, Some(Neg));
    }

    struct Failing;

    impl SentimentClassifier for Failing {
        fn labels(&self, _: &[&str]) -> Result<Vec<Sentiment>> {
            Err(Error::external("test", "down"))
        }
    }

    #[test]
    fn classifier_failure_counts_neutral() {
        let corpus = Corpus::from_sentences("c", 0, &["a.", "b."]);
        let (report, _) = sentiment_analysis(&corpus, &Failing, &lex(r#"{"t": {"x": ["a"]}}"#));
        assert_eq!(report.distribution.neu_pct, 100.0);
    }

    #[test]
    fn lexicon_sentiment_needs_margin_of_two() {
        let l = LexiconSentiment::default();
        assert_eq!(l.label("I am happy."), Sentiment::Neu);
        assert_eq!(l.label("A happy and lovely day."), Sentiment::Pos);
        assert_eq!(l.label("A sad and awful day."), Sentiment::Neg);
    }

    #[test]
    fn toxicity_thresholds() {
        let corpus = Corpus::from_sentences("c", 0, &["You are an idiot.", "What a nice day.", "Such vermin."]);
        let tox = LexiconToxicity::toxic();
        let hate = LexiconToxicity::hate();
        let (rates, flagged) = toxicity_rates(&corpus, &tox, &hate, 0.5, None).unwrap();
        assert!((rates.toxic_pct - 100.0 / 3.0).abs() < 1e-12);
        assert!((rates.hate_pct - 100.0 / 3.0).abs() < 1e-12);
        assert!((rates.flagged_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(flagged.sentences()[0].flags.toxic, Some(true));
        assert_eq!(flagged.sentences()[1].flags.toxic, Some(false));

        let (all, _) = toxicity_rates(&corpus, &tox, &hate, 0.0, None).unwrap();
        assert_eq!(all.toxic_pct, 100.0);
        assert!(toxicity_rates(&corpus, &tox, &hate, 1.5, None).is_err());

        let benign = Corpus::from_sentences("c", 0, &["The cat sat.", "We played ball."]);
        assert_eq!(toxicity_rates(&benign, &tox, &hate, 0.5, None).unwrap().0.flagged_pct, 0.0);
    }

    #[test]
    fn coherence_bounds() {
        let e = HashedEmbedder::default();
        let same = Corpus::from_sentences("c", 0, &["the cat sat", "the cat sat", "the cat sat"]);
        assert!((first_order_coherence(&same, &e).unwrap() - 1.0).abs() < 1e-12);

        let single = Corpus::from_sentences("c", 0, &["only one"]);
        assert!(first_order_coherence(&single, &e).is_err());
    }

    #[test]
    fn orthogonal_sentences_have_zero_coherence() {
        let e = HashedEmbedder::default();
        let (a, b) = ("alpha", "omega");
        let va = e.embed_text(a).unwrap();
        let vb = e.embed_text(b).unwrap();
        assert_eq!(cosine(&va, &vb), 0.0, "choose words that hash to different buckets");
        let corpus = Corpus::from_sentences("c", 0, &[a, b]);
        assert_eq!(first_order_coherence(&corpus, &e).unwrap(), 0.0);
    }
}
