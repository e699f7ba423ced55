//! Python bindings for `corpusbias_core`.
//!
//! Structured results (reports, tables) come back as plain dicts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use corpusbias_core::analysis;
use corpusbias_core::audit::{self, LexiconToxicity};
use corpusbias_core::bench::{self, CrowsPairItem, EwokItem, MinimalPairItem, StereoIntraItem};
use corpusbias_core::corpus::{self, Format};
use corpusbias_core::intervene::{self, WordPairTable};
use corpusbias_core::lexicon::Lexicon;
use corpusbias_core::projection::{self, EmbeddingMatrix, InlpConfig, SubspaceSize};
use corpusbias_core::scorer::{self, NGramConfig, NGramModel, Scorer};
use corpusbias_core::Error;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Utf8 { .. } => PyIOError::new_err(e.to_string()),
        Error::External { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Converts a serializable value into Python objects through JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let raw = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (raw,))?.unbind())
}

fn format_arg(format: Option<&str>, path: &std::path::Path) -> PyResult<Format> {
    match format {
        Some(f) => f.parse().map_err(err),
        None => Ok(Format::from_path(path)),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn embeddings(rows: &[Vec<f64>], labels: Option<Vec<i64>>) -> PyResult<EmbeddingMatrix> {
    EmbeddingMatrix::from_rows(rows, labels).map_err(err)
}

/// A sentence-segmented corpus with per-sentence flags and provenance.
#[pyclass(name = "Corpus", module = "corpusbias", frozen)]
struct PyCorpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Segments each string into sentences; every string is one document.
    #[new]
    #[pyo3(signature = (documents, name = "corpus"))]
    fn new(documents: Vec<String>, name: &str) -> Self {
        let inner = corpus::Corpus::from_documents(
            name,
            documents.iter().enumerate().map(|(i, d)| (i as u64, d.as_str())),
        );
        Self { inner }
    }

    #[staticmethod]
    #[pyo3(signature = (path, format = None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let format = format_arg(format, &path)?;
        Ok(Self {
            inner: corpus::load_corpus(&path, format).map_err(err)?,
        })
    }

    #[pyo3(signature = (path, format = None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let format = format_arg(format, &path)?;
        corpus::write_corpus(&self.inner, &path, format).map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    fn sentences(&self) -> Vec<String> {
        self.inner.sentences().iter().map(|s| s.text().to_owned()).collect()
    }

    fn tokens(&self) -> Vec<Vec<String>> {
        self.inner.sentences().iter().map(|s| s.tokens().to_vec()).collect()
    }

    /// Indices of sentences flagged toxic or hateful.
    fn flagged(&self) -> Vec<usize> {
        self.inner
            .sentences()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.flags.is_flagged())
            .map(|(i, _)| i)
            .collect()
    }

    /// Intervention manifests applied so far, oldest first.
    fn provenance(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.provenance)
    }

    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &corpus::corpus_summary(&self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Corpus(name={:?}, sentences={})", self.inner.name, self.inner.len())
    }
}

#[pyfunction]
fn fkgl(avg_sentence_length: f64, avg_syllables_per_word: f64) -> f64 {
    audit::fkgl(avg_sentence_length, avg_syllables_per_word)
}

#[pyfunction]
fn structural_stats(py: Python<'_>, corpus: &PyCorpus) -> PyResult<Py<PyAny>> {
    to_py(py, &audit::structural_stats(&corpus.inner).map_err(err)?)
}

/// Percent of word tokens per lexicon category and subcategory.
#[pyfunction]
fn keyword_frequency(
    py: Python<'_>,
    corpus: &PyCorpus,
    lexicon: BTreeMap<String, BTreeMap<String, Vec<String>>>,
) -> PyResult<Py<PyAny>> {
    let lexicon = Lexicon::new(lexicon).map_err(err)?;
    to_py(py, &audit::keyword_frequency(&corpus.inner, &lexicon).map_err(err)?)
}

/// Flags sentences with the bundled toxic and hate word lists. Returns the
/// rates and the annotated corpus.
#[pyfunction]
#[pyo3(signature = (corpus, threshold = 0.5))]
fn toxicity_rates(py: Python<'_>, corpus: &PyCorpus, threshold: f64) -> PyResult<(Py<PyAny>, PyCorpus)> {
    let (rates, inner) = audit::toxicity_rates(
        &corpus.inner,
        &LexiconToxicity::toxic(),
        &LexiconToxicity::hate(),
        threshold,
        None,
    )
    .map_err(err)?;
    Ok((to_py(py, &rates)?, PyCorpus { inner }))
}

fn pair_table(pairs: Option<Vec<(String, String)>>) -> PyResult<WordPairTable> {
    match pairs {
        Some(p) => WordPairTable::new(p, Vec::new()).map_err(err),
        None => Ok(WordPairTable::default_gender()),
    }
}

/// Appends a swapped copy after every sentence that contains a table term.
/// Uses the bundled gender table when `pairs` is omitted.
#[pyfunction]
#[pyo3(signature = (corpus, pairs = None))]
fn cda_augment(corpus: &PyCorpus, pairs: Option<Vec<(String, String)>>) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: intervene::cda_augment(&corpus.inner, &pair_table(pairs)?),
    })
}

/// Replaces every sentence that contains a table term with its swap.
#[pyfunction]
#[pyo3(signature = (corpus, pairs = None))]
fn cds_substitute(corpus: &PyCorpus, pairs: Option<Vec<(String, String)>>) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: intervene::cds_substitute(&corpus.inner, &pair_table(pairs)?),
    })
}

#[pyfunction]
fn duplicate_random(corpus: &PyCorpus, n: usize, seed: u64) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: intervene::duplicate_random(&corpus.inner, n, seed).map_err(err)?,
    })
}

#[pyfunction]
fn remove_toxic(corpus: &PyCorpus) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: intervene::remove_toxic(&corpus.inner).map_err(err)?,
    })
}

#[pyfunction]
fn remove_random(corpus: &PyCorpus, n: usize, seed: u64) -> PyResult<PyCorpus> {
    Ok(PyCorpus {
        inner: intervene::remove_random(&corpus.inner, n, seed).map_err(err)?,
    })
}

/// Add-k smoothed n-gram language model.
#[pyclass(name = "NGramScorer", module = "corpusbias", frozen)]
struct PyNGram {
    inner: NGramModel,
}

#[pymethods]
impl PyNGram {
    #[new]
    #[pyo3(signature = (corpus, order = 3, smoothing_k = 0.5, min_count = 2))]
    fn new(corpus: &PyCorpus, order: usize, smoothing_k: f64, min_count: u64) -> PyResult<Self> {
        let config = NGramConfig {
            order,
            smoothing_k,
            min_count,
        };
        Ok(Self {
            inner: scorer::train_ngram(&corpus.inner, config).map_err(err)?,
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn vocabulary_size(&self) -> usize {
        self.inner.vocabulary_size()
    }

    /// Total and mean natural-log probability of a sentence.
    fn sequence_logprob(&self, sentence: &str) -> PyResult<(f64, f64)> {
        let s = self.inner.sequence_logprob(&corpusbias_core::text::tokenize(sentence)).map_err(err)?;
        Ok((s.total, s.mean))
    }

    fn token_logprobs(&self, sentence: &str) -> Vec<f64> {
        self.inner.token_logprobs(&corpusbias_core::text::tokenize(sentence))
    }
}

/// `items` are (good, bad, category) triples.
#[pyfunction]
#[pyo3(signature = (scorer, items, concurrency = 1))]
fn score_minimal_pairs(
    py: Python<'_>,
    scorer: &PyNGram,
    items: Vec<(String, String, String)>,
    concurrency: usize,
) -> PyResult<Py<PyAny>> {
    let items: Vec<MinimalPairItem> = items
        .into_iter()
        .map(|(g, b, c)| MinimalPairItem::new(g, b, c))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    to_py(py, &bench::score_minimal_pairs(&scorer.inner, &items, concurrency).map_err(err)?)
}

/// `items` are (more stereotypical, less stereotypical, bias type) triples.
#[pyfunction]
#[pyo3(signature = (scorer, items, concurrency = 1))]
fn score_crows(
    py: Python<'_>,
    scorer: &PyNGram,
    items: Vec<(String, String, String)>,
    concurrency: usize,
) -> PyResult<Py<PyAny>> {
    let items: Vec<CrowsPairItem> = items
        .into_iter()
        .map(|(s, a, b)| CrowsPairItem::new(s, a, b))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    to_py(py, &bench::score_crows(&scorer.inner, &items, concurrency).map_err(err)?)
}

/// `items` are (context with BLANK, stereotype, anti-stereotype, unrelated,
/// bias type) tuples.
#[pyfunction]
#[pyo3(signature = (scorer, items, concurrency = 1))]
fn score_stereoset_intra(
    py: Python<'_>,
    scorer: &PyNGram,
    items: Vec<(String, String, String, String, String)>,
    concurrency: usize,
) -> PyResult<Py<PyAny>> {
    let items: Vec<StereoIntraItem> = items
        .into_iter()
        .map(|(c, s, a, u, b)| StereoIntraItem::new(c, s, a, u, b))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    to_py(py, &bench::score_stereoset_intra(&scorer.inner, &items, concurrency).map_err(err)?)
}

type EwokTuple = ((String, String), (String, String), String);

/// `items` are ((context1, context2), (target1, target2), domain) tuples.
#[pyfunction]
#[pyo3(signature = (scorer, items, concurrency = 1))]
fn score_ewok(
    py: Python<'_>,
    scorer: &PyNGram,
    items: Vec<EwokTuple>,
    concurrency: usize,
) -> PyResult<Py<PyAny>> {
    let items: Vec<EwokItem> = items
        .into_iter()
        .map(|(c, t, d)| EwokItem::new(c, t, d))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    to_py(py, &bench::score_ewok(&scorer.inner, &items, concurrency).map_err(err)?)
}

/// Orthogonal projection removing a set of directions.
#[pyclass(name = "Projection", module = "corpusbias", frozen)]
struct PyProjection {
    inner: projection::Projection,
    accuracies: Vec<f64>,
}

#[pymethods]
impl PyProjection {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn idempotence_error(&self) -> f64 {
        self.inner.idempotence_error()
    }

    /// Probe accuracy before each removal round, then the final accuracy.
    #[getter]
    fn accuracies(&self) -> Vec<f64> {
        self.accuracies.clone()
    }

    fn removed_directions(&self) -> Vec<Vec<f64>> {
        self.inner.removed_directions().iter().map(|v| v.iter().copied().collect()).collect()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.inner.matrix();
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn apply(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = projection::apply_projection(&self.inner, &embeddings(&rows, None)?).map_err(err)?;
        Ok(out.to_rows())
    }
}

/// Iterative nullspace projection against a linear probe for `labels`.
#[pyfunction]
#[pyo3(signature = (rows, labels, max_rounds = 35, stop_margin = 0.02))]
fn inlp_fit(rows: Vec<Vec<f64>>, labels: Vec<i64>, max_rounds: usize, stop_margin: f64) -> PyResult<PyProjection> {
    let data = embeddings(&rows, Some(labels))?;
    let result = projection::inlp_fit(&data, InlpConfig { max_rounds, stop_margin }).map_err(err)?;
    Ok(PyProjection {
        inner: result.projection,
        accuracies: result.accuracies,
    })
}

/// Bias subspace from counterfactual embedding pairs.
#[pyclass(name = "BiasSubspace", module = "corpusbias", frozen)]
struct PyBiasSubspace {
    inner: projection::BiasSubspace,
}

#[pymethods]
impl PyBiasSubspace {
    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.inner.components.iter().map(|v| v.iter().copied().collect()).collect()
    }

    #[getter]
    fn explained_variance(&self) -> Vec<f64> {
        self.inner.explained_variance.clone()
    }

    fn apply(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = projection::sentdebias_apply(&self.inner, &embeddings(&rows, None)?).map_err(err)?;
        Ok(out.to_rows())
    }
}

/// Sent-Debias over embedding pairs. Give either `components` or
/// `variance` (cumulative explained-variance threshold, default 0.5).
#[pyfunction]
#[pyo3(signature = (pairs, components = None, variance = None))]
fn sentdebias_fit(
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    components: Option<usize>,
    variance: Option<f64>,
) -> PyResult<PyBiasSubspace> {
    let size = match (components, variance) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give components or variance, not both")),
        (Some(k), None) => SubspaceSize::Components(k),
        (None, Some(v)) => SubspaceSize::Variance(v),
        (None, None) => SubspaceSize::default(),
    };
    let pairs: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| (DVector::from_vec(a), DVector::from_vec(b)))
        .collect();
    Ok(PyBiasSubspace {
        inner: projection::sentdebias_fit_vectors(&pairs, size).map_err(err)?,
    })
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    analysis::pearson(&x, &y).map_err(err)
}

/// First canonical correlation between two row-aligned matrices.
#[pyfunction]
#[pyo3(signature = (x, y, ridge = None))]
fn cca_first(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, ridge: Option<f64>) -> PyResult<f64> {
    analysis::cca_first(&matrix(&x)?, &matrix(&y)?, ridge).map_err(err)
}

#[pymodule]
pub fn corpusbias(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyNGram>()?;
    m.add_class::<PyProjection>()?;
    m.add_class::<PyBiasSubspace>()?;
    m.add_function(wrap_pyfunction!(fkgl, m)?)?;
    m.add_function(wrap_pyfunction!(structural_stats, m)?)?;
    m.add_function(wrap_pyfunction!(keyword_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(toxicity_rates, m)?)?;
    m.add_function(wrap_pyfunction!(cda_augment, m)?)?;
    m.add_function(wrap_pyfunction!(cds_substitute, m)?)?;
    m.add_function(wrap_pyfunction!(duplicate_random, m)?)?;
    m.add_function(wrap_pyfunction!(remove_toxic, m)?)?;
    m.add_function(wrap_pyfunction!(remove_random, m)?)?;
    m.add_function(wrap_pyfunction!(score_minimal_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(score_crows, m)?)?;
    m.add_function(wrap_pyfunction!(score_stereoset_intra, m)?)?;
    m.add_function(wrap_pyfunction!(score_ewok, m)?)?;
    m.add_function(wrap_pyfunction!(inlp_fit, m)?)?;
    m.add_function(wrap_pyfunction!(sentdebias_fit, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(cca_first, m)?)?;
    Ok(())
}
