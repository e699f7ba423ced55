//! Linear probes, iterative nullspace projection and Sent-Debias subspace
//! removal over embedding matrices.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Embedder;

const MAGIC: &[u8; 8] = b"EMBMATv1";

/// `n × d` matrix of row vectors with optional integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: DMatrix<f64>,
    labels: Option<Vec<i64>>,
}

#[derive(Deserialize)]
struct JsonMatrix {
    rows: Vec<Vec<f64>>,
    #[serde(default)]
    labels: Option<Vec<i64>>,
}

impl EmbeddingMatrix {
    pub fn new(rows: DMatrix<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != rows.nrows() {
                return Err(Error::Dimension {
                    expected: rows.nrows(),
                    actual: l.len(),
                });
            }
            let mut classes = l.clone();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() < 2 {
                return Err(Error::InvalidInput("labels must contain at least two classes".into()));
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<i64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: bad.len(),
            });
        }
        let m = DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied());
        Self::new(m, labels)
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn with_rows(&self, rows: DMatrix<f64>) -> Self {
        Self {
            rows,
            labels: self.labels.clone(),
        }
    }

    /// Reads the binary format, or JSON `{"rows": [[..]], "labels": [..]}`
    /// when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let m: JsonMatrix = serde_json::from_str(&raw)?;
            return Self::from_rows(&m.rows, m.labels);
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::Parse {
            path: path.to_owned(),
            line: 0,
            message: msg,
        })
    }

    fn from_bytes(mut bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| "truncated header")?;
        if &magic != MAGIC {
            return Err("not an embedding matrix file".into());
        }
        let mut word = [0u8; 8];
        bytes.read_exact(&mut word).map_err(|_| "truncated header")?;
        let n = u64::from_le_bytes(word) as usize;
        bytes.read_exact(&mut word).map_err(|_| "truncated header")?;
        let d = u64::from_le_bytes(word) as usize;
        let expected = n.checked_mul(d).and_then(|x| x.checked_mul(8)).ok_or("size overflow")?;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes of data for {n}x{d}, found {}", bytes.len()));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        Ok(Self {
            rows: DMatrix::from_row_iterator(n, d, values),
            labels: None,
        })
    }

    /// Writes the binary format. Labels are not stored.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(24 + 8 * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for row in self.rows.row_iter() {
            for x in row.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    fn binary_labels(&self) -> Result<(Vec<f64>, i64)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("probe needs labelled rows".into()))?;
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "probe needs exactly two classes, found {}",
                classes.len()
            )));
        }
        Ok((labels.iter().map(|&l| f64::from(u8::from(l == classes[1]))).collect(), classes[1]))
    }
}

fn majority_rate(y: &[f64]) -> f64 {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    ones.max(y.len() - ones) as f64 / y.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// Unit normal of the decision boundary; zero when training never moved.
    pub direction: DVector<f64>,
    /// Offset for `direction`: class is positive when `direction·x + bias ≥ 0`.
    pub bias: f64,
    pub train_accuracy: f64,
    pub majority_rate: f64,
}

pub const PROBE_EPOCHS: usize = 500;
pub const PROBE_LEARNING_RATE: f64 = 0.1;
pub const PROBE_L2: f64 = 1e-4;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression by full-batch gradient descent from zero with
/// fixed hyperparameters.
pub fn fit_linear_probe(data: &EmbeddingMatrix) -> Result<LinearProbe> {
    let (y, _) = data.binary_labels()?;
    let x = data.rows();
    let n = x.nrows() as f64;
    let y = DVector::from_vec(y);
    let mut w = DVector::zeros(x.ncols());
    let mut b = 0.0;
    for _ in 0..PROBE_EPOCHS {
        let residual = (x * &w).add_scalar(b).map(sigmoid) - &y;
        let grad_w = x.tr_mul(&residual) / n + &w * PROBE_L2;
        let grad_b = residual.sum() / n;
        w -= grad_w * PROBE_LEARNING_RATE;
        b -= grad_b * PROBE_LEARNING_RATE;
    }
    let logits = (x * &w).add_scalar(b);
    let correct = logits.iter().zip(y.iter()).filter(|(z, t)| (**z >= 0.0) == (**t == 1.0)).count();
    let norm = w.norm();
    let (direction, bias) = if norm > 0.0 { (w / norm, b / norm) } else { (w, b) };
    Ok(LinearProbe {
        direction,
        bias,
        train_accuracy: correct as f64 / n,
        majority_rate: majority_rate(y.as_slice()),
    })
}

/// Orthogonal projection `P = I − BBᵀ` onto the complement of the removed
/// directions, which are kept orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: DMatrix<f64>,
    removed: Vec<DVector<f64>>,
}

const RESIDUAL_FLOOR: f64 = 1e-10;

/// Gram–Schmidt step (applied twice for stability); `None` if `v` lies in the
/// span of `basis`.
fn orthonormalize(v: &DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r -= q * c;
        }
    }
    let norm = r.norm();
    (norm >= RESIDUAL_FLOOR).then(|| r / norm)
}

impl Projection {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            removed: Vec::new(),
        }
    }

    /// Orthonormalizes `directions` in order, dropping any that are
    /// dependent on earlier ones.
    pub fn from_directions(d: usize, directions: &[DVector<f64>]) -> Result<Self> {
        let mut p = Self::identity(d);
        for v in directions {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: v.len(),
                });
            }
            p.remove(v);
        }
        Ok(p)
    }

    fn remove(&mut self, v: &DVector<f64>) -> bool {
        match orthonormalize(v, &self.removed) {
            Some(q) => {
                self.removed.push(q);
                self.rebuild();
                true
            }
            None => false,
        }
    }

    fn rebuild(&mut self) {
        let d = self.matrix.nrows();
        let mut m = DMatrix::identity(d, d);
        for q in &self.removed {
            m -= q * q.transpose();
        }
        self.matrix = m;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn removed_directions(&self) -> &[DVector<f64>] {
        &self.removed
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖P·P − P‖_max`.
    pub fn idempotence_error(&self) -> f64 {
        (&self.matrix * &self.matrix - &self.matrix).amax()
    }

    /// Numerical rank of `P` from its singular values.
    pub fn rank(&self) -> usize {
        self.matrix.singular_values().iter().filter(|&&s| s > 1e-8).count()
    }

    pub fn apply_vector(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut out = h.clone();
        for q in &self.removed {
            let c = q.dot(&out);
            out -= q * c;
        }
        out
    }
}

/// Maps every row through `p`.
pub fn apply_projection(p: &Projection, data: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if data.dim() != p.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            actual: data.dim(),
        });
    }
    let mut rows = data.rows().clone();
    for q in &p.removed {
        let coef = &rows * q;
        rows -= coef * q.transpose();
    }
    Ok(data.with_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InlpConfig {
    pub max_rounds: usize,
    pub stop_margin: f64,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            max_rounds: 35,
            stop_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlpResult {
    pub projection: Projection,
    /// Probe training accuracy before each round's removal, plus the final
    /// accuracy that stopped the loop.
    pub accuracies: Vec<f64>,
    pub majority_rate: f64,
}

/// Repeatedly trains a probe on the projected data and removes its direction
/// until the probe is within `stop_margin` of the majority rate, the round
/// budget is spent, or no dimensions remain.
pub fn inlp_fit(data: &EmbeddingMatrix, config: InlpConfig) -> Result<InlpResult> {
    if config.max_rounds == 0 {
        return Err(Error::InvalidInput("INLP needs max_rounds >= 1".into()));
    }
    let d = data.dim();
    let mut projection = Projection::identity(d);
    let mut accuracies = Vec::new();
    let majority = loop {
        let projected = apply_projection(&projection, data)?;
        let probe = fit_linear_probe(&projected)?;
        accuracies.push(probe.train_accuracy);
        if probe.train_accuracy <= probe.majority_rate + config.stop_margin {
            break probe.majority_rate;
        }
        if projection.removed.len() >= config.max_rounds {
            break probe.majority_rate;
        }
        if projection.removed.len() >= d {
            log::warn!("INLP removed all {d} dimensions");
            break probe.majority_rate;
        }
        if !projection.remove(&probe.direction) {
            log::warn!("INLP probe direction already removed; stopping");
            break probe.majority_rate;
        }
    };
    Ok(InlpResult {
        projection,
        accuracies,
        majority_rate: majority,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSubspace {
    pub components: Vec<DVector<f64>>,
    /// Share of total variance per component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl BiasSubspace {
    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, DVector::len)
    }

    pub fn apply_vector(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut out = h.clone();
        for v in &self.components {
            out -= v * v.dot(h);
        }
        out
    }
}

/// How many principal components Sent-Debias keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceSize {
    Components(usize),
    /// Smallest k whose cumulative explained variance reaches the threshold.
    Variance(f64),
}

impl Default for SubspaceSize {
    fn default() -> Self {
        SubspaceSize::Variance(0.5)
    }
}

pub const MAX_COMPONENTS: usize = 20;

/// PCA over pair-centered embedding pairs. Pairs with identical vectors
/// carry no signal and are skipped.
pub fn sentdebias_fit_vectors(pairs: &[(DVector<f64>, DVector<f64>)], size: SubspaceSize) -> Result<BiasSubspace> {
    if pairs.len() < 2 {
        return Err(Error::InvalidInput(format!("Sent-Debias needs at least 2 pairs, got {}", pairs.len())));
    }
    let d = pairs[0].0.len();
    let mut cov = DMatrix::zeros(d, d);
    let mut used = 0usize;
    for (a, b) in pairs {
        if a.len() != d || b.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: if a.len() != d { a.len() } else { b.len() },
            });
        }
        let half = (a - b) / 2.0;
        if half.iter().all(|&x| x == 0.0) {
            continue;
        }
        // Both centered members are ±half, so each pair adds 2·half·halfᵀ.
        cov += &half * half.transpose() * 2.0;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput("every pair is degenerate (identical embeddings)".into()));
    }
    if used < pairs.len() {
        log::warn!("{} degenerate pairs skipped", pairs.len() - used);
    }
    cov /= (2 * used) as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let positive = values.iter().filter(|&&v| v > total * 1e-12).count();

    let k = match size {
        SubspaceSize::Components(k) => {
            if k == 0 {
                log::warn!("k = 0 requested; keeping one component");
            }
            k.max(1)
        }
        SubspaceSize::Variance(threshold) => {
            let mut cum = 0.0;
            values.iter().position(|v| {
                cum += v / total;
                cum >= threshold - 1e-12
            }).map_or(positive, |i| i + 1)
        }
    };
    let mut k = k.clamp(1, MAX_COMPONENTS);
    if k > positive {
        log::warn!("only {positive} components carry variance; keeping {positive} instead of {k}");
        k = positive;
    }

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            v /= v.norm();
            // Fix the sign so the largest-magnitude coordinate is positive.
            let (imax, _) = v.iter().enumerate().fold((0, 0.0), |best, (j, x)| if x.abs() > best.1 { (j, x.abs()) } else { best });
            if v[imax] < 0.0 {
                v = -v;
            }
            v
        })
        .collect();
    Ok(BiasSubspace {
        components,
        explained_variance: values[..k].iter().map(|v| v / total).collect(),
    })
}

/// Embeds each counterfactual sentence pair and fits the subspace.
pub fn sentdebias_fit(pairs: &[(String, String)], embedder: &dyn Embedder, size: SubspaceSize) -> Result<BiasSubspace> {
    if pairs.len() < 2 {
        return Err(Error::InvalidInput(format!("Sent-Debias needs at least 2 pairs, got {}", pairs.len())));
    }
    let mut vectors = Vec::with_capacity(pairs.len());
    for (a, b) in pairs.iter().filter(|(a, b)| a != b) {
        vectors.push((DVector::from_vec(embedder.embed_text(a)?), DVector::from_vec(embedder.embed_text(b)?)));
    }
    match vectors.len() {
        0 => Err(Error::InvalidInput("every pair is degenerate (identical sentences)".into())),
        // One informative pair still defines a subspace; duplicating it leaves the PCA unchanged.
        1 => sentdebias_fit_vectors(&[vectors[0].clone(), vectors[0].clone()], size),
        _ => sentdebias_fit_vectors(&vectors, size),
    }
}

/// Removes each row's component inside the subspace.
pub fn sentdebias_apply(subspace: &BiasSubspace, data: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if data.dim() != subspace.dim() {
        return Err(Error::Dimension {
            expected: subspace.dim(),
            actual: data.dim(),
        });
    }
    let mut rows = data.rows().clone();
    let original = data.rows();
    for v in &subspace.components {
        let coef = original * v;
        rows -= coef * v.transpose();
    }
    Ok(data.with_rows(rows))
}

/// Reads a JSON list of `[sentence_a, sentence_b]` pairs.
pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}
