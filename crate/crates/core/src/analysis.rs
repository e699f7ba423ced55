//! Correlation statistics over benchmark results and plot-data export.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bench::{CompositeScores, TrajectorySeries};
use crate::error::{Error, Result};

pub const PLOT_SCHEMA_VERSION: u32 = 1;

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!("pearson needs at least 3 points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("pearson is undefined for a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

fn inv_sqrt(c: &DMatrix<f64>, which: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "{which} covariance is singular; use a positive ridge"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// First canonical correlation between the column sets of `x` and `y`.
///
/// Columns are centered and each covariance gets `ridge·I` added. With
/// `ridge = None` the ridge is `1e-6` times the covariance's mean diagonal,
/// computed separately for `x` and `y`.
pub fn cca_first(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: Option<f64>) -> Result<f64> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.nrows(),
        });
    }
    if n < 3 {
        return Err(Error::InvalidInput(format!("CCA needs at least 3 observations, got {n}")));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::InvalidInput("CCA needs at least one column on each side".into()));
    }
    if let Some(r) = ridge {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge must be positive, got {r}")));
        }
    }
    let (xc, yc) = (centered(x), centered(y));
    let scale = 1.0 / (n - 1) as f64;
    let regularize = |c: DMatrix<f64>, which: &str| -> Result<DMatrix<f64>> {
        let mean_diag = c.diagonal().mean();
        if mean_diag <= 0.0 {
            return Err(Error::InvalidInput(format!("{which} has zero variance in every column")));
        }
        let r = ridge.unwrap_or(1e-6 * mean_diag);
        let d = c.nrows();
        Ok(c + DMatrix::identity(d, d) * r)
    };
    let cxx = regularize(xc.tr_mul(&xc) * scale, "x")?;
    let cyy = regularize(yc.tr_mul(&yc) * scale, "y")?;
    let cxy = xc.tr_mul(&yc) * scale;
    let m = inv_sqrt(&cxx, "x")? * cxy * inv_sqrt(&cyy, "y")?;
    let rho = m.singular_values().max();
    Ok(rho.clamp(0.0, 1.0))
}

/// Change in composite scores one debiasing method causes for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub method: String,
    pub model: String,
    pub delta_performance: f64,
    pub delta_bias: f64,
}

/// `treated − baseline` on both composite axes, one record per method in
/// method-name order.
pub fn shift_table(
    model: &str,
    baseline: &CompositeScores,
    treated: &BTreeMap<String, CompositeScores>,
) -> Result<Vec<ShiftRecord>> {
    let (bp, bb) = (baseline.performance.composite_performance, baseline.bias.composite_bias);
    if !bp.is_finite() || !bb.is_finite() {
        return Err(Error::InvalidInput(format!("baseline composites for {model} are not finite")));
    }
    treated
        .iter()
        .map(|(method, t)| {
            let rec = ShiftRecord {
                method: method.clone(),
                model: model.to_owned(),
                delta_performance: t.performance.composite_performance - bp,
                delta_bias: t.bias.composite_bias - bb,
            };
            if rec.delta_performance.is_finite() && rec.delta_bias.is_finite() {
                Ok(rec)
            } else {
                Err(Error::InvalidInput(format!("shift for {model}/{method} is not finite")))
            }
        })
        .collect()
}

/// ρ₁ between two models' `(Δperformance, Δbias)` rows over the methods both
/// have records for.
pub fn cca_model_pair(records: &[ShiftRecord], model_a: &str, model_b: &str, ridge: Option<f64>) -> Result<f64> {
    let by_method = |model: &str| -> BTreeMap<&str, (f64, f64)> {
        records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| (r.method.as_str(), (r.delta_performance, r.delta_bias)))
            .collect()
    };
    let (a, b) = (by_method(model_a), by_method(model_b));
    let common: Vec<&str> = a.keys().filter(|m| b.contains_key(*m)).copied().collect();
    let matrix = |side: &BTreeMap<&str, (f64, f64)>| {
        DMatrix::from_row_iterator(common.len(), 2, common.iter().flat_map(|m| [side[m].0, side[m].1]))
    };
    cca_first(&matrix(&a), &matrix(&b), ridge)
}

const METRICS: [&str; 8] = [
    "blimp",
    "blimp_supplement",
    "ewok",
    "composite_performance",
    "stereoset_ss",
    "stereoset_lms",
    "crows",
    "composite_bias",
];

fn metric_values(s: &CompositeScores) -> [f64; 8] {
    [
        s.performance.blimp,
        s.performance.blimp_supplement,
        s.performance.ewok,
        s.performance.composite_performance,
        s.bias.stereoset_ss,
        s.bias.stereoset_lms,
        s.bias.crows,
        s.bias.composite_bias,
    ]
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, comment: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# {comment}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn band_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.bands.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Option<Band> {
        if values.is_empty() {
            return None;
        }
        Some(Band {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Writes one CSV row per trajectory point; gaps leave the score cells
/// empty. When a run label has several series (one per seed), a long-format
/// `<stem>.bands.csv` with per-step mean, min and max is written as well.
/// Returns the files written.
pub fn emit_plot_data(series: &[TrajectorySeries], path: &Path) -> Result<Vec<PathBuf>> {
    if series.is_empty() {
        return Err(Error::Empty("no series to plot"));
    }
    let mut header = vec!["run_label", "seed", "step"];
    header.extend(METRICS);
    let mut rows = Vec::new();
    for s in series {
        for p in &s.points {
            let mut row = vec![
                s.run_label.clone(),
                s.seed.map(|x| x.to_string()).unwrap_or_default(),
                p.step.to_string(),
            ];
            match &p.scores {
                Some(sc) => row.extend(metric_values(sc).iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), METRICS.len())),
            }
            rows.push(row);
        }
    }
    write_csv(
        path,
        &format!("corpusbias trajectory v{PLOT_SCHEMA_VERSION}; empty scores mark unreachable checkpoints"),
        &header,
        rows,
    )?;
    let mut written = vec![path.to_owned()];

    let mut grouped: BTreeMap<&str, BTreeMap<u64, Vec<[f64; 8]>>> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in series {
        *counts.entry(&s.run_label).or_default() += 1;
        let steps = grouped.entry(&s.run_label).or_default();
        for p in &s.points {
            let entry = steps.entry(p.step).or_default();
            if let Some(sc) = &p.scores {
                entry.push(metric_values(sc));
            }
        }
    }
    if counts.values().any(|&c| c > 1) {
        let mut band_rows = Vec::new();
        for (label, steps) in &grouped {
            if counts[label] < 2 {
                continue;
            }
            for (step, values) in steps {
                for (m, name) in METRICS.iter().enumerate() {
                    let col: Vec<f64> = values.iter().map(|v| v[m]).collect();
                    if let Some(b) = Band::of(&col) {
                        band_rows.push(vec![
                            (*label).to_owned(),
                            step.to_string(),
                            (*name).to_owned(),
                            b.n.to_string(),
                            b.mean.to_string(),
                            b.min.to_string(),
                            b.max.to_string(),
                        ]);
                    }
                }
            }
        }
        let bands = band_path(path);
        write_csv(
            &bands,
            &format!("corpusbias trajectory bands v{PLOT_SCHEMA_VERSION}"),
            &["run_label", "step", "metric", "n", "mean", "min", "max"],
            band_rows,
        )?;
        written.push(bands);
    }
    Ok(written)
}

/// Writes shift records as CSV, one row per record in input order.
pub fn emit_shift_data(records: &[ShiftRecord], path: &Path) -> Result<PathBuf> {
    if records.is_empty() {
        return Err(Error::Empty("no shift records to write"));
    }
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.method.clone(),
                r.delta_performance.to_string(),
                r.delta_bias.to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        &format!("corpusbias shifts v{PLOT_SCHEMA_VERSION}"),
        &["model", "method", "delta_performance", "delta_bias"],
        rows,
    )?;
    Ok(path.to_owned())
}
