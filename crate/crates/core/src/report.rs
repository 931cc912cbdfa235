//! CSV readers and writers for matrices, edge lists, metrics and summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bitwise the value written.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{GhsError, Result};
use crate::matrix::PrecisionMatrix;
use crate::metrics::{ConfusionReport, LossReport, RocCurve};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().from_path(path)?)
}

/// Numeric matrix, rows = observations. A first row that does not parse as
/// numbers is taken as a header; lines starting with `#` are skipped.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if let Some(first) = rows.first() {
                    if first.len() != v.len() {
                        return Err(GhsError::Csv(format!(
                            "row {} has {} fields, expected {}",
                            k + 1,
                            v.len(),
                            first.len()
                        )));
                    }
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GhsError::Csv(format!("non-finite value in row {}", k + 1)));
                }
                rows.push(v);
            }
            Err(_) if k == 0 => continue,
            Err(e) => return Err(GhsError::Csv(format!("row {}: {e}", k + 1))),
        }
    }
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(GhsError::Csv(format!("{} contains no numeric rows", path.display())));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Dense matrix with a `v0,v1,…` header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("v{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Edge of a precision-matrix estimate, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub omega: f64,
    pub partial_correlation: f64,
}

/// `−ω_ij / √(ω_ii ω_jj)`.
pub fn partial_correlation(omega: &PrecisionMatrix, i: usize, j: usize) -> f64 {
    -omega.get(i, j) / (omega.get(i, i) * omega.get(j, j)).sqrt()
}

pub fn edge_records(omega: &PrecisionMatrix, edges: &[(usize, usize)]) -> Vec<EdgeRecord> {
    edges
        .iter()
        .map(|&(i, j)| EdgeRecord {
            i,
            j,
            omega: omega.get(i, j),
            partial_correlation: partial_correlation(omega, i, j),
        })
        .collect()
}

pub fn write_edges_csv(path: &Path, edges: &[EdgeRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["i", "j", "omega", "partial_correlation"])?;
    for e in edges {
        w.write_record([e.i.to_string(), e.j.to_string(), e.omega.to_string(), e.partial_correlation.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<EdgeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).ok_or_else(|| GhsError::Csv("short edge row".into()));
        let bad = |e: &dyn std::fmt::Display| GhsError::Csv(format!("edge row: {e}"));
        out.push(EdgeRecord {
            i: field(0)?.parse().map_err(|e| bad(&e))?,
            j: field(1)?.parse().map_err(|e| bad(&e))?,
            omega: field(2)?.parse().map_err(|e| bad(&e))?,
            partial_correlation: field(3)?.parse().map_err(|e| bad(&e))?,
        });
    }
    Ok(out)
}

/// Vertices with residual variance `1/ω_ii`.
pub fn write_vertices_csv(path: &Path, omega: &PrecisionMatrix) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["vertex", "omega", "residual_variance"])?;
    for i in 0..omega.dim() {
        let d = omega.get(i, i);
        w.write_record([i.to_string(), d.to_string(), (1.0 / d).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One dataset's losses and selection quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub dataset: usize,
    pub loss: LossReport,
    pub confusion: ConfusionReport,
}

pub const METRIC_NAMES: [&str; 8] = [
    "steins_loss",
    "frobenius",
    "tpr",
    "fpr",
    "sensitivity",
    "specificity",
    "precision",
    "accuracy",
];

impl MetricsRow {
    pub fn values(&self) -> [f64; 8] {
        let c = &self.confusion;
        [
            self.loss.steins_loss,
            self.loss.frobenius,
            c.tpr,
            c.fpr,
            c.sensitivity,
            c.specificity,
            c.precision,
            c.accuracy,
        ]
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["dataset"];
    header.extend(METRIC_NAMES);
    header.extend(["tp", "fp", "tn", "fn"]);
    w.write_record(&header)?;
    for r in rows {
        let c = &r.confusion;
        let mut rec = vec![r.dataset.to_string()];
        rec.extend(r.values().iter().map(f64::to_string));
        rec.extend([c.tp, c.fp, c.tn, c.fn_].iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-dataset metric values as `(dataset, values)` in file order.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(usize, [f64; 8])>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| GhsError::Csv(format!("bad metrics field {k}")))
        };
        let mut vals = [0.0; 8];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = num(k + 1)?;
        }
        out.push((num(0)? as usize, vals));
    }
    Ok(out)
}

/// Mean and standard deviation of each metric across datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub datasets: usize,
    pub mean: [f64; 8],
    /// Sample standard deviation (denominator `datasets − 1`).
    pub sd: [f64; 8],
    /// Only one dataset: sd is reported as 0.
    pub sd_degenerate: bool,
}

pub fn summarize(values: &[[f64; 8]]) -> Result<Summary> {
    let n = values.len();
    if n == 0 {
        return Err(GhsError::Config("no datasets to summarize".into()));
    }
    let mut mean = [0.0; 8];
    let mut sd = [0.0; 8];
    for k in 0..8 {
        let m = values.iter().map(|v| v[k]).sum::<f64>() / n as f64;
        mean[k] = m;
        if n > 1 {
            let ss: f64 = values.iter().map(|v| (v[k] - m).powi(2)).sum();
            sd[k] = (ss / (n - 1) as f64).sqrt();
        }
    }
    Ok(Summary {
        datasets: n,
        mean,
        sd,
        sd_degenerate: n == 1,
    })
}

/// One header row and one summary row: `<metric>_mean`, `<metric>_sd` pairs.
pub fn write_summary_csv(path: &Path, s: &Summary) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["datasets".to_string(), "sd_degenerate".to_string()];
    let mut rec = vec![s.datasets.to_string(), s.sd_degenerate.to_string()];
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_sd"));
        rec.push(s.mean[k].to_string());
        rec.push(s.sd[k].to_string());
    }
    w.write_record(&header)?;
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Summary> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| GhsError::Csv("summary has no data row".into()))??;
    let field = |k: usize| rec.get(k).ok_or_else(|| GhsError::Csv("short summary row".into()));
    let num = |k: usize| -> Result<f64> { field(k)?.parse().map_err(|_| GhsError::Csv(format!("summary field {k}"))) };
    let mut mean = [0.0; 8];
    let mut sd = [0.0; 8];
    for k in 0..8 {
        mean[k] = num(2 + 2 * k)?;
        sd[k] = num(3 + 2 * k)?;
    }
    Ok(Summary {
        datasets: num(0)? as usize,
        sd_degenerate: field(1)? == "true",
        mean,
        sd,
    })
}

pub fn write_roc_csv(path: &Path, curves: &[(usize, RocCurve)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["dataset", "level", "fpr", "tpr"])?;
    for (dataset, curve) in curves {
        for pt in &curve.points {
            w.write_record([dataset.to_string(), pt.level.to_string(), pt.fpr.to_string(), pt.tpr.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Appends a line to a free-form log, for values (like timings) that must
/// stay out of the deterministic outputs.
pub fn append_log(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}
