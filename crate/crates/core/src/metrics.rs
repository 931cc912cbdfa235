//! Estimation losses and selection statistics.

use crate::chain::{Chain, SortedEntries};
use crate::error::{GhsError, Result};
use crate::matrix::{Adjacency, PrecisionMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub steins_loss: f64,
    pub frobenius: f64,
}

impl LossReport {
    pub fn compute(estimate: &PrecisionMatrix, truth: &PrecisionMatrix) -> Result<Self> {
        Ok(Self {
            steins_loss: steins_loss(estimate, truth)?,
            frobenius: frobenius_error(estimate, truth)?,
        })
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(GhsError::Dimension(format!("estimate is {a}x{a}, truth is {b}x{b}")));
    }
    Ok(())
}

/// `tr(Ω̂ Ω₀⁻¹) − log det(Ω̂ Ω₀⁻¹) − p`, twice the Kullback–Leibler divergence.
pub fn steins_loss(estimate: &PrecisionMatrix, truth: &PrecisionMatrix) -> Result<f64> {
    same_dim(estimate.dim(), truth.dim())?;
    let sigma0 = truth.inverse()?;
    steins_loss_with_inverse(estimate, truth.log_det()?, &sigma0)
}

/// Stein's loss with Ω₀⁻¹ and `log det Ω₀` precomputed, for repeated traces.
pub fn steins_loss_with_inverse(
    estimate: &PrecisionMatrix,
    truth_log_det: f64,
    truth_inverse: &nalgebra::DMatrix<f64>,
) -> Result<f64> {
    let p = estimate.dim();
    same_dim(p, truth_inverse.nrows())?;
    let m = estimate.as_matrix();
    let trace: f64 = m.iter().zip(truth_inverse.iter()).map(|(a, b)| a * b).sum();
    let loss = trace - estimate.log_det()? + truth_log_det - p as f64;
    // Nonnegative analytically; clip rounding at equality.
    Ok(loss.max(0.0))
}

/// Entrywise ℓ₂ norm of Ω̂ − Ω₀ over all p² entries.
pub fn frobenius_error(estimate: &PrecisionMatrix, truth: &PrecisionMatrix) -> Result<f64> {
    same_dim(estimate.dim(), truth.dim())?;
    Ok((estimate.as_matrix() - truth.as_matrix()).norm())
}

/// Counts and rates over the upper-triangle pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub accuracy: f64,
    /// The truth has no edges, so tpr is reported as 0.
    pub no_true_edges: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Selection quality of `selected` against `truth`.
pub fn confusion(selected: &Adjacency, truth: &Adjacency) -> Result<ConfusionReport> {
    if selected.dim() != truth.dim() {
        return Err(GhsError::Dimension(format!(
            "selection is {0}x{0}, truth is {1}x{1}",
            selected.dim(),
            truth.dim()
        )));
    }
    let p = truth.dim();
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for i in 0..p {
        for j in (i + 1)..p {
            match (selected.get(i, j), truth.get(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let tpr = ratio(tp, tp + fn_);
    let fpr = ratio(fp, fp + tn);
    Ok(ConfusionReport {
        tp,
        fp,
        tn,
        fn_,
        tpr,
        fpr,
        sensitivity: tpr,
        specificity: if fp + tn == 0 { 1.0 } else { 1.0 - fpr },
        precision: ratio(tp, tp + fp),
        accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        no_true_edges: tp + fn_ == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub level: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC traced by credible-interval width, ordered from the widest interval to the narrowest.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub no_true_edges: bool,
}

impl RocCurve {
    /// Both rates non-decreasing along the curve.
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].tpr >= w[0].tpr && w[1].fpr >= w[0].fpr)
    }
}

/// Levels 0.99, 0.98, …, 0.01.
pub fn roc_levels() -> Vec<f64> {
    (1..=99).rev().map(|k| k as f64 / 100.0).collect()
}

pub fn roc_from_chain(chain: &Chain, truth: &Adjacency) -> Result<RocCurve> {
    roc_from_sorted(&chain.sorted_entries()?, truth)
}

pub fn roc_from_sorted(entries: &SortedEntries, truth: &Adjacency) -> Result<RocCurve> {
    let mut points = Vec::with_capacity(99);
    let mut no_true_edges = false;
    for level in roc_levels() {
        let report = confusion(&entries.select(level)?, truth)?;
        no_true_edges = report.no_true_edges;
        points.push(RocPoint {
            level,
            fpr: report.fpr,
            tpr: report.tpr,
        });
    }
    Ok(RocCurve { points, no_true_edges })
}
