//! Ground-truth precision matrices with random, hub, or clique sparsity, and
//! Gaussian data drawn from them.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{GhsError, Result};
use crate::matrix::{identity_drift, strict_cholesky, Adjacency, CovarianceMatrix, PrecisionMatrix, ScatterMatrix};
use crate::samplers::RngHandle;

/// Off-diagonal pattern. Values are the stored (signed) ω entries.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureKind {
    /// Each pair is nonzero with probability `prob`, value ~ Uniform(low, high).
    Random { prob: f64, low: f64, high: f64 },
    /// In each contiguous group the first index is connected to every other member.
    Hubs { groups: usize, size: usize, value: f64 },
    /// Every pair inside a contiguous group is connected.
    Cliques { groups: usize, size: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureSpec {
    pub kind: StructureKind,
    pub dim: usize,
    pub diagonal: f64,
}

impl StructureSpec {
    pub fn new(kind: StructureKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            diagonal: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(GhsError::Config("structure dimension must be positive".into()));
        }
        if !(self.diagonal > 0.0 && self.diagonal.is_finite()) {
            return Err(GhsError::Config(format!("diagonal must be positive, got {}", self.diagonal)));
        }
        match self.kind {
            StructureKind::Random { prob, low, high } => {
                if !(prob > 0.0 && prob < 1.0) {
                    return Err(GhsError::Config(format!("edge probability {prob} not in (0, 1)")));
                }
                if !(low < high) {
                    return Err(GhsError::Config(format!("magnitude range [{low}, {high}] is empty")));
                }
            }
            StructureKind::Hubs { groups, size, .. } | StructureKind::Cliques { groups, size, .. } => {
                if groups * size > self.dim {
                    return Err(GhsError::Config(format!(
                        "{groups} groups of {size} exceed dimension {}",
                        self.dim
                    )));
                }
                if size < 2 {
                    return Err(GhsError::Config("group size must be at least 2".into()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for StructureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StructureKind::Random { prob, low, high } => {
                write!(f, "random prob={prob} range=[{low};{high}]")?
            }
            StructureKind::Hubs { groups, size, value } => write!(f, "hubs groups={groups} size={size} value={value}")?,
            StructureKind::Cliques { groups, size, value } => {
                write!(f, "cliques groups={groups} size={size} value={value}")?
            }
        }
        write!(f, " diagonal={}", self.diagonal)
    }
}

/// Ω₀ with its inverse and support.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub omega0: PrecisionMatrix,
    pub sigma0: CovarianceMatrix,
    pub adjacency0: Adjacency,
    pub nonzero_count: usize,
    pub description: String,
}

impl GroundTruth {
    /// Builds the derived fields from a known Ω₀.
    pub fn from_omega(omega0: PrecisionMatrix, description: impl Into<String>) -> Result<Self> {
        let sigma0 = omega0.to_covariance()?;
        let adjacency0 = Adjacency::from_support(omega0.as_matrix());
        let nonzero_count = adjacency0.edge_count();
        Ok(Self {
            omega0,
            sigma0,
            adjacency0,
            nonzero_count,
            description: description.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.omega0.dim()
    }

    /// Smallest and largest nonzero off-diagonal values.
    pub fn nonzero_range(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self
            .adjacency0
            .edges()
            .into_iter()
            .map(|(i, j)| self.omega0.get(i, j))
            .collect();
        let lo = vals.iter().copied().reduce(f64::min)?;
        let hi = vals.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

fn set_pair(m: &mut DMatrix<f64>, i: usize, j: usize, v: f64) {
    m[(i, j)] = v;
    m[(j, i)] = v;
}

fn grouped(spec: &StructureSpec, groups: usize, size: usize, value: f64, hubs: bool) -> DMatrix<f64> {
    let p = spec.dim;
    let mut m = DMatrix::identity(p, p) * spec.diagonal;
    for g in 0..groups {
        let start = g * size;
        let members = start..start + size;
        if hubs {
            for k in members.skip(1) {
                set_pair(&mut m, start, k, value);
            }
        } else {
            for a in members.clone() {
                for b in (a + 1)..start + size {
                    set_pair(&mut m, a, b, value);
                }
            }
        }
    }
    m
}

/// Candidate pairs are visited in row-major order; a candidate whose value
/// would make the matrix indefinite is left at zero.
fn random_draw(spec: &StructureSpec, prob: f64, low: f64, high: f64, rng: &mut RngHandle) -> DMatrix<f64> {
    let p = spec.dim;
    let mut m = DMatrix::identity(p, p) * spec.diagonal;
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.uniform() < prob {
                let v = low + (high - low) * rng.uniform();
                set_pair(&mut m, i, j, v);
                if strict_cholesky(m.clone()).is_none() {
                    set_pair(&mut m, i, j, 0.0);
                }
            }
        }
    }
    m
}

/// Realizes Ω₀ for a structure.
pub fn gen_structure(spec: &StructureSpec, rng: &RngHandle) -> Result<GroundTruth> {
    spec.validate()?;
    let description = spec.to_string();
    let omega = match spec.kind {
        StructureKind::Hubs { groups, size, value } => grouped(spec, groups, size, value, true),
        StructureKind::Cliques { groups, size, value } => grouped(spec, groups, size, value, false),
        StructureKind::Random { prob, low, high } => random_draw(spec, prob, low, high, &mut rng.clone()),
    };
    let omega0 = PrecisionMatrix::new(omega)
        .map_err(|_| GhsError::Config(format!("{description} is not positive definite")))?;
    let gt = GroundTruth::from_omega(omega0, description)?;
    debug_assert!(identity_drift(gt.sigma0.as_matrix(), gt.omega0.as_matrix()) < 1e-8);
    Ok(gt)
}

/// `n` rows from Normal(0, Σ₀), each `L z` with `L` the Cholesky factor of Σ₀.
pub fn simulate_data(gt: &GroundTruth, n: usize, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    simulate_from_covariance(gt.sigma0.as_matrix(), n, rng)
}

pub(crate) fn simulate_from_covariance(sigma: &DMatrix<f64>, n: usize, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(GhsError::Parameter("number of observations must be at least 1".into()));
    }
    let p = sigma.nrows();
    let chol = strict_cholesky(sigma.clone()).ok_or_else(|| GhsError::NotPositiveDefinite("Σ₀".into()))?;
    let l = chol.l();
    let z = DMatrix::from_fn(p, n, |_, _| rng.standard_normal());
    // Columns of L Z are the observations; draw order is observation-major.
    Ok((l * z).transpose())
}

/// `S = YᵀY` (no division by n).
pub fn scatter(y: &DMatrix<f64>) -> Result<ScatterMatrix> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(GhsError::Dimension("data matrix is empty".into()));
    }
    let mut s = y.transpose() * y;
    crate::matrix::symmetrize(&mut s);
    ScatterMatrix::new(s, y.nrows())
}
