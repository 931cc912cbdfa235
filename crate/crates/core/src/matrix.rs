//! Dense symmetric matrix types and the row/column partition helpers used by
//! the column-wise Gibbs updates.
//!
//! Storage is always full dense. Partitions keep the remaining `p - 1`
//! coordinates in their original order.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GhsError, Result};

/// Maximum absolute asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Largest `|m[i][j] - m[j][i]|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in (j + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Replace `m` with `(m + mᵀ) / 2` so that storage is exactly symmetric.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn require_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(GhsError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Cholesky factor with every pivot strictly positive and finite, or `None`.
pub(crate) fn strict_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|k| {
        let d = l[(k, k)];
        d > 0.0 && d.is_finite()
    });
    ok.then_some(chol)
}

/// True iff `m` is symmetric within [`SYMMETRY_TOL`] and its Cholesky
/// factorization succeeds with every pivot positive.
pub fn cholesky_pd_check(m: &DMatrix<f64>) -> Result<bool> {
    require_square(m)?;
    if m.iter().any(|v| !v.is_finite()) || max_asymmetry(m) > SYMMETRY_TOL {
        return Ok(false);
    }
    Ok(strict_cholesky(m.clone()).is_some())
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(m)?;
    let chol = strict_cholesky(m.clone())
        .ok_or_else(|| GhsError::NotPositiveDefinite("cholesky inversion failed".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `log det m` for a symmetric positive definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    require_square(m)?;
    let chol = strict_cholesky(m.clone())
        .ok_or_else(|| GhsError::NotPositiveDefinite("log-determinant".into()))?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|k| 2.0 * l[(k, k)].ln()).sum())
}

/// `max |a b - I|` entrywise.
pub fn identity_drift(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let prod = a * b;
    let mut worst = 0.0f64;
    for j in 0..prod.ncols() {
        for i in 0..prod.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    worst
}

macro_rules! spd_newtype {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Symmetric positive definite ", $what, " matrix.")]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DMatrix<f64>);

        impl $name {
            /// Validates symmetry (within [`SYMMETRY_TOL`]) and positive
            /// definiteness; the stored copy is exactly symmetric.
            pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
                require_square(&m)?;
                if m.nrows() == 0 {
                    return Err(GhsError::Dimension("empty matrix".into()));
                }
                let asym = max_asymmetry(&m);
                if asym > SYMMETRY_TOL {
                    return Err(GhsError::NotPositiveDefinite(format!(
                        "asymmetry {asym:e} exceeds tolerance"
                    )));
                }
                symmetrize(&mut m);
                if strict_cholesky(m.clone()).is_none() {
                    return Err(GhsError::NotPositiveDefinite(
                        concat!($what, " failed Cholesky").into(),
                    ));
                }
                Ok(Self(m))
            }

            pub fn identity(p: usize) -> Self {
                Self(DMatrix::identity(p, p))
            }

            /// Wraps a matrix the caller has already verified.
            #[allow(dead_code)]
            pub(crate) fn from_verified(m: DMatrix<f64>) -> Self {
                Self(m)
            }

            pub fn dim(&self) -> usize {
                self.0.nrows()
            }

            pub fn as_matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_matrix(self) -> DMatrix<f64> {
                self.0
            }

            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.0[(i, j)]
            }

            pub fn inverse(&self) -> Result<DMatrix<f64>> {
                spd_inverse(&self.0)
            }

            pub fn log_det(&self) -> Result<f64> {
                spd_log_det(&self.0)
            }
        }
    };
}

spd_newtype!(PrecisionMatrix, "precision");
spd_newtype!(CovarianceMatrix, "covariance");

impl PrecisionMatrix {
    pub fn to_covariance(&self) -> Result<CovarianceMatrix> {
        Ok(CovarianceMatrix(self.inverse()?))
    }
}

impl CovarianceMatrix {
    pub fn to_precision(&self) -> Result<PrecisionMatrix> {
        Ok(PrecisionMatrix(self.inverse()?))
    }
}

/// The blocks of a square matrix split around row/column `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPartition {
    pub index: usize,
    pub off_block: DMatrix<f64>,
    pub off_column: DVector<f64>,
    pub corner: f64,
}

/// Indices `0..p` with `i` removed, in order.
pub fn others(p: usize, i: usize) -> impl Iterator<Item = usize> + Clone {
    (0..p).filter(move |&k| k != i)
}

/// Splits `m` into `m[-i,-i]`, `m[-i,i]` and `m[i,i]`.
pub fn partition(m: &DMatrix<f64>, i: usize) -> Result<ColumnPartition> {
    require_square(m)?;
    let p = m.nrows();
    if i >= p {
        return Err(GhsError::IndexOutOfRange { index: i, dim: p });
    }
    let idx: Vec<usize> = others(p, i).collect();
    let off_block = DMatrix::from_fn(p - 1, p - 1, |r, c| m[(idx[r], idx[c])]);
    let off_column = DVector::from_fn(p - 1, |r, _| m[(idx[r], i)]);
    Ok(ColumnPartition {
        index: i,
        off_block,
        off_column,
        corner: m[(i, i)],
    })
}

impl ColumnPartition {
    /// Rebuilds the full symmetric matrix the partition was taken from.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let p = self.off_block.nrows() + 1;
        let i = self.index;
        let pos = |k: usize| if k < i { k } else { k + 1 };
        let mut m = DMatrix::zeros(p, p);
        for c in 0..p - 1 {
            for r in 0..p - 1 {
                m[(pos(r), pos(c))] = self.off_block[(r, c)];
            }
            m[(pos(c), i)] = self.off_column[c];
            m[(i, pos(c))] = self.off_column[c];
        }
        m[(i, i)] = self.corner;
        m
    }
}

/// `Ω[-i,-i]⁻¹ = Σ[-i,-i] - σ[-i,i] σ[-i,i]ᵀ / σ[i,i]`, computed without inverting anything.
pub fn inverse_block_from_sigma(sigma: &CovarianceMatrix, i: usize) -> Result<DMatrix<f64>> {
    inverse_block(sigma.as_matrix(), i)
}

pub(crate) fn inverse_block(sigma: &DMatrix<f64>, i: usize) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if i >= p {
        return Err(GhsError::IndexOutOfRange { index: i, dim: p });
    }
    let s_ii = sigma[(i, i)];
    if !(s_ii > 0.0) || !s_ii.is_finite() {
        return Err(GhsError::NumericalDegeneracy {
            sweep: 0,
            column: i,
            reason: format!("sigma[{i},{i}] = {s_ii} is not positive"),
        });
    }
    let idx: Vec<usize> = others(p, i).collect();
    let k = p - 1;
    let mut out = DMatrix::zeros(k, k);
    for c in 0..k {
        let sc = sigma[(idx[c], i)];
        for r in 0..k {
            // (σ_r σ_c) / σ_ii keeps the block exactly symmetric.
            out[(r, c)] = sigma[(idx[r], idx[c])] - (sigma[(idx[r], i)] * sc) / s_ii;
        }
    }
    Ok(out)
}

/// `S = YᵀY` together with the number of observations it summarises.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    matrix: DMatrix<f64>,
    n: usize,
}

impl ScatterMatrix {
    pub fn new(mut matrix: DMatrix<f64>, n: usize) -> Result<Self> {
        require_square(&matrix)?;
        if matrix.nrows() == 0 {
            return Err(GhsError::Dimension("scatter matrix has dimension 0".into()));
        }
        if n == 0 {
            return Err(GhsError::Parameter("sample size must be at least 1".into()));
        }
        let scale = matrix.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if max_asymmetry(&matrix) > SYMMETRY_TOL * scale {
            return Err(GhsError::Dimension("scatter matrix is not symmetric".into()));
        }
        symmetrize(&mut matrix);
        Ok(Self { matrix, n })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Symmetric boolean edge indicator with a false diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    p: usize,
    cells: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            cells: vec![false; p * p],
        }
    }

    /// Builds from a dense row-major grid, rejecting asymmetric input or a set diagonal.
    pub fn from_dense(p: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != p * p {
            return Err(GhsError::Dimension(format!(
                "adjacency needs {} cells, got {}",
                p * p,
                cells.len()
            )));
        }
        for i in 0..p {
            if cells[i * p + i] {
                return Err(GhsError::Dimension(format!("adjacency diagonal ({i},{i}) is set")));
            }
            for j in (i + 1)..p {
                if cells[i * p + j] != cells[j * p + i] {
                    return Err(GhsError::Dimension(format!("adjacency asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { p, cells })
    }

    /// Nonzero off-diagonal pattern of a matrix.
    pub fn from_support(m: &DMatrix<f64>) -> Self {
        let p = m.nrows();
        let mut adj = Self::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                if m[(i, j)] != 0.0 {
                    adj.set(i, j, true);
                }
            }
        }
        adj
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.p + j]
    }

    /// Sets `(i, j)` and `(j, i)`; diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.cells[i * self.p + j] = value;
            self.cells[j * self.p + i] = value;
        }
    }

    /// Upper-triangle edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// True when every edge of `self` is also an edge of `other`.
    pub fn is_subset_of(&self, other: &Adjacency) -> bool {
        self.p == other.p && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }
}

/// Number of entries in the upper triangle including the diagonal.
pub fn packed_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Row-major upper-triangle-plus-diagonal copy of a symmetric matrix.
pub fn pack_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(packed_len(p));
    for i in 0..p {
        for j in i..p {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`pack_upper`].
pub fn unpack_upper(p: usize, packed: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(packed.len(), packed_len(p));
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
    m
}

/// Position of `(i, j)`, `i <= j`, inside a packed upper triangle.
pub fn packed_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * p - i + 1) / 2 + (j - i)
}
