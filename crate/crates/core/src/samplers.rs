//! Seeded variate generators: gamma, inverse gamma (shape–scale), and
//! multivariate normal.
//!
//! Every handle is a ChaCha8 stream keyed by `(seed, stream_id)`, so a
//! handle's sequence is fixed across runs and platforms.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{GhsError, Result};
use crate::matrix::strict_cholesky;

/// An exclusively owned random stream.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to mix indices into stream identifiers.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known stream purposes, mixed into [`RngHandle::derive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Structure = 1,
    Data = 2,
    Chain = 3,
    Reservoir = 4,
    Start = 5,
}

impl RngHandle {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream for `(role, dataset, chain)` under a master seed.
    ///
    /// `stream_id = splitmix64(splitmix64(splitmix64(role) ^ dataset) ^ chain)`. Distinct
    /// tuples select distinct ChaCha streams, which never overlap.
    pub fn derive(seed: u64, role: StreamRole, dataset: u64, chain: u64) -> Self {
        let id = splitmix64(splitmix64(splitmix64(role as u64) ^ dataset) ^ chain);
        Self::new(seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed off this handle's identity; does not advance `self`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream_id ^ splitmix64(tag)))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits in [0, 1).
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(GhsError::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// One Gamma(shape, rate) draw; mean `shape / rate`.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| GhsError::Parameter(e.to_string()))?;
    Ok(dist.sample(&mut rng.inner))
}

/// One inverse-gamma draw with density ∝ x^(−shape−1) e^(−scale/x).
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngHandle) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, scale, rng)?)
}

/// `mean + L z` with `L` the lower Cholesky factor of `cov`.
pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngHandle) -> Result<DVector<f64>> {
    let k = mean.len();
    if cov.nrows() != k || cov.ncols() != k {
        return Err(GhsError::Dimension(format!(
            "mean has length {k}, covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = strict_cholesky(cov.clone())
        .ok_or_else(|| GhsError::NotPositiveDefinite("mvn covariance".into()))?;
    let z = DVector::from_fn(k, |_, _| rng.standard_normal());
    Ok(mean + chol.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRAWS: usize = 100_000;

    fn mean_of(mut f: impl FnMut() -> f64, n: usize) -> f64 {
        (0..n).map(|_| f()).sum::<f64>() / n as f64
    }

    #[test]
    fn gamma_means() {
        let mut rng = RngHandle::new(1, 0);
        let m = mean_of(|| sample_gamma(3.0, 2.0, &mut rng).unwrap(), DRAWS);
        assert!((m - 1.5).abs() < 0.02, "{m}");
        let m = mean_of(|| sample_gamma(26.0, 5.0, &mut rng).unwrap(), DRAWS);
        assert!((m - 5.2).abs() < 0.05, "{m}");
    }

    #[test]
    fn exponential_cdf_at_one() {
        let mut rng = RngHandle::new(2, 0);
        let below = (0..DRAWS)
            .filter(|_| sample_gamma(1.0, 1.0, &mut rng).unwrap() <= 1.0)
            .count() as f64
            / DRAWS as f64;
        assert!((below - (1.0 - (-1f64).exp())).abs() < 0.01, "{below}");
    }

    #[test]
    fn inverse_gamma_moments_and_quantiles() {
        let mut rng = RngHandle::new(3, 0);
        let m = mean_of(|| sample_inverse_gamma(3.0, 4.0, &mut rng).unwrap(), DRAWS);
        assert!((m - 2.0).abs() < 0.05, "{m}");

        let below = (0..DRAWS)
            .filter(|_| 1.0 / sample_inverse_gamma(1.0, 1.0, &mut rng).unwrap() <= 1.0)
            .count() as f64
            / DRAWS as f64;
        assert!((below - (1.0 - (-1f64).exp())).abs() < 0.01);

        for s in [0.5, 1.0, 7.0] {
            let mut draws: Vec<f64> = (0..DRAWS)
                .map(|_| sample_inverse_gamma(1.0, s, &mut rng).unwrap())
                .collect();
            draws.sort_by(f64::total_cmp);
            let median = draws[DRAWS / 2];
            let expected = s / std::f64::consts::LN_2;
            assert!((median / expected - 1.0).abs() < 0.02, "s={s} median={median}");
        }
    }

    #[test]
    fn moment_grid() {
        // Gamma mean shape/rate, variance shape/rate²; inverse-gamma mean
        // scale/(shape−1) when shape > 1. Tolerances: 1% mean, 3% variance.
        const GRID_DRAWS: usize = 1_000_000;
        let mut rng = RngHandle::new(4, 0);
        for shape in [0.5, 1.0, 3.0, 26.0] {
            for param in [0.5, 1.0, 5.0] {
                let draws: Vec<f64> = (0..GRID_DRAWS)
                    .map(|_| sample_gamma(shape, param, &mut rng).unwrap())
                    .collect();
                assert!(draws.iter().all(|&x| x > 0.0));
                let (m, v) = mean_var(&draws);
                let (em, ev) = (shape / param, shape / (param * param));
                assert!((m / em - 1.0).abs() < 0.01, "gamma({shape},{param}) mean {m}");
                assert!((v / ev - 1.0).abs() < 0.03, "gamma({shape},{param}) var {v}");

                let inv: Vec<f64> = (0..GRID_DRAWS)
                    .map(|_| sample_inverse_gamma(shape, param, &mut rng).unwrap())
                    .collect();
                assert!(inv.iter().all(|&x| x > 0.0));
                if shape > 2.0 {
                    let (m, _) = mean_var(&inv);
                    let em = param / (shape - 1.0);
                    assert!((m / em - 1.0).abs() < 0.01, "invgamma({shape},{param}) mean {m}");
                }
            }
        }
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn mvn_identity_covariance() {
        let mut rng = RngHandle::new(5, 0);
        let mean = DVector::zeros(2);
        let cov = DMatrix::identity(2, 2);
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..DRAWS {
            let x = sample_mvn(&mean, &cov, &mut rng).unwrap();
            acc += &x * x.transpose();
        }
        acc /= DRAWS as f64;
        for (a, b) in acc.iter().zip(cov.iter()) {
            assert!((a - b).abs() < 0.02);
        }
    }

    #[test]
    fn mvn_correlated_moments() {
        let mut rng = RngHandle::new(6, 0);
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let draws: Vec<DVector<f64>> = (0..DRAWS)
            .map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap())
            .collect();
        let x: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let y: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        let (mx, vx) = mean_var(&x);
        let (my, vy) = mean_var(&y);
        let cxy = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (DRAWS as f64 - 1.0);
        assert!((mx - 1.0).abs() < 0.01 && (my - 2.0).abs() < 0.01);
        assert!((cxy / (vx * vy).sqrt() - 0.5).abs() < 0.01);
    }

    #[test]
    fn mvn_empty_and_errors() {
        let mut rng = RngHandle::new(7, 0);
        let out = sample_mvn(&DVector::zeros(0), &DMatrix::zeros(0, 0), &mut rng).unwrap();
        assert_eq!(out.len(), 0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sample_mvn(&DVector::zeros(2), &bad, &mut rng),
            Err(GhsError::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            sample_mvn(&DVector::zeros(3), &bad, &mut rng),
            Err(GhsError::Dimension(_))
        ));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let mut rng = RngHandle::new(8, 0);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(1.0, 0.0, &mut rng).is_err());
        assert!(sample_inverse_gamma(f64::NAN, 1.0, &mut rng).is_err());
    }

    #[test]
    fn handles_are_deterministic_and_distinct() {
        let mut a = RngHandle::new(42, 9);
        let mut b = RngHandle::new(42, 9);
        let mut c = RngHandle::new(42, 10);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);

        let d1 = RngHandle::derive(1, StreamRole::Chain, 0, 1);
        let d2 = RngHandle::derive(1, StreamRole::Chain, 1, 0);
        assert_ne!(d1.stream_id(), d2.stream_id());
    }
}
