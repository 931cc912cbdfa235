//! Element-wise shrinkage of the horseshoe posterior mean relative to the
//! least-squares estimate, for one off-diagonal entry of the last column.
//!
//! Scaling ω_{pj} and its least-squares estimate by
//! `{ω_pp0 (Y₋ₚᵀY₋ₚ)⁻¹_jj}^{-1/2}` gives a unit-variance normal-means problem
//! with prior variance `λ²/θ`, `θ = ω_pp0 (Y₋ₚᵀY₋ₚ)⁻¹_jj τ⁻²`. The posterior
//! mean is `(1 − E Z) ω̂′` and, for `ω̂′²/2 > 1`,
//!
//! ```text
//! E Z < 4 (C₁ + C₂) θ (1 + ω̂′²/2) / ω̂′⁴
//! ```
//!
//! The bound is linear in θ while `E Z ≈ 2/ω̂′²` for large signals whatever
//! θ is, so it only holds once θ is roughly 1 or larger.

use nalgebra::DMatrix;

use crate::error::{GhsError, Result};
use crate::gibbs::{draw_local_mixing, draw_local_scale};
use crate::matrix::spd_inverse;
use crate::samplers::{RngHandle, StreamRole};
use crate::structure::{simulate_data, GroundTruth};

/// `1 − 2/e`.
pub const C1: f64 = 1.0 - 2.0 / std::f64::consts::E;
/// Taken as 0.75. The gamma-function ratio it is usually written as evaluates
/// to 4/3, its reciprocal.
pub const C2: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasCheckInput {
    /// Scaled least-squares estimate ω̂′.
    pub omega_hat_scaled: f64,
    pub theta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl BiasCheckInput {
    pub fn new(omega_hat_scaled: f64, theta: f64) -> Self {
        Self {
            omega_hat_scaled,
            theta,
            c1: C1,
            c2: C2,
        }
    }
}

/// `4 (c₁ + c₂) θ (1 + ω̂′²/2) / ω̂′⁴`, defined for `ω̂′²/2 > 1`.
pub fn shrinkage_bound(input: &BiasCheckInput) -> Result<f64> {
    let w2 = input.omega_hat_scaled * input.omega_hat_scaled;
    if !(input.theta > 0.0) {
        return Err(GhsError::Domain(format!("theta must be positive, got {}", input.theta)));
    }
    if !(w2 / 2.0 > 1.0) {
        return Err(GhsError::Domain(format!(
            "bound requires ω̂′²/2 > 1, got ω̂′ = {}",
            input.omega_hat_scaled
        )));
    }
    Ok(4.0 * (input.c1 + input.c2) * input.theta * (1.0 + w2 / 2.0) / (w2 * w2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageCheckOptions {
    /// Fixed global scale τ.
    pub tau: f64,
    pub burnin: usize,
    pub draws: usize,
    /// Batches for the batch-means Monte Carlo standard error.
    pub batches: usize,
}

impl Default for ShrinkageCheckOptions {
    fn default() -> Self {
        Self {
            tau: 0.04,
            burnin: 1000,
            draws: 20_000,
            batches: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageCheck {
    pub posterior_mean_scaled: f64,
    pub ls_estimate_scaled: f64,
    pub theta: f64,
    /// `None` when `ω̂′²/2 ≤ 1`, where no bound applies.
    pub bound: Option<f64>,
    /// `|1 − posterior / least squares|`.
    pub relative_shrinkage: f64,
    /// Monte Carlo standard error of `relative_shrinkage`.
    pub mc_se: f64,
}

impl ShrinkageCheck {
    pub fn in_domain(&self) -> bool {
        self.bound.is_some()
    }

    /// `relative_shrinkage ≤ bound + 3·mc_se`; `None` when out of domain.
    pub fn within_bound(&self) -> Option<bool> {
        self.bound.map(|b| self.relative_shrinkage <= b + 3.0 * self.mc_se)
    }
}

/// Least-squares quantities for coordinate `j` of the last column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastSquaresColumn {
    /// ω̂_pj (unscaled).
    pub estimate: f64,
    /// `{ω_pp0 (Y₋ₚᵀY₋ₚ)⁻¹_jj}^{1/2}`.
    pub scale: f64,
    /// `(Y₋ₚᵀY₋ₚ)⁻¹_jj`.
    pub inverse_gram_jj: f64,
}

/// Regresses the last feature on the others with ω_pp0 known:
/// `ω̂_{p,−p} = −ω_pp0 (Y₋ₚᵀY₋ₚ)⁻¹ Y₋ₚᵀ y_p`.
pub fn least_squares_column(y: &DMatrix<f64>, omega_pp0: f64, j: usize) -> Result<LeastSquaresColumn> {
    let (n, p) = y.shape();
    if p < 2 || j >= p - 1 {
        return Err(GhsError::IndexOutOfRange {
            index: j,
            dim: p.saturating_sub(1),
        });
    }
    if n < p {
        return Err(GhsError::Domain(format!("least squares needs n > p − 1, got n={n}, p={p}")));
    }
    let others = y.columns(0, p - 1).into_owned();
    let target = y.column(p - 1).into_owned();
    let gram_inv = spd_inverse(&(others.transpose() * &others))?;
    let coef = &gram_inv * (others.transpose() * target);
    let inverse_gram_jj = gram_inv[(j, j)];
    Ok(LeastSquaresColumn {
        estimate: -omega_pp0 * coef[j],
        scale: (omega_pp0 * inverse_gram_jj).sqrt(),
        inverse_gram_jj,
    })
}

/// Simulates `n` observations from Ω₀ and compares the fixed-τ horseshoe
/// posterior mean of ω_{p,j} (p the last index) with its least-squares
/// estimate, both scaled.
///
/// With the diagonal known, the entry's likelihood is `ω̂ ~ N(ω, scale²)`.
/// The posterior is sampled with the same λ²/ν conditionals the full sampler
/// uses and a conjugate normal step for ω. The mean is Rao–Blackwellized.
pub fn empirical_shrinkage_check(
    gt: &GroundTruth,
    n: usize,
    j: usize,
    seed: u64,
    opts: &ShrinkageCheckOptions,
) -> Result<ShrinkageCheck> {
    let p = gt.dim();
    if n <= p.saturating_sub(1) {
        return Err(GhsError::Domain(format!("requires n > p − 1, got n={n}, p={p}")));
    }
    if !(opts.tau > 0.0) || opts.draws == 0 || opts.batches == 0 || !opts.draws.is_multiple_of(opts.batches) {
        return Err(GhsError::Config("invalid shrinkage check options".into()));
    }
    let mut data_rng = RngHandle::derive(seed, StreamRole::Data, 0, 0);
    let y = simulate_data(gt, n, &mut data_rng)?;
    let omega_pp0 = gt.omega0.get(p - 1, p - 1);
    let ls = least_squares_column(&y, omega_pp0, j)?;

    let tau_sq = opts.tau * opts.tau;
    let theta = ls.scale * ls.scale / tau_sq;
    let w_hat = ls.estimate / ls.scale;
    let bound = shrinkage_bound(&BiasCheckInput::new(w_hat, theta)).ok();

    let mut rng = RngHandle::derive(seed, StreamRole::Chain, 0, 0);
    let noise_prec = 1.0 / (ls.scale * ls.scale);
    let (mut lambda_sq, mut nu) = (1.0f64, 1.0f64);
    let mut cond_means = Vec::with_capacity(opts.draws);
    for it in 0..opts.burnin + opts.draws {
        let var = 1.0 / (noise_prec + 1.0 / (lambda_sq * tau_sq));
        let mean = var * noise_prec * ls.estimate;
        let omega = mean + var.sqrt() * rng.standard_normal();
        lambda_sq = draw_local_scale(omega, nu, tau_sq, &mut rng)?;
        nu = draw_local_mixing(lambda_sq, &mut rng)?;
        if it >= opts.burnin {
            // E(ω | λ², data) for the λ² just drawn.
            let v = 1.0 / (noise_prec + 1.0 / (lambda_sq * tau_sq));
            cond_means.push(v * noise_prec * ls.estimate);
        }
    }
    let (mean, se) = batch_means(&cond_means, opts.batches);
    Ok(ShrinkageCheck {
        posterior_mean_scaled: mean / ls.scale,
        ls_estimate_scaled: w_hat,
        theta,
        bound,
        relative_shrinkage: (1.0 - mean / ls.estimate).abs(),
        mc_se: se / ls.estimate.abs(),
    })
}

/// Mean and batch-means standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let k = means.len() as f64;
    let grand = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    (grand, (var / k).sqrt())
}

/// Shape and scale of the law of `{(Y₋ₚᵀY₋ₚ)⁻¹_jj}⁻¹`:
/// `Gamma((n − p + 2)/2, scale 2 / (ω_jj0 − ω_pj0²/ω_pp0))`.
pub fn scaling_factor_law(gt: &GroundTruth, n: usize, j: usize) -> Result<(f64, f64)> {
    let p = gt.dim();
    if j + 1 >= p || n < p {
        return Err(GhsError::Domain(format!("need j < p − 1 and n > p − 1 (j={j}, n={n}, p={p})")));
    }
    let o = &gt.omega0;
    let conditional = o.get(j, j) - o.get(p - 1, j).powi(2) / o.get(p - 1, p - 1);
    Ok(((n as f64 - p as f64 + 2.0) / 2.0, 2.0 / conditional))
}

/// `reps` independent realizations of `{(Y₋ₚᵀY₋ₚ)⁻¹_jj}⁻¹`.
pub fn scaling_factor_samples(gt: &GroundTruth, n: usize, j: usize, reps: usize, rng: &mut RngHandle) -> Result<Vec<f64>> {
    let omega_pp0 = gt.omega0.get(gt.dim() - 1, gt.dim() - 1);
    (0..reps)
        .map(|_| {
            let y = simulate_data(gt, n, rng)?;
            Ok(1.0 / least_squares_column(&y, omega_pp0, j)?.inverse_gram_jj)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::PrecisionMatrix;

    /// E(Z) for Z ~ CCH(1, 1/2, 1, ω̂′²/2, 1, θ), by midpoint quadrature over
    /// λ = tan(u) with a half-Cauchy prior on λ.
    fn exact_shrinkage(w: f64, theta: f64) -> f64 {
        let steps = 200_000;
        let h = std::f64::consts::FRAC_PI_2 / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..steps {
            let lam = ((k as f64 + 0.5) * h).tan();
            let t = 1.0 + lam * lam / theta;
            let like = (-w * w / (2.0 * t)).exp() / t.sqrt();
            num += like / t;
            den += like;
        }
        num / den
    }

    #[test]
    fn bound_arithmetic() {
        let b = shrinkage_bound(&BiasCheckInput {
            omega_hat_scaled: 2.0,
            theta: 1.0,
            c1: 0.2642,
            c2: 0.75,
        })
        .unwrap();
        assert!((b - 4.0 * 1.0142 * 3.0 / 16.0).abs() < 1e-12);
        assert!((b - 0.7607).abs() < 1e-4);
        assert!((C1 - 0.2642).abs() < 1e-4);
    }

    #[test]
    fn bound_domain_and_shape() {
        assert!(matches!(shrinkage_bound(&BiasCheckInput::new(1.4, 1.0)), Err(GhsError::Domain(_))));
        assert!(shrinkage_bound(&BiasCheckInput::new(2.0, 0.0)).is_err());
        let b2 = shrinkage_bound(&BiasCheckInput::new(2.0, 1.0)).unwrap();
        let b3 = shrinkage_bound(&BiasCheckInput::new(3.0, 1.0)).unwrap();
        assert!(b3 < b2);
        let b2x = shrinkage_bound(&BiasCheckInput::new(2.0, 2.0)).unwrap();
        assert!((b2x - 2.0 * b2).abs() < 1e-15);
        assert_eq!(b2, shrinkage_bound(&BiasCheckInput::new(-2.0, 1.0)).unwrap());
    }

    #[test]
    fn bound_matches_rederivation() {
        let mut rng = RngHandle::new(1, 0);
        for _ in 0..10 {
            let w = 1.5 + 10.0 * rng.uniform();
            let theta = 0.01 + 5.0 * rng.uniform();
            let expected = 4.0 * (C1 + C2) * theta * (2.0 + w * w) / (2.0 * w.powi(4));
            let got = shrinkage_bound(&BiasCheckInput::new(w, theta)).unwrap();
            assert!((got / expected - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bound_dominates_exact_shrinkage_for_theta_at_least_one() {
        for w in [1.5, 2.0, 3.0, 5.0, 8.0, 15.0] {
            for theta in [1.0, 2.0, 5.0] {
                let exact = exact_shrinkage(w, theta);
                let bound = shrinkage_bound(&BiasCheckInput::new(w, theta)).unwrap();
                assert!(exact < bound, "w={w} theta={theta}: {exact} vs {bound}");
            }
        }
    }

    #[test]
    fn bound_fails_for_small_theta() {
        // Large-signal shrinkage tends to 2/ω̂′² independent of θ.
        let exact = exact_shrinkage(8.0, 0.1);
        let bound = shrinkage_bound(&BiasCheckInput::new(8.0, 0.1)).unwrap();
        assert!(exact > bound);
        assert!((exact * 64.0 / 2.0 - 1.0).abs() < 0.25);
    }

    fn signal_truth() -> GroundTruth {
        let mut m = DMatrix::identity(10, 10);
        m[(0, 9)] = 0.5;
        m[(9, 0)] = 0.5;
        GroundTruth::from_omega(PrecisionMatrix::new(m).unwrap(), "test").unwrap()
    }

    #[test]
    fn gibbs_shrinkage_matches_quadrature() {
        let gt = signal_truth();
        let opts = ShrinkageCheckOptions::default();
        let check = empirical_shrinkage_check(&gt, 200, 0, 3, &opts).unwrap();
        let exact = exact_shrinkage(check.ls_estimate_scaled, check.theta);
        assert!(
            (check.relative_shrinkage - exact).abs() < 4.0 * check.mc_se + 1e-4,
            "{check:?} exact={exact}"
        );
        assert_eq!(check.within_bound(), Some(true));
    }

    #[test]
    fn zero_signal_is_usually_out_of_domain() {
        let gt = signal_truth();
        // Coordinate 3 has ω_{9,3} = 0.
        let out = (0..10)
            .filter(|&seed| {
                !empirical_shrinkage_check(&gt, 200, 3, seed, &ShrinkageCheckOptions { draws: 1000, burnin: 10, ..Default::default() })
                    .unwrap()
                    .in_domain()
            })
            .count();
        assert!(out >= 5, "{out}");
    }

    #[test]
    fn precondition_on_sample_size() {
        let gt = signal_truth();
        assert!(matches!(
            empirical_shrinkage_check(&gt, 9, 0, 0, &ShrinkageCheckOptions::default()),
            Err(GhsError::Domain(_))
        ));
    }

    #[test]
    fn scaling_law_parameters() {
        let gt = signal_truth();
        let (shape, scale) = scaling_factor_law(&gt, 200, 0).unwrap();
        assert_eq!(shape, 96.0);
        assert!((scale - 2.0 / 0.75).abs() < 1e-15);
        assert!(scaling_factor_law(&gt, 200, 9).is_err());
    }

    #[test]
    fn batch_means_constant_series() {
        let (m, se) = batch_means(&[2.0; 100], 10);
        assert_eq!((m, se), (2.0, 0.0));
    }
}
