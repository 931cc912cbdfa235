//! Block Gibbs sampler for the graphical horseshoe.
//!
//! Each sweep visits every column `i` of Ω in order:
//!
//! ```text
//! γ        ~ Gamma(n/2 + 1, rate = s_ii / 2)
//! C⁻¹      = s_ii Ω[-i,-i]⁻¹ + diag(λ²[-i,i] τ²)⁻¹
//! β        ~ Normal(−C s[-i,i], C)
//! ω[-i,i]  = β,   ω_ii = γ + βᵀ Ω[-i,-i]⁻¹ β
//! λ²[j,i]  ~ InvGamma(1, 1/ν[j,i] + ω[j,i]² / 2τ²)      for j ≠ i
//! ν[j,i]   ~ InvGamma(1, 1 + 1/λ²[j,i])
//! ```
//!
//! and then refreshes the global scale:
//!
//! ```text
//! τ² ~ InvGamma((C(p,2) + 1)/2, 1/ξ + Σ_{i<j} ω_ij² / 2λ²_ij)
//! ξ  ~ InvGamma(1, 1 + 1/τ²)
//! ```
//!
//! Ω[-i,-i]⁻¹ is read off the tracked Σ = Ω⁻¹, and Σ is updated with the
//! rank-one formulas after each column, so no p×p inversion happens inside a
//! sweep. Inverse-gamma variates use the shape–scale convention throughout.

use nalgebra::{DMatrix, DVector};

use crate::chain::{Chain, ChainBuilder, StoragePolicy};
use crate::error::{GhsError, Result};
use crate::matrix::{
    identity_drift, inverse_block, spd_inverse, strict_cholesky, symmetrize, PrecisionMatrix, ScatterMatrix,
};
use crate::samplers::{sample_gamma, sample_inverse_gamma, RngHandle};

/// Lower clamp applied to every sampled scale parameter.
pub const SCALE_FLOOR: f64 = 1e-300;

/// Maximum tolerated `max |ΩΣ − I|` before Σ is recomputed from Ω.
pub const DRIFT_TOL: f64 = 1e-6;

/// Sampler run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GhsConfig {
    pub burnin: usize,
    /// Retained draws; the sampler runs `burnin + nmc * thin` sweeps.
    pub nmc: usize,
    /// Hold τ fixed at this value instead of resampling it.
    pub fixed_tau: Option<f64>,
    pub thin: usize,
    /// Recompute Σ from Ω every this many sweeps regardless of drift.
    pub refresh_every: usize,
    pub storage: StoragePolicy,
}

impl GhsConfig {
    pub fn new(burnin: usize, nmc: usize) -> Self {
        Self {
            burnin,
            nmc,
            fixed_tau: None,
            thin: 1,
            refresh_every: 100,
            storage: StoragePolicy::default(),
        }
    }

    /// Burn-in schedule by dimension (500 / 1000 / 2500) with 5000 retained draws.
    pub fn for_dimension(p: usize) -> Self {
        Self::new(default_burnin(p), 5000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nmc == 0 {
            return Err(GhsError::Config("nmc must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(GhsError::Config("thin must be at least 1".into()));
        }
        if self.refresh_every == 0 {
            return Err(GhsError::Config("refresh_every must be at least 1".into()));
        }
        if let Some(tau) = self.fixed_tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(GhsError::Config(format!("fixed_tau must be positive, got {tau}")));
            }
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burnin + self.nmc * self.thin
    }
}

pub fn default_burnin(p: usize) -> usize {
    match p {
        0..=100 => 500,
        101..=200 => 1000,
        _ => 2500,
    }
}

/// Local scales λ², their augmentation ν, the global τ² and its augmentation ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageState {
    /// Symmetric; diagonal held at 1 and never read.
    pub lambda_sq: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub tau_sq: f64,
    pub xi: f64,
}

impl ShrinkageState {
    pub fn ones(p: usize) -> Self {
        Self {
            lambda_sq: DMatrix::from_element(p, p, 1.0),
            nu: DMatrix::from_element(p, p, 1.0),
            tau_sq: 1.0,
            xi: 1.0,
        }
    }
}

/// Current Ω, its tracked inverse Σ, and the shrinkage parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub omega: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub shrink: ShrinkageState,
    pub sweep_index: usize,
}

impl SamplerState {
    /// Ω = Σ = I, Λ = N = 1, τ = ξ = 1.
    pub fn initial(p: usize) -> Self {
        Self {
            omega: DMatrix::identity(p, p),
            sigma: DMatrix::identity(p, p),
            shrink: ShrinkageState::ones(p),
            sweep_index: 0,
        }
    }

    /// Starts from an arbitrary positive definite Ω, with Σ = Ω⁻¹.
    pub fn from_omega(omega: &PrecisionMatrix) -> Result<Self> {
        let p = omega.dim();
        Ok(Self {
            omega: omega.as_matrix().clone(),
            sigma: omega.inverse()?,
            shrink: ShrinkageState::ones(p),
            sweep_index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn drift(&self) -> f64 {
        identity_drift(&self.omega, &self.sigma)
    }

    /// Closed-form conditional of column `i` given everything else.
    pub fn column_conditional(&self, s: &ScatterMatrix, i: usize) -> Result<ColumnConditional> {
        let p = self.dim();
        if i >= p {
            return Err(GhsError::IndexOutOfRange { index: i, dim: p });
        }
        let sm = s.as_matrix();
        let s_ii = sm[(i, i)];
        if !(s_ii > 0.0) {
            return Err(self.degenerate(i, format!("s[{i},{i}] = {s_ii} must be positive")));
        }
        let inv_block = inverse_block(&self.sigma, i).map_err(|_| {
            self.degenerate(i, format!("sigma[{i},{i}] = {} is not positive", self.sigma[(i, i)]))
        })?;
        let k = p - 1;
        let tau_sq = self.shrink.tau_sq;
        let mut precision = &inv_block * s_ii;
        let mut s_col = DVector::zeros(k);
        for (r, row) in (0..p).filter(|&r| r != i).enumerate() {
            precision[(r, r)] += 1.0 / (self.shrink.lambda_sq[(row, i)] * tau_sq);
            s_col[r] = sm[(row, i)];
        }
        Ok(ColumnConditional {
            index: i,
            gamma_shape: s.n() as f64 / 2.0 + 1.0,
            gamma_rate: s_ii / 2.0,
            inv_block,
            precision,
            s_col,
        })
    }

    /// Redraws column/row `i` of Ω and applies the rank-one update to Σ.
    pub fn update_column(&mut self, s: &ScatterMatrix, i: usize, rng: &mut RngHandle) -> Result<ColumnDraw> {
        let cond = self.column_conditional(s, i)?;
        let gamma = sample_gamma(cond.gamma_shape, cond.gamma_rate, rng)?;
        let k = cond.s_col.len();
        let beta = if k == 0 {
            DVector::zeros(0)
        } else {
            let chol = strict_cholesky(cond.precision.clone())
                .ok_or_else(|| self.degenerate(i, "conditional precision of beta is not positive definite".into()))?;
            let mean = -chol.solve(&cond.s_col);
            let z = DVector::from_fn(k, |_, _| rng.standard_normal());
            // Lᵀ x = z gives x with covariance (L Lᵀ)⁻¹ = C.
            let noise = chol
                .l_dirty()
                .tr_solve_lower_triangular(&z)
                .ok_or_else(|| self.degenerate(i, "triangular solve failed".into()))?;
            mean + noise
        };

        let w = &cond.inv_block * &beta;
        let omega_ii = gamma + beta.dot(&w);
        let p = self.dim();
        let idx: Vec<usize> = (0..p).filter(|&r| r != i).collect();

        for (r, &row) in idx.iter().enumerate() {
            self.omega[(row, i)] = beta[r];
            self.omega[(i, row)] = beta[r];
        }
        self.omega[(i, i)] = omega_ii;

        let inv_gamma = 1.0 / gamma;
        for (c, &col) in idx.iter().enumerate() {
            for (r, &row) in idx.iter().enumerate() {
                self.sigma[(row, col)] = cond.inv_block[(r, c)] + (w[r] * w[c]) * inv_gamma;
            }
            self.sigma[(col, i)] = -w[c] * inv_gamma;
            self.sigma[(i, col)] = -w[c] * inv_gamma;
        }
        self.sigma[(i, i)] = inv_gamma;
        Ok(ColumnDraw { gamma, beta })
    }

    /// Redraws `λ²[j,i]` then `ν[j,i]` for every `j ≠ i`, mirrored to `[i,j]`.
    pub fn update_shrinkage_column(&mut self, i: usize, rng: &mut RngHandle) -> Result<()> {
        let p = self.dim();
        if i >= p {
            return Err(GhsError::IndexOutOfRange { index: i, dim: p });
        }
        let tau_sq = self.shrink.tau_sq;
        for j in (0..p).filter(|&j| j != i) {
            let lam = draw_local_scale(self.omega[(j, i)], self.shrink.nu[(j, i)], tau_sq, rng)?;
            self.shrink.lambda_sq[(j, i)] = lam;
            self.shrink.lambda_sq[(i, j)] = lam;
        }
        for j in (0..p).filter(|&j| j != i) {
            let nu = draw_local_mixing(self.shrink.lambda_sq[(j, i)], rng)?;
            self.shrink.nu[(j, i)] = nu;
            self.shrink.nu[(i, j)] = nu;
        }
        Ok(())
    }

    /// Redraws τ² and then ξ.
    pub fn update_global(&mut self, rng: &mut RngHandle) -> Result<()> {
        let (shape, scale) = self.global_conditional();
        let tau_sq = sample_inverse_gamma(shape, scale, rng)?.max(SCALE_FLOOR);
        self.shrink.tau_sq = tau_sq;
        self.shrink.xi = draw_global_mixing(tau_sq, rng)?;
        Ok(())
    }

    /// `(shape, scale)` of the τ² conditional.
    pub fn global_conditional(&self) -> (f64, f64) {
        let p = self.dim();
        let pairs = (p * p.saturating_sub(1) / 2) as f64;
        let mut scale = 1.0 / self.shrink.xi;
        for j in 0..p {
            for i in 0..j {
                let w = self.omega[(i, j)];
                scale += w * w / (2.0 * self.shrink.lambda_sq[(i, j)]);
            }
        }
        ((pairs + 1.0) / 2.0, scale)
    }

    fn degenerate(&self, column: usize, reason: String) -> GhsError {
        GhsError::NumericalDegeneracy {
            sweep: self.sweep_index,
            column,
            reason,
        }
    }
}

/// `λ² ~ InvGamma(1, 1/ν + ω²/(2τ²))`, floored at [`SCALE_FLOOR`].
pub fn draw_local_scale(omega: f64, nu: f64, tau_sq: f64, rng: &mut RngHandle) -> Result<f64> {
    let scale = 1.0 / nu + omega * omega / (2.0 * tau_sq);
    Ok(sample_inverse_gamma(1.0, scale, rng)?.max(SCALE_FLOOR))
}

/// `ν ~ InvGamma(1, 1 + 1/λ²)`, floored at [`SCALE_FLOOR`].
pub fn draw_local_mixing(lambda_sq: f64, rng: &mut RngHandle) -> Result<f64> {
    Ok(sample_inverse_gamma(1.0, 1.0 + 1.0 / lambda_sq, rng)?.max(SCALE_FLOOR))
}

/// `ξ ~ InvGamma(1, 1 + 1/τ²)`, floored at [`SCALE_FLOOR`].
pub fn draw_global_mixing(tau_sq: f64, rng: &mut RngHandle) -> Result<f64> {
    Ok(sample_inverse_gamma(1.0, 1.0 + 1.0 / tau_sq, rng)?.max(SCALE_FLOOR))
}

/// The Gamma × Normal conditional of one column in (γ, β) coordinates.
#[derive(Debug, Clone)]
pub struct ColumnConditional {
    pub index: usize,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Ω[-i,-i]⁻¹.
    pub inv_block: DMatrix<f64>,
    /// C⁻¹ = s_ii Ω[-i,-i]⁻¹ + diag(λ² τ²)⁻¹.
    pub precision: DMatrix<f64>,
    pub s_col: DVector<f64>,
}

impl ColumnConditional {
    /// −C s[-i,i], via a Cholesky solve.
    pub fn beta_mean(&self) -> Result<DVector<f64>> {
        if self.s_col.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let chol = strict_cholesky(self.precision.clone())
            .ok_or_else(|| GhsError::NotPositiveDefinite("beta precision".into()))?;
        Ok(-chol.solve(&self.s_col))
    }
}

/// The (γ, β) values drawn by one column update.
#[derive(Debug, Clone)]
pub struct ColumnDraw {
    pub gamma: f64,
    pub beta: DVector<f64>,
}

/// What happened to Σ at the end of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    /// 1-based index of the completed sweep.
    pub sweep: usize,
    /// `max |ΩΣ − I|` from the rank-one updates alone.
    pub drift_before: f64,
    pub refreshed: bool,
    /// `max |ΩΣ − I|` after any refresh.
    pub drift_after: f64,
}

/// Owns the state and stream for one chain.
pub struct GhsSampler<'a> {
    s: &'a ScatterMatrix,
    config: GhsConfig,
    state: SamplerState,
    rng: RngHandle,
}

impl<'a> GhsSampler<'a> {
    pub fn new(s: &'a ScatterMatrix, config: GhsConfig, rng: RngHandle) -> Result<Self> {
        Self::with_state(s, config, rng, SamplerState::initial(s.dim()))
    }

    pub fn with_state(s: &'a ScatterMatrix, config: GhsConfig, rng: RngHandle, state: SamplerState) -> Result<Self> {
        config.validate()?;
        if state.dim() != s.dim() {
            return Err(GhsError::Dimension(format!(
                "start state is {0}x{0}, scatter matrix {1}x{1}",
                state.dim(),
                s.dim()
            )));
        }
        let mut state = state;
        if let Some(tau) = config.fixed_tau {
            state.shrink.tau_sq = tau * tau;
        }
        Ok(Self { s, config, state, rng })
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn config(&self) -> &GhsConfig {
        &self.config
    }

    /// One column update followed by that column's shrinkage update.
    pub fn step_column(&mut self, i: usize) -> Result<()> {
        self.state.update_column(self.s, i, &mut self.rng)?;
        self.state.update_shrinkage_column(i, &mut self.rng)
    }

    /// Finishes a sweep after all columns: global update, then drift control.
    pub fn finish_sweep(&mut self) -> Result<SweepReport> {
        if self.config.fixed_tau.is_none() {
            self.state.update_global(&mut self.rng)?;
        }
        self.state.sweep_index += 1;
        let sweep = self.state.sweep_index;
        let drift_before = self.state.drift();
        let refreshed = drift_before > DRIFT_TOL || sweep.is_multiple_of(self.config.refresh_every);
        let drift_after = if refreshed {
            symmetrize(&mut self.state.omega);
            self.state.sigma = spd_inverse(&self.state.omega).map_err(|_| GhsError::NumericalDegeneracy {
                sweep,
                column: self.s.dim() - 1,
                reason: "omega lost positive definiteness".into(),
            })?;
            self.state.drift()
        } else {
            drift_before
        };
        Ok(SweepReport {
            sweep,
            drift_before,
            refreshed,
            drift_after,
        })
    }

    pub fn sweep(&mut self) -> Result<SweepReport> {
        for i in 0..self.s.dim() {
            self.step_column(i)?;
        }
        self.finish_sweep()
    }

    /// Runs every configured sweep, calling `observe` after each, and keeps the retained draws.
    pub fn run_observed(mut self, mut observe: impl FnMut(&SamplerState, &SweepReport)) -> Result<Chain> {
        let p = self.s.dim();
        let reservoir_rng = self.rng.substream(u64::MAX);
        let mut builder = ChainBuilder::new(p, self.config.clone(), self.rng.seed(), Some(reservoir_rng));
        let total = self.config.total_sweeps();
        for _ in 0..total {
            let report = self.sweep()?;
            observe(&self.state, &report);
            let kept = report.sweep.saturating_sub(self.config.burnin);
            if kept > 0 && kept % self.config.thin == 0 {
                builder.push(&self.state.omega);
            }
        }
        Ok(builder.finish())
    }

    pub fn run(self) -> Result<Chain> {
        self.run_observed(|_, _| {})
    }
}

/// Runs the sampler from Ω = Σ = I and returns the retained draws.
pub fn run_ghs(s: &ScatterMatrix, config: GhsConfig, rng: RngHandle) -> Result<Chain> {
    GhsSampler::new(s, config, rng)?.run()
}

/// Posterior mean of a chain.
pub fn posterior_mean(chain: &Chain) -> Result<PrecisionMatrix> {
    chain.posterior_mean()
}

/// Credible-interval selection on a chain.
pub fn credible_interval_select(chain: &Chain, level: f64) -> Result<crate::matrix::Adjacency> {
    chain.credible_interval_select(level)
}

/// A well-conditioned random positive definite start: `A Aᵀ / p + I/2`.
pub fn random_pd_start(p: usize, rng: &mut RngHandle) -> PrecisionMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| rng.standard_normal());
    let mut m = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5;
    symmetrize(&mut m);
    PrecisionMatrix::new(m).expect("Gram matrix plus identity is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{cholesky_pd_check, partition};

    fn scatter(m: DMatrix<f64>, n: usize) -> ScatterMatrix {
        ScatterMatrix::new(m, n).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(GhsConfig::new(0, 0).validate().is_err());
        assert!(GhsConfig { thin: 0, ..GhsConfig::new(0, 1) }.validate().is_err());
        assert!(GhsConfig { fixed_tau: Some(0.0), ..GhsConfig::new(0, 1) }.validate().is_err());
        assert_eq!(GhsConfig { thin: 3, ..GhsConfig::new(10, 5) }.total_sweeps(), 25);
        assert_eq!(default_burnin(100), 500);
        assert_eq!(default_burnin(200), 1000);
        assert_eq!(default_burnin(400), 2500);
        assert_eq!(GhsConfig::for_dimension(50).nmc, 5000);
    }

    #[test]
    fn p1_column_update_is_pure_gamma() {
        let s = scatter(DMatrix::from_element(1, 1, 50.0), 50);
        let mut state = SamplerState::initial(1);
        let mut rng = RngHandle::new(1, 1);
        let draw = state.update_column(&s, 0, &mut rng).unwrap();
        assert_eq!(draw.beta.len(), 0);
        assert_eq!(state.omega[(0, 0)], draw.gamma);
        assert_eq!(state.sigma[(0, 0)], 1.0 / draw.gamma);
    }

    #[test]
    fn global_conditional_shapes() {
        let mut state = SamplerState::initial(2);
        state.omega[(0, 1)] = 0.0;
        state.omega[(1, 0)] = 0.0;
        assert_eq!(state.global_conditional(), (1.0, 1.0));
        assert_eq!(SamplerState::initial(3).global_conditional().0, 2.0);
    }

    #[test]
    fn column_update_preserves_structure() {
        let mut rng = RngHandle::new(2, 0);
        let p = 6;
        let a = DMatrix::from_fn(20, p, |_, _| rng.standard_normal());
        let s = scatter(a.transpose() * &a, 20);
        let mut state = SamplerState::initial(p);
        for sweep in 0..20 {
            for i in 0..p {
                let before = partition(&state.omega, i).unwrap().off_block;
                state.update_column(&s, i, &mut rng).unwrap();
                state.update_shrinkage_column(i, &mut rng).unwrap();
                assert_eq!(partition(&state.omega, i).unwrap().off_block, before);
                assert!(cholesky_pd_check(&state.omega).unwrap(), "sweep {sweep} col {i}");
            }
            state.update_global(&mut rng).unwrap();
            assert!(state.drift() < 1e-8);
        }
        assert_eq!(state.shrink.lambda_sq, state.shrink.lambda_sq.transpose());
        assert_eq!(state.shrink.nu, state.shrink.nu.transpose());
        assert!(state.shrink.lambda_sq.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn run_rejects_mismatched_start() {
        let s = scatter(DMatrix::identity(3, 3), 3);
        let res = GhsSampler::with_state(&s, GhsConfig::new(0, 1), RngHandle::new(0, 0), SamplerState::initial(2));
        assert!(matches!(res, Err(GhsError::Dimension(_))));
    }

    #[test]
    fn zero_scatter_diagonal_is_degenerate() {
        let s = scatter(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), 1);
        let err = run_ghs(&s, GhsConfig::new(0, 1), RngHandle::new(0, 0)).unwrap_err();
        assert!(matches!(err, GhsError::NumericalDegeneracy { sweep: 0, column: 0, .. }));
    }

    #[test]
    fn thinning_and_burnin_counts() {
        let s = scatter(DMatrix::identity(2, 2) * 10.0, 10);
        let config = GhsConfig {
            thin: 3,
            ..GhsConfig::new(4, 5)
        };
        let mut sweeps = 0;
        let chain = GhsSampler::new(&s, config, RngHandle::new(1, 2))
            .unwrap()
            .run_observed(|_, r| sweeps = r.sweep)
            .unwrap();
        assert_eq!(sweeps, 4 + 15);
        assert_eq!(chain.len(), 5);
        assert_eq!(chain.burnin(), 4);
    }

    #[test]
    fn fixed_tau_stays_fixed() {
        let s = scatter(DMatrix::identity(3, 3) * 5.0, 5);
        let config = GhsConfig {
            fixed_tau: Some(0.3),
            ..GhsConfig::new(0, 1)
        };
        let mut sampler = GhsSampler::new(&s, config, RngHandle::new(3, 3)).unwrap();
        for _ in 0..5 {
            sampler.sweep().unwrap();
        }
        assert!((sampler.state().shrink.tau_sq - 0.09).abs() < 1e-15);
        assert_eq!(sampler.state().shrink.xi, 1.0);
    }

    #[test]
    fn random_start_is_pd() {
        let mut rng = RngHandle::new(4, 4);
        let start = random_pd_start(10, &mut rng);
        assert!(cholesky_pd_check(start.as_matrix()).unwrap());
        let state = SamplerState::from_omega(&start).unwrap();
        assert!(state.drift() < 1e-10);
    }
}
