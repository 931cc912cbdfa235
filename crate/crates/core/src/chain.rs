//! Retained Monte Carlo draws and the estimators computed from them:
//! posterior mean and central credible-interval edge selection.

use nalgebra::DMatrix;

use crate::error::{GhsError, Result};
use crate::gibbs::GhsConfig;
use crate::matrix::{pack_upper, packed_index, packed_len, unpack_upper, Adjacency, PrecisionMatrix};
use crate::samplers::RngHandle;

/// How retained draws are kept in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoragePolicy {
    /// Full draws up to `full_max_p`, otherwise moments plus a reservoir of `reservoir` draws.
    Auto { full_max_p: usize, reservoir: usize },
    Full,
    Summary { reservoir: usize },
}

impl Default for StoragePolicy {
    fn default() -> Self {
        StoragePolicy::Auto {
            full_max_p: 200,
            reservoir: 2048,
        }
    }
}

impl StoragePolicy {
    fn reservoir_for(self, p: usize) -> Option<usize> {
        match self {
            StoragePolicy::Full => None,
            StoragePolicy::Summary { reservoir } => Some(reservoir.max(1)),
            StoragePolicy::Auto { full_max_p, reservoir } => (p > full_max_p).then_some(reservoir.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Packed upper triangles, one per draw, concatenated.
    Full(Vec<f64>),
    Summary(SummaryStore),
}

#[derive(Debug, Clone, PartialEq)]
struct SummaryStore {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    capacity: usize,
    reservoir: Vec<f64>,
}

/// Ordered post-burn-in draws of Ω with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    p: usize,
    config: GhsConfig,
    rng_seed: u64,
    storage: Storage,
}

impl Chain {
    /// Chain over stored packed draws (as produced by [`Chain::packed_draws`]).
    pub fn from_packed(p: usize, config: GhsConfig, rng_seed: u64, packed: Vec<f64>) -> Result<Self> {
        if p == 0 || !packed.len().is_multiple_of(packed_len(p)) {
            return Err(GhsError::Dimension(format!(
                "payload of {} values is not a whole number of {p}x{p} draws",
                packed.len()
            )));
        }
        Ok(Self {
            p,
            config,
            rng_seed,
            storage: Storage::Full(packed),
        })
    }

    /// Chain built from explicit draws; each is checked for positive definiteness.
    pub fn from_draws(config: GhsConfig, rng_seed: u64, draws: &[PrecisionMatrix]) -> Result<Self> {
        let p = draws.first().ok_or(GhsError::EmptyChain)?.dim();
        let mut builder = ChainBuilder::new(p, config, rng_seed, None);
        for d in draws {
            if d.dim() != p {
                return Err(GhsError::Dimension("draws of differing dimension".into()));
            }
            builder.push(d.as_matrix());
        }
        Ok(builder.finish())
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn config(&self) -> &GhsConfig {
        &self.config
    }

    pub fn burnin(&self) -> usize {
        self.config.burnin
    }

    pub fn nmc(&self) -> usize {
        self.config.nmc
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Number of retained draws.
    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Full(v) => v.len() / packed_len(self.p),
            Storage::Summary(s) => s.count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when only moments and a reservoir subsample are kept.
    pub fn is_summary(&self) -> bool {
        matches!(self.storage, Storage::Summary(_))
    }

    /// Packed draws: the full sequence, or the reservoir for summary chains.
    pub fn packed_draws(&self) -> &[f64] {
        match &self.storage {
            Storage::Full(v) => v,
            Storage::Summary(s) => &s.reservoir,
        }
    }

    /// Number of draws available in [`Chain::packed_draws`].
    pub fn sample_count(&self) -> usize {
        self.packed_draws().len() / packed_len(self.p)
    }

    /// Draw `k` of the stored samples as a dense matrix.
    pub fn draw(&self, k: usize) -> PrecisionMatrix {
        let len = packed_len(self.p);
        let packed = &self.packed_draws()[k * len..(k + 1) * len];
        PrecisionMatrix::from_verified(unpack_upper(self.p, packed))
    }

    pub fn draws(&self) -> impl Iterator<Item = PrecisionMatrix> + '_ {
        (0..self.sample_count()).map(|k| self.draw(k))
    }

    /// Stored samples of `ω[i][j]`.
    pub fn entry_samples(&self, i: usize, j: usize) -> Vec<f64> {
        let len = packed_len(self.p);
        let off = packed_index(self.p, i, j);
        self.packed_draws().chunks_exact(len).map(|d| d[off]).collect()
    }

    /// Entrywise posterior mean, symmetrized and checked for positive definiteness.
    pub fn posterior_mean(&self) -> Result<PrecisionMatrix> {
        if self.is_empty() {
            return Err(GhsError::EmptyChain);
        }
        let mean = match &self.storage {
            Storage::Full(v) => {
                let len = packed_len(self.p);
                let mut acc = vec![0.0; len];
                for draw in v.chunks_exact(len) {
                    for (a, x) in acc.iter_mut().zip(draw) {
                        *a += x;
                    }
                }
                let count = (v.len() / len) as f64;
                acc.iter_mut().for_each(|a| *a /= count);
                acc
            }
            Storage::Summary(s) => s.mean.clone(),
        };
        PrecisionMatrix::new(unpack_upper(self.p, &mean))
    }

    /// Entrywise posterior variance (denominator `len - 1`; zero for one draw).
    pub fn posterior_variance(&self) -> Result<DMatrix<f64>> {
        if self.is_empty() {
            return Err(GhsError::EmptyChain);
        }
        let var = match &self.storage {
            Storage::Full(v) => {
                let len = packed_len(self.p);
                let count = v.len() / len;
                let mut mean = vec![0.0; len];
                let mut m2 = vec![0.0; len];
                for (k, draw) in v.chunks_exact(len).enumerate() {
                    welford(&mut mean, &mut m2, draw, k + 1);
                }
                finish_variance(m2, count)
            }
            Storage::Summary(s) => finish_variance(s.m2.clone(), s.count),
        };
        Ok(unpack_upper(self.p, &var))
    }

    /// Sorted per-pair samples, reusable across selection levels.
    pub fn sorted_entries(&self) -> Result<SortedEntries> {
        SortedEntries::from_chain(self)
    }

    /// Edges whose central `level` credible interval excludes zero.
    pub fn credible_interval_select(&self, level: f64) -> Result<Adjacency> {
        check_level(level)?;
        self.sorted_entries()?.select(level)
    }
}

impl Chain {
    /// `(count, capacity, mean, m2, reservoir)` for summary chains.
    pub(crate) fn summary_parts(&self) -> Option<(usize, usize, &[f64], &[f64], &[f64])> {
        match &self.storage {
            Storage::Full(_) => None,
            Storage::Summary(s) => Some((s.count, s.capacity, &s.mean, &s.m2, &s.reservoir)),
        }
    }

    pub(crate) fn from_summary(
        p: usize,
        config: GhsConfig,
        rng_seed: u64,
        count: usize,
        capacity: usize,
        mean: Vec<f64>,
        m2: Vec<f64>,
        reservoir: Vec<f64>,
    ) -> Result<Self> {
        let len = packed_len(p);
        if mean.len() != len || m2.len() != len || !reservoir.len().is_multiple_of(len) || reservoir.len() / len > capacity.min(count) {
            return Err(GhsError::Dimension("inconsistent summary chain layout".into()));
        }
        Ok(Self {
            p,
            config,
            rng_seed,
            storage: Storage::Summary(SummaryStore {
                count,
                mean,
                m2,
                capacity,
                reservoir,
            }),
        })
    }
}

fn welford(mean: &mut [f64], m2: &mut [f64], x: &[f64], count: usize) {
    let c = count as f64;
    for ((m, s), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(x) {
        let delta = v - *m;
        *m += delta / c;
        *s += delta * (v - *m);
    }
}

fn finish_variance(mut m2: Vec<f64>, count: usize) -> Vec<f64> {
    let denom = if count > 1 { (count - 1) as f64 } else { f64::INFINITY };
    m2.iter_mut().for_each(|v| *v /= denom);
    m2
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(GhsError::Parameter(format!("credible level must lie in (0, 1), got {level}")))
    }
}

/// Accumulates retained draws according to a [`StoragePolicy`].
pub struct ChainBuilder {
    p: usize,
    config: GhsConfig,
    rng_seed: u64,
    storage: Storage,
    reservoir_rng: Option<RngHandle>,
}

impl ChainBuilder {
    /// `reservoir_rng` drives reservoir replacement; it is only consulted for summary storage.
    pub fn new(p: usize, config: GhsConfig, rng_seed: u64, reservoir_rng: Option<RngHandle>) -> Self {
        let storage = match config.storage.reservoir_for(p) {
            None => Storage::Full(Vec::with_capacity(packed_len(p) * config.nmc)),
            Some(capacity) => Storage::Summary(SummaryStore {
                count: 0,
                mean: vec![0.0; packed_len(p)],
                m2: vec![0.0; packed_len(p)],
                capacity,
                reservoir: Vec::with_capacity(packed_len(p) * capacity.min(config.nmc)),
            }),
        };
        Self {
            p,
            config,
            rng_seed,
            storage,
            reservoir_rng: reservoir_rng.or_else(|| Some(RngHandle::new(rng_seed, u64::MAX))),
        }
    }

    pub fn push(&mut self, omega: &DMatrix<f64>) {
        let packed = pack_upper(omega);
        match &mut self.storage {
            Storage::Full(v) => v.extend_from_slice(&packed),
            Storage::Summary(s) => {
                s.count += 1;
                welford(&mut s.mean, &mut s.m2, &packed, s.count);
                let len = packed.len();
                if s.reservoir.len() / len < s.capacity {
                    s.reservoir.extend_from_slice(&packed);
                } else {
                    // Algorithm R: keep the new draw with probability capacity / count.
                    let rng = self.reservoir_rng.as_mut().expect("reservoir rng");
                    let slot = (rng.uniform() * s.count as f64) as usize;
                    if slot < s.capacity {
                        s.reservoir[slot * len..(slot + 1) * len].copy_from_slice(&packed);
                    }
                }
            }
        }
    }

    pub fn finish(self) -> Chain {
        Chain {
            p: self.p,
            config: self.config,
            rng_seed: self.rng_seed,
            storage: self.storage,
        }
    }
}

/// Linear interpolation between order statistics: `h = (N − 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// For every off-diagonal pair `i < j`, its samples in ascending order.
#[derive(Debug, Clone)]
pub struct SortedEntries {
    p: usize,
    draws: usize,
    values: Vec<f64>,
}

impl SortedEntries {
    pub fn from_chain(chain: &Chain) -> Result<Self> {
        let p = chain.dim();
        let draws = chain.sample_count();
        if draws == 0 {
            return Err(GhsError::EmptyChain);
        }
        let pairs = p * (p - 1) / 2;
        let mut values = vec![0.0; pairs * draws];
        let len = packed_len(p);
        for (d, packed) in chain.packed_draws().chunks_exact(len).enumerate() {
            let mut pair = 0;
            for i in 0..p {
                let base = packed_index(p, i, i);
                for j in (i + 1)..p {
                    values[pair * draws + d] = packed[base + (j - i)];
                    pair += 1;
                }
            }
        }
        for chunk in values.chunks_exact_mut(draws) {
            chunk.sort_by(f64::total_cmp);
        }
        Ok(Self { p, draws, values })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Central `level` interval of pair `(i, j)`, `i < j`.
    pub fn interval(&self, pair: usize, level: f64) -> (f64, f64) {
        let xs = &self.values[pair * self.draws..(pair + 1) * self.draws];
        (quantile_sorted(xs, (1.0 - level) / 2.0), quantile_sorted(xs, (1.0 + level) / 2.0))
    }

    pub fn select(&self, level: f64) -> Result<Adjacency> {
        check_level(level)?;
        let mut adj = Adjacency::empty(self.p);
        let mut pair = 0;
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                let (lo, hi) = self.interval(pair, level);
                if lo > 0.0 || hi < 0.0 {
                    adj.set(i, j, true);
                }
                pair += 1;
            }
        }
        Ok(adj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nmc: usize) -> GhsConfig {
        GhsConfig {
            nmc,
            ..GhsConfig::new(0, nmc)
        }
    }

    fn pm(m: DMatrix<f64>) -> PrecisionMatrix {
        PrecisionMatrix::new(m).unwrap()
    }

    #[test]
    fn singleton_and_pair_means() {
        let d = pm(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let chain = Chain::from_draws(cfg(1), 0, std::slice::from_ref(&d)).unwrap();
        assert_eq!(chain.posterior_mean().unwrap(), d);

        let chain = Chain::from_draws(
            cfg(2),
            0,
            &[PrecisionMatrix::identity(3), pm(DMatrix::identity(3, 3) * 3.0)],
        )
        .unwrap();
        assert_eq!(chain.posterior_mean().unwrap().as_matrix(), &(DMatrix::identity(3, 3) * 2.0));
    }

    #[test]
    fn empty_chain_errors() {
        assert!(matches!(Chain::from_draws(cfg(1), 0, &[]), Err(GhsError::EmptyChain)));
        let chain = Chain::from_packed(2, cfg(1), 0, vec![]).unwrap();
        assert!(matches!(chain.posterior_mean(), Err(GhsError::EmptyChain)));
        assert!(matches!(chain.credible_interval_select(0.5), Err(GhsError::EmptyChain)));
    }

    #[test]
    fn streaming_mean_matches_two_pass() {
        let mut rng = RngHandle::new(3, 0);
        let p = 4;
        let draws: Vec<PrecisionMatrix> = (0..5000)
            .map(|_| {
                let mut m = DMatrix::identity(p, p) * 3.0;
                for i in 0..p {
                    for j in (i + 1)..p {
                        let v = 0.5 * (rng.uniform() - 0.5);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                pm(m)
            })
            .collect();
        let chain = Chain::from_draws(cfg(5000), 0, &draws).unwrap();
        let mean = chain.posterior_mean().unwrap();
        // Two-pass oracle: naive mean, then add back the mean residual.
        for i in 0..p {
            for j in 0..p {
                let xs: Vec<f64> = draws.iter().map(|d| d.get(i, j)).collect();
                let m0 = xs.iter().sum::<f64>() / xs.len() as f64;
                let m1 = m0 + xs.iter().map(|x| x - m0).sum::<f64>() / xs.len() as f64;
                assert!((mean.get(i, j) - m1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    fn chain_with_entry(values: &[f64]) -> Chain {
        let draws: Vec<PrecisionMatrix> = values
            .iter()
            .map(|&v| pm(DMatrix::from_row_slice(2, 2, &[1.0, v, v, 1.0])))
            .collect();
        Chain::from_draws(cfg(values.len()), 0, &draws).unwrap()
    }

    #[test]
    fn constant_entry_selected_at_every_level() {
        let chain = chain_with_entry(&[0.5; 20]);
        for level in [0.01, 0.5, 0.99] {
            assert!(chain.credible_interval_select(level).unwrap().get(0, 1));
        }
    }

    #[test]
    fn symmetric_entry_never_selected() {
        let vals: Vec<f64> = (0..41).map(|k| (k as f64 - 20.0) / 40.0).collect();
        let chain = chain_with_entry(&vals);
        for level in [0.01, 0.5, 0.99] {
            let adj = chain.credible_interval_select(level).unwrap();
            assert!(!adj.get(0, 1) && !adj.get(1, 0) && !adj.get(0, 0));
        }
    }

    #[test]
    fn rejects_bad_levels() {
        let chain = chain_with_entry(&[0.1, 0.2]);
        for bad in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(chain.credible_interval_select(bad).is_err());
        }
    }

    #[test]
    fn summary_storage_tracks_moments_and_reservoir() {
        let mut config = cfg(300);
        config.storage = StoragePolicy::Summary { reservoir: 50 };
        let mut builder = ChainBuilder::new(2, config.clone(), 1, Some(RngHandle::new(9, 9)));
        let mut full = ChainBuilder::new(2, GhsConfig { storage: StoragePolicy::Full, ..config }, 1, None);
        let mut rng = RngHandle::new(10, 0);
        for _ in 0..300 {
            let v = rng.uniform() - 0.3;
            let m = DMatrix::from_row_slice(2, 2, &[1.0 + v * v, v * 0.5, v * 0.5, 1.0]);
            builder.push(&m);
            full.push(&m);
        }
        let summary = builder.finish();
        let full = full.finish();
        assert!(summary.is_summary() && !full.is_summary());
        assert_eq!(summary.len(), 300);
        assert_eq!(summary.sample_count(), 50);
        let a = summary.posterior_mean().unwrap();
        let b = full.posterior_mean().unwrap();
        assert!((a.as_matrix() - b.as_matrix()).amax() < 1e-12);
        let va = summary.posterior_variance().unwrap();
        let vb = full.posterior_variance().unwrap();
        assert!((va - vb).amax() < 1e-12);
    }
}
