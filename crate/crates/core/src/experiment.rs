//! Simulation experiments over replicated datasets, and estimation on a
//! user-supplied data matrix.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::archive::save_chain;
use crate::chain::Chain;
use crate::error::{GhsError, Result};
use crate::gibbs::{GhsConfig, GhsSampler};
use crate::matrix::{pack_upper, PrecisionMatrix, ScatterMatrix};
use crate::metrics::{confusion, roc_from_sorted, LossReport, RocCurve};
use crate::report::{
    append_log, edge_records, summarize, write_edges_csv, write_matrix_csv, write_metrics_csv, write_roc_csv,
    write_summary_csv, write_vertices_csv, EdgeRecord, MetricsRow, Summary,
};
use crate::samplers::{RngHandle, StreamRole};
use crate::structure::{gen_structure, scatter, simulate_data, GroundTruth, StructureKind, StructureSpec};
use crate::trace::{emit_trace, TraceSeries, TraceTarget};

pub const THREADS_ENV: &str = "GHS_THREADS";

/// Named simulation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Random100,
    Hubs100,
    CliquesPos100,
    CliquesNeg100,
    Random200,
    Hubs200,
    CliquesPos200,
    CliquesNeg200,
    Hubs400,
    CliquesNeg400,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Random100,
        Preset::Hubs100,
        Preset::CliquesPos100,
        Preset::CliquesNeg100,
        Preset::Random200,
        Preset::Hubs200,
        Preset::CliquesPos200,
        Preset::CliquesNeg200,
        Preset::Hubs400,
        Preset::CliquesNeg400,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Random100 => "random100",
            Preset::Hubs100 => "hubs100",
            Preset::CliquesPos100 => "cliques_pos100",
            Preset::CliquesNeg100 => "cliques_neg100",
            Preset::Random200 => "random200",
            Preset::Hubs200 => "hubs200",
            Preset::CliquesPos200 => "cliques_pos200",
            Preset::CliquesNeg200 => "cliques_neg200",
            Preset::Hubs400 => "hubs400",
            Preset::CliquesNeg400 => "cliques_neg400",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Preset::Random100 | Preset::Hubs100 | Preset::CliquesPos100 | Preset::CliquesNeg100 => 100,
            Preset::Hubs400 | Preset::CliquesNeg400 => 400,
            _ => 200,
        }
    }

    /// Default observations per dataset.
    pub fn default_n(self) -> usize {
        if self.dim() == 100 {
            50
        } else {
            120
        }
    }

    pub fn spec(self) -> StructureSpec {
        let p = self.dim();
        let groups = p / 10;
        let kind = match self {
            Preset::Random100 => StructureKind::Random {
                prob: 0.01,
                low: -1.0,
                high: -0.2,
            },
            Preset::Random200 => StructureKind::Random {
                prob: 0.002,
                low: -1.0,
                high: -0.2,
            },
            Preset::Hubs100 | Preset::Hubs200 | Preset::Hubs400 => StructureKind::Hubs {
                groups,
                size: 10,
                value: 0.25,
            },
            Preset::CliquesPos100 | Preset::CliquesPos200 => StructureKind::Cliques {
                groups,
                size: 3,
                value: -0.45,
            },
            Preset::CliquesNeg100 | Preset::CliquesNeg200 | Preset::CliquesNeg400 => StructureKind::Cliques {
                groups,
                size: 3,
                value: 0.75,
            },
        };
        StructureSpec::new(kind, p)
    }
}

impl FromStr for Preset {
    type Err = GhsError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                GhsError::Config(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub structure: StructureSpec,
    pub n: usize,
    pub num_datasets: usize,
    pub ghs: GhsConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub selection_level: f64,
    pub emit_roc: bool,
    /// Trace of dataset 0's chain.
    pub emit_trace: bool,
    /// Worker cap; `None` reads `GHS_THREADS`, then the core count.
    pub threads: Option<usize>,
    /// Archive each dataset's chain as `chain_<d>.ghs`.
    pub save_chains: bool,
    /// Keep each dataset's chain in the returned outcome.
    pub keep_chains: bool,
}

impl ExperimentConfig {
    pub fn new(structure: StructureSpec, n: usize) -> Self {
        let p = structure.dim;
        Self {
            structure,
            n,
            num_datasets: 50,
            ghs: GhsConfig::for_dimension(p),
            seed: 0,
            output_dir: None,
            selection_level: 0.5,
            emit_roc: false,
            emit_trace: false,
            threads: None,
            save_chains: false,
            keep_chains: false,
        }
    }

    pub fn from_preset(preset: Preset) -> Self {
        Self::new(preset.spec(), preset.default_n())
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        self.ghs.validate()?;
        if self.n == 0 {
            return Err(GhsError::Config("n must be at least 1".into()));
        }
        if self.num_datasets == 0 {
            return Err(GhsError::Config("at least one dataset is required".into()));
        }
        if !(self.selection_level > 0.0 && self.selection_level < 1.0) {
            return Err(GhsError::Config(format!(
                "selection level must lie in (0, 1), got {}",
                self.selection_level
            )));
        }
        if self.threads == Some(0) {
            return Err(GhsError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// `requested`, else `GHS_THREADS`, else the number of logical cores.
pub fn resolve_threads(requested: Option<usize>) -> Result<usize> {
    if let Some(t) = requested {
        return Ok(t.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| GhsError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| GhsError::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone)]
pub struct DatasetResult {
    pub row: MetricsRow,
    pub posterior_mean: PrecisionMatrix,
    pub roc: Option<RocCurve>,
    pub trace: Option<Vec<f64>>,
    pub chain: Option<Chain>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub truth: GroundTruth,
    /// Sorted by dataset index.
    pub datasets: Vec<DatasetResult>,
    pub summary: Summary,
}

impl ExperimentOutcome {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.datasets.iter().map(|d| d.row).collect()
    }
}

/// Scenario-level Ω₀: one realization per (structure, seed).
pub fn scenario_truth(config: &ExperimentConfig) -> Result<GroundTruth> {
    gen_structure(&config.structure, &RngHandle::derive(config.seed, StreamRole::Structure, 0, 0))
}

fn run_dataset(config: &ExperimentConfig, truth: &GroundTruth, d: usize) -> Result<DatasetResult> {
    let mut data_rng = RngHandle::derive(config.seed, StreamRole::Data, d as u64, 0);
    let y = simulate_data(truth, config.n, &mut data_rng)?;
    let s = scatter(&y)?;
    let chain_rng = RngHandle::derive(config.seed, StreamRole::Chain, d as u64, 0);
    let sampler = GhsSampler::new(&s, config.ghs.clone(), chain_rng)?;
    let want_trace = config.emit_trace && d == 0;
    let (chain, trace) = if want_trace {
        let target = TraceTarget::new(Some(truth), &s)?;
        let mut values = Vec::with_capacity(config.ghs.total_sweeps());
        let mut failure = None;
        let chain = sampler.run_observed(|state, _| match target.eval(&state.omega) {
            Ok(v) => values.push(v),
            Err(e) => {
                failure.get_or_insert(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        (chain, Some(values))
    } else {
        (sampler.run()?, None)
    };
    let posterior_mean = chain.posterior_mean()?;
    let loss = LossReport::compute(&posterior_mean, &truth.omega0)?;
    let sorted = chain.sorted_entries()?;
    let selected = sorted.select(config.selection_level)?;
    let row = MetricsRow {
        dataset: d,
        loss,
        confusion: confusion(&selected, &truth.adjacency0)?,
    };
    let roc = if config.emit_roc {
        Some(roc_from_sorted(&sorted, &truth.adjacency0)?)
    } else {
        None
    };
    if config.save_chains {
        if let Some(dir) = &config.output_dir {
            save_chain(&chain, &dir.join(format!("chain_{d}.ghs")))?;
        }
    }
    Ok(DatasetResult {
        row,
        posterior_mean,
        roc,
        trace,
        chain: config.keep_chains.then_some(chain),
    })
}

/// Generates Ω₀ once, then for each dataset simulates data, runs the
/// sampler and scores the posterior mean and the selection. Datasets run in
/// parallel; results are ordered by dataset index, so thread count never
/// changes the output.
///
/// Files written to `output_dir` when set: `truth.csv`, `metrics.csv`,
/// `summary.csv`, `roc.csv` and `trace.{csv,svg}` when requested, and
/// `timing.log` (the only file with wall-clock content).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let started = Instant::now();
    let truth = scenario_truth(config)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let threads = resolve_threads(config.threads)?;
    let results: Vec<Result<DatasetResult>> = pool(threads)?.install(|| {
        (0..config.num_datasets)
            .into_par_iter()
            .map(|d| {
                run_dataset(config, &truth, d).map_err(|e| GhsError::Dataset {
                    dataset: d,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let datasets = results.into_iter().collect::<Result<Vec<_>>>()?;
    let values: Vec<[f64; 8]> = datasets.iter().map(|d| d.row.values()).collect();
    let summary = summarize(&values)?;
    let outcome = ExperimentOutcome {
        truth,
        datasets,
        summary,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(config, &outcome, dir)?;
        append_log(
            &dir.join("timing.log"),
            &format!(
                "{} datasets={} threads={threads} wall_clock_s={:.3}",
                outcome.truth.description,
                config.num_datasets,
                started.elapsed().as_secs_f64()
            ),
        )?;
    }
    Ok(outcome)
}

fn write_outputs(config: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    write_matrix_csv(&dir.join("truth.csv"), outcome.truth.omega0.as_matrix())?;
    write_metrics_csv(&dir.join("metrics.csv"), &outcome.rows())?;
    write_summary_csv(&dir.join("summary.csv"), &outcome.summary)?;
    if config.emit_roc {
        let curves: Vec<(usize, RocCurve)> = outcome
            .datasets
            .iter()
            .filter_map(|d| d.roc.clone().map(|c| (d.row.dataset, c)))
            .collect();
        write_roc_csv(&dir.join("roc.csv"), &curves)?;
    }
    if let Some(values) = outcome.datasets.first().and_then(|d| d.trace.clone()) {
        let series = [TraceSeries {
            chain_id: 0,
            label: "dataset 0".into(),
            values,
        }];
        let b = config.ghs.burnin;
        emit_trace(&series, true, dir, b.saturating_sub(100)..b)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub ghs: GhsConfig,
    pub seed: u64,
    pub selection_level: f64,
    /// Subtract column means before forming the scatter matrix.
    pub center: bool,
    pub output_dir: Option<PathBuf>,
}

impl EstimateConfig {
    pub fn new(ghs: GhsConfig, seed: u64) -> Self {
        Self {
            ghs,
            seed,
            selection_level: 0.5,
            center: true,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub posterior_mean: PrecisionMatrix,
    pub edges: Vec<EdgeRecord>,
    pub chain: Chain,
    pub warnings: Vec<String>,
}

/// Subtracts column means in place; returns the indices of constant columns.
pub fn center_columns(y: &mut DMatrix<f64>) -> Vec<usize> {
    let n = y.nrows() as f64;
    let mut constant = Vec::new();
    for j in 0..y.ncols() {
        let mut col = y.column_mut(j);
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        if col.iter().all(|&x| x == 0.0) {
            constant.push(j);
        }
    }
    constant
}

/// Warnings about columns that carry no information (constant, or all zero
/// when not centering).
pub fn data_warnings(y: &DMatrix<f64>, center: bool) -> Vec<String> {
    (0..y.ncols())
        .filter(|&j| {
            let col = y.column(j);
            if center {
                col.iter().all(|&x| x == col[0])
            } else {
                col.iter().all(|&x| x == 0.0)
            }
        })
        .map(|j| format!("column {j} has zero variance"))
        .collect()
}

/// Runs the sampler on an `n × p` data matrix. When `output_dir` is set it
/// receives `posterior_mean.csv`, `edges.csv` (selected pairs with partial
/// correlations), `vertices.csv` (residual variances `1/ω_ii`) and
/// `chain.ghs`.
pub fn run_estimate(data: DMatrix<f64>, config: &EstimateConfig) -> Result<EstimateOutcome> {
    config.ghs.validate()?;
    if !(config.selection_level > 0.0 && config.selection_level < 1.0) {
        return Err(GhsError::Config(format!(
            "selection level must lie in (0, 1), got {}",
            config.selection_level
        )));
    }
    let mut y = data;
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(GhsError::Csv("data matrix is empty".into()));
    }
    let warnings = data_warnings(&y, config.center);
    if config.center {
        center_columns(&mut y);
    }
    let s = ScatterMatrix::new(y.transpose() * &y, y.nrows())?;
    let rng = RngHandle::derive(config.seed, StreamRole::Chain, 0, 0);
    let chain = GhsSampler::new(&s, config.ghs.clone(), rng)?.run()?;
    let posterior_mean = chain.posterior_mean()?;
    let selected = chain.credible_interval_select(config.selection_level)?;
    let edges = edge_records(&posterior_mean, &selected.edges());
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("posterior_mean.csv"), posterior_mean.as_matrix())?;
        write_edges_csv(&dir.join("edges.csv"), &edges)?;
        write_vertices_csv(&dir.join("vertices.csv"), &posterior_mean)?;
        save_chain(&chain, &dir.join("chain.ghs"))?;
    }
    Ok(EstimateOutcome {
        posterior_mean,
        edges,
        chain,
        warnings,
    })
}

/// Packed posterior mean entries, for bitwise comparisons.
pub fn packed_mean_bits(mean: &PrecisionMatrix) -> Vec<u64> {
    pack_upper(mean.as_matrix()).iter().map(|x| x.to_bits()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            StructureSpec::new(
                StructureKind::Cliques {
                    groups: 2,
                    size: 3,
                    value: 0.5,
                },
                8,
            ),
            40,
        );
        cfg.num_datasets = 3;
        cfg.ghs = GhsConfig::new(20, 40);
        cfg.seed = seed;
        cfg.threads = Some(2);
        cfg
    }

    #[test]
    fn presets_encode_scenarios() {
        let hubs = Preset::Hubs100.spec();
        assert_eq!(
            hubs.kind,
            StructureKind::Hubs {
                groups: 10,
                size: 10,
                value: 0.25
            }
        );
        assert_eq!(hubs.dim, 100);
        assert_eq!(Preset::CliquesNeg400.spec().kind, StructureKind::Cliques { groups: 40, size: 3, value: 0.75 });
        assert_eq!(Preset::CliquesPos200.spec().kind, StructureKind::Cliques { groups: 20, size: 3, value: -0.45 });
        assert!(matches!(Preset::Random200.spec().kind, StructureKind::Random { prob, .. } if prob == 0.002));
        assert_eq!(Preset::Hubs400.default_n(), 120);
        assert_eq!(Preset::Random100.default_n(), 50);
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.spec().validate().unwrap();
        }
        assert!(matches!("hubs".parse::<Preset>(), Err(GhsError::Config(_))));
        let cfg = ExperimentConfig::from_preset(Preset::Hubs200);
        assert_eq!((cfg.n, cfg.ghs.burnin, cfg.ghs.nmc, cfg.selection_level), (120, 1000, 5000, 0.5));
    }

    #[test]
    fn experiment_rows_and_summary() {
        let out = run_experiment(&tiny(1)).unwrap();
        assert_eq!(out.datasets.len(), 3);
        for (k, d) in out.datasets.iter().enumerate() {
            assert_eq!(d.row.dataset, k);
            assert!(d.row.loss.steins_loss > 0.0);
        }
        assert_eq!(out.summary.datasets, 3);
        assert!(!out.summary.sd_degenerate);
    }

    #[test]
    fn single_dataset_flags_degenerate_sd() {
        let mut cfg = tiny(2);
        cfg.num_datasets = 1;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.summary.sd_degenerate);
        assert!(out.summary.sd.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut a = tiny(3);
        a.threads = Some(1);
        let mut b = tiny(3);
        b.threads = Some(3);
        let ra = run_experiment(&a).unwrap();
        let rb = run_experiment(&b).unwrap();
        assert_eq!(ra.rows(), rb.rows());
        for (x, y) in ra.datasets.iter().zip(&rb.datasets) {
            assert_eq!(packed_mean_bits(&x.posterior_mean), packed_mean_bits(&y.posterior_mean));
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = tiny(0);
        cfg.selection_level = 1.0;
        assert!(matches!(run_experiment(&cfg), Err(GhsError::Config(_))));
        let mut cfg = tiny(0);
        cfg.num_datasets = 0;
        assert!(run_experiment(&cfg).is_err());
        assert!(resolve_threads(Some(3)).unwrap() == 3);
    }

    #[test]
    fn centering_and_constant_columns() {
        let mut y = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert_eq!(center_columns(&mut y), vec![1]);
        assert_eq!(y.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn estimate_p1_has_no_edges() {
        let y = DMatrix::from_fn(30, 1, |i, _| (i as f64 * 0.37).sin());
        let out = run_estimate(y, &EstimateConfig::new(GhsConfig::new(10, 50), 0)).unwrap();
        assert_eq!(out.posterior_mean.dim(), 1);
        assert!(out.edges.is_empty());
        assert!(out.warnings.is_empty());
    }
}
