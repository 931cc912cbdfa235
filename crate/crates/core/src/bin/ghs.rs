use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ghs_core::archive::load_chain;
use ghs_core::experiment::{data_warnings, run_estimate, run_experiment, scenario_truth, EstimateConfig, ExperimentConfig, Preset};
use ghs_core::gibbs::GhsConfig;
use ghs_core::metrics::roc_from_chain;
use ghs_core::report::{read_matrix_csv, write_roc_csv, METRIC_NAMES};
use ghs_core::samplers::{RngHandle, StreamRole};
use ghs_core::structure::{scatter, simulate_data, GroundTruth};
use ghs_core::trace::{default_convergence, emit_trace, two_chain_trace};
use ghs_core::{GhsError, PrecisionMatrix, Result};

/// Graphical horseshoe estimation of sparse precision matrices.
#[derive(Parser)]
#[command(name = "ghs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated simulation: metrics per dataset and a summary row.
    Simulate(SimArgs),
    /// Estimate Ω from a data CSV (rows are observations).
    Estimate(EstimateArgs),
    /// Stein's-loss traces of two chains started at I and at a random PD matrix.
    Trace(TraceArgs),
    /// ROC points from credible intervals of width 0.99 down to 0.01.
    Roc(RocArgs),
}

#[derive(Args, Clone)]
struct Sampling {
    /// Burn-in sweeps (default by dimension: 500, 1000 or 2500).
    #[arg(long)]
    burnin: Option<usize>,
    /// Retained draws.
    #[arg(long, default_value_t = 5000)]
    nmc: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Sampling {
    fn config(&self, p: usize) -> GhsConfig {
        let mut cfg = GhsConfig::for_dimension(p);
        if let Some(b) = self.burnin {
            cfg.burnin = b;
        }
        cfg.nmc = self.nmc;
        cfg.thin = self.thin;
        cfg
    }
}

#[derive(Args, Clone)]
struct Scenario {
    #[arg(long, default_value = "hubs100")]
    preset: String,
    /// Must match the preset's dimension when given.
    #[arg(long)]
    p: Option<usize>,
    /// Observations per dataset (default by preset).
    #[arg(long)]
    n: Option<usize>,
}

impl Scenario {
    fn experiment(&self, s: &Sampling) -> Result<ExperimentConfig> {
        let preset: Preset = self.preset.parse()?;
        if let Some(p) = self.p {
            if p != preset.dim() {
                return Err(GhsError::Config(format!(
                    "--p {p} does not match preset {} (p = {})",
                    preset.name(),
                    preset.dim()
                )));
            }
        }
        let mut cfg = ExperimentConfig::from_preset(preset);
        if let Some(n) = self.n {
            cfg.n = n;
        }
        cfg.ghs = s.config(preset.dim());
        cfg.seed = s.seed;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    scenario: Scenario,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 50)]
    datasets: usize,
    /// Credible-interval width used for edge selection.
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    #[arg(long, default_value = "ghs_out")]
    out: PathBuf,
    /// Also write roc.csv.
    #[arg(long)]
    roc: bool,
    /// Also write the dataset-0 trace.
    #[arg(long)]
    trace: bool,
    /// Archive every chain.
    #[arg(long)]
    save_chains: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Numeric CSV, optional header row.
    data: PathBuf,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    /// Data are already centered.
    #[arg(long)]
    no_center: bool,
    #[arg(long, default_value = "ghs_out")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    scenario: Scenario,
    /// Burn-in is 0 unless given; every sweep is traced.
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1000)]
    nmc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inset window as START:END (0-based sweeps).
    #[arg(long, default_value = "400:500")]
    inset: String,
    #[arg(long, default_value = "ghs_out")]
    out: PathBuf,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    scenario: Scenario,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 1)]
    datasets: usize,
    /// Use an archived chain instead of simulating; needs --truth.
    #[arg(long, requires = "truth")]
    chain: Option<PathBuf>,
    /// Dense Ω₀ CSV for --chain.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "ghs_out")]
    out: PathBuf,
}

fn simulate(args: SimArgs) -> Result<()> {
    let mut cfg = args.scenario.experiment(&args.sampling)?;
    cfg.num_datasets = args.datasets;
    cfg.selection_level = args.level;
    cfg.output_dir = Some(args.out.clone());
    cfg.emit_roc = args.roc;
    cfg.emit_trace = args.trace;
    cfg.save_chains = args.save_chains;
    let out = run_experiment(&cfg)?;
    println!("{} (n = {}, {} datasets)", out.truth.description, cfg.n, cfg.num_datasets);
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        println!("{name:>12}  {:.4} ({:.4})", out.summary.mean[k], out.summary.sd[k]);
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let data = read_matrix_csv(&args.data)?;
    let mut cfg = EstimateConfig::new(args.sampling.config(data.ncols()), args.sampling.seed);
    cfg.selection_level = args.level;
    cfg.center = !args.no_center;
    cfg.output_dir = Some(args.out.clone());
    for w in data_warnings(&data, cfg.center) {
        eprintln!("warning: {w}");
    }
    let out = run_estimate(data, &cfg)?;
    println!(
        "p = {}, {} draws, {} edges selected at level {}",
        out.posterior_mean.dim(),
        out.chain.len(),
        out.edges.len(),
        args.level
    );
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn parse_window(s: &str) -> Result<std::ops::Range<usize>> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| GhsError::Config(format!("window {s:?} is not START:END")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| GhsError::Config(format!("window {s:?} is not START:END")))
    };
    Ok(parse(a)?..parse(b)?)
}

fn trace(args: TraceArgs) -> Result<()> {
    let sampling = Sampling {
        burnin: Some(args.burnin),
        nmc: args.nmc,
        thin: 1,
        seed: args.seed,
    };
    let cfg = args.scenario.experiment(&sampling)?;
    let inset = parse_window(&args.inset)?;
    let truth = scenario_truth(&cfg)?;
    let y = simulate_data(&truth, cfg.n, &mut RngHandle::derive(cfg.seed, StreamRole::Data, 0, 0))?;
    let s = scatter(&y)?;
    let series = two_chain_trace(&s, Some(&truth), &cfg.ghs, cfg.seed)?;
    emit_trace(&series, true, &args.out, inset)?;
    for sr in &series {
        match default_convergence(&sr.values) {
            Ok(c) => println!("{}: relative change of mean loss, sweeps 400-500 vs 900-1000 = {c:.4}", sr.label),
            Err(_) => println!("{}: {} sweeps traced", sr.label, sr.values.len()),
        }
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn roc(args: RocArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let curves = if let Some(path) = &args.chain {
        let chain = load_chain(path)?;
        let truth_path = args.truth.as_ref().expect("clap enforces --truth");
        let omega0 = PrecisionMatrix::new(read_matrix_csv(truth_path)?)?;
        let truth = GroundTruth::from_omega(omega0, "loaded")?;
        vec![(0, roc_from_chain(&chain, &truth.adjacency0)?)]
    } else {
        let mut cfg = args.scenario.experiment(&args.sampling)?;
        cfg.num_datasets = args.datasets;
        cfg.emit_roc = true;
        let out = run_experiment(&cfg)?;
        out.datasets
            .into_iter()
            .map(|d| (d.row.dataset, d.roc.expect("roc requested")))
            .collect()
    };
    write_roc_csv(&args.out.join("roc.csv"), &curves)?;
    for (d, c) in &curves {
        let mid = c.points.iter().find(|p| (p.level - 0.5).abs() < 1e-9);
        if let Some(pt) = mid {
            println!("dataset {d}: level 0.50 fpr {:.4} tpr {:.4}", pt.fpr, pt.tpr);
        }
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Trace(a) => trace(a),
        Command::Roc(a) => roc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
