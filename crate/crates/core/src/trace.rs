//! Per-sweep loss traces for convergence checks, written as CSV and SVG.
//!
//! With a known Ω₀ the traced value is Stein's loss of the current Ω. Without
//! one it is the log-likelihood up to a constant,
//! `(n/2) log det Ω − tr(SΩ)/2`.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;

use crate::chain::Chain;
use crate::error::{GhsError, Result};
use crate::gibbs::{random_pd_start, GhsConfig, GhsSampler, SamplerState};
use crate::matrix::{PrecisionMatrix, ScatterMatrix};
use crate::metrics::steins_loss_with_inverse;
use crate::samplers::{RngHandle, StreamRole};
use crate::structure::GroundTruth;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub chain_id: usize,
    pub label: String,
    /// One value per sweep, burn-in included.
    pub values: Vec<f64>,
}

/// Traced quantity, fixed once per run.
pub enum TraceTarget<'a> {
    Truth { log_det: f64, sigma0: DMatrix<f64> },
    LogLikelihood(&'a ScatterMatrix),
}

impl<'a> TraceTarget<'a> {
    pub fn new(truth: Option<&GroundTruth>, s: &'a ScatterMatrix) -> Result<Self> {
        Ok(match truth {
            Some(gt) => TraceTarget::Truth {
                log_det: gt.omega0.log_det()?,
                sigma0: gt.sigma0.as_matrix().clone(),
            },
            None => TraceTarget::LogLikelihood(s),
        })
    }

    pub fn is_loss(&self) -> bool {
        matches!(self, TraceTarget::Truth { .. })
    }

    pub fn eval(&self, omega: &DMatrix<f64>) -> Result<f64> {
        let omega = PrecisionMatrix::new(omega.clone())?;
        match self {
            TraceTarget::Truth { log_det, sigma0 } => steins_loss_with_inverse(&omega, *log_det, sigma0),
            TraceTarget::LogLikelihood(s) => {
                let tr: f64 = s.as_matrix().iter().zip(omega.as_matrix().iter()).map(|(a, b)| a * b).sum();
                Ok(s.n() as f64 / 2.0 * omega.log_det()? - tr / 2.0)
            }
        }
    }
}

/// Runs one chain from `start`, recording the target after every sweep.
pub fn trace_chain(
    s: &ScatterMatrix,
    config: GhsConfig,
    rng: RngHandle,
    start: SamplerState,
    target: &TraceTarget,
) -> Result<(Chain, Vec<f64>)> {
    let mut values = Vec::with_capacity(config.total_sweeps());
    let mut failure = None;
    let chain = GhsSampler::with_state(s, config, rng, start)?.run_observed(|state, _| {
        if failure.is_none() {
            match target.eval(&state.omega) {
                Ok(v) => values.push(v),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((chain, values)),
    }
}

/// The two-chain diagnostic: chain 0 starts at Ω = I, chain 1 at a random
/// positive definite matrix.
pub fn two_chain_trace(
    s: &ScatterMatrix,
    truth: Option<&GroundTruth>,
    config: &GhsConfig,
    seed: u64,
) -> Result<Vec<TraceSeries>> {
    let target = TraceTarget::new(truth, s)?;
    let p = s.dim();
    let mut start_rng = RngHandle::derive(seed, StreamRole::Start, 0, 1);
    let starts = [
        ("identity start", SamplerState::initial(p)),
        ("random start", SamplerState::from_omega(&random_pd_start(p, &mut start_rng))?),
    ];
    starts
        .into_iter()
        .enumerate()
        .map(|(id, (label, state))| {
            let rng = RngHandle::derive(seed, StreamRole::Chain, 0, id as u64);
            let (_, values) = trace_chain(s, config.clone(), rng, state, &target)?;
            Ok(TraceSeries {
                chain_id: id,
                label: label.to_string(),
                values,
            })
        })
        .collect()
}

/// Trace recomputed from a chain's stored draws.
pub fn trace_from_chain(chain: &Chain, chain_id: usize, target: &TraceTarget) -> Result<TraceSeries> {
    let values = chain.draws().map(|d| target.eval(d.as_matrix())).collect::<Result<_>>()?;
    Ok(TraceSeries {
        chain_id,
        label: format!("chain {chain_id}"),
        values,
    })
}

fn window_mean(values: &[f64], w: &Range<usize>) -> Result<f64> {
    let slice = values
        .get(w.clone())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| GhsError::Config(format!("window {w:?} outside a trace of {} sweeps", values.len())))?;
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

/// `|mean(early) − mean(late)| / |mean(late)|`, windows as 0-based sweep ranges.
pub fn convergence_statistic(values: &[f64], early: Range<usize>, late: Range<usize>) -> Result<f64> {
    let a = window_mean(values, &early)?;
    let b = window_mean(values, &late)?;
    Ok((a - b).abs() / b.abs())
}

/// Default windows: sweeps 400–500 against 900–1000.
pub fn default_convergence(values: &[f64]) -> Result<f64> {
    convergence_statistic(values, 400..500, 900..1000)
}

pub fn write_trace_csv(path: &Path, series: &[TraceSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chain_id", "iter", "loss"])?;
    for s in series {
        for (k, v) in s.values.iter().enumerate() {
            w.write_record([s.chain_id.to_string(), (k + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f4e8c", "#c0392b", "#2e8b57", "#8e44ad"];
const DASHES: [&str; 4] = ["6 3", "2 2", "none", "8 2 2 2"];

struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xlim: (f64, f64),
    ylim: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x + (x - self.xlim.0) / (self.xlim.1 - self.xlim.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y + self.h - (y - self.ylim.0) / (self.ylim.1 - self.ylim.0) * self.h
    }
}

fn limits(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9 * hi.abs().max(1.0));
    (lo - pad, hi + pad)
}

fn polyline(svg: &mut String, f: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str, dash: &str, width: f64) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" stroke-dasharray="{dash}" points="{}"/>"#,
        coords.join(" ")
    );
}

fn axes(svg: &mut String, f: &Frame, font: f64) {
    let _ = writeln!(
        svg,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="#333"/>"##,
        f.x, f.y, f.w, f.h
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.xlim.0 + t * (f.xlim.1 - f.xlim.0);
        let yv = f.ylim.0 + t * (f.ylim.1 - f.ylim.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="{font}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            f.y + f.h + font * 1.3,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="{font}" text-anchor="end">{}</text>"#,
            f.x - 4.0,
            f.py(yv) + font * 0.35,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Overlaid line plot with an inset over `inset` (0-based sweeps) showing
/// each chain's mean in that window as a horizontal line.
pub fn trace_svg(series: &[TraceSeries], inset: Range<usize>, ylabel: &str) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let main = Frame {
        x: 70.0,
        y: 30.0,
        w: 620.0,
        h: 340.0,
        xlim: (1.0, n as f64),
        ylim: limits(series.iter().flat_map(|s| s.values.iter().copied())),
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="720" height="420" font-family="sans-serif">"#
    );
    axes(&mut svg, &main, 11.0);
    for (k, s) in series.iter().enumerate() {
        let pts = s.values.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v));
        polyline(&mut svg, &main, pts, COLORS[k % 4], DASHES[k % 4], 1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{}">{}</text>"#,
            main.x + 10.0,
            main.y + 16.0 + 14.0 * k as f64,
            COLORS[k % 4],
            xml_escape(&s.label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="412" font-size="12" text-anchor="middle">iteration</text>"#,
        main.x + main.w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        main.y + main.h / 2.0,
        main.y + main.h / 2.0,
        xml_escape(ylabel)
    );

    let lo = inset.start.min(n);
    let hi = inset.end.min(n);
    if hi > lo + 1 {
        let window: Vec<(usize, &[f64])> = series
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.values.get(lo..hi.min(s.values.len())).map(|w| (k, w)))
            .filter(|(_, w)| !w.is_empty())
            .collect();
        let ins = Frame {
            x: main.x + main.w * 0.52,
            y: main.y + main.h * 0.08,
            w: main.w * 0.44,
            h: main.h * 0.42,
            xlim: ((lo + 1) as f64, hi as f64),
            ylim: limits(window.iter().flat_map(|(_, w)| w.iter().copied())),
        };
        axes(&mut svg, &ins, 9.0);
        for (k, w) in &window {
            let pts = w.iter().enumerate().map(|(i, &v)| ((lo + i + 1) as f64, v));
            polyline(&mut svg, &ins, pts, COLORS[k % 4], DASHES[k % 4], 0.8);
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let y = ins.py(mean);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{}" stroke-width="1.5"/>"#,
                ins.x,
                ins.x + ins.w,
                COLORS[k % 4]
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `trace.csv` and `trace.svg` into `dir`.
pub fn emit_trace(series: &[TraceSeries], is_loss: bool, dir: &Path, inset: Range<usize>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trace_csv(&dir.join("trace.csv"), series)?;
    let label = if is_loss { "Stein's loss" } else { "log-likelihood + const" };
    std::fs::write(dir.join("trace.svg"), trace_svg(series, inset, label))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{scatter, simulate_data};

    fn setup() -> (GroundTruth, ScatterMatrix) {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 1)] = 0.4;
        m[(1, 0)] = 0.4;
        let gt = GroundTruth::from_omega(PrecisionMatrix::new(m).unwrap(), "t").unwrap();
        let y = simulate_data(&gt, 30, &mut RngHandle::new(1, 2)).unwrap();
        (gt, scatter(&y).unwrap())
    }

    #[test]
    fn single_chain_ten_iterations() {
        let (gt, s) = setup();
        let target = TraceTarget::new(Some(&gt), &s).unwrap();
        let cfg = GhsConfig::new(4, 6);
        let (chain, values) = trace_chain(&s, cfg, RngHandle::new(0, 0), SamplerState::initial(4), &target).unwrap();
        assert_eq!(values.len(), 10);
        assert_eq!(chain.len(), 6);
        assert!(values.iter().all(|v| *v >= 0.0));
        let dir = tempfile::tempdir().unwrap();
        let series = vec![TraceSeries {
            chain_id: 0,
            label: "a".into(),
            values: values.clone(),
        }];
        emit_trace(&series, true, dir.path(), 2..8).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("chain_id,iter,loss\n0,1,"));
        let svg = std::fs::read_to_string(dir.path().join("trace.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

        // Stored draws give the same values for the retained sweeps.
        let again = trace_from_chain(&chain, 0, &target).unwrap();
        assert_eq!(again.values, values[4..]);
    }

    #[test]
    fn two_chains_overlay() {
        let (gt, s) = setup();
        let series = two_chain_trace(&s, Some(&gt), &GhsConfig::new(0, 20), 9).unwrap();
        assert_eq!(series.len(), 2);
        assert_ne!(series[0].values[0], series[1].values[0]);
        let svg = trace_svg(&series, 5..15, "loss");
        assert_eq!(svg.matches("<polyline").count(), 4);
    }

    #[test]
    fn log_likelihood_target() {
        let (_, s) = setup();
        let t = TraceTarget::new(None, &s).unwrap();
        assert!(!t.is_loss());
        let ll = t.eval(&DMatrix::identity(4, 4)).unwrap();
        assert!((ll + s.as_matrix().trace() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_windows() {
        let v: Vec<f64> = (0..1000).map(|k| if k < 100 { 50.0 } else { 10.0 }).collect();
        assert_eq!(default_convergence(&v).unwrap(), 0.0);
        let v: Vec<f64> = (0..1000).map(|k| if k < 700 { 11.0 } else { 10.0 }).collect();
        assert!((default_convergence(&v).unwrap() - 0.1).abs() < 1e-12);
        assert!(default_convergence(&v[..950]).is_err());
    }
}
