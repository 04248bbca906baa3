//! Monte-Carlo experiments: the strong convergence study and numeric probes
//! of the supporting estimates.
//!
//! Samples run in parallel on the rayon pool; every reduction happens in
//! sample order afterwards, so results do not depend on the thread count.

mod config;
mod convergence;
mod diagnostics;
mod ergodicity;
mod fbar;
mod inequalities;
pub mod output;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::DynamicsError;

pub use config::{
    hex_digest, snap_to_steps, AuxGapConfig, CoefficientConfig, DeltaRule, DiagnosticsConfig, ErgodicityConfig,
    ExperimentConfig, FbarDiagConfig, IncrementsConfig, InequalitiesConfig, InitialCondition, MomentsConfig,
    NoiseConfig, Observable, OutputConfig, TimeGrid, TimeRule,
};
pub use convergence::{resolve_fbar, run_convergence_study, ConvergenceReport, ConvergenceRow};
pub use diagnostics::{
    measure_auxiliary_gap, measure_moment_bounds, measure_time_increments, AuxGapReport, AuxGapRow,
    IncrementReport, IncrementRow, MomentReport, MomentRow,
};
pub use ergodicity::{probe_ergodicity, ErgodicityReport};
pub use fbar::{estimate_fbar_replicates, FbarReport};
pub use inequalities::{verify_appendix_inequalities, CoercivityStats, InequalityReport, MonotonicityStats};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("coefficient set `{name}` is not admissible: dissipativity margin {margin} (must be > 0)")]
    Inadmissible { name: String, margin: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanStat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr, n }
    }
}

/// Ordinary least-squares line `y = slope·x + intercept`; `residual` is the
/// root-mean-square residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Some(LineFit { slope, intercept, residual: (ss / n as f64).sqrt() })
}

/// Log-log fit over the points with positive coordinates.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).unzip();
    ols(&lx, &ly)
}

/// `true` when each value lies below its predecessor by more than
/// `k·sqrt(se_i² + se_j²)`.
pub fn strictly_decreasing(stats: &[MeanStat], k: f64) -> bool {
    stats.windows(2).all(|w| w[0].mean - w[1].mean > k * w[0].stderr.hypot(w[1].stderr))
}

/// `true` when no value exceeds its predecessor by more than
/// `k·sqrt(se_i² + se_j²)`.
pub fn nonincreasing_within(stats: &[MeanStat], k: f64) -> bool {
    stats.windows(2).all(|w| w[1].mean - w[0].mean <= k * w[0].stderr.hypot(w[1].stderr))
}

/// Runs `f` for every sample index on the rayon pool and returns the
/// results in sample order. Blow-ups are kept as `Err` for attrition
/// counting; any other error aborts.
pub(crate) fn run_samples<T, F>(samples: usize, f: F) -> Result<Vec<Result<T, DynamicsError>>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, DynamicsError> + Sync,
{
    let results: Vec<Result<T, DynamicsError>> = (0..samples as u64).into_par_iter().map(&f).collect();
    for r in &results {
        if let Err(e) = r {
            if !matches!(e, DynamicsError::BlowUp { .. }) {
                return Err(HarnessError::Dynamics(e.clone()));
            }
        }
    }
    Ok(results)
}

/// Splits sample results into successes and the attrition count.
pub(crate) fn partition<T>(results: Vec<Result<T, DynamicsError>>) -> (Vec<T>, usize) {
    let mut ok = Vec::with_capacity(results.len());
    let mut lost = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(_) => lost += 1,
        }
    }
    (ok, lost)
}

/// Rows with more than 10% attrition (or fewer than two survivors) are
/// unusable.
pub fn usable(samples: usize, attrition: usize) -> bool {
    samples - attrition >= 2 && attrition * 10 <= samples
}

/// Uniform draw in `[0, 1)`.
pub(crate) fn uniform<R: rand_core::RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
