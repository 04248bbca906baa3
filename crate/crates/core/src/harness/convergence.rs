use serde::Serialize;

use super::{
    loglog_fit, partition, probe_ergodicity, run_samples, strictly_decreasing, usable, ExperimentConfig, HarnessError,
    MeanStat, TimeGrid, CODE_VERSION,
};
use crate::dynamics::{ensure_finite, DynamicsError, FbarEstimator, FbarMode, SlowFastModel, SlowFastState};
use crate::spectral::SpectralField;
use crate::stochastic::{NoiseStream, StreamRole};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub delta: f64,
    pub dt: f64,
    pub steps: u64,
    pub samples: usize,
    pub m_effective: usize,
    pub attrition: usize,
    pub usable: bool,
    /// `E sup_t |X^ε - X̄|²`
    pub err: f64,
    pub stderr: f64,
    /// `E sup_t |X^ε - X̄|⁴`
    pub err_p2: f64,
    pub stderr_p2: f64,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub slope: Option<f64>,
    pub slope_residual: Option<f64>,
    pub slope_p2: Option<f64>,
    pub slope_p2_residual: Option<f64>,
    /// Errors fall across the sweep by more than 2 combined standard errors.
    pub decreasing: bool,
    pub decreasing_p2: bool,
    pub slope_positive: bool,
    pub fbar_mode: FbarMode,
    pub config_hash: String,
    pub root_seed: u64,
    pub code_version: String,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.decreasing && self.decreasing_p2 && self.slope_positive
    }
}

/// The configured `f̄` mode, or the default: closed form when available,
/// otherwise a warm start whose relaxation covers `5/η̂` with `η̂` from the
/// ergodicity probe at the initial slow state.
pub fn resolve_fbar(cfg: &ExperimentConfig, model: &SlowFastModel) -> Result<FbarMode, HarnessError> {
    if let Some(mode) = cfg.fbar {
        return Ok(mode);
    }
    if model.coeffs().has_closed_form() {
        return Ok(FbarMode::ClosedForm);
    }
    let space = model.slow_cov().space().clone();
    let (x, y) = cfg.initial_data(&space);
    let probe = probe_ergodicity(model, &x, &y, &SpectralField::zeros(&space), &cfg.diagnostics.ergodicity, cfg.seed)?;
    let rate = probe
        .rate
        .filter(|r| *r > 0.0)
        .ok_or_else(|| HarnessError::Other("ergodicity probe found no positive decay rate to calibrate f̄".into()))?;
    let fd = &cfg.diagnostics.fbar;
    Ok(FbarEstimator::warm_start_for_rate(model.coeffs(), rate, fd.frozen_dt, fd.window_steps)?.mode())
}

/// Coupled `X^ε` / `X̄` paths on a common slow noise; per ε, the MC mean of
/// `sup_t |X^ε_t - X̄_t|^{2p}` (p = 1, 2) over the recording grid, and the
/// log-log slope against ε.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let model = cfg.model()?;
    let fbar_mode = resolve_fbar(cfg, &model)?;
    FbarEstimator::new(fbar_mode, model.coeffs())?;
    let space = model.slow_cov().space().clone();
    let (x0, y0) = cfg.initial_data(&space);

    let mut order: Vec<usize> = (0..cfg.eps.len()).collect();
    order.sort_by(|a, b| cfg.eps[*b].total_cmp(&cfg.eps[*a]));

    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for i in order {
        let eps = cfg.eps[i];
        let grid = TimeGrid::for_eps(&cfg.time, cfg.t_final, eps);
        let results = run_samples(cfg.samples, |s| {
            convergence_sample(&model, &x0, &y0, eps, &grid, fbar_mode, cfg.seed, s)
        })?;
        let (ok, attrition) = partition(results);
        let p1 = MeanStat::of(&ok.iter().map(|v| v.0).collect::<Vec<_>>());
        let p2 = MeanStat::of(&ok.iter().map(|v| v.1).collect::<Vec<_>>());
        rows.push(ConvergenceRow {
            eps,
            delta: cfg.delta_for(i),
            dt: grid.dt,
            steps: grid.steps,
            samples: cfg.samples,
            m_effective: ok.len(),
            attrition,
            usable: usable(cfg.samples, attrition),
            err: p1.mean,
            stderr: p1.stderr,
            err_p2: p2.mean,
            stderr_p2: p2.stderr,
            root_seed: cfg.seed,
        });
        stats.push((p1, p2));
    }

    let clean: Vec<usize> = (0..rows.len()).filter(|&j| rows[j].attrition == 0).collect();
    let eps_clean: Vec<f64> = clean.iter().map(|&j| rows[j].eps).collect();
    let fit = loglog_fit(&eps_clean, &clean.iter().map(|&j| rows[j].err).collect::<Vec<_>>());
    let fit2 = loglog_fit(&eps_clean, &clean.iter().map(|&j| rows[j].err_p2).collect::<Vec<_>>());
    let all_usable = rows.iter().all(|r| r.usable);
    let p1: Vec<MeanStat> = stats.iter().map(|s| s.0).collect();
    let p2: Vec<MeanStat> = stats.iter().map(|s| s.1).collect();
    Ok(ConvergenceReport {
        decreasing: all_usable && rows.len() >= 2 && strictly_decreasing(&p1, 2.0),
        decreasing_p2: all_usable && rows.len() >= 2 && strictly_decreasing(&p2, 2.0),
        slope_positive: fit.map_or(false, |f| f.slope > 0.0),
        slope: fit.map(|f| f.slope),
        slope_residual: fit.map(|f| f.residual),
        slope_p2: fit2.map(|f| f.slope),
        slope_p2_residual: fit2.map(|f| f.residual),
        rows,
        fbar_mode,
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        code_version: CODE_VERSION.to_string(),
    })
}

#[allow(clippy::too_many_arguments)]
fn convergence_sample(
    model: &SlowFastModel,
    x0: &SpectralField,
    y0: &SpectralField,
    eps: f64,
    grid: &TimeGrid,
    fbar_mode: FbarMode,
    seed: u64,
    sample: u64,
) -> Result<(f64, f64), DynamicsError> {
    let mut state = SlowFastState::new(x0.clone(), y0.clone(), seed, sample);
    let mut xbar = x0.clone();
    let mut est = FbarEstimator::new(fbar_mode, model.coeffs())?;
    let mut frozen = NoiseStream::new(seed, sample, StreamRole::Frozen);
    let mut sup: f64 = 0.0;
    for n in 0..grid.steps {
        let dw_slow = model.slow_increment(grid.dt, &mut state.slow)?;
        let dw_fast = model.fast_increment(grid.dt, &mut state.fast)?;
        let xb = model.advance_averaged(&xbar, grid.dt, &mut est, &dw_slow, &mut frozen)?;
        let (x, y) = model.advance_slow_fast(&state.x, &state.y, grid.dt, eps, &dw_slow, &dw_fast)?;
        let t = grid.time(n + 1);
        ensure_finite(t, &x, &y)?;
        ensure_finite(t, &xb, &xb)?;
        if (n + 1) % grid.record_every == 0 {
            sup = sup.max(x.sub(&xb).l2_norm_sq());
        }
        state.x = x;
        state.y = y;
        xbar = xb;
    }
    Ok((sup, sup * sup))
}
