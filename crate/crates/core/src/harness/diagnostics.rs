use serde::Serialize;

use super::{
    loglog_fit, nonincreasing_within, partition, resolve_fbar, run_samples, snap_to_steps, usable, ExperimentConfig,
    HarnessError, MeanStat, TimeGrid, CODE_VERSION,
};
use crate::dynamics::{ensure_finite, AuxiliaryState, DynamicsError, FbarEstimator, FbarMode, SlowFastModel, SlowFastState};
use crate::spectral::{norm, NormKind, SpectralField};
use crate::stochastic::{NoiseStream, StreamRole};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementRow {
    pub delta: f64,
    pub delta_steps: u64,
    /// `E ∫₀^T |X_t - X_{t(δ)}|² dt`
    pub value: f64,
    pub stderr: f64,
    pub m_effective: usize,
    pub attrition: usize,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementReport {
    pub eps: f64,
    pub dt: f64,
    /// Sorted by δ descending.
    pub rows: Vec<IncrementRow>,
    pub slope: Option<f64>,
    pub slope_residual: Option<f64>,
    pub monotone: bool,
    pub slope_ok: bool,
    pub config_hash: String,
    pub root_seed: u64,
    pub code_version: String,
}

impl IncrementReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.slope_ok
    }
}

/// `E ∫₀^T |X^ε_t - X^ε_{t(δ)}|² dt` for each `δ = fraction · T`, snapped
/// to a multiple of the step; all δ share one path per sample.
pub fn measure_time_increments(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<IncrementReport, HarnessError> {
    let model = cfg.model()?;
    let eps = cfg.diagnostics.increments.eps;
    let grid = TimeGrid::for_eps(&cfg.time, cfg.t_final, eps);
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(HarnessError::Config("delta fractions must be positive and non-empty".into()));
    }
    let mut blocks: Vec<u64> = fractions.iter().map(|f| snap_to_steps(f * cfg.t_final, grid.dt)).collect();
    blocks.sort_unstable_by(|a, b| b.cmp(a));
    blocks.dedup();
    let space = model.slow_cov().space().clone();
    let (x0, y0) = cfg.initial_data(&space);

    let results = run_samples(cfg.samples, |s| {
        let mut state = SlowFastState::new(x0.clone(), y0.clone(), cfg.seed, s);
        let mut anchors = vec![x0.clone(); blocks.len()];
        let mut acc = vec![0.0; blocks.len()];
        for n in 0..grid.steps {
            for (j, &k) in blocks.iter().enumerate() {
                if n % k == 0 {
                    anchors[j] = state.x.clone();
                }
                acc[j] += state.x.sub(&anchors[j]).l2_norm_sq() * grid.dt;
            }
            state = model.step_slow_fast(&state, grid.dt, eps)?;
        }
        Ok(acc)
    })?;
    let (ok, attrition) = partition(results);
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for (j, &k) in blocks.iter().enumerate() {
        let st = MeanStat::of(&ok.iter().map(|a| a[j]).collect::<Vec<_>>());
        rows.push(IncrementRow {
            delta: k as f64 * grid.dt,
            delta_steps: k,
            value: st.mean,
            stderr: st.stderr,
            m_effective: ok.len(),
            attrition,
            root_seed: cfg.seed,
        });
        stats.push(st);
    }
    let fit = loglog_fit(&rows.iter().map(|r| r.delta).collect::<Vec<_>>(), &rows.iter().map(|r| r.value).collect::<Vec<_>>());
    Ok(IncrementReport {
        eps,
        dt: grid.dt,
        monotone: usable(cfg.samples, attrition) && nonincreasing_within(&stats, 2.0),
        slope_ok: fit.map_or(false, |f| f.slope >= 0.4),
        slope: fit.map(|f| f.slope),
        slope_residual: fit.map(|f| f.residual),
        rows,
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        code_version: CODE_VERSION.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuxGapRow {
    pub delta: f64,
    pub delta_steps: u64,
    /// `E ∫₀^T |Y - Ŷ|² dt`
    pub y_gap: f64,
    pub y_stderr: f64,
    /// `E sup_t |X - X̂|²`
    pub x_gap: f64,
    pub x_stderr: f64,
    pub m_effective: usize,
    pub attrition: usize,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuxGapReport {
    pub eps: f64,
    pub dt: f64,
    /// Sorted by δ descending.
    pub rows: Vec<AuxGapRow>,
    pub y_monotone: bool,
    pub x_monotone: bool,
    pub config_hash: String,
    pub root_seed: u64,
    pub code_version: String,
}

impl AuxGapReport {
    pub fn passed(&self) -> bool {
        self.y_monotone && self.x_monotone
    }
}

/// Auxiliary-process gaps across a δ sweep at fixed ε. Every δ shares the
/// coupled path and noise of its sample.
pub fn measure_auxiliary_gap(cfg: &ExperimentConfig) -> Result<AuxGapReport, HarnessError> {
    let model = cfg.model()?;
    let ac = &cfg.diagnostics.auxgap;
    let eps = ac.eps;
    let grid = TimeGrid::for_eps(&cfg.time, cfg.t_final, eps);
    let deltas: Vec<f64> = match &ac.deltas {
        Some(v) => v.clone(),
        None => (0..ac.levels).map(|j| eps.cbrt() * 0.5f64.powi(j as i32)).collect(),
    };
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(HarnessError::Config("auxgap deltas must be positive and non-empty".into()));
    }
    let mut blocks: Vec<u64> = deltas.iter().map(|d| snap_to_steps(*d, grid.dt)).collect();
    blocks.sort_unstable_by(|a, b| b.cmp(a));
    blocks.dedup();
    let space = model.slow_cov().space().clone();
    let (x0, y0) = cfg.initial_data(&space);

    let results = run_samples(cfg.samples, |s| {
        let mut state = SlowFastState::new(x0.clone(), y0.clone(), cfg.seed, s);
        let mut aux: Vec<AuxiliaryState> = blocks
            .iter()
            .map(|&k| AuxiliaryState::new(x0.clone(), y0.clone(), k as f64 * grid.dt, grid.dt))
            .collect::<Result<_, _>>()?;
        let mut y_int = vec![0.0; blocks.len()];
        let mut x_sup = vec![0.0f64; blocks.len()];
        for n in 0..grid.steps {
            for (j, a) in aux.iter().enumerate() {
                y_int[j] += state.y.sub(&a.y_hat).l2_norm_sq() * grid.dt;
            }
            let dw_slow = model.slow_increment(grid.dt, &mut state.slow)?;
            let dw_fast = model.fast_increment(grid.dt, &mut state.fast)?;
            for a in aux.iter_mut() {
                *a = model.advance_auxiliary(a, &state.x, n, grid.dt, eps, &dw_slow, &dw_fast)?;
            }
            let (x, y) = model.advance_slow_fast(&state.x, &state.y, grid.dt, eps, &dw_slow, &dw_fast)?;
            ensure_finite(grid.time(n + 1), &x, &y)?;
            state.x = x;
            state.y = y;
            if (n + 1) % grid.record_every == 0 {
                for (j, a) in aux.iter().enumerate() {
                    x_sup[j] = x_sup[j].max(state.x.sub(&a.x_hat).l2_norm_sq());
                }
            }
        }
        Ok((y_int, x_sup))
    })?;
    let (ok, attrition) = partition(results);
    let mut rows = Vec::new();
    let (mut ys, mut xs) = (Vec::new(), Vec::new());
    for (j, &k) in blocks.iter().enumerate() {
        let y = MeanStat::of(&ok.iter().map(|r| r.0[j]).collect::<Vec<_>>());
        let x = MeanStat::of(&ok.iter().map(|r| r.1[j]).collect::<Vec<_>>());
        rows.push(AuxGapRow {
            delta: k as f64 * grid.dt,
            delta_steps: k,
            y_gap: y.mean,
            y_stderr: y.stderr,
            x_gap: x.mean,
            x_stderr: x.stderr,
            m_effective: ok.len(),
            attrition,
            root_seed: cfg.seed,
        });
        ys.push(y);
        xs.push(x);
    }
    let ok_rows = usable(cfg.samples, attrition);
    Ok(AuxGapReport {
        eps,
        dt: grid.dt,
        rows,
        y_monotone: ok_rows && nonincreasing_within(&ys, 2.0),
        x_monotone: ok_rows && nonincreasing_within(&xs, 2.0),
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        code_version: CODE_VERSION.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub eps: f64,
    pub p: u32,
    /// `E sup_t |X^ε|^{2p}`
    pub x_sup: f64,
    pub x_sup_stderr: f64,
    /// `E ∫ |X^ε|^{2p-2} ‖X^ε‖₁² dt`
    pub x_dissipation: f64,
    pub x_dissipation_stderr: f64,
    /// `sup_{t ≥ burn-in} E |Y^ε_t|^{2p}`
    pub y_stationary: f64,
    /// `E sup_t |X̄|^{2p}` (ε-independent run on the recording grid)
    pub xbar_sup: f64,
    pub xbar_sup_stderr: f64,
    /// `E sup_t |X̂|^{2p}` with `δ = ε^{1/3}`
    pub xhat_sup: f64,
    pub xhat_sup_stderr: f64,
    /// `sup_{t ≥ burn-in} E |Ŷ_t|^{2p}`
    pub yhat_stationary: f64,
    pub m_effective: usize,
    pub attrition: usize,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRatio {
    pub p: u32,
    pub x_sup_ratio: f64,
    pub y_stationary_ratio: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    pub ratios: Vec<MomentRatio>,
    pub max_ratio: f64,
    pub fbar_mode: FbarMode,
    pub config_hash: String,
    pub root_seed: u64,
    pub code_version: String,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.ratios.iter().all(|r| r.bounded)
    }
}

struct MomentSample {
    x_sup2: f64,
    x_diss: Vec<f64>,
    y_sq: Vec<f64>,
    xhat_sup2: f64,
    yhat_sq: Vec<f64>,
}

/// Moment bounds for `X^ε`, `Y^ε`, `X̂`, `Ŷ` across the ε sweep, plus the
/// averaged path. Fast moments are sampled on the recording grid.
pub fn measure_moment_bounds(cfg: &ExperimentConfig, ps: &[u32]) -> Result<MomentReport, HarnessError> {
    let model = cfg.model()?;
    if ps.is_empty() || ps.contains(&0) {
        return Err(HarnessError::Config("moment orders must be positive and non-empty".into()));
    }
    let fbar_mode = resolve_fbar(cfg, &model)?;
    let space = model.slow_cov().space().clone();
    let (x0, y0) = cfg.initial_data(&space);
    let mc = &cfg.diagnostics.moments;

    // the averaged path does not involve ε: one run per sample on the
    // recording grid, reused for every row
    let bar_grid = TimeGrid::recording(&cfg.time, cfg.t_final);
    let bar = run_samples(cfg.samples, |s| averaged_sup(&model, &x0, &bar_grid, fbar_mode, cfg.seed, s))?;
    let (bar_ok, bar_lost) = partition(bar);

    let mut order: Vec<usize> = (0..cfg.eps.len()).collect();
    order.sort_by(|a, b| cfg.eps[*b].total_cmp(&cfg.eps[*a]));
    let mut rows = Vec::new();
    for i in order {
        let eps = cfg.eps[i];
        let grid = TimeGrid::for_eps(&cfg.time, cfg.t_final, eps);
        let delta_steps = snap_to_steps(cfg.delta_for(i), grid.dt);
        let results = run_samples(cfg.samples, |s| moment_sample(&model, &x0, &y0, eps, &grid, delta_steps, ps, cfg.seed, s))?;
        let (ok, attrition) = partition(results);
        let n_rec = (grid.steps / grid.record_every) as usize + 1;
        let burn = ((mc.burn_in_fraction * (n_rec - 1) as f64).ceil() as usize).min(n_rec - 1);
        let stationary = |series: &dyn Fn(&MomentSample) -> &Vec<f64>, p: u32| -> f64 {
            (burn..n_rec)
                .map(|r| ok.iter().map(|m| series(m)[r].powi(p as i32)).sum::<f64>() / ok.len() as f64)
                .fold(0.0, f64::max)
        };
        for (pi, &p) in ps.iter().enumerate() {
            let pow = |v: f64| v.powi(p as i32);
            let xs = MeanStat::of(&ok.iter().map(|m| pow(m.x_sup2)).collect::<Vec<_>>());
            let xd = MeanStat::of(&ok.iter().map(|m| m.x_diss[pi]).collect::<Vec<_>>());
            let xh = MeanStat::of(&ok.iter().map(|m| pow(m.xhat_sup2)).collect::<Vec<_>>());
            let xb = MeanStat::of(&bar_ok.iter().map(|v| pow(*v)).collect::<Vec<_>>());
            rows.push(MomentRow {
                eps,
                p,
                x_sup: xs.mean,
                x_sup_stderr: xs.stderr,
                x_dissipation: xd.mean,
                x_dissipation_stderr: xd.stderr,
                y_stationary: stationary(&|m| &m.y_sq, p),
                xbar_sup: xb.mean,
                xbar_sup_stderr: xb.stderr,
                xhat_sup: xh.mean,
                xhat_sup_stderr: xh.stderr,
                yhat_stationary: stationary(&|m| &m.yhat_sq, p),
                m_effective: ok.len(),
                attrition: attrition + bar_lost,
                root_seed: cfg.seed,
            });
        }
    }
    let ratio = |v: Vec<f64>| {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    };
    let all_usable = rows.iter().all(|r| usable(cfg.samples, r.attrition));
    let ratios = ps
        .iter()
        .map(|&p| {
            let sel: Vec<&MomentRow> = rows.iter().filter(|r| r.p == p).collect();
            let x_sup_ratio = ratio(sel.iter().map(|r| r.x_sup).collect());
            let y_stationary_ratio = ratio(sel.iter().map(|r| r.y_stationary).collect());
            MomentRatio {
                p,
                x_sup_ratio,
                y_stationary_ratio,
                bounded: all_usable && x_sup_ratio <= mc.max_ratio && y_stationary_ratio <= mc.max_ratio,
            }
        })
        .collect();
    Ok(MomentReport {
        rows,
        ratios,
        max_ratio: mc.max_ratio,
        fbar_mode,
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        code_version: CODE_VERSION.to_string(),
    })
}

fn averaged_sup(
    model: &SlowFastModel,
    x0: &SpectralField,
    grid: &TimeGrid,
    mode: FbarMode,
    seed: u64,
    sample: u64,
) -> Result<f64, DynamicsError> {
    let mut slow = NoiseStream::new(seed, sample, StreamRole::Slow);
    let mut frozen = NoiseStream::new(seed, sample, StreamRole::Frozen);
    let mut est = FbarEstimator::new(mode, model.coeffs())?;
    let mut x = x0.clone();
    let mut sup = x.l2_norm_sq();
    for n in 0..grid.steps {
        x = model.step_averaged(&x, grid.dt, &mut est, &mut slow, &mut frozen)?;
        ensure_finite(grid.time(n + 1), &x, &x)?;
        if (n + 1) % grid.record_every == 0 {
            sup = sup.max(x.l2_norm_sq());
        }
    }
    Ok(sup)
}

#[allow(clippy::too_many_arguments)]
fn moment_sample(
    model: &SlowFastModel,
    x0: &SpectralField,
    y0: &SpectralField,
    eps: f64,
    grid: &TimeGrid,
    delta_steps: u64,
    ps: &[u32],
    seed: u64,
    sample: u64,
) -> Result<MomentSample, DynamicsError> {
    let mut state = SlowFastState::new(x0.clone(), y0.clone(), seed, sample);
    let mut aux = AuxiliaryState::new(x0.clone(), y0.clone(), delta_steps as f64 * grid.dt, grid.dt)?;
    let mut out = MomentSample {
        x_sup2: x0.l2_norm_sq(),
        x_diss: vec![0.0; ps.len()],
        y_sq: vec![y0.l2_norm_sq()],
        xhat_sup2: x0.l2_norm_sq(),
        yhat_sq: vec![y0.l2_norm_sq()],
    };
    for n in 0..grid.steps {
        let x2 = state.x.l2_norm_sq();
        let h1 = norm(&state.x, NormKind::Sobolev(1.0)).map_err(DynamicsError::from)?.powi(2);
        for (j, &p) in ps.iter().enumerate() {
            out.x_diss[j] += x2.powi(p as i32 - 1) * h1 * grid.dt;
        }
        let dw_slow = model.slow_increment(grid.dt, &mut state.slow)?;
        let dw_fast = model.fast_increment(grid.dt, &mut state.fast)?;
        aux = model.advance_auxiliary(&aux, &state.x, n, grid.dt, eps, &dw_slow, &dw_fast)?;
        let (x, y) = model.advance_slow_fast(&state.x, &state.y, grid.dt, eps, &dw_slow, &dw_fast)?;
        ensure_finite(grid.time(n + 1), &x, &y)?;
        state.x = x;
        state.y = y;
        if (n + 1) % grid.record_every == 0 {
            out.x_sup2 = out.x_sup2.max(state.x.l2_norm_sq());
            out.xhat_sup2 = out.xhat_sup2.max(aux.x_hat.l2_norm_sq());
            out.y_sq.push(state.y.l2_norm_sq());
            out.yhat_sq.push(aux.y_hat.l2_norm_sq());
        }
    }
    Ok(out)
}
