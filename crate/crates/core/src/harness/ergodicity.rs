use serde::Serialize;

use super::{ols, run_samples, ErgodicityConfig, HarnessError, Observable, CODE_VERSION};
use crate::dynamics::SlowFastModel;
use crate::spectral::SpectralField;
use crate::stochastic::{NoiseStream, StreamRole};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityReport {
    /// Fitted decay rate of `E|φ(Y^{x,y₁}_t) - φ(Y^{x,y₂}_t)|`; `None` when
    /// the gap is identically zero or too few points clear the floor.
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
    pub residual: Option<f64>,
    pub fit_points: usize,
    pub observable: Observable,
    pub samples: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub mean_gap: Vec<f64>,
    pub stderr_gap: Vec<f64>,
    pub root_seed: u64,
    pub code_version: String,
}

impl ErgodicityReport {
    /// A positive rate, or an identically vanishing gap.
    pub fn passed(&self) -> bool {
        match self.rate {
            Some(r) => r > 0.0,
            None => self.mean_gap.iter().all(|g| *g == 0.0),
        }
    }
}

/// Runs frozen paths from `y1` and `y2` at fixed `x` on a common noise
/// path per sample and fits `ln E|φ(Y¹_t) - φ(Y²_t)| = ln C - η t` by least
/// squares over the points above `floor · (initial gap)`.
pub fn probe_ergodicity(
    model: &SlowFastModel,
    x: &SpectralField,
    y1: &SpectralField,
    y2: &SpectralField,
    cfg: &ErgodicityConfig,
    seed: u64,
) -> Result<ErgodicityReport, HarnessError> {
    model.ensure_admissible().map_err(|_| HarnessError::Inadmissible {
        name: model.coeffs().name().to_string(),
        margin: model.margin(),
    })?;
    if !(cfg.dt > 0.0) || !(cfg.t_probe > 0.0) || cfg.samples == 0 {
        return Err(HarnessError::Config("ergodicity probe needs dt > 0, t_probe > 0 and samples >= 1".into()));
    }
    let steps = ((cfg.t_probe / cfg.dt).round() as u64).max(1);
    let phi = &cfg.observable;
    let results = run_samples(cfg.samples, |s| {
        let mut n1 = NoiseStream::new(seed, s, StreamRole::Frozen);
        let mut n2 = n1.clone();
        let (mut a, mut b) = (y1.clone(), y2.clone());
        let mut gaps = Vec::with_capacity(steps as usize + 1);
        gaps.push((phi.eval(&a) - phi.eval(&b)).abs());
        for _ in 0..steps {
            a = model.step_frozen(&a, x, cfg.dt, &mut n1)?;
            b = model.step_frozen(&b, x, cfg.dt, &mut n2)?;
            gaps.push((phi.eval(&a) - phi.eval(&b)).abs());
        }
        Ok(gaps)
    })?;
    let mut paths = Vec::with_capacity(results.len());
    for r in results {
        paths.push(r.map_err(HarnessError::Dynamics)?);
    }
    let m = paths.len() as f64;
    let len = steps as usize + 1;
    let times: Vec<f64> = (0..len).map(|i| i as f64 * cfg.dt).collect();
    let mean_gap: Vec<f64> = (0..len).map(|i| paths.iter().map(|p| p[i]).sum::<f64>() / m).collect();
    let stderr_gap: Vec<f64> = (0..len)
        .map(|i| {
            if paths.len() < 2 {
                return f64::NAN;
            }
            let var = paths.iter().map(|p| (p[i] - mean_gap[i]).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();

    let threshold = cfg.floor * mean_gap[0];
    let cut = mean_gap.iter().position(|g| !(*g > threshold) || *g == 0.0).unwrap_or(len);
    let fit = if mean_gap[0] > 0.0 {
        ols(&times[..cut], &mean_gap[..cut].iter().map(|g| g.ln()).collect::<Vec<_>>())
    } else {
        None
    };
    Ok(ErgodicityReport {
        rate: fit.map(|f| -f.slope),
        prefactor: fit.map(|f| f.intercept.exp()),
        residual: fit.map(|f| f.residual),
        fit_points: if fit.is_some() { cut } else { 0 },
        observable: phi.clone(),
        samples: cfg.samples,
        dt: cfg.dt,
        times,
        mean_gap,
        stderr_gap,
        root_seed: seed,
        code_version: CODE_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;

    #[test]
    fn linear_ou_rate_is_one_and_equal_starts_give_zero() {
        let cfg = ExperimentConfig { samples: 2, ..Default::default() };
        let model = cfg.model().unwrap();
        let space = model.slow_cov().space().clone();
        let (x, y) = cfg.initial_data(&space);
        let ec = ErgodicityConfig { samples: 2, ..Default::default() };
        let r = probe_ergodicity(&model, &x, &y, &SpectralField::zeros(&space), &ec, 3).unwrap();
        assert!((r.rate.unwrap() - 1.0).abs() < 1e-9, "{:?}", r.rate);
        let z = probe_ergodicity(&model, &x, &y, &y, &ec, 3).unwrap();
        assert!(z.mean_gap.iter().all(|g| *g == 0.0));
        assert!(z.rate.is_none() && z.passed());
    }
}
