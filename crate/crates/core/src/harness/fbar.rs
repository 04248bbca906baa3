use rayon::prelude::*;
use serde::Serialize;

use super::{HarnessError, CODE_VERSION};
use crate::dynamics::{FbarEstimator, FbarMode, SlowFastModel};
use crate::spectral::SpectralField;
use crate::stochastic::{NoiseStream, StreamRole};

/// Replicated `f̄(x)` estimates and their comparison with the closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FbarReport {
    pub mode: FbarMode,
    pub replicates: usize,
    /// `|mean of replicates|`
    pub mean_norm: f64,
    /// Sum over real degrees of freedom of the replicate variance.
    pub total_variance: f64,
    /// `sqrt(total_variance / replicates)`
    pub stderr: f64,
    /// `|mean - closed form|`, when a closed form exists.
    pub error: Option<f64>,
    /// `error <= 3 stderr`; `None` without a closed form or when the
    /// estimator is the closed form itself.
    pub within_3se: Option<bool>,
    pub root_seed: u64,
    pub code_version: String,
    #[serde(skip)]
    pub mean: SpectralField,
    #[serde(skip)]
    pub exact: Option<SpectralField>,
}

/// `replicates` independent estimates of `f̄(x)`, replicate `r` drawing from
/// the frozen stream of sample `r`.
pub fn estimate_fbar_replicates(
    model: &SlowFastModel,
    x: &SpectralField,
    mode: FbarMode,
    replicates: usize,
    seed: u64,
) -> Result<FbarReport, HarnessError> {
    if replicates == 0 {
        return Err(HarnessError::Config("replicates must be positive".into()));
    }
    FbarEstimator::new(mode, model.coeffs())?;
    let estimates: Vec<SpectralField> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut est = FbarEstimator::new(mode, model.coeffs())?;
            let mut stream = NoiseStream::new(seed, r, StreamRole::Frozen);
            model.estimate_fbar(&mut est, x, &mut stream)
        })
        .collect::<Result<_, _>>()?;
    let space = x.space();
    let mut mean = SpectralField::zeros(space);
    if mode == FbarMode::ClosedForm {
        // replicates coincide; summing them would only add round-off
        mean = estimates[0].clone();
    } else {
        for e in &estimates {
            mean.axpy(1.0, e);
        }
        mean.scale_in_place(1.0 / replicates as f64);
    }
    let total_variance = if replicates > 1 {
        estimates.iter().map(|e| e.sub(&mean).l2_norm_sq()).sum::<f64>() / (replicates - 1) as f64
    } else {
        0.0
    };
    let stderr = (total_variance / replicates as f64).sqrt();
    let exact = model.coeffs().closed_form_fbar(x);
    let error = exact.as_ref().map(|e| mean.sub(e).l2_norm());
    Ok(FbarReport {
        mode,
        replicates,
        mean_norm: mean.l2_norm(),
        total_variance,
        stderr,
        within_3se: error.filter(|_| mode != FbarMode::ClosedForm).map(|e| e <= 3.0 * stderr),
        error,
        root_seed: seed,
        code_version: CODE_VERSION.to_string(),
        mean,
        exact,
    })
}
