//! Trace-class Q-Wiener increments with reproducible, independent streams.

mod rng;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{SpectralField, SpectralSpace};

pub use rng::{normal_pair, NoiseStream, StreamId, StreamRole};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("time increment must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("covariance decay exponent must exceed 1, got {0}")]
    InvalidDecay(f64),
    #[error("covariance amplitude must be nonnegative, got {0}")]
    InvalidAmplitude(f64),
    #[error("covariance eigenvalues must be finite, nonnegative and grid-sized")]
    InvalidEigenvalues,
    #[error("substep count must be positive")]
    NoSubsteps,
}

/// Parameters of the power-law covariance family `q_k = a |k|^{-2α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub amplitude: f64,
}

fn default_alpha() -> f64 {
    1.5
}

/// Covariance operator diagonal in the Stokes eigenbasis.
///
/// `q[i]` is the eigenvalue attached to both real `H` directions of mode `i`
/// (the `cos` and `sin` basis vectors), so `Tr_H(Q) = Σ_k q_k` over all
/// retained `k`. [`trace`] reports the sum over both velocity components,
/// which is twice that.
#[derive(Clone, Debug)]
pub struct CovarianceSpec {
    space: Arc<SpectralSpace>,
    alpha: f64,
    amplitude: f64,
    q: Vec<f64>,
}

impl CovarianceSpec {
    pub fn power_law(space: &Arc<SpectralSpace>, alpha: f64, amplitude: f64) -> Result<Self, NoiseError> {
        if !(alpha > 1.0) {
            return Err(NoiseError::InvalidDecay(alpha));
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(NoiseError::InvalidAmplitude(amplitude));
        }
        let q = (0..space.len())
            .map(|i| if space.is_retained(i) { amplitude * space.eigenvalue(i).powf(-alpha) } else { 0.0 })
            .collect();
        Ok(Self { space: Arc::clone(space), alpha, amplitude, q })
    }

    pub fn from_params(space: &Arc<SpectralSpace>, p: &CovarianceParams) -> Result<Self, NoiseError> {
        Self::power_law(space, p.alpha, p.amplitude)
    }

    /// Arbitrary diagonal covariance; `q` is indexed by storage index and must
    /// agree on `±k`.
    pub fn from_eigenvalues(space: &Arc<SpectralSpace>, q: Vec<f64>) -> Result<Self, NoiseError> {
        if q.len() != space.len() || q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(NoiseError::InvalidEigenvalues);
        }
        let mut q = q;
        for i in 0..space.len() {
            if !space.is_retained(i) {
                q[i] = 0.0;
            } else if q[i] != q[space.mirror(i)] {
                return Err(NoiseError::InvalidEigenvalues);
            }
        }
        Ok(Self { space: Arc::clone(space), alpha: f64::NAN, amplitude: f64::NAN, q })
    }

    pub fn space(&self) -> &Arc<SpectralSpace> {
        &self.space
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn eigenvalue(&self, index: usize) -> f64 {
        self.q[index]
    }

    /// Trace over the divergence-free space: the expected `|ΔW|²` per unit time.
    pub fn trace_h(&self) -> f64 {
        self.space.retained_indices().iter().map(|&i| self.q[i]).sum()
    }
}

/// `Σ q_k` over retained modes and both velocity components.
pub fn trace(cov: &CovarianceSpec) -> f64 {
    2.0 * cov.trace_h()
}

/// One increment `ΔW` over `dt`: each real `H` coordinate of mode `k` is
/// `N(0, q_k dt)`. Advances the stream by one draw.
pub fn sample_increment(cov: &CovarianceSpec, dt: f64, stream: &mut NoiseStream) -> Result<SpectralField, NoiseError> {
    if !(dt > 0.0) {
        return Err(NoiseError::NonPositiveDt(dt));
    }
    let mut rng = stream.next_rng();
    let space = &cov.space;
    let mut coeffs = vec![[Complex64::default(); 2]; space.len()];
    for &i in space.half_indices() {
        let (a, b) = normal_pair(&mut rng);
        let (c, d) = normal_pair(&mut rng);
        let s = (0.5 * cov.q[i] * dt).sqrt();
        let raw = [Complex64::new(a, b) * s, Complex64::new(c, d) * s];
        let (k1, k2) = space.wavenumber(i);
        let (k1, k2) = (k1 as f64, k2 as f64);
        let kdot = (raw[0] * k1 + raw[1] * k2) / (k1 * k1 + k2 * k2);
        let p = [raw[0] - kdot * k1, raw[1] - kdot * k2];
        coeffs[i] = p;
        coeffs[space.mirror(i)] = [p[0].conj(), p[1].conj()];
    }
    Ok(SpectralField::from_coeffs_unchecked(space, coeffs))
}

/// Increment over `dt` assembled from `substeps` consecutive draws over
/// `dt / substeps`. A step of `2h` with two substeps consumes exactly the
/// draws of two steps of `h`, which couples runs at different step sizes.
pub fn sample_increment_fine(
    cov: &CovarianceSpec,
    dt: f64,
    substeps: u32,
    stream: &mut NoiseStream,
) -> Result<SpectralField, NoiseError> {
    if substeps == 0 {
        return Err(NoiseError::NoSubsteps);
    }
    let h = dt / substeps as f64;
    let mut total = sample_increment(cov, h, stream)?;
    for _ in 1..substeps {
        total.axpy(1.0, &sample_increment(cov, h, stream)?);
    }
    Ok(total)
}
