//! Fourier representation of divergence-free fields on the 2π-periodic torus.
//!
//! Coefficients follow `u(ξ) = Σ_k û(k) e^{ik·ξ}` and every inner product and
//! norm uses the normalised measure `dξ / (2π)²`, so `|u|² = Σ_k |û(k)|²`.

mod field;
mod ops;
pub mod snapshot;
mod space;

use rand_core::RngCore;
use thiserror::Error;

pub use field::{ModeCoeff, RawSpectrum, SpectralField};
pub use ops::{
    apply_semigroup, leray_project, nonlinear_b, norm, solve_poisson, stokes, trilinear_b, Advection,
    NormKind,
};
pub(crate) use ops::project_unchecked;
pub use space::SpectralSpace;

use crate::stochastic::normal_pair;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("modes per axis must be even and at least 4, got {0}")]
    InvalidModes(usize),
    #[error("fields live on different grids (N={left} vs N={right})")]
    SpaceMismatch { left: usize, right: usize },
    #[error("expected {expected} coefficients, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("semigroup time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("Lebesgue exponent must be at least 1, got {0}")]
    InvalidExponent(f64),
    #[error("spectrum is not Hermitian-symmetric")]
    NotHermitian,
    #[error("spectrum has a nonzero mean mode")]
    NonzeroMean,
    #[error("coefficients outside the dealiasing mask are nonzero")]
    OutsideMask,
    #[error("field is not divergence-free")]
    NotDivergenceFree,
    #[error("mode ({0}, {1}) is not retained by the grid")]
    ModeNotRetained(i64, i64),
}

/// Random field with coefficient magnitudes decaying like `|k|^{-decay}`,
/// rescaled to `|u| = target_norm` (no rescaling when `target_norm <= 0`).
pub fn random_field<R: RngCore>(
    space: &std::sync::Arc<SpectralSpace>,
    rng: &mut R,
    decay: f64,
    target_norm: f64,
) -> SpectralField {
    let mut raw = RawSpectrum::zeros(space.modes_per_axis());
    for &i in space.half_indices() {
        let amp = space.eigenvalue(i).powf(-decay / 2.0);
        let (a, b) = normal_pair(rng);
        let (c, d) = normal_pair(rng);
        let value = [
            num_complex::Complex64::new(a, b) * amp,
            num_complex::Complex64::new(c, d) * amp,
        ];
        let m = space.mirror(i);
        raw.coeffs_mut()[i] = value;
        raw.coeffs_mut()[m] = [value[0].conj(), value[1].conj()];
    }
    let field = project_unchecked(space, raw.coeffs());
    let norm = field.l2_norm();
    if target_norm > 0.0 && norm > 0.0 {
        field.scaled(target_norm / norm)
    } else {
        field
    }
}

/// Taylor–Green vortex `(sin ξ₁ cos ξ₂, -cos ξ₁ sin ξ₂)` scaled by `amplitude`.
pub fn taylor_green(space: &std::sync::Arc<SpectralSpace>, amplitude: f64) -> SpectralField {
    from_physical_fn(space, |x1, x2| (amplitude * x1.sin() * x2.cos(), -amplitude * x1.cos() * x2.sin()))
}

/// Shear flow `(sin ξ₂, 0)` scaled by `amplitude`.
pub fn shear(space: &std::sync::Arc<SpectralSpace>, amplitude: f64) -> SpectralField {
    from_physical_fn(space, |_, x2| (amplitude * x2.sin(), 0.0))
}

/// Samples `f` on the grid and projects onto the divergence-free space.
pub fn from_physical_fn(
    space: &std::sync::Arc<SpectralSpace>,
    f: impl Fn(f64, f64) -> (f64, f64),
) -> SpectralField {
    let n = space.modes_per_axis();
    let mut u1 = vec![0.0; n * n];
    let mut u2 = vec![0.0; n * n];
    for j1 in 0..n {
        for j2 in 0..n {
            let (x1, x2) = space.grid_point(j1, j2);
            let (a, b) = f(x1, x2);
            u1[j1 * n + j2] = a;
            u2[j1 * n + j2] = b;
        }
    }
    let raw = RawSpectrum::from_physical(space, &u1, &u2).expect("grid-sized components");
    project_unchecked(space, raw.coeffs())
}
