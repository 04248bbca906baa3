use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::ModeCoeff;
use super::{RawSpectrum, SpectralError, SpectralField, SpectralSpace};

/// Which norm [`norm`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    /// `‖u‖_s = |(-A)^{s/2} u|`.
    Sobolev(f64),
    /// `|u|_{L^p}` by quadrature on the physical grid (normalised measure).
    Lebesgue(f64),
}

/// Advection operator used by the integrators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    /// `B(u, v) = P_H((u·∇)v)`, pseudospectral with two-thirds dealiasing.
    #[default]
    Pseudospectral,
    /// No nonlinearity (Stokes flow).
    Disabled,
    /// Deliberately wrong operator `P_H((u·∇)v + (u₁∂₁v₂, 0))`. It breaks
    /// `⟨B(u), u⟩ = 0` and exists so the inequality diagnostics can be shown
    /// to catch a broken nonlinearity.
    Faulty,
}

impl Advection {
    pub fn apply(self, u: &SpectralField, v: &SpectralField) -> Result<SpectralField, SpectralError> {
        u.check_space(v)?;
        Ok(match self {
            Advection::Pseudospectral => advect(u, v, 0.0),
            Advection::Disabled => SpectralField::zeros(u.space()),
            Advection::Faulty => advect(u, v, 1.0),
        })
    }
}

/// Helmholtz–Leray projection onto the truncated divergence-free space:
/// `û(k) ↦ û(k) - (k·û(k)/|k|²) k` on retained modes, zero elsewhere.
pub fn leray_project(space: &Arc<SpectralSpace>, raw: &RawSpectrum) -> Result<SpectralField, SpectralError> {
    if raw.modes_per_axis() != space.modes_per_axis() {
        return Err(SpectralError::SpaceMismatch { left: space.modes_per_axis(), right: raw.modes_per_axis() });
    }
    let coeffs = raw.coeffs();
    let scale = coeffs.iter().map(|c| c[0].norm().max(c[1].norm())).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    if coeffs[0][0].norm() > tol || coeffs[0][1].norm() > tol {
        return Err(SpectralError::NonzeroMean);
    }
    for (i, c) in coeffs.iter().enumerate() {
        let m = &coeffs[space.mirror(i)];
        if (m[0] - c[0].conj()).norm() > tol || (m[1] - c[1].conj()).norm() > tol {
            return Err(SpectralError::NotHermitian);
        }
    }
    Ok(project_unchecked(space, coeffs))
}

/// Projection without precondition checks; the real part of the spectrum is
/// taken by averaging each pair, so the result is exactly Hermitian.
pub(crate) fn project_unchecked(space: &Arc<SpectralSpace>, coeffs: &[ModeCoeff]) -> SpectralField {
    let mut out = vec![[Complex64::default(); 2]; space.len()];
    for &i in space.half_indices() {
        let m = space.mirror(i);
        let a = [(coeffs[i][0] + coeffs[m][0].conj()) * 0.5, (coeffs[i][1] + coeffs[m][1].conj()) * 0.5];
        let (k1, k2) = space.wavenumber(i);
        let (k1, k2) = (k1 as f64, k2 as f64);
        let kdot = (a[0] * k1 + a[1] * k2) / (k1 * k1 + k2 * k2);
        let p = [a[0] - kdot * k1, a[1] - kdot * k2];
        out[i] = p;
        out[m] = [p[0].conj(), p[1].conj()];
    }
    SpectralField::from_coeffs_unchecked(space, out)
}

/// `e^{tA} u`: every mode decays by `e^{-λ_k t}`.
pub fn apply_semigroup(u: &SpectralField, t: f64) -> Result<SpectralField, SpectralError> {
    if !(t >= 0.0) {
        return Err(SpectralError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    Ok(u.map_radial(|lambda| (-lambda * t).exp()))
}

/// `B(u, v) = P_H((u·∇)v)`.
pub fn nonlinear_b(u: &SpectralField, v: &SpectralField) -> Result<SpectralField, SpectralError> {
    Advection::Pseudospectral.apply(u, v)
}

fn advect(u: &SpectralField, v: &SpectralField, stray: f64) -> SpectralField {
    let space = u.space();
    let [u1, u2] = u.to_physical();
    let grads = gradients(v);
    let len = space.len();
    let mut p1 = vec![Complex64::default(); len];
    let mut p2 = vec![Complex64::default(); len];
    for j in 0..len {
        let (a1, a2) = (u1[j], u2[j]);
        p1[j] = Complex64::new(a1 * grads[0][0][j] + a2 * grads[1][0][j] + stray * a1 * grads[0][1][j], 0.0);
        p2[j] = Complex64::new(a1 * grads[0][1][j] + a2 * grads[1][1][j], 0.0);
    }
    space.to_spectral(&mut p1);
    space.to_spectral(&mut p2);
    let coeffs: Vec<ModeCoeff> = p1.into_iter().zip(p2).map(|(a, b)| [a, b]).collect();
    project_unchecked(space, &coeffs)
}

/// Physical `∂_i v_j`, returned as `grads[i][j]`.
fn gradients(v: &SpectralField) -> [[Vec<f64>; 2]; 2] {
    let space = v.space();
    let deriv = |axis: usize, comp: usize| -> Vec<f64> {
        let mut data: Vec<Complex64> = (0..space.len())
            .map(|idx| {
                let (k1, k2) = space.wavenumber(idx);
                let k = if axis == 0 { k1 } else { k2 };
                v.coeffs()[idx][comp] * Complex64::new(0.0, k as f64)
            })
            .collect();
        space.to_physical(&mut data);
        data.into_iter().map(|c| c.re).collect()
    };
    [[deriv(0, 0), deriv(0, 1)], [deriv(1, 0), deriv(1, 1)]]
}

/// `b(u, v, w) = Σ_{ij} mean_ξ u_i ∂_i v_j w_j`, by direct quadrature.
pub fn trilinear_b(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64, SpectralError> {
    u.check_space(v)?;
    u.check_space(w)?;
    let [u1, u2] = u.to_physical();
    let [w1, w2] = w.to_physical();
    let g = gradients(v);
    let len = u.space().len();
    let sum: f64 = (0..len)
        .map(|j| {
            let a = u1[j] * g[0][0][j] + u2[j] * g[1][0][j];
            let b = u1[j] * g[0][1][j] + u2[j] * g[1][1][j];
            a * w1[j] + b * w2[j]
        })
        .sum();
    Ok(sum / len as f64)
}

pub fn norm(u: &SpectralField, kind: NormKind) -> Result<f64, SpectralError> {
    match kind {
        NormKind::Sobolev(s) => {
            let space = u.space();
            let total: f64 = space
                .retained_indices()
                .iter()
                .map(|&i| {
                    let c = &u.coeffs()[i];
                    space.eigenvalue(i).powf(s) * (c[0].norm_sqr() + c[1].norm_sqr())
                })
                .sum();
            Ok(total.sqrt())
        }
        NormKind::Lebesgue(p) => {
            if !(p >= 1.0) {
                return Err(SpectralError::InvalidExponent(p));
            }
            let [u1, u2] = u.to_physical();
            let mags = u1.iter().zip(&u2).map(|(a, b)| a.hypot(*b));
            if p.is_infinite() {
                return Ok(mags.fold(0.0, f64::max));
            }
            let mean = mags.map(|m| m.powf(p)).sum::<f64>() / u1.len() as f64;
            Ok(mean.powf(1.0 / p))
        }
    }
}

/// Solves `(-A) u = forcing` modewise.
pub fn solve_poisson(forcing: &SpectralField) -> SpectralField {
    forcing.map_radial(|lambda| 1.0 / lambda)
}

/// `(-A) u`.
pub fn stokes(u: &SpectralField) -> SpectralField {
    u.map_radial(|lambda| lambda)
}
