use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CoefficientError, CoefficientMaps, CoefficientSet, DeclaredConstants, NoiseMap};
use crate::spectral::{solve_poisson, SpectralField, SpectralSpace};
use crate::stochastic::CovarianceSpec;

pub const BUILTIN_NAMES: [&str; 3] = ["linear_ou", "saturating", "decoupled"];

/// Builds one of the shipped coefficient families from a JSON parameter
/// block (`null` or `{}` selects the defaults).
pub fn builtin(
    name: &str,
    params: &serde_json::Value,
    space: &Arc<SpectralSpace>,
    slow_cov: &CovarianceSpec,
    fast_cov: &CovarianceSpec,
) -> Result<CoefficientSet, CoefficientError> {
    match name {
        "linear_ou" => linear_ou(parse(name, params)?, space, slow_cov),
        "saturating" => saturating(parse(name, params)?, space, slow_cov, fast_cov),
        "decoupled" => decoupled(parse(name, params)?, space, slow_cov),
        other => Err(CoefficientError::UnknownSet(other.to_string())),
    }
}

fn parse<T: DeserializeOwned + Default>(name: &str, params: &serde_json::Value) -> Result<T, CoefficientError> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone())
        .map_err(|e| CoefficientError::InvalidParameters { set: name.to_string(), reason: e.to_string() })
}

fn invalid(set: &str, reason: impl Into<String>) -> CoefficientError {
    CoefficientError::InvalidParameters { set: set.to_string(), reason: reason.into() }
}

/// `σ₁(x) = (base + slope · min(|x|, cap)) · id`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sigma1Params {
    pub base: f64,
    pub slope: f64,
    pub cap: f64,
}

impl Default for Sigma1Params {
    fn default() -> Self {
        Self { base: 0.5, slope: 0.25, cap: 2.0 }
    }
}

impl Sigma1Params {
    fn map(&self, x: &SpectralField) -> NoiseMap {
        NoiseMap::scalar(self.base + self.slope * x.l2_norm().min(self.cap))
    }

    fn lipschitz(&self, cov: &CovarianceSpec) -> f64 {
        self.slope.abs() * cov.trace_h().sqrt()
    }

    fn check(&self, set: &str) -> Result<(), CoefficientError> {
        if !(self.cap > 0.0) || !self.base.is_finite() || !self.slope.is_finite() {
            return Err(invalid(set, "sigma1 requires finite base/slope and cap > 0"));
        }
        Ok(())
    }
}

/// Projection onto the mode pair `±mode`, times `gain`.
#[derive(Clone, Debug)]
struct ModeFilter {
    indices: [usize; 2],
    gain: f64,
}

impl ModeFilter {
    fn new(set: &str, space: &SpectralSpace, mode: [i64; 2], gain: f64) -> Result<Self, CoefficientError> {
        let idx = space
            .index_of(mode[0], mode[1])
            .filter(|&i| space.is_retained(i))
            .ok_or_else(|| invalid(set, format!("mode ({}, {}) is not retained", mode[0], mode[1])))?;
        Ok(Self { indices: [idx, space.mirror(idx)], gain })
    }

    fn apply(&self, x: &SpectralField) -> SpectralField {
        let mut coeffs = vec![[num_complex::Complex64::default(); 2]; x.space().len()];
        for &i in &self.indices {
            coeffs[i] = [x.coeffs()[i][0] * self.gain, x.coeffs()[i][1] * self.gain];
        }
        SpectralField::from_coeffs_unchecked(x.space(), coeffs)
    }
}

/// Radial clamp of every Fourier coefficient to modulus `radius`; this is
/// the metric projection onto a product of balls, hence 1-Lipschitz.
fn saturate(y: &SpectralField, radius: f64) -> SpectralField {
    y.map_pairs(|_, c| {
        let m = (c[0].norm_sqr() + c[1].norm_sqr()).sqrt();
        if m > radius {
            radius / m
        } else {
            1.0
        }
    })
}

/// Lipschitz constant of `r ↦ (1 + r²)^{ζ/2}`, attained at `r² = 1/(1-ζ)`.
pub fn sublinear_lipschitz(zeta: f64) -> f64 {
    let r2 = 1.0 / (1.0 - zeta);
    zeta * r2.sqrt() * (1.0 + r2).powf(zeta / 2.0 - 1.0)
}

// ---------------------------------------------------------------------------
// linear_ou

/// `f(x, y) = c1 x + c2 y`, `g(x, y) = h(x)` with `h` a gain times the
/// projection onto one mode pair, `σ₂` constant. The frozen equation is an
/// Ornstein–Uhlenbeck process with invariant mean `(-A)^{-1} h(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearOuParams {
    pub c1: f64,
    pub c2: f64,
    pub h_gain: f64,
    pub h_mode: [i64; 2],
    pub sigma1: Sigma1Params,
    pub sigma2: f64,
}

impl Default for LinearOuParams {
    fn default() -> Self {
        Self { c1: -0.5, c2: 1.0, h_gain: 1.0, h_mode: [1, 0], sigma1: Sigma1Params::default(), sigma2: 1.0 }
    }
}

struct LinearOu {
    p: LinearOuParams,
    h: ModeFilter,
}

impl CoefficientMaps for LinearOu {
    fn f(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = x.scaled(self.p.c1);
        out.axpy(self.p.c2, y);
        out
    }

    fn g(&self, x: &SpectralField, _y: &SpectralField) -> SpectralField {
        self.h.apply(x)
    }

    fn sigma1(&self, x: &SpectralField) -> NoiseMap {
        self.p.sigma1.map(x)
    }

    fn sigma2(&self, _x: &SpectralField, _y: &SpectralField) -> NoiseMap {
        NoiseMap::scalar(self.p.sigma2)
    }

    fn closed_form_fbar(&self, x: &SpectralField) -> Option<SpectralField> {
        let mut out = x.scaled(self.p.c1);
        out.axpy(self.p.c2, &solve_poisson(&self.h.apply(x)));
        Some(out)
    }

    fn has_closed_form(&self) -> bool {
        true
    }
}

fn linear_ou(p: LinearOuParams, space: &Arc<SpectralSpace>, slow_cov: &CovarianceSpec) -> Result<CoefficientSet, CoefficientError> {
    p.sigma1.check("linear_ou")?;
    let h = ModeFilter::new("linear_ou", space, p.h_mode, p.h_gain)?;
    let constants = DeclaredConstants {
        f_x: p.c1.abs(),
        f_y: p.c2.abs(),
        g_x: p.h_gain.abs(),
        g_y: 0.0,
        sigma1: p.sigma1.lipschitz(slow_cov),
        sigma2_x: 0.0,
        sigma2_y: 0.0,
        zeta: 0.5,
    };
    CoefficientSet::new("linear_ou", Arc::new(LinearOu { p, h }), constants)
}

// ---------------------------------------------------------------------------
// saturating

/// `g(x, y) = -κ sat(y) + h(x)` and
/// `σ₂(x, y) = b0 + b1 min(|x|, cap) + b2 (1 + |y|²)^{ζ/2}`, with `b2` chosen
/// so that the `y`-Lipschitz constant of `σ₂` equals `sigma2_lip`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturatingParams {
    pub kappa: f64,
    pub sat_radius: f64,
    pub c1: f64,
    pub c2: f64,
    pub h_gain: f64,
    pub h_mode: [i64; 2],
    pub sigma1: Sigma1Params,
    pub sigma2_base: f64,
    pub sigma2_x_slope: f64,
    pub sigma2_lip: f64,
    pub zeta: f64,
}

impl Default for SaturatingParams {
    fn default() -> Self {
        Self {
            kappa: 0.25,
            sat_radius: 0.5,
            c1: -0.5,
            c2: 1.0,
            h_gain: 1.0,
            h_mode: [1, 0],
            sigma1: Sigma1Params::default(),
            sigma2_base: 0.5,
            sigma2_x_slope: 0.1,
            sigma2_lip: 0.5,
            zeta: 0.5,
        }
    }
}

struct Saturating {
    p: SaturatingParams,
    h: ModeFilter,
    y_gain: f64,
}

impl CoefficientMaps for Saturating {
    fn f(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = x.scaled(self.p.c1);
        out.axpy(self.p.c2, y);
        out
    }

    fn g(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = self.h.apply(x);
        out.axpy(-self.p.kappa, &saturate(y, self.p.sat_radius));
        out
    }

    fn sigma1(&self, x: &SpectralField) -> NoiseMap {
        self.p.sigma1.map(x)
    }

    fn sigma2(&self, x: &SpectralField, y: &SpectralField) -> NoiseMap {
        let growth = (1.0 + y.l2_norm_sq()).powf(self.p.zeta / 2.0);
        NoiseMap::scalar(
            self.p.sigma2_base + self.p.sigma2_x_slope * x.l2_norm().min(self.p.sigma1.cap) + self.y_gain * growth,
        )
    }
}

fn saturating(
    p: SaturatingParams,
    space: &Arc<SpectralSpace>,
    slow_cov: &CovarianceSpec,
    fast_cov: &CovarianceSpec,
) -> Result<CoefficientSet, CoefficientError> {
    const SET: &str = "saturating";
    p.sigma1.check(SET)?;
    if !(p.kappa >= 0.0) || !(p.sat_radius > 0.0) || !(p.sigma2_lip >= 0.0) {
        return Err(invalid(SET, "kappa and sigma2_lip must be nonnegative, sat_radius positive"));
    }
    if !(p.zeta > 0.0 && p.zeta < 1.0) {
        return Err(CoefficientError::InvalidZeta(p.zeta));
    }
    let h = ModeFilter::new(SET, space, p.h_mode, p.h_gain)?;
    let tr = fast_cov.trace_h().sqrt();
    let y_gain = if tr > 0.0 { p.sigma2_lip / (sublinear_lipschitz(p.zeta) * tr) } else { 0.0 };
    let constants = DeclaredConstants {
        f_x: p.c1.abs(),
        f_y: p.c2.abs(),
        g_x: p.h_gain.abs(),
        g_y: p.kappa,
        sigma1: p.sigma1.lipschitz(slow_cov),
        sigma2_x: p.sigma2_x_slope.abs() * tr,
        sigma2_y: if tr > 0.0 { p.sigma2_lip } else { 0.0 },
        zeta: p.zeta,
    };
    CoefficientSet::new(SET, Arc::new(Saturating { p, h, y_gain }), constants)
}

// ---------------------------------------------------------------------------
// decoupled

/// `f(x, y) = c1 x + F` with `F` a fixed forcing on one mode pair, so
/// `f̄ = f`; the fast part matches `saturating` with a constant `σ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupledParams {
    pub c1: f64,
    pub forcing: f64,
    pub forcing_mode: [i64; 2],
    pub kappa: f64,
    pub sat_radius: f64,
    pub h_gain: f64,
    pub h_mode: [i64; 2],
    pub sigma1: Sigma1Params,
    pub sigma2: f64,
}

impl Default for DecoupledParams {
    fn default() -> Self {
        Self {
            c1: -0.5,
            forcing: 0.5,
            forcing_mode: [1, 0],
            kappa: 0.25,
            sat_radius: 0.5,
            h_gain: 1.0,
            h_mode: [1, 0],
            sigma1: Sigma1Params::default(),
            sigma2: 1.0,
        }
    }
}

struct Decoupled {
    p: DecoupledParams,
    forcing: SpectralField,
    h: ModeFilter,
}

impl Decoupled {
    fn f0(&self, x: &SpectralField) -> SpectralField {
        let mut out = x.scaled(self.p.c1);
        out.axpy(1.0, &self.forcing);
        out
    }
}

impl CoefficientMaps for Decoupled {
    fn f(&self, x: &SpectralField, _y: &SpectralField) -> SpectralField {
        self.f0(x)
    }

    fn g(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        let mut out = self.h.apply(x);
        out.axpy(-self.p.kappa, &saturate(y, self.p.sat_radius));
        out
    }

    fn sigma1(&self, x: &SpectralField) -> NoiseMap {
        self.p.sigma1.map(x)
    }

    fn sigma2(&self, _x: &SpectralField, _y: &SpectralField) -> NoiseMap {
        NoiseMap::scalar(self.p.sigma2)
    }

    fn closed_form_fbar(&self, x: &SpectralField) -> Option<SpectralField> {
        Some(self.f0(x))
    }

    fn has_closed_form(&self) -> bool {
        true
    }
}

fn decoupled(p: DecoupledParams, space: &Arc<SpectralSpace>, slow_cov: &CovarianceSpec) -> Result<CoefficientSet, CoefficientError> {
    const SET: &str = "decoupled";
    p.sigma1.check(SET)?;
    if !(p.kappa >= 0.0) || !(p.sat_radius > 0.0) {
        return Err(invalid(SET, "kappa must be nonnegative and sat_radius positive"));
    }
    let forcing = SpectralField::basis_mode(space, p.forcing_mode[0], p.forcing_mode[1], false, p.forcing)
        .map_err(|e| invalid(SET, e.to_string()))?;
    let h = ModeFilter::new(SET, space, p.h_mode, p.h_gain)?;
    let constants = DeclaredConstants {
        f_x: p.c1.abs(),
        f_y: 0.0,
        g_x: p.h_gain.abs(),
        g_y: p.kappa,
        sigma1: p.sigma1.lipschitz(slow_cov),
        sigma2_x: 0.0,
        sigma2_y: 0.0,
        zeta: 0.5,
    };
    CoefficientSet::new(SET, Arc::new(Decoupled { p, forcing, h }), constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::verify_dissipativity;
    use crate::spectral::random_field;
    use crate::stochastic::{NoiseStream, StreamRole};
    use serde_json::json;

    fn covs(space: &Arc<SpectralSpace>) -> (CovarianceSpec, CovarianceSpec) {
        (
            CovarianceSpec::power_law(space, 1.5, 0.1).unwrap(),
            CovarianceSpec::power_law(space, 1.5, 0.5).unwrap(),
        )
    }

    #[test]
    fn unknown_name_and_bad_params() {
        let space = SpectralSpace::new(16).unwrap();
        let (a, b) = covs(&space);
        assert_eq!(builtin("nope", &json!(null), &space, &a, &b).unwrap_err(), CoefficientError::UnknownSet("nope".into()));
        assert!(matches!(
            builtin("linear_ou", &json!({"c9": 1.0}), &space, &a, &b),
            Err(CoefficientError::InvalidParameters { .. })
        ));
        assert!(matches!(
            builtin("saturating", &json!({"h_mode": [7, 0]}), &space, &a, &b),
            Err(CoefficientError::InvalidParameters { .. })
        ));
    }

    #[test]
    fn sublinear_lipschitz_matches_brute_force() {
        for zeta in [0.2, 0.5, 0.9] {
            let brute = (1..200_000)
                .map(|i| {
                    let r = i as f64 * 1e-4;
                    zeta * r * (1.0 + r * r).powf(zeta / 2.0 - 1.0)
                })
                .fold(0.0, f64::max);
            assert!((sublinear_lipschitz(zeta) - brute).abs() < 1e-8, "{zeta}");
        }
    }

    #[test]
    fn saturating_margin_and_declared_sigma2() {
        let space = SpectralSpace::new(16).unwrap();
        let (a, b) = covs(&space);
        let set = builtin("saturating", &json!({}), &space, &a, &b).unwrap();
        assert!((verify_dissipativity(&set, 1.0) - (2.0 - 0.5 - 0.25)).abs() < 1e-15);
        let bad = builtin("saturating", &json!({"kappa": 1.0, "sigma2_lip": 1.0}), &space, &a, &b).unwrap();
        assert_eq!(verify_dissipativity(&bad, 1.0), -1.0);
    }

    #[test]
    fn linear_ou_closed_form_uses_mode_one_coefficient() {
        let space = SpectralSpace::new(16).unwrap();
        let (a, b) = covs(&space);
        let set = builtin("linear_ou", &json!({"c1": 0.3, "c2": 2.0}), &space, &a, &b).unwrap();
        let mut rng = NoiseStream::new(4, 0, StreamRole::Init).rng_at(0);
        let x = random_field(&space, &mut rng, 2.0, 1.0);
        let fbar = set.closed_form_fbar(&x).unwrap();
        // λ_(1,0) = 1, so (-A)^{-1} h(x) is the (1,0) part of x itself
        let mut expect = x.scaled(0.3);
        let i = space.index_of(1, 0).unwrap();
        let m = space.mirror(i);
        let mut proj = vec![[num_complex::Complex64::default(); 2]; space.len()];
        proj[i] = x.coeffs()[i];
        proj[m] = x.coeffs()[m];
        expect.axpy(2.0, &SpectralField::from_coeffs_checked(&space, proj).unwrap());
        assert!(fbar.sub(&expect).l2_norm() < 1e-15);
    }

    #[test]
    fn decoupled_f_ignores_y() {
        let space = SpectralSpace::new(16).unwrap();
        let (a, b) = covs(&space);
        let set = builtin("decoupled", &json!(null), &space, &a, &b).unwrap();
        let mut rng = NoiseStream::new(5, 0, StreamRole::Init).rng_at(0);
        let x = random_field(&space, &mut rng, 2.0, 1.0);
        let y1 = random_field(&space, &mut rng, 2.0, 1.0);
        let y2 = random_field(&space, &mut rng, 2.0, 5.0);
        assert_eq!(set.f(&x, &y1), set.f(&x, &y2));
        assert_eq!(set.closed_form_fbar(&x).unwrap(), set.f(&x, &y1));
    }

    #[test]
    fn saturation_is_bounded_and_structural() {
        let space = SpectralSpace::new(16).unwrap();
        let mut rng = NoiseStream::new(6, 0, StreamRole::Init).rng_at(0);
        let y = random_field(&space, &mut rng, 0.0, 50.0);
        let s = saturate(&y, 0.5);
        assert!(s.is_hermitian());
        assert!(s.divergence_residual() < 1e-12);
        for c in s.coeffs() {
            assert!((c[0].norm_sqr() + c[1].norm_sqr()).sqrt() <= 0.5 + 1e-12);
        }
    }
}
