//! Time integrators for the slow-fast system, the frozen fast equation, the
//! averaged equation and the auxiliary (piecewise-frozen) pair.
//!
//! All four use the same exponential Euler–Maruyama step: the Stokes part
//! is integrated exactly per mode, `B`, `f`, `g` and `σ` are evaluated at
//! the left endpoint, and the noise enters through the exact variance of
//! the per-mode stochastic convolution.

mod auxiliary;
mod fbar;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{verify_dissipativity, CoefficientSet, NoiseMap};
use crate::spectral::{Advection, SpectralError, SpectralField};
use crate::stochastic::{sample_increment_fine, CovarianceSpec, NoiseError, NoiseStream, StreamRole};

pub use auxiliary::{AuxiliaryRun, AuxiliaryState};
pub use fbar::{FbarEstimator, FbarMode};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state at t={t} (|X|={x_norm}, |Y|={y_norm})")]
    BlowUp { t: f64, x_norm: f64, y_norm: f64 },
    #[error("invalid step configuration: {0}")]
    Config(String),
    #[error("coefficient set `{name}` is not admissible (dissipativity margin {margin})")]
    Inadmissible { name: String, margin: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Scheme options shared by every integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Viscosity multiplying `A` in the slow equation.
    pub viscosity: f64,
    pub advection: Advection,
    /// Each increment over `dt` is summed from this many draws over
    /// `dt / noise_substeps`, so a run at `2h` with two substeps sees the
    /// same Brownian path as a run at `h` with one.
    pub noise_substeps: u32,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { viscosity: 1.0, advection: Advection::Pseudospectral, noise_substeps: 1 }
    }
}

/// Coefficients, covariances and scheme options of one experiment.
#[derive(Clone, Debug)]
pub struct SlowFastModel {
    coeffs: CoefficientSet,
    slow_cov: CovarianceSpec,
    fast_cov: CovarianceSpec,
    config: StepConfig,
}

/// State of the coupled system together with its two driving streams.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowFastState {
    pub t: f64,
    pub step: u64,
    pub x: SpectralField,
    pub y: SpectralField,
    pub slow: NoiseStream,
    pub fast: NoiseStream,
}

impl SlowFastState {
    pub fn new(x: SpectralField, y: SpectralField, root_seed: u64, sample: u64) -> Self {
        Self {
            t: 0.0,
            step: 0,
            x,
            y,
            slow: NoiseStream::new(root_seed, sample, StreamRole::Slow),
            fast: NoiseStream::new(root_seed, sample, StreamRole::Fast),
        }
    }
}

impl SlowFastModel {
    pub fn new(
        coeffs: CoefficientSet,
        slow_cov: CovarianceSpec,
        fast_cov: CovarianceSpec,
        config: StepConfig,
    ) -> Result<Self, DynamicsError> {
        if slow_cov.space().modes_per_axis() != fast_cov.space().modes_per_axis() {
            return Err(DynamicsError::Config("slow and fast covariances live on different grids".into()));
        }
        if !(config.viscosity > 0.0) || !config.viscosity.is_finite() {
            return Err(DynamicsError::Config(format!("viscosity must be positive, got {}", config.viscosity)));
        }
        if config.noise_substeps == 0 {
            return Err(DynamicsError::Config("noise_substeps must be positive".into()));
        }
        Ok(Self { coeffs, slow_cov, fast_cov, config })
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn slow_cov(&self) -> &CovarianceSpec {
        &self.slow_cov
    }

    pub fn fast_cov(&self) -> &CovarianceSpec {
        &self.fast_cov
    }

    pub fn config(&self) -> &StepConfig {
        &self.config
    }

    /// Dissipativity margin with `λ₁ = 1`.
    pub fn margin(&self) -> f64 {
        verify_dissipativity(&self.coeffs, self.slow_cov.space().lambda1())
    }

    pub fn ensure_admissible(&self) -> Result<(), DynamicsError> {
        let margin = self.margin();
        if margin > 0.0 {
            Ok(())
        } else {
            Err(DynamicsError::Inadmissible { name: self.coeffs.name().to_string(), margin })
        }
    }

    pub fn slow_increment(&self, dt: f64, stream: &mut NoiseStream) -> Result<SpectralField, DynamicsError> {
        Ok(sample_increment_fine(&self.slow_cov, dt, self.config.noise_substeps, stream)?)
    }

    pub fn fast_increment(&self, dt: f64, stream: &mut NoiseStream) -> Result<SpectralField, DynamicsError> {
        Ok(sample_increment_fine(&self.fast_cov, dt, self.config.noise_substeps, stream)?)
    }

    /// One slow step `x ↦ x'` of `dX = [νAX - B(X) + drift]dt + σ₁(X)dW`,
    /// where `drift` is already evaluated at the left endpoint.
    pub fn slow_step(
        &self,
        x: &SpectralField,
        drift: &SpectralField,
        dt: f64,
        dw: &SpectralField,
    ) -> Result<SpectralField, DynamicsError> {
        let mut n = self.config.advection.apply(x, x)?;
        n.scale_in_place(-1.0);
        n.axpy(1.0, drift);
        let noise = self.coeffs.sigma1(x).action(dw);
        Ok(etd_step(x, &n, &noise, dt, 1.0, self.config.viscosity))
    }

    /// One fast step of `dY = τ⁻¹[AY + g]dt + τ^{-1/2}σ dW`. `τ = ε` for the
    /// coupled system, `τ = 1` for the frozen equation.
    pub fn fast_step(
        &self,
        y: &SpectralField,
        g: &SpectralField,
        sigma: NoiseMap,
        dt: f64,
        tau: f64,
        dw: &SpectralField,
    ) -> Result<SpectralField, DynamicsError> {
        let noise = sigma.action(dw);
        Ok(etd_step(y, g, &noise, dt, tau, 1.0))
    }

    /// Advances `(x, y)` by `dt` with the supplied increments.
    pub fn advance_slow_fast(
        &self,
        x: &SpectralField,
        y: &SpectralField,
        dt: f64,
        eps: f64,
        dw_slow: &SpectralField,
        dw_fast: &SpectralField,
    ) -> Result<(SpectralField, SpectralField), DynamicsError> {
        check_step(dt, eps)?;
        let x_next = self.slow_step(x, &self.coeffs.f(x, y), dt, dw_slow)?;
        let y_next = self.fast_step(y, &self.coeffs.g(x, y), self.coeffs.sigma2(x, y), dt, eps, dw_fast)?;
        Ok((x_next, y_next))
    }

    /// One step of the coupled system, drawing from the state's streams.
    pub fn step_slow_fast(&self, state: &SlowFastState, dt: f64, eps: f64) -> Result<SlowFastState, DynamicsError> {
        check_step(dt, eps)?;
        let mut next = state.clone();
        let dw_slow = self.slow_increment(dt, &mut next.slow)?;
        let dw_fast = self.fast_increment(dt, &mut next.fast)?;
        let (x, y) = self.advance_slow_fast(&state.x, &state.y, dt, eps, &dw_slow, &dw_fast)?;
        next.t = state.t + dt;
        next.step = state.step + 1;
        ensure_finite(next.t, &x, &y)?;
        next.x = x;
        next.y = y;
        Ok(next)
    }

    /// One step of the frozen equation at fixed `x`, driven by `stream`
    /// (normally the sample's frozen-role stream).
    pub fn step_frozen(
        &self,
        y: &SpectralField,
        x_frozen: &SpectralField,
        dt: f64,
        stream: &mut NoiseStream,
    ) -> Result<SpectralField, DynamicsError> {
        if !(dt > 0.0) {
            return Err(DynamicsError::Config(format!("time step must be positive, got {dt}")));
        }
        let dw = self.fast_increment(dt, stream)?;
        let out = self.fast_step(y, &self.coeffs.g(x_frozen, y), self.coeffs.sigma2(x_frozen, y), dt, 1.0, &dw)?;
        if !out.is_finite() {
            return Err(DynamicsError::BlowUp { t: f64::NAN, x_norm: x_frozen.l2_norm(), y_norm: f64::NAN });
        }
        Ok(out)
    }

    /// Averaged step with a supplied slow increment.
    pub fn advance_averaged(
        &self,
        xbar: &SpectralField,
        dt: f64,
        est: &mut FbarEstimator,
        dw_slow: &SpectralField,
        frozen: &mut NoiseStream,
    ) -> Result<SpectralField, DynamicsError> {
        if !(dt > 0.0) {
            return Err(DynamicsError::Config(format!("time step must be positive, got {dt}")));
        }
        let fbar = self.estimate_fbar(est, xbar, frozen)?;
        self.slow_step(xbar, &fbar, dt, dw_slow)
    }

    /// One step of the averaged equation. Pass the slow stream of the
    /// companion coupled run to keep the two paths on common noise.
    pub fn step_averaged(
        &self,
        xbar: &SpectralField,
        dt: f64,
        est: &mut FbarEstimator,
        slow: &mut NoiseStream,
        frozen: &mut NoiseStream,
    ) -> Result<SpectralField, DynamicsError> {
        let dw = self.slow_increment(dt, slow)?;
        self.advance_averaged(xbar, dt, est, &dw, frozen)
    }
}

fn check_step(dt: f64, eps: f64) -> Result<(), DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::Config(format!("time step must be positive, got {dt}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DynamicsError::Config(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

pub(crate) fn ensure_finite(t: f64, x: &SpectralField, y: &SpectralField) -> Result<(), DynamicsError> {
    let (xn, yn) = (x.l2_norm(), y.l2_norm());
    if xn.is_finite() && yn.is_finite() && x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::BlowUp { t, x_norm: xn, y_norm: yn })
    }
}

/// `u' = e^{-a}u + (1-e^{-a})/(τr) n + τ^{-1/2} sqrt((1-e^{-2a})/(2a)) ξ`
/// per mode, with `r = νλ/τ` and `a = r h`. `ξ` has variance `q h`.
fn etd_step(u: &SpectralField, n: &SpectralField, noise: &SpectralField, h: f64, tau: f64, nu: f64) -> SpectralField {
    let space = u.space();
    let mut out = u.coeffs().to_vec();
    let inv_sqrt_tau = tau.sqrt().recip();
    for &i in space.retained_indices() {
        let r = nu * space.eigenvalue(i) / tau;
        let a = r * h;
        let decay = (-a).exp();
        let drift = -(-a).exp_m1() / (tau * r);
        let diffusion = inv_sqrt_tau * (-(-2.0 * a).exp_m1() / (2.0 * a)).sqrt();
        let (c, d, w) = (&mut out[i], &n.coeffs()[i], &noise.coeffs()[i]);
        for j in 0..2 {
            c[j] = c[j] * decay + d[j] * drift + w[j] * diffusion;
        }
    }
    SpectralField::from_coeffs_unchecked(space, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin, CoefficientMaps, DeclaredConstants};
    use crate::spectral::{apply_semigroup, random_field, SpectralSpace};
    use serde_json::json;
    use std::sync::Arc;

    struct Zero;
    impl CoefficientMaps for Zero {
        fn f(&self, x: &SpectralField, _: &SpectralField) -> SpectralField {
            SpectralField::zeros(x.space())
        }
        fn g(&self, x: &SpectralField, _: &SpectralField) -> SpectralField {
            SpectralField::zeros(x.space())
        }
        fn sigma1(&self, _: &SpectralField) -> NoiseMap {
            NoiseMap::zero()
        }
        fn sigma2(&self, _: &SpectralField, _: &SpectralField) -> NoiseMap {
            NoiseMap::zero()
        }
    }

    fn zero_model(space: &Arc<SpectralSpace>, advection: Advection) -> SlowFastModel {
        let set = CoefficientSet::new("zero", Arc::new(Zero), DeclaredConstants { zeta: 0.5, ..Default::default() }).unwrap();
        let cov = CovarianceSpec::power_law(space, 1.5, 0.0).unwrap();
        SlowFastModel::new(set, cov.clone(), cov, StepConfig { advection, ..Default::default() }).unwrap()
    }

    fn init(space: &Arc<SpectralSpace>, seed: u64) -> (SpectralField, SpectralField) {
        let mut rng = NoiseStream::new(seed, 0, StreamRole::Init).rng_at(0);
        (random_field(space, &mut rng, 2.0, 1.0), random_field(space, &mut rng, 2.0, 1.0))
    }

    #[test]
    fn heat_flow_is_exact() {
        let space = SpectralSpace::new(16).unwrap();
        let model = zero_model(&space, Advection::Disabled);
        let (x, y) = init(&space, 1);
        let state = SlowFastState::new(x.clone(), y.clone(), 1, 0);
        let next = model.step_slow_fast(&state, 0.01, 0.1).unwrap();
        let ex = apply_semigroup(&x, 0.01).unwrap();
        let ey = apply_semigroup(&y, 0.1).unwrap();
        for i in 0..space.len() {
            for j in 0..2 {
                assert!((next.x.coeffs()[i][j] - ex.coeffs()[i][j]).norm() <= 1e-12 * x.l2_norm());
                assert!((next.y.coeffs()[i][j] - ey.coeffs()[i][j]).norm() <= 1e-12 * y.l2_norm());
            }
        }
        let mut frozen = NoiseStream::new(1, 0, StreamRole::Frozen);
        let yf = model.step_frozen(&y, &x, 0.05, &mut frozen).unwrap();
        assert!(yf.sub(&apply_semigroup(&y, 0.05).unwrap()).l2_norm() <= 1e-12);
    }

    #[test]
    fn rejects_bad_steps() {
        let space = SpectralSpace::new(8).unwrap();
        let model = zero_model(&space, Advection::Disabled);
        let (x, y) = init(&space, 2);
        let state = SlowFastState::new(x, y, 0, 0);
        assert!(matches!(model.step_slow_fast(&state, 0.0, 0.1), Err(DynamicsError::Config(_))));
        assert!(matches!(model.step_slow_fast(&state, 0.01, 1.0), Err(DynamicsError::Config(_))));
    }

    #[test]
    fn nonlinear_energy_decay_matches_reference() {
        let space = SpectralSpace::new(32).unwrap();
        let model = zero_model(&space, Advection::Pseudospectral);
        let (x, _) = init(&space, 3);
        let x = x.scaled(5.0);
        let run = |dt: f64, steps: usize| {
            let mut s = SlowFastState::new(x.clone(), SpectralField::zeros(&space), 3, 0);
            for _ in 0..steps {
                s = model.step_slow_fast(&s, dt, 0.5).unwrap();
            }
            s.x.l2_norm()
        };
        let coarse = run(1e-3, 1000);
        let fine = run(1e-4, 10_000);
        assert!(coarse <= (-1.0f64).exp() * x.l2_norm() * (1.0 + 1e-12));
        assert!((coarse - fine).abs() <= 0.01 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn seeded_step_is_reproducible() {
        let space = SpectralSpace::new(16).unwrap();
        let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
        let fast = CovarianceSpec::power_law(&space, 1.5, 0.5).unwrap();
        let set = builtin("saturating", &json!({}), &space, &slow, &fast).unwrap();
        let model = SlowFastModel::new(set, slow, fast, StepConfig::default()).unwrap();
        let (x, y) = init(&space, 4);
        let s = SlowFastState::new(x, y, 11, 2);
        let a = model.step_slow_fast(&s, 1e-3, 0.01).unwrap();
        let b = model.step_slow_fast(&s, 1e-3, 0.01).unwrap();
        assert_eq!(a, b);
        assert!(a.x.is_hermitian() && a.y.is_hermitian());
        assert!(a.x.divergence_residual() < 1e-13 && a.y.divergence_residual() < 1e-13);
        assert_eq!(a.slow.counter(), 1);
    }

    #[test]
    fn frozen_difference_solves_heat_equation() {
        let space = SpectralSpace::new(16).unwrap();
        let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
        let fast = CovarianceSpec::power_law(&space, 1.5, 0.5).unwrap();
        let set = builtin("linear_ou", &json!({}), &space, &slow, &fast).unwrap();
        let model = SlowFastModel::new(set, slow, fast, StepConfig::default()).unwrap();
        let (x, y1) = init(&space, 5);
        let (y2, _) = init(&space, 6);
        let mut s1 = NoiseStream::new(1, 0, StreamRole::Frozen);
        let mut s2 = s1.clone();
        let (mut a, mut b) = (y1.clone(), y2.clone());
        for _ in 0..100 {
            a = model.step_frozen(&a, &x, 0.01, &mut s1).unwrap();
            b = model.step_frozen(&b, &x, 0.01, &mut s2).unwrap();
        }
        let expect = apply_semigroup(&y1.sub(&y2), 1.0).unwrap();
        assert!(a.sub(&b).sub(&expect).l2_norm() < 1e-12);
    }

    #[test]
    fn stationary_ou_variance_is_exact_per_mode() {
        // with g = 0 and constant σ₂ the per-mode variance after many steps
        // is q/(2λ) for any step size
        let space = SpectralSpace::new(8).unwrap();
        let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
        let fast = CovarianceSpec::power_law(&space, 1.5, 1.0).unwrap();
        let set = builtin("linear_ou", &json!({"h_gain": 0.0}), &space, &slow, &fast).unwrap();
        let model = SlowFastModel::new(set, slow, fast.clone(), StepConfig::default()).unwrap();
        let x = SpectralField::zeros(&space);
        let mut stream = NoiseStream::new(3, 0, StreamRole::Frozen);
        let mut y = SpectralField::zeros(&space);
        for _ in 0..50 {
            y = model.step_frozen(&y, &x, 0.5, &mut stream).unwrap();
        }
        let (mut acc, n) = (0.0, 20_000);
        for _ in 0..n {
            y = model.step_frozen(&y, &x, 0.5, &mut stream).unwrap();
            acc += y.l2_norm_sq();
        }
        let expect: f64 = space.retained_indices().iter().map(|&i| fast.eigenvalue(i) / (2.0 * space.eigenvalue(i))).sum();
        let got = acc / n as f64;
        assert!((got - expect).abs() < 0.05 * expect, "{got} vs {expect}");
    }
}
