use serde::{Deserialize, Serialize};

use super::{DynamicsError, SlowFastModel};
use crate::coefficients::CoefficientSet;
use crate::spectral::SpectralField;
use crate::stochastic::NoiseStream;

/// How `f̄(x)` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FbarMode {
    ClosedForm,
    /// Average of `f(x, Y_s)` over `[burn_in, burn_in + t_erg]` along one
    /// frozen path started from zero, stepped at `dt`.
    TimeAverage { t_erg: f64, burn_in: f64, dt: f64 },
    /// `relax_steps` frozen steps from the retained fast state, then the
    /// mean of `f` over `window_steps` further steps.
    WarmStart { relax_steps: u64, window_steps: u64, dt: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbarEstimator {
    mode: FbarMode,
    fast_state: Option<SpectralField>,
}

impl FbarEstimator {
    pub fn new(mode: FbarMode, set: &CoefficientSet) -> Result<Self, DynamicsError> {
        match mode {
            FbarMode::ClosedForm if !set.has_closed_form() => {
                return Err(DynamicsError::Config(format!(
                    "coefficient set `{}` has no closed-form average",
                    set.name()
                )))
            }
            FbarMode::ClosedForm => {}
            FbarMode::TimeAverage { t_erg, burn_in, dt } => {
                if !(t_erg > 0.0 && burn_in >= 0.0 && dt > 0.0 && t_erg >= dt) {
                    return Err(DynamicsError::Config("time_average needs t_erg >= dt > 0, burn_in >= 0".into()));
                }
            }
            FbarMode::WarmStart { window_steps, dt, .. } => {
                if window_steps == 0 || !(dt > 0.0) {
                    return Err(DynamicsError::Config("warm_start needs window_steps >= 1 and dt > 0".into()));
                }
            }
        }
        Ok(Self { mode, fast_state: None })
    }

    pub fn closed_form(set: &CoefficientSet) -> Result<Self, DynamicsError> {
        Self::new(FbarMode::ClosedForm, set)
    }

    /// Warm start whose relaxation covers `5 / rate` time units.
    pub fn warm_start_for_rate(set: &CoefficientSet, rate: f64, dt: f64, window_steps: u64) -> Result<Self, DynamicsError> {
        if !(rate > 0.0) {
            return Err(DynamicsError::Config(format!("relaxation rate must be positive, got {rate}")));
        }
        let relax_steps = (5.0 / (rate * dt)).ceil() as u64;
        Self::new(FbarMode::WarmStart { relax_steps, window_steps, dt }, set)
    }

    pub fn mode(&self) -> FbarMode {
        self.mode
    }

    pub fn fast_state(&self) -> Option<&SpectralField> {
        self.fast_state.as_ref()
    }
}

impl SlowFastModel {
    /// `f̄(x)` by the estimator's mode. Sampling modes draw from `stream`.
    pub fn estimate_fbar(
        &self,
        est: &mut FbarEstimator,
        x: &SpectralField,
        stream: &mut NoiseStream,
    ) -> Result<SpectralField, DynamicsError> {
        self.ensure_admissible()?;
        let zero = || SpectralField::zeros(x.space());
        match est.mode {
            FbarMode::ClosedForm => self
                .coeffs()
                .closed_form_fbar(x)
                .ok_or_else(|| DynamicsError::Config("closed form unavailable".into())),
            FbarMode::TimeAverage { t_erg, burn_in, dt } => {
                let burn = (burn_in / dt).round() as u64;
                let window = ((t_erg / dt).round() as u64).max(1);
                let (_, mean) = self.frozen_average(zero(), x, dt, burn, window, stream)?;
                Ok(mean)
            }
            FbarMode::WarmStart { relax_steps, window_steps, dt } => {
                let start = est.fast_state.take().unwrap_or_else(zero);
                let (last, mean) = self.frozen_average(start, x, dt, relax_steps, window_steps, stream)?;
                est.fast_state = Some(last);
                Ok(mean)
            }
        }
    }

    fn frozen_average(
        &self,
        mut y: SpectralField,
        x: &SpectralField,
        dt: f64,
        skip: u64,
        window: u64,
        stream: &mut NoiseStream,
    ) -> Result<(SpectralField, SpectralField), DynamicsError> {
        for _ in 0..skip {
            y = self.step_frozen(&y, x, dt, stream)?;
        }
        let mut acc = SpectralField::zeros(x.space());
        for _ in 0..window {
            acc.axpy(1.0, &self.coeffs().f(x, &y));
            y = self.step_frozen(&y, x, dt, stream)?;
        }
        acc.scale_in_place(1.0 / window as f64);
        Ok((y, acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::builtin;
    use crate::dynamics::StepConfig;
    use crate::spectral::{random_field, SpectralSpace};
    use crate::stochastic::{CovarianceSpec, StreamRole};
    use serde_json::json;

    fn model(name: &str) -> SlowFastModel {
        let space = SpectralSpace::new(16).unwrap();
        let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
        let fast = CovarianceSpec::power_law(&space, 1.5, 0.5).unwrap();
        let set = builtin(name, &json!({}), &space, &slow, &fast).unwrap();
        SlowFastModel::new(set, slow, fast, StepConfig::default()).unwrap()
    }

    #[test]
    fn closed_form_only_when_declared() {
        let m = model("saturating");
        assert!(matches!(FbarEstimator::closed_form(m.coeffs()), Err(DynamicsError::Config(_))));
        let m = model("decoupled");
        let mut est = FbarEstimator::closed_form(m.coeffs()).unwrap();
        let space = m.slow_cov().space().clone();
        let x = random_field(&space, &mut NoiseStream::new(1, 0, StreamRole::Init).rng_at(0), 2.0, 1.0);
        let mut s = NoiseStream::new(1, 0, StreamRole::Frozen);
        let got = m.estimate_fbar(&mut est, &x, &mut s).unwrap();
        assert_eq!(got, m.coeffs().f(&x, &SpectralField::zeros(&space)));
        assert_eq!(s.counter(), 0);
    }

    #[test]
    fn warm_start_keeps_fast_state() {
        let m = model("saturating");
        let mut est = FbarEstimator::new(FbarMode::WarmStart { relax_steps: 10, window_steps: 5, dt: 0.01 }, m.coeffs()).unwrap();
        let space = m.slow_cov().space().clone();
        let x = random_field(&space, &mut NoiseStream::new(2, 0, StreamRole::Init).rng_at(0), 2.0, 1.0);
        let mut s = NoiseStream::new(2, 0, StreamRole::Frozen);
        m.estimate_fbar(&mut est, &x, &mut s).unwrap();
        assert_eq!(s.counter(), 15);
        assert!(est.fast_state().is_some());
        let relax = FbarEstimator::warm_start_for_rate(m.coeffs(), 1.0, 0.125, 4).unwrap();
        assert_eq!(relax.mode(), FbarMode::WarmStart { relax_steps: 40, window_steps: 4, dt: 0.125 });
    }

    #[test]
    fn mode_parses_from_json() {
        let m: FbarMode = serde_json::from_value(json!({"mode": "time_average", "t_erg": 50.0, "burn_in": 5.0, "dt": 0.01})).unwrap();
        assert_eq!(m, FbarMode::TimeAverage { t_erg: 50.0, burn_in: 5.0, dt: 0.01 });
        assert!(serde_json::from_value::<FbarMode>(json!({"mode": "warm_start", "relax_steps": 1, "window_steps": 1, "dt": 0.1, "x": 1})).is_err());
    }
}
