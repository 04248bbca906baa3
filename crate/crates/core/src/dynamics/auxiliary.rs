use super::{check_step, ensure_finite, DynamicsError, SlowFastModel, SlowFastState};
use crate::spectral::SpectralField;

/// Piecewise-frozen companion of the coupled system: on `[kδ, (k+1)δ)` the
/// fast component sees the slow state frozen at `X_{kδ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryState {
    pub t: f64,
    pub x_hat: SpectralField,
    pub y_hat: SpectralField,
    pub delta: f64,
    pub delta_steps: u64,
    pub anchor: SpectralField,
    pub anchor_index: u64,
}

/// Time series of a coupled/auxiliary co-evolution. `y_gap_sq[n]` and
/// `x_gap_sq[n]` are `|Y - Ŷ|²` and `|X - X̂|²` at `times[n] = n dt`.
#[derive(Clone, Debug)]
pub struct AuxiliaryRun {
    pub dt: f64,
    pub times: Vec<f64>,
    pub y_gap_sq: Vec<f64>,
    pub x_gap_sq: Vec<f64>,
    pub coupled: SlowFastState,
    pub auxiliary: AuxiliaryState,
}

impl AuxiliaryRun {
    /// Left Riemann sum of `|Y - Ŷ|²` over the run.
    pub fn y_gap_integral(&self) -> f64 {
        let n = self.y_gap_sq.len().saturating_sub(1);
        self.y_gap_sq[..n].iter().sum::<f64>() * self.dt
    }

    pub fn x_gap_sup(&self) -> f64 {
        self.x_gap_sq.iter().copied().fold(0.0, f64::max)
    }
}

/// Number of `dt` steps in `delta`, or an error when `delta` is not an
/// integer multiple of `dt` (relative tolerance 1e-9).
pub fn steps_in(delta: f64, dt: f64) -> Result<u64, DynamicsError> {
    let ratio = delta / dt;
    let k = ratio.round();
    if !(delta > 0.0) || k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(DynamicsError::Config(format!("delta={delta} is not a positive integer multiple of dt={dt}")));
    }
    Ok(k as u64)
}

impl AuxiliaryState {
    pub fn new(x: SpectralField, y: SpectralField, delta: f64, dt: f64) -> Result<Self, DynamicsError> {
        let delta_steps = steps_in(delta, dt)?;
        Ok(Self { t: 0.0, anchor: x.clone(), x_hat: x, y_hat: y, delta, delta_steps, anchor_index: 0 })
    }
}

impl SlowFastModel {
    /// Advances the auxiliary pair from step `n` to `n + 1`. `x_coupled` is
    /// the coupled slow state at step `n`; it becomes the anchor when `n` is
    /// a multiple of the block length.
    #[allow(clippy::too_many_arguments)]
    pub fn advance_auxiliary(
        &self,
        aux: &AuxiliaryState,
        x_coupled: &SpectralField,
        n: u64,
        dt: f64,
        eps: f64,
        dw_slow: &SpectralField,
        dw_fast: &SpectralField,
    ) -> Result<AuxiliaryState, DynamicsError> {
        check_step(dt, eps)?;
        let mut next = aux.clone();
        if n % aux.delta_steps == 0 {
            next.anchor = x_coupled.clone();
            next.anchor_index = n / aux.delta_steps;
        }
        let c = self.coeffs();
        let drift = c.f(&next.anchor, &aux.y_hat);
        next.x_hat = self.slow_step(&aux.x_hat, &drift, dt, dw_slow)?;
        let g = c.g(&next.anchor, &aux.y_hat);
        next.y_hat = self.fast_step(&aux.y_hat, &g, c.sigma2(&next.anchor, &aux.y_hat), dt, eps, dw_fast)?;
        next.t = (n + 1) as f64 * dt;
        ensure_finite(next.t, &next.x_hat, &next.y_hat)?;
        Ok(next)
    }

    /// Co-evolves `(X^ε, Y^ε)` and `(X̂, Ŷ)` on the streams of `sample`
    /// for `round(t_final / dt)` steps.
    #[allow(clippy::too_many_arguments)]
    pub fn run_auxiliary(
        &self,
        x: &SpectralField,
        y: &SpectralField,
        delta: f64,
        dt: f64,
        eps: f64,
        t_final: f64,
        root_seed: u64,
        sample: u64,
    ) -> Result<AuxiliaryRun, DynamicsError> {
        check_step(dt, eps)?;
        let steps = steps_in(t_final, dt)?;
        let mut coupled = SlowFastState::new(x.clone(), y.clone(), root_seed, sample);
        let mut aux = AuxiliaryState::new(x.clone(), y.clone(), delta, dt)?;
        let cap = steps as usize + 1;
        let mut run = AuxiliaryRun {
            dt,
            times: Vec::with_capacity(cap),
            y_gap_sq: Vec::with_capacity(cap),
            x_gap_sq: Vec::with_capacity(cap),
            coupled: coupled.clone(),
            auxiliary: aux.clone(),
        };
        let record = |run: &mut AuxiliaryRun, c: &SlowFastState, a: &AuxiliaryState| {
            run.times.push(c.t);
            run.y_gap_sq.push(c.y.sub(&a.y_hat).l2_norm_sq());
            run.x_gap_sq.push(c.x.sub(&a.x_hat).l2_norm_sq());
        };
        record(&mut run, &coupled, &aux);
        for n in 0..steps {
            let dw_slow = self.slow_increment(dt, &mut coupled.slow)?;
            let dw_fast = self.fast_increment(dt, &mut coupled.fast)?;
            aux = self.advance_auxiliary(&aux, &coupled.x, n, dt, eps, &dw_slow, &dw_fast)?;
            let (xn, yn) = self.advance_slow_fast(&coupled.x, &coupled.y, dt, eps, &dw_slow, &dw_fast)?;
            coupled.step = n + 1;
            coupled.t = aux.t;
            ensure_finite(coupled.t, &xn, &yn)?;
            coupled.x = xn;
            coupled.y = yn;
            record(&mut run, &coupled, &aux);
        }
        run.coupled = coupled;
        run.auxiliary = aux;
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::builtin;
    use crate::dynamics::StepConfig;
    use crate::spectral::{random_field, SpectralSpace};
    use crate::stochastic::{CovarianceSpec, NoiseStream, StreamRole};
    use serde_json::json;

    fn setup(name: &str, params: serde_json::Value) -> (SlowFastModel, SpectralField, SpectralField) {
        let space = SpectralSpace::new(16).unwrap();
        let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
        let fast = CovarianceSpec::power_law(&space, 1.5, 0.5).unwrap();
        let set = builtin(name, &params, &space, &slow, &fast).unwrap();
        let model = SlowFastModel::new(set, slow, fast, StepConfig::default()).unwrap();
        let mut rng = NoiseStream::new(9, 0, StreamRole::Init).rng_at(0);
        let x = random_field(&space, &mut rng, 2.0, 1.0);
        let y = random_field(&space, &mut rng, 2.0, 1.0);
        (model, x, y)
    }

    #[test]
    fn delta_must_be_a_multiple_of_dt() {
        assert_eq!(steps_in(0.004, 0.001).unwrap(), 4);
        assert!(steps_in(0.0035, 0.001).is_err());
        assert!(steps_in(0.0, 0.001).is_err());
    }

    #[test]
    fn block_of_one_step_reproduces_coupled_path() {
        let (model, x, y) = setup("saturating", json!({}));
        let run = model.run_auxiliary(&x, &y, 1e-3, 1e-3, 0.01, 0.05, 3, 0).unwrap();
        assert!(run.y_gap_sq.iter().all(|&v| v == 0.0));
        assert!(run.x_gap_sq.iter().all(|&v| v == 0.0));
        assert_eq!(run.times.len(), 51);
    }

    #[test]
    fn long_block_never_refreshes() {
        let (model, x, y) = setup("saturating", json!({}));
        let run = model.run_auxiliary(&x, &y, 1.0, 1e-3, 0.01, 0.05, 3, 0).unwrap();
        assert_eq!(run.auxiliary.anchor_index, 0);
        assert_eq!(run.auxiliary.anchor, x);
        assert!(run.y_gap_integral() > 0.0);
    }

    #[test]
    fn constant_noise_and_no_feedback_give_zero_fast_gap() {
        let (model, x, y) = setup("linear_ou", json!({"h_gain": 0.0}));
        let run = model.run_auxiliary(&x, &y, 0.01, 1e-3, 0.01, 0.05, 3, 0).unwrap();
        assert_eq!(run.y_gap_integral(), 0.0);
        assert!(run.x_gap_sup() > 0.0);
    }
}
