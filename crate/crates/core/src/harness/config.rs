use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::coefficients::builtin;
use crate::dynamics::{FbarMode, SlowFastModel, StepConfig};
use crate::spectral::{random_field, shear, taylor_green, SpectralField, SpectralSpace};
use crate::stochastic::{CovarianceParams, CovarianceSpec, NoiseStream, StreamRole};

/// One experiment, as read from the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Grid points per axis.
    pub n: usize,
    pub t_final: f64,
    pub time: TimeRule,
    pub eps: Vec<f64>,
    pub delta: DeltaRule,
    pub samples: usize,
    pub coefficients: CoefficientConfig,
    pub noise: NoiseConfig,
    pub initial: InitialCondition,
    /// `None` selects the closed form when the set has one, otherwise a
    /// warm start calibrated by the ergodicity probe.
    pub fbar: Option<FbarMode>,
    pub step: StepConfig,
    pub seed: u64,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 16,
            t_final: 0.5,
            time: TimeRule::default(),
            eps: vec![0.1, 0.01, 0.001],
            delta: DeltaRule::EpsCubeRoot,
            samples: 64,
            coefficients: CoefficientConfig::default(),
            noise: NoiseConfig::default(),
            initial: InitialCondition::default(),
            fbar: None,
            step: StepConfig::default(),
            seed: 1,
            output: OutputConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

/// `dt = min(cfl·ε, dt_max)`, snapped so that both the step and the
/// recording interval divide `t_final`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeRule {
    pub cfl: f64,
    pub dt_max: f64,
}

impl Default for TimeRule {
    fn default() -> Self {
        Self { cfl: 0.1, dt_max: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaRule {
    /// `δ = ε^{1/3}`.
    EpsCubeRoot,
    /// One value per entry of `eps`.
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self { name: "linear_ou".into(), params: serde_json::Value::Null }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub slow: CovarianceParams,
    pub fast: CovarianceParams,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            slow: CovarianceParams { alpha: 1.5, amplitude: 0.1 },
            fast: CovarianceParams { alpha: 1.5, amplitude: 0.5 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Coefficients decaying like `|k|^{-decay}`, rescaled to the given norms.
    Random { decay: f64, x_norm: f64, y_norm: f64 },
    TaylorGreen { x_amplitude: f64, y_amplitude: f64 },
    Shear { x_amplitude: f64, y_amplitude: f64 },
    Zero,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Random { decay: 2.0, x_norm: 1.0, y_norm: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory receiving CSV/JSON/snapshot artifacts.
    pub dir: Option<PathBuf>,
    /// File-name stem; defaults to the command name.
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub increments: IncrementsConfig,
    pub auxgap: AuxGapConfig,
    pub moments: MomentsConfig,
    pub ergodicity: ErgodicityConfig,
    pub inequalities: InequalitiesConfig,
    pub fbar: FbarDiagConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncrementsConfig {
    pub eps: f64,
    /// Block lengths as fractions of `t_final`.
    pub delta_fractions: Vec<f64>,
}

impl Default for IncrementsConfig {
    fn default() -> Self {
        Self { eps: 0.1, delta_fractions: (4..=8).map(|j| 0.5f64.powi(j)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuxGapConfig {
    pub eps: f64,
    /// Explicit block lengths; default `ε^{1/3}·2^{-j}`, `j = 0..levels`.
    pub deltas: Option<Vec<f64>>,
    pub levels: u32,
}

impl Default for AuxGapConfig {
    fn default() -> Self {
        Self { eps: 0.01, deltas: None, levels: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub p: Vec<u32>,
    /// Fast moments are maximised over `t ≥ burn_in_fraction · t_final`.
    pub burn_in_fraction: f64,
    /// Largest allowed max/min ratio across the ε sweep.
    pub max_ratio: f64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self { p: vec![1, 2], burn_in_fraction: 0.5, max_ratio: 3.0 }
    }
}

/// Lipschitz test functional for the ergodicity probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    /// `⟨u, √2 cos(k·ξ) k⊥/|k|⟩`.
    ModeProjection { mode: [i64; 2] },
    /// `min(|u|, radius)`.
    ClampedNorm { radius: f64 },
}

impl Observable {
    pub fn eval(&self, u: &SpectralField) -> f64 {
        match self {
            Observable::ModeProjection { mode } => {
                let (k1, k2) = (mode[0] as f64, mode[1] as f64);
                let k = k1.hypot(k2);
                match u.coefficient(mode[0], mode[1]) {
                    Some(c) => std::f64::consts::SQRT_2 * ((c[0] * (-k2 / k) + c[1] * (k1 / k)).re),
                    None => 0.0,
                }
            }
            Observable::ClampedNorm { radius } => u.l2_norm().min(*radius),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicityConfig {
    pub observable: Observable,
    pub t_probe: f64,
    pub dt: f64,
    pub samples: usize,
    /// Gaps below `floor · initial gap` are excluded from the fit.
    pub floor: f64,
}

impl Default for ErgodicityConfig {
    fn default() -> Self {
        Self { observable: Observable::ModeProjection { mode: [1, 0] }, t_probe: 5.0, dt: 0.01, samples: 16, floor: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InequalitiesConfig {
    pub pairs: usize,
    pub eps: f64,
    /// Scaled-ensemble amplitudes reach `10^max_log_amplitude`.
    pub max_log_amplitude: f64,
    /// Tolerance factor on the fitted monotonicity constant.
    pub monotonicity_slack: f64,
}

impl Default for InequalitiesConfig {
    fn default() -> Self {
        Self { pairs: 1000, eps: 0.1, max_log_amplitude: 5.0, monotonicity_slack: 4.0 }
    }
}

/// Settings of the standalone `f̄` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbarDiagConfig {
    pub replicates: usize,
    /// Frozen step for probe-calibrated warm starts.
    pub frozen_dt: f64,
    pub window_steps: u64,
}

impl Default for FbarDiagConfig {
    fn default() -> Self {
        Self { replicates: 16, frozen_dt: 0.01, window_steps: 10 }
    }
}

/// Step size and recording layout for one ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: u64,
    /// Record (and take sups) every `record_every` steps.
    pub record_every: u64,
}

impl TimeGrid {
    pub fn for_eps(rule: &TimeRule, t_final: f64, eps: f64) -> Self {
        let n_rec = (t_final / rule.dt_max - 1e-9).ceil().max(1.0) as u64;
        let rec = t_final / n_rec as f64;
        let m = (rec / (rule.cfl * eps) - 1e-9).ceil().max(1.0) as u64;
        Self { dt: rec / m as f64, steps: n_rec * m, record_every: m }
    }

    /// The recording grid itself, one step per record.
    pub fn recording(rule: &TimeRule, t_final: f64) -> Self {
        let n_rec = (t_final / rule.dt_max - 1e-9).ceil().max(1.0) as u64;
        Self { dt: t_final / n_rec as f64, steps: n_rec, record_every: 1 }
    }

    pub fn time(&self, step: u64) -> f64 {
        step as f64 * self.dt
    }
}

/// `max(1, round(delta / dt))` steps.
pub fn snap_to_steps(delta: f64, dt: f64) -> u64 {
    ((delta / dt).round() as u64).max(1)
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Structural checks that do not need the coefficient set.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if let Err(e) = SpectralSpace::new(self.n) {
            return bad(e.to_string());
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.time.cfl > 0.0) || !(self.time.dt_max > 0.0) {
            return bad("time.cfl and time.dt_max must be positive".into());
        }
        if self.eps.is_empty() {
            return bad("eps list is empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("eps values must lie in (0, 1), got {e}"));
        }
        if self.samples < 2 {
            return bad(format!("samples must be at least 2, got {}", self.samples));
        }
        if let DeltaRule::Explicit { values } = &self.delta {
            if values.len() != self.eps.len() || values.iter().any(|d| !(*d > 0.0)) {
                return bad("explicit delta needs one positive value per eps".into());
            }
        }
        for (name, e) in [
            ("diagnostics.increments.eps", self.diagnostics.increments.eps),
            ("diagnostics.auxgap.eps", self.diagnostics.auxgap.eps),
            ("diagnostics.inequalities.eps", self.diagnostics.inequalities.eps),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {e}"));
            }
        }
        if self.diagnostics.ergodicity.samples < 1 || !(self.diagnostics.ergodicity.dt > 0.0) {
            return bad("diagnostics.ergodicity needs samples >= 1 and dt > 0".into());
        }
        Ok(())
    }

    pub fn space(&self) -> Result<Arc<SpectralSpace>, HarnessError> {
        SpectralSpace::new(self.n).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Builds the model and enforces a positive dissipativity margin.
    pub fn model(&self) -> Result<SlowFastModel, HarnessError> {
        self.validate()?;
        let space = self.space()?;
        let slow = CovarianceSpec::from_params(&space, &self.noise.slow).map_err(|e| HarnessError::Config(e.to_string()))?;
        let fast = CovarianceSpec::from_params(&space, &self.noise.fast).map_err(|e| HarnessError::Config(e.to_string()))?;
        let set = builtin(&self.coefficients.name, &self.coefficients.params, &space, &slow, &fast)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let model = SlowFastModel::new(set, slow, fast, self.step).map_err(|e| HarnessError::Config(e.to_string()))?;
        let margin = model.margin();
        if !(margin > 0.0) {
            return Err(HarnessError::Inadmissible { name: self.coefficients.name.clone(), margin });
        }
        Ok(model)
    }

    /// `δ` for the i-th entry of the ε list.
    pub fn delta_for(&self, i: usize) -> f64 {
        match &self.delta {
            DeltaRule::EpsCubeRoot => self.eps[i].cbrt(),
            DeltaRule::Explicit { values } => values[i],
        }
    }

    /// Initial `(x, y)`, shared by every sample.
    pub fn initial_data(&self, space: &Arc<SpectralSpace>) -> (SpectralField, SpectralField) {
        match self.initial {
            InitialCondition::Random { decay, x_norm, y_norm } => {
                let stream = NoiseStream::new(self.seed, 0, StreamRole::Init);
                let x = random_field(space, &mut stream.rng_at(0), decay, x_norm);
                let y = random_field(space, &mut stream.rng_at(1), decay, y_norm);
                let fix = |f: SpectralField, target: f64| if target == 0.0 { SpectralField::zeros(space) } else { f };
                (fix(x, x_norm), fix(y, y_norm))
            }
            InitialCondition::TaylorGreen { x_amplitude, y_amplitude } => {
                (taylor_green(space, x_amplitude), taylor_green(space, y_amplitude))
            }
            InitialCondition::Shear { x_amplitude, y_amplitude } => (shear(space, x_amplitude), shear(space, y_amplitude)),
            InitialCondition::Zero => (SpectralField::zeros(space), SpectralField::zeros(space)),
        }
    }

    /// Hex SHA-256 of the canonical JSON of the effective config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex_digest(&bytes)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
