//! Coefficient maps `f`, `g`, `σ₁`, `σ₂`, their declared structural
//! constants, and empirical checks of those constants.
//!
//! New coefficient families are added in code by implementing
//! [`CoefficientMaps`] and wrapping it with [`CoefficientSet::new`]; the
//! experiment config only selects the shipped families in [`builtin`].

mod builtin;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::SpectralField;
use crate::stochastic::CovarianceSpec;

pub use builtin::{builtin, sublinear_lipschitz, BUILTIN_NAMES};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CoefficientError {
    #[error("unknown coefficient set `{0}` (expected one of linear_ou, saturating, decoupled)")]
    UnknownSet(String),
    #[error("invalid parameters for `{set}`: {reason}")]
    InvalidParameters { set: String, reason: String },
    #[error("declared constant `{name}` must be nonnegative and finite, got {value}")]
    NegativeConstant { name: &'static str, value: f64 },
    #[error("growth exponent zeta must lie in (0, 1), got {0}")]
    InvalidZeta(f64),
    #[error("at least two sample pairs are required, got {0}")]
    TooFewPairs(usize),
}

/// Operator `σ: U → H` acting as a bounded scalar gain on the
/// covariance-colored increment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMap {
    gain: f64,
}

impl NoiseMap {
    pub fn scalar(gain: f64) -> Self {
        Self { gain }
    }

    pub fn zero() -> Self {
        Self { gain: 0.0 }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn action(&self, increment: &SpectralField) -> SpectralField {
        increment.scaled(self.gain)
    }

    /// `|σ|_{L_Q} = sqrt(Tr(σ Q σ*))`.
    pub fn hs_norm(&self, cov: &CovarianceSpec) -> f64 {
        self.gain.abs() * cov.trace_h().sqrt()
    }

    pub fn difference(&self, other: &NoiseMap) -> NoiseMap {
        NoiseMap { gain: self.gain - other.gain }
    }
}

/// Declared Lipschitz and growth constants, per argument.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub f_x: f64,
    pub f_y: f64,
    pub g_x: f64,
    /// `L_g`
    pub g_y: f64,
    pub sigma1: f64,
    pub sigma2_x: f64,
    /// `L_{σ₂}`
    pub sigma2_y: f64,
    /// Growth exponent `ζ` of `|σ₂(x, y)|_{L_Q} ≤ C(1 + |x| + |y|^ζ)`.
    pub zeta: f64,
}

impl DeclaredConstants {
    fn validate(&self) -> Result<(), CoefficientError> {
        let named = [
            ("f_x", self.f_x),
            ("f_y", self.f_y),
            ("g_x", self.g_x),
            ("g_y", self.g_y),
            ("sigma1", self.sigma1),
            ("sigma2_x", self.sigma2_x),
            ("sigma2_y", self.sigma2_y),
        ];
        for (name, value) in named {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(CoefficientError::NegativeConstant { name, value });
            }
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(CoefficientError::InvalidZeta(self.zeta));
        }
        Ok(())
    }
}

/// The four coefficient maps. Implementations must be pure.
pub trait CoefficientMaps: Send + Sync {
    fn f(&self, x: &SpectralField, y: &SpectralField) -> SpectralField;
    fn g(&self, x: &SpectralField, y: &SpectralField) -> SpectralField;
    fn sigma1(&self, x: &SpectralField) -> NoiseMap;
    fn sigma2(&self, x: &SpectralField, y: &SpectralField) -> NoiseMap;

    /// Exact `f̄(x) = ∫ f(x, y) μ^x(dy)` when it is known in closed form.
    fn closed_form_fbar(&self, _x: &SpectralField) -> Option<SpectralField> {
        None
    }

    /// Whether [`CoefficientMaps::closed_form_fbar`] returns a value.
    fn has_closed_form(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    maps: Arc<dyn CoefficientMaps>,
    constants: DeclaredConstants,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet").field("name", &self.name).field("constants", &self.constants).finish()
    }
}

impl CoefficientSet {
    pub fn new(
        name: impl Into<String>,
        maps: Arc<dyn CoefficientMaps>,
        constants: DeclaredConstants,
    ) -> Result<Self, CoefficientError> {
        constants.validate()?;
        Ok(Self { name: name.into(), maps, constants })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    pub fn maps(&self) -> &Arc<dyn CoefficientMaps> {
        &self.maps
    }

    pub fn f(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        self.maps.f(x, y)
    }

    pub fn g(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        self.maps.g(x, y)
    }

    pub fn sigma1(&self, x: &SpectralField) -> NoiseMap {
        self.maps.sigma1(x)
    }

    pub fn sigma2(&self, x: &SpectralField, y: &SpectralField) -> NoiseMap {
        self.maps.sigma2(x, y)
    }

    pub fn closed_form_fbar(&self, x: &SpectralField) -> Option<SpectralField> {
        self.maps.closed_form_fbar(x)
    }

    pub fn has_closed_form(&self) -> bool {
        self.maps.has_closed_form()
    }
}

/// `2λ₁ - 2L_g - L²_{σ₂}`.
pub fn dissipativity_margin(lambda1: f64, l_g: f64, l_sigma2: f64) -> f64 {
    2.0 * lambda1 - 2.0 * l_g - l_sigma2 * l_sigma2
}

/// Dissipativity margin of a coefficient set. A set is admissible only when
/// the margin is strictly positive.
pub fn verify_dissipativity(set: &CoefficientSet, lambda1: f64) -> f64 {
    dissipativity_margin(lambda1, set.constants.g_y, set.constants.sigma2_y)
}

/// Largest observed ratio `d(map(u), map(v)) / |u - v|` over sampled pairs;
/// `image_distance(u, v)` returns `d(map(u), map(v))`. Pairs with `u = v`
/// are skipped. The result is a lower bound for the true constant.
pub fn estimate_lipschitz(
    image_distance: impl Fn(&SpectralField, &SpectralField) -> f64,
    mut sampler: impl FnMut() -> (SpectralField, SpectralField),
    n_pairs: usize,
) -> Result<f64, CoefficientError> {
    if n_pairs < 2 {
        return Err(CoefficientError::TooFewPairs(n_pairs));
    }
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let (u, v) = sampler();
        let gap = u.sub(&v).l2_norm();
        if gap == 0.0 {
            continue;
        }
        best = best.max(image_distance(&u, &v) / gap);
    }
    Ok(best)
}

/// Argument whose Lipschitz constant [`estimate_argument_lipschitz`] probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LipschitzArgument {
    FX,
    FY,
    GX,
    GY,
    Sigma1,
    Sigma2X,
    Sigma2Y,
}

impl LipschitzArgument {
    pub const ALL: [LipschitzArgument; 7] = [
        LipschitzArgument::FX,
        LipschitzArgument::FY,
        LipschitzArgument::GX,
        LipschitzArgument::GY,
        LipschitzArgument::Sigma1,
        LipschitzArgument::Sigma2X,
        LipschitzArgument::Sigma2Y,
    ];

    pub fn declared(self, c: &DeclaredConstants) -> f64 {
        match self {
            LipschitzArgument::FX => c.f_x,
            LipschitzArgument::FY => c.f_y,
            LipschitzArgument::GX => c.g_x,
            LipschitzArgument::GY => c.g_y,
            LipschitzArgument::Sigma1 => c.sigma1,
            LipschitzArgument::Sigma2X => c.sigma2_x,
            LipschitzArgument::Sigma2Y => c.sigma2_y,
        }
    }
}

/// Per-argument Lipschitz estimate: the other argument is held at `fixed`.
pub fn estimate_argument_lipschitz(
    set: &CoefficientSet,
    arg: LipschitzArgument,
    fixed: &SpectralField,
    slow_cov: &CovarianceSpec,
    fast_cov: &CovarianceSpec,
    sampler: impl FnMut() -> (SpectralField, SpectralField),
    n_pairs: usize,
) -> Result<f64, CoefficientError> {
    use LipschitzArgument::*;
    let dist = |u: &SpectralField, v: &SpectralField| -> f64 {
        match arg {
            FX => set.f(u, fixed).sub(&set.f(v, fixed)).l2_norm(),
            FY => set.f(fixed, u).sub(&set.f(fixed, v)).l2_norm(),
            GX => set.g(u, fixed).sub(&set.g(v, fixed)).l2_norm(),
            GY => set.g(fixed, u).sub(&set.g(fixed, v)).l2_norm(),
            Sigma1 => set.sigma1(u).difference(&set.sigma1(v)).hs_norm(slow_cov),
            Sigma2X => set.sigma2(u, fixed).difference(&set.sigma2(v, fixed)).hs_norm(fast_cov),
            Sigma2Y => set.sigma2(fixed, u).difference(&set.sigma2(fixed, v)).hs_norm(fast_cov),
        }
    };
    estimate_lipschitz(dist, sampler, n_pairs)
}
