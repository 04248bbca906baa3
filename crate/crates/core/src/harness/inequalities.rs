use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{uniform, HarnessError, InequalitiesConfig, CODE_VERSION};
use crate::dynamics::SlowFastModel;
use crate::spectral::{norm, random_field, NormKind, SpectralField};
use crate::stochastic::{NoiseStream, StreamRole};

/// `⟨Ãw + F(w), w⟩ + |σ(w)|² ≤ -C_ε‖w‖²_V + C(1 + |w|²)` with the analytic
/// `C` built from the declared constants and the values of the maps at 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoercivityStats {
    pub c_eps: f64,
    pub c_analytic: f64,
    /// `max (LHS + C_ε‖w‖²_V) / (1 + |w|²)` over every sample.
    pub c_fit: f64,
    pub checked: usize,
    pub violations: usize,
}

/// `⟨Ãz + F(w₁) - F(w₂), z⟩ + |σ(w₁) - σ(w₂)|² ≤ C(1 + |x₂|⁴_{L⁴})|z|²`,
/// `z = w₁ - w₂`. `C` is fitted on unit-scale pairs and checked, with a
/// slack factor, on pairs scaled up to `10^max_log_amplitude` and on
/// pairs with `w₂ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityStats {
    pub c_fit: f64,
    /// Lipschitz part of the constant, a floor for the fitted value.
    pub c_lipschitz: f64,
    pub threshold: f64,
    pub checked: usize,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub n: usize,
    pub eps: f64,
    pub pairs: usize,
    pub coercivity: CoercivityStats,
    pub monotonicity: MonotonicityStats,
    pub root_seed: u64,
    pub code_version: String,
}

impl InequalityReport {
    pub fn violations(&self) -> usize {
        self.coercivity.violations + self.monotonicity.violations
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

#[derive(Clone)]
struct Point {
    x: SpectralField,
    y: SpectralField,
}

impl Point {
    fn h_sq(&self) -> f64 {
        self.x.l2_norm_sq() + self.y.l2_norm_sq()
    }

    fn v_sq(&self) -> f64 {
        h1_sq(&self.x) + h1_sq(&self.y)
    }

    fn sub(&self, o: &Point) -> Point {
        Point { x: self.x.sub(&o.x), y: self.y.sub(&o.y) }
    }
}

fn h1_sq(u: &SpectralField) -> f64 {
    norm(u, NormKind::Sobolev(1.0)).expect("sobolev norm").powi(2)
}

struct Evaluator<'a> {
    model: &'a SlowFastModel,
    eps: f64,
}

impl Evaluator<'_> {
    /// `F(w)` and `|σ(w)|²`-ingredients: (drift_x, drift_y, σ₁ gain, σ₂ gain).
    fn parts(&self, w: &Point) -> (SpectralField, SpectralField, f64, f64) {
        let c = self.model.coeffs();
        let mut fx = self.model.config().advection.apply(&w.x, &w.x).expect("same grid");
        fx.scale_in_place(-1.0);
        fx.axpy(1.0, &c.f(&w.x, &w.y));
        let gy = c.g(&w.x, &w.y);
        (fx, gy, c.sigma1(&w.x).gain(), c.sigma2(&w.x, &w.y).gain())
    }

    fn trace_slow(&self) -> f64 {
        self.model.slow_cov().trace_h()
    }

    fn trace_fast(&self) -> f64 {
        self.model.fast_cov().trace_h()
    }

    fn nu(&self) -> f64 {
        self.model.config().viscosity
    }

    fn coercivity_lhs(&self, w: &Point) -> f64 {
        let (fx, gy, s1, s2) = self.parts(w);
        -self.nu() * h1_sq(&w.x) - h1_sq(&w.y) / self.eps
            + fx.inner(&w.x)
            + gy.inner(&w.y) / self.eps
            + s1 * s1 * self.trace_slow()
            + s2 * s2 * self.trace_fast() / self.eps
    }

    fn monotonicity_lhs(&self, w1: &Point, w2: &Point) -> f64 {
        let z = w1.sub(w2);
        let (f1, g1, a1, b1) = self.parts(w1);
        let (f2, g2, a2, b2) = self.parts(w2);
        -self.nu() * h1_sq(&z.x) - h1_sq(&z.y) / self.eps
            + f1.sub(&f2).inner(&z.x)
            + g1.sub(&g2).inner(&z.y) / self.eps
            + (a1 - a2).powi(2) * self.trace_slow()
            + (b1 - b2).powi(2) * self.trace_fast() / self.eps
    }

    /// Analytic `C` with every cross term split by `ab ≤ (a² + b²)/2`.
    fn analytic_c(&self) -> f64 {
        let c = self.model.coeffs();
        let k = c.constants();
        let space = self.model.slow_cov().space();
        let zero = Point { x: SpectralField::zeros(space), y: SpectralField::zeros(space) };
        let (f0, g0, s1, s2) = self.parts(&zero);
        let (f0, g0) = (f0.l2_norm(), g0.l2_norm());
        let s1 = s1.abs() * self.trace_slow().sqrt();
        let s2 = s2.abs() * self.trace_fast().sqrt();
        let e = self.eps;
        let c0 = f0 * f0 / 2.0 + g0 * g0 / (2.0 * e) + 2.0 * s1 * s1 + 3.0 * s2 * s2 / e;
        let cx = 0.5 + k.f_x + k.f_y / 2.0 + k.g_x / (2.0 * e) + 2.0 * k.sigma1.powi(2) + 3.0 * k.sigma2_x.powi(2) / e;
        let cy = k.f_y / 2.0 + 1.0 / (2.0 * e) + k.g_y / e + k.g_x / (2.0 * e) + 3.0 * k.sigma2_y.powi(2) / e;
        c0.max(cx).max(cy)
    }

    /// The part of the monotonicity constant coming from the Lipschitz
    /// bounds of `f`, `g`, `σ₁`, `σ₂` alone.
    fn lipschitz_c(&self) -> f64 {
        let k = self.model.coeffs().constants();
        let e = self.eps;
        let cx = k.f_x + k.f_y / 2.0 + k.g_x / (2.0 * e) + k.sigma1.powi(2) + 2.0 * k.sigma2_x.powi(2) / e;
        let cy = k.f_y / 2.0 + k.g_y / e + k.g_x / (2.0 * e) + 2.0 * k.sigma2_y.powi(2) / e;
        cx.max(cy)
    }
}

fn sample_point(space: &std::sync::Arc<crate::spectral::SpectralSpace>, rng: &mut ChaCha8Rng, log_lo: f64, log_hi: f64) -> Point {
    let draw = |rng: &mut ChaCha8Rng| {
        let decay = 1.0 + 2.0 * uniform(rng);
        let amp = 10f64.powf(log_lo + (log_hi - log_lo) * uniform(rng));
        random_field(space, rng, decay, amp)
    };
    let x = draw(rng);
    let y = draw(rng);
    Point { x, y }
}

/// Samples `pairs` unit-scale pairs and `pairs` scaled pairs, checks coercivity at every point including the origin,
/// and local monotonicity on every pair.
pub fn verify_appendix_inequalities(
    model: &SlowFastModel,
    eps: f64,
    cfg: &InequalitiesConfig,
    seed: u64,
) -> Result<InequalityReport, HarnessError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HarnessError::Config(format!("eps must lie in (0, 1), got {eps}")));
    }
    if cfg.pairs < 2 {
        return Err(HarnessError::Config("at least two pairs are required".into()));
    }
    model.ensure_admissible().map_err(|_| HarnessError::Inadmissible {
        name: model.coeffs().name().to_string(),
        margin: model.margin(),
    })?;
    let space = model.slow_cov().space().clone();
    let ev = Evaluator { model, eps };
    let zero = Point { x: SpectralField::zeros(&space), y: SpectralField::zeros(&space) };

    // Scaled family: every tenth pair has w₂ = 0 and every other pair a
    // unit-scale w₂ next to a large w₁.
    let make_pairs = |offset: u64, lo: f64, hi: f64, scaled: bool| -> Vec<(Point, Point)> {
        (0..cfg.pairs)
            .map(|i| {
                let mut rng = NoiseStream::new(seed, offset + i as u64, StreamRole::Init).rng_at(7);
                let w1 = sample_point(&space, &mut rng, lo, hi);
                let w2 = match (scaled, i % 10) {
                    (true, 0) => zero.clone(),
                    (true, k) if k % 2 == 1 => sample_point(&space, &mut rng, -1.0, 0.0),
                    _ => sample_point(&space, &mut rng, lo, hi),
                };
                (w1, w2)
            })
            .collect()
    };
    let unit = make_pairs(1 << 32, -1.0, 1.0, false);
    let scaled = make_pairs(2 << 32, 0.0, cfg.max_log_amplitude, true);

    let c_eps = ev.nu().min(1.0 / eps);
    let c_analytic = ev.analytic_c();
    let mut points: Vec<&Point> = vec![&zero];
    for (a, b) in unit.iter().chain(&scaled) {
        points.push(a);
        points.push(b);
    }
    let coer: Vec<(f64, f64)> = points
        .par_iter()
        .map(|w| {
            let lhs = ev.coercivity_lhs(w);
            let rhs = -c_eps * w.v_sq() + c_analytic * (1.0 + w.h_sq());
            let ratio = (lhs + c_eps * w.v_sq()) / (1.0 + w.h_sq());
            (lhs - rhs - 1e-9 * (lhs.abs() + rhs.abs()), ratio)
        })
        .collect();
    let coercivity = CoercivityStats {
        c_eps,
        c_analytic,
        c_fit: coer.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        checked: coer.len(),
        violations: coer.iter().filter(|c| c.0 > 0.0).count(),
    };

    let weight = |w1: &Point, w2: &Point| {
        let l4 = norm(&w2.x, NormKind::Lebesgue(4.0)).expect("lebesgue norm");
        (1.0 + l4.powi(4)) * w1.sub(w2).h_sq()
    };
    let unit_ratio: Vec<f64> = unit
        .par_iter()
        .map(|(a, b)| {
            let d = weight(a, b);
            if d > 0.0 {
                ev.monotonicity_lhs(a, b) / d
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let c_fit = unit_ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c_lipschitz = ev.lipschitz_c();
    let threshold = cfg.monotonicity_slack * c_fit.max(c_lipschitz);
    let mono: Vec<bool> = unit
        .par_iter()
        .chain(scaled.par_iter())
        .map(|(a, b)| {
            let lhs = ev.monotonicity_lhs(a, b);
            let rhs = threshold * weight(a, b);
            lhs > rhs + 1e-9 * (lhs.abs() + rhs.abs())
        })
        .collect();
    let monotonicity = MonotonicityStats {
        c_fit,
        c_lipschitz,
        threshold,
        checked: mono.len(),
        violations: mono.iter().filter(|v| **v).count(),
    };
    Ok(InequalityReport {
        n: space.modes_per_axis(),
        eps,
        pairs: cfg.pairs,
        coercivity,
        monotonicity,
        root_seed: seed,
        code_version: CODE_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentConfig;
    use crate::spectral::Advection;

    #[test]
    fn origin_satisfies_coercivity_with_equality_room() {
        let cfg = ExperimentConfig::default();
        let model = cfg.model().unwrap();
        let space = model.slow_cov().space().clone();
        let ev = Evaluator { model: &model, eps: 0.1 };
        let zero = Point { x: SpectralField::zeros(&space), y: SpectralField::zeros(&space) };
        assert!(ev.coercivity_lhs(&zero) <= ev.analytic_c());
    }

    #[test]
    fn small_sweep_is_clean_and_faulty_advection_is_caught() {
        let mut cfg = ExperimentConfig::default();
        cfg.coefficients.name = "saturating".into();
        let ic = InequalitiesConfig { pairs: 60, ..Default::default() };
        let model = cfg.model().unwrap();
        let r = verify_appendix_inequalities(&model, 0.1, &ic, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        cfg.step.advection = Advection::Faulty;
        let model = cfg.model().unwrap();
        let r = verify_appendix_inequalities(&model, 0.1, &ic, 1).unwrap();
        assert!(r.violations() > 0, "{r:?}");
    }
}
