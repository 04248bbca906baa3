use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use slowfast_nse::coefficients::{builtin, NoiseMap};
use slowfast_nse::dynamics::{FbarMode, SlowFastModel, StepConfig};
use slowfast_nse::harness::{estimate_fbar_replicates, probe_ergodicity, ErgodicityConfig};
use slowfast_nse::spectral::{random_field, taylor_green, SpectralField, SpectralSpace};
use slowfast_nse::stochastic::CovarianceSpec;

fn model(name: &str, viscosity: f64) -> SlowFastModel {
    let space = SpectralSpace::new(16).unwrap();
    let slow = CovarianceSpec::power_law(&space, 1.5, 0.1).unwrap();
    let fast = CovarianceSpec::power_law(&space, 1.5, 0.5).unwrap();
    let set = builtin(name, &json!(null), &space, &slow, &fast).unwrap();
    SlowFastModel::new(set, slow, fast, StepConfig { viscosity, ..Default::default() }).unwrap()
}

#[test]
fn noiseless_steps_reproduce_heat_decay() {
    let m = model("linear_ou", 0.7);
    let space = m.slow_cov().space().clone();
    let tg = taylor_green(&space, 1.3);
    let zero = SpectralField::zeros(&space);
    let dt = 0.013;
    let (mut x, mut y) = (tg.clone(), tg.clone());
    for step in 1..=50 {
        x = m.slow_step(&x, &zero, dt, &zero).unwrap();
        y = m.fast_step(&y, &zero, NoiseMap::scalar(1.0), dt, 0.1, &zero).unwrap();
        // |k|² = 2 on every Taylor–Green mode
        let t = step as f64 * dt;
        let want_x = tg.scaled((-2.0 * 0.7 * t).exp());
        let want_y = tg.scaled((-2.0 * t / 0.1).exp());
        assert!(x.sub(&want_x).l2_norm() <= 1e-12 * tg.l2_norm(), "slow step {step}");
        assert!(y.sub(&want_y).l2_norm() <= 1e-12 * tg.l2_norm(), "fast step {step}");
    }
}

fn replicate_variance(t_erg: f64) -> f64 {
    let m = model("linear_ou", 1.0);
    let space = m.slow_cov().space().clone();
    let x = random_field(&space, &mut ChaCha8Rng::seed_from_u64(3), 2.0, 1.0);
    let mode = FbarMode::TimeAverage { t_erg, burn_in: 2.0, dt: 0.01 };
    estimate_fbar_replicates(&m, &x, mode, 64, 17).unwrap().total_variance
}

#[test]
fn doubling_the_averaging_window_halves_the_variance() {
    let ratio = replicate_variance(10.0) / replicate_variance(20.0);
    assert!((ratio - 2.0).abs() <= 0.3 * 2.0, "variance ratio {ratio}");
}

#[test]
fn fitted_mixing_rate_is_stable_across_seeds() {
    let m = model("saturating", 1.0);
    let space = m.slow_cov().space().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_field(&space, &mut rng, 2.0, 1.0);
    let y1 = random_field(&space, &mut rng, 2.0, 1.0);
    let y2 = random_field(&space, &mut rng, 2.0, 1.0);
    let cfg = ErgodicityConfig { samples: 16, t_probe: 4.0, ..Default::default() };
    let a = probe_ergodicity(&m, &x, &y1, &y2, &cfg, 1).unwrap().rate.unwrap();
    let b = probe_ergodicity(&m, &x, &y1, &y2, &cfg, 2).unwrap().rate.unwrap();
    assert!(a > 0.0 && b > 0.0);
    assert!((a - b).abs() <= 0.2 * a.min(b), "rates {a} and {b}");
}
