#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtac_core::executive::{Scenario, Variant};
use rtac_core::integrator::{SegmentDynamics, TrajectoryLog};
use rtac_core::models::{example_4_2, Dims, GainTable, LinearPlant, TriggerParams};

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Planar plant (c, k1, k2) = (1, 1, 3), θ = 2, θ̂₀ = 0, x₀ = (1, 1), T = 1,
/// a = 0.1, Ñ = 2.
pub fn planar_scenario(t_final: f64) -> Scenario {
    let model = Arc::new(example_4_2(1.0, 1.0, 3.0).unwrap());
    Scenario::new(
        model,
        TriggerParams::new(1.0, 0.1, 2).unwrap(),
        vec![2.0],
        vec![0.0],
        vec![1.0, 1.0],
        t_final,
    )
    .unwrap()
}

/// `ẋ₁ = x₂`, `ẋ₂ = a₁x₁ + a₂x₂ + θ(c₁x₁ + c₂x₂) + u` with the gain family
/// placing the nominal closed-loop polynomial at `s² + p₂s + p₁` for every
/// estimate.
pub fn companion_plant(a: [f64; 2], c: [f64; 2], p: [f64; 2]) -> LinearPlant {
    LinearPlant::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, a[0], a[1]]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, c[0], c[1]])],
        GainTable {
            k0: DMatrix::from_row_slice(1, 2, &[-a[0] - p[0], -a[1] - p[1]]),
            per_param: vec![DMatrix::from_row_slice(1, 2, &[-c[0], -c[1]])],
        },
        None,
    )
    .unwrap()
}

pub fn linear_scenario(variant: Variant, theta: f64, est0: f64, x0: [f64; 2], t_final: f64) -> Scenario {
    let model = Arc::new(companion_plant([0.0, 0.0], [1.0, 0.0], [1.0, 2.0]));
    let mut s = Scenario::new(
        model,
        TriggerParams::new(1.0, 0.1, 2).unwrap(),
        vec![theta],
        vec![est0],
        x0.to_vec(),
        t_final,
    )
    .unwrap();
    s.variant = variant;
    s
}

/// Ten planar and ten linear scenarios (linear ones alternate the estimator
/// variant) with random parameters, gains and initial data.
pub fn random_batch(seed: u64) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < 10 {
        let (c, k1, k2) = (
            rng.random_range(0.5..1.5),
            rng.random_range(0.5..2.0),
            rng.random_range(1.0..4.0),
        );
        if (c * k2 - c * c * k1 - 1.0_f64).abs() < 0.1 {
            continue;
        }
        let dwell = rng.random_range(0.5..1.5);
        let s = Scenario::new(
            Arc::new(example_4_2(c, k1, k2).unwrap()),
            TriggerParams::new(dwell, rng.random_range(0.05..0.5), rng.random_range(2..4)).unwrap(),
            vec![rng.random_range(-3.0..3.0)],
            vec![rng.random_range(-3.0..3.0)],
            vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            6.0 * dwell,
        )
        .unwrap();
        out.push(s);
    }
    for k in 0..10 {
        let plant = companion_plant(
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0)],
            [rng.random_range(0.5..2.0), rng.random_range(1.5..3.0)],
        );
        let dwell = rng.random_range(0.5..1.5);
        let mut s = Scenario::new(
            Arc::new(plant),
            TriggerParams::new(dwell, rng.random_range(0.05..0.5), rng.random_range(2..4)).unwrap(),
            vec![rng.random_range(-3.0..3.0)],
            vec![rng.random_range(-3.0..3.0)],
            vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            6.0 * dwell,
        )
        .unwrap();
        if k % 2 == 1 {
            s.variant = Variant::LinearFilter;
        }
        out.push(s);
    }
    out
}

/// Scalar `ẋ = -x` with no input and a zero regressor.
pub struct Decay;

impl SegmentDynamics for Decay {
    fn dims(&self) -> Dims {
        Dims { n: 1, m: 1, l: 1 }
    }
    fn theta(&self) -> &[f64] {
        &[0.0]
    }
    fn input(&self, _x: &[f64], u: &mut [f64]) {
        u[0] = 0.0;
    }
    fn drift(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }
    fn regressor(&self, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

/// Largest `|x(t) − x(0) − (F(t) − F(0)) − (Γ(t) − Γ(0))θ| / (1 + |x(t)|)`
/// over the log.
pub fn fidelity_residual(log: &TrajectoryLog, theta: &[f64]) -> f64 {
    let d = log.dims();
    let (x0, f0, g0) = (log.x(0).to_vec(), log.drift_integral(0).to_vec(), log.regressor_integral(0).to_vec());
    let mut worst: f64 = 0.0;
    for k in 0..log.len() {
        let (x, f, g) = (log.x(k), log.drift_integral(k), log.regressor_integral(k));
        let mut r = vec![0.0; d.n];
        for i in 0..d.n {
            r[i] = x[i] - x0[i] - (f[i] - f0[i]);
            for j in 0..d.l {
                r[i] -= (g[i * d.l + j] - g0[i * d.l + j]) * theta[j];
            }
        }
        worst = worst.max(norm(&r) / (1.0 + norm(x)));
    }
    worst
}
