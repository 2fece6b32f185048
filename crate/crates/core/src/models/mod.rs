//! Plants `ẋ = f(x,u) + g(x,u)θ`, nominal controller families with their
//! Lyapunov pairs, and the built-in model registry.

mod builtin;
mod linear;
mod polynomial;
mod registry;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use builtin::{PlanarModel, TriangularModel};
pub use linear::{GainTable, LinearPlant};
pub use polynomial::{PolyPlant, PolynomialModel};
pub use registry::{example_4_2, example_4_3, linear, ModelSpec};

use crate::error::{Error, Result};
use crate::integrator::SegmentDynamics;

/// State, input and parameter dimensions `(n, m, l)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub l: usize,
}

/// The open-loop plant. The regressor is written row-major as an `n × l`
/// matrix.
pub trait PlantModel: Send + Sync {
    fn dims(&self) -> Dims;
    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    fn regressor(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Zero-based rows `N_1..N_l` when each unknown parameter enters exactly
    /// one equation.
    fn structure(&self) -> Option<Vec<usize>> {
        None
    }
}

/// Nominal feedback `k(ϑ, x)` with the Lyapunov-like pair `V_ϑ ≤ Q_ϑ`.
pub trait ControllerFamily: Send + Sync {
    fn feedback(&self, est: &[f64], x: &[f64], out: &mut [f64]);
    fn lyapunov(&self, est: &[f64], x: &[f64]) -> f64;
    fn lyapunov_bound(&self, est: &[f64], x: &[f64]) -> Result<f64>;
}

pub trait Model: PlantModel + ControllerFamily + Debug {
    fn name(&self) -> &str;

    fn as_linear(&self) -> Option<&LinearPlant> {
        None
    }
}

/// Positive-definite margin `a(·)` added to the trigger threshold.
#[derive(Clone)]
pub enum Margin {
    /// `a(x) = coeff · |x|²`
    Quadratic(f64),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Margin {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Margin::Quadratic(a) => a * norm_sq(x),
            Margin::Custom(f) => f(x),
        }
    }
}

impl Debug for Margin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Margin::Quadratic(a) => write!(f, "Quadratic({a})"),
            Margin::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Event-trigger tuning: dwell cap `T`, threshold margin `a(·)`, window
/// length `Ñ` (in dwell periods) and the zero-state tolerance.
#[derive(Clone, Debug)]
pub struct TriggerParams {
    pub dwell: f64,
    pub margin: Margin,
    pub window: usize,
    pub eps_zero: f64,
}

impl TriggerParams {
    pub fn new(dwell: f64, a_coeff: f64, window: usize) -> Result<Self> {
        let p = Self {
            dwell,
            margin: Margin::Quadratic(a_coeff),
            window,
            eps_zero: 1e-12,
        };
        p.validate(None)?;
        Ok(p)
    }

    /// `certified_n` is the `N` from an observability certificate, if known.
    pub fn validate(&self, certified_n: Option<usize>) -> Result<()> {
        if !(self.dwell > 0.0) || !self.dwell.is_finite() {
            return Err(Error::config("T", "dwell cap must be positive"));
        }
        if let Margin::Quadratic(a) = self.margin {
            if !(a > 0.0) {
                return Err(Error::config("a_coeff", "must be positive"));
            }
        }
        if self.window < 1 {
            return Err(Error::config("Ntilde", "must be at least 1"));
        }
        if let Some(n) = certified_n {
            if self.window <= n {
                return Err(Error::config(
                    "Ntilde",
                    format!("must exceed the certified N = {n}"),
                ));
            }
        }
        if !(self.eps_zero >= 0.0) {
            return Err(Error::config("solver.eps_zero", "must be non-negative"));
        }
        Ok(())
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// The closed loop `x ↦ f(x, k(θ̂, x)) + g(x, k(θ̂, x))·θ` with a frozen
/// estimate `θ̂` and the true parameter `θ`.
pub struct ClosedLoop<'a> {
    model: &'a dyn Model,
    theta: &'a [f64],
    est: &'a [f64],
}

impl<'a> ClosedLoop<'a> {
    pub fn new(model: &'a dyn Model, theta: &'a [f64], est: &'a [f64]) -> Result<Self> {
        let d = model.dims();
        if theta.len() != d.l {
            return Err(Error::dim("true parameter", d.l, theta.len()));
        }
        if est.len() != d.l {
            return Err(Error::dim("parameter estimate", d.l, est.len()));
        }
        Ok(Self { model, theta, est })
    }

    pub fn field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dims();
        if x.len() != d.n {
            return Err(Error::dim("state", d.n, x.len()));
        }
        let mut u = vec![0.0; d.m];
        let mut f = vec![0.0; d.n];
        let mut g = vec![0.0; d.n * d.l];
        self.input(x, &mut u);
        self.drift(x, &u, &mut f);
        self.regressor(x, &u, &mut g);
        for i in 0..d.n {
            f[i] += (0..d.l).map(|j| g[i * d.l + j] * self.theta[j]).sum::<f64>();
        }
        Ok(f)
    }
}

/// Builds the closed-loop vector field for the given true parameter and frozen
/// estimate.
pub fn closed_loop_field<'a>(
    model: &'a dyn Model,
    theta: &'a [f64],
    est: &'a [f64],
) -> Result<ClosedLoop<'a>> {
    ClosedLoop::new(model, theta, est)
}

impl SegmentDynamics for ClosedLoop<'_> {
    fn dims(&self) -> Dims {
        self.model.dims()
    }

    fn theta(&self) -> &[f64] {
        self.theta
    }

    fn input(&self, x: &[f64], u: &mut [f64]) {
        self.model.feedback(self.est, x, u);
    }

    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.model.drift(x, u, out);
    }

    fn regressor(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.model.regressor(x, u, out);
    }
}

const ZERO_TOL: f64 = 1e-12;

/// Numerical spot-checks of the plant and controller-family invariants at the
/// given parameter values and a deterministic sample of states.
///
/// Coercivity of `V_ϑ` uniformly over compact parameter sets cannot be decided
/// from samples; only pointwise positivity is checked here.
pub fn check_model(model: &dyn Model, params: &[Vec<f64>]) -> Result<()> {
    let d = model.dims();
    let zero_x = vec![0.0; d.n];
    let zero_u = vec![0.0; d.m];
    let mut f = vec![0.0; d.n];
    let mut g = vec![0.0; d.n * d.l];
    model.drift(&zero_x, &zero_u, &mut f);
    model.regressor(&zero_x, &zero_u, &mut g);
    if norm(&f) > ZERO_TOL {
        return Err(Error::Model(format!("{}: f(0,0) = {f:?} is not zero", model.name())));
    }
    if norm(&g) > ZERO_TOL {
        return Err(Error::Model(format!("{}: g(0,0) is not zero", model.name())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let states: Vec<Vec<f64>> = (0..32)
        .map(|_| {
            let scale = 10f64.powf(rng.random_range(-2.0..0.5));
            (0..d.n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
        })
        .filter(|x: &Vec<f64>| norm(x) > 1e-9)
        .collect();

    if let Some(rows) = model.structure() {
        check_structure(model, &rows, &states)?;
    }

    for est in params {
        if est.len() != d.l {
            return Err(Error::dim("parameter sample", d.l, est.len()));
        }
        let mut u = vec![0.0; d.m];
        model.feedback(est, &zero_x, &mut u);
        if norm(&u) > ZERO_TOL {
            return Err(Error::Model(format!("{}: k(ϑ, 0) ≠ 0 at ϑ = {est:?}", model.name())));
        }
        let v0 = model.lyapunov(est, &zero_x);
        let q0 = model.lyapunov_bound(est, &zero_x)?;
        if v0.abs() > ZERO_TOL || q0.abs() > ZERO_TOL {
            return Err(Error::Model(format!(
                "{}: V(ϑ,0) = {v0}, Q(ϑ,0) = {q0} at ϑ = {est:?}",
                model.name()
            )));
        }
        for x in &states {
            let v = model.lyapunov(est, x);
            let q = model.lyapunov_bound(est, x)?;
            if !(v > 0.0) || !(q > 0.0) {
                return Err(Error::Model(format!(
                    "{}: V or Q not positive at x = {x:?}, ϑ = {est:?}",
                    model.name()
                )));
            }
            if v > q * (1.0 + 1e-12) {
                return Err(Error::Model(format!(
                    "{}: V = {v} exceeds Q = {q} at x = {x:?}, ϑ = {est:?}",
                    model.name()
                )));
            }
        }
    }
    Ok(())
}

fn check_structure(model: &dyn Model, rows: &[usize], states: &[Vec<f64>]) -> Result<()> {
    let d = model.dims();
    if rows.len() != d.l {
        return Err(Error::dim("structure rows", d.l, rows.len()));
    }
    for (i, &r) in rows.iter().enumerate() {
        if r >= d.n {
            return Err(Error::Model(format!("row index {} out of range", r + 1)));
        }
        if rows[..i].contains(&r) {
            return Err(Error::Model(format!(
                "two parameters share equation {}; each equation may carry at most one",
                r + 1
            )));
        }
    }
    let mut g = vec![0.0; d.n * d.l];
    let mut rng = ChaCha8Rng::seed_from_u64(0x57c7);
    for x in states {
        let u: Vec<f64> = (0..d.m).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.regressor(x, &u, &mut g);
        for (col, &row) in rows.iter().enumerate() {
            for i in (0..d.n).filter(|&i| i != row) {
                if g[i * d.l + col] != 0.0 {
                    return Err(Error::Model(format!(
                        "regressor column {} has support outside row {}",
                        col + 1,
                        row + 1
                    )));
                }
            }
        }
    }
    Ok(())
}
