use nalgebra::{DMatrix, DVector};

use super::{ControllerFamily, Dims, Model, PlantModel};
use crate::error::{Error, Result};
use crate::linalg::solve_lyapunov;

/// Planar plant `ẋ₁ = x₂, ẋ₂ = θ(x₁ + c x₂) + u` under the cancelling feedback
/// `k(ϑ, x) = -k₁x₁ - k₂x₂ - ϑ(x₁ + c x₂)`.
///
/// With a matched estimate the closed loop is the companion matrix
/// `[[0, 1], [-k₁, -k₂]]` for every ϑ, so `V = x'Px` with `P` from the
/// Lyapunov equation does not depend on ϑ and `Q = V`.
#[derive(Clone, Debug)]
pub struct PlanarModel {
    pub c: f64,
    pub k1: f64,
    pub k2: f64,
    p: DMatrix<f64>,
}

impl PlanarModel {
    pub fn new(c: f64, k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0) || !c.is_finite() {
            return Err(Error::config("model", "example_4_2 needs k1 > 0 and k2 > 0"));
        }
        let p = solve_lyapunov(&Self::matched_matrix(k1, k2))?;
        Ok(Self { c, k1, k2, p })
    }

    pub fn matched_matrix(k1: f64, k2: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k1, -k2])
    }

    pub fn lyapunov_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `c k₂ - c² k₁`; the observability test fails exactly when this is 1.
    pub fn observability_margin(&self) -> f64 {
        self.c * self.k2 - self.c * self.c * self.k1 - 1.0
    }
}

impl PlantModel for PlanarModel {
    fn dims(&self) -> Dims {
        Dims { n: 2, m: 1, l: 1 }
    }

    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = u[0];
    }

    fn regressor(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = x[0] + self.c * x[1];
    }

    fn structure(&self) -> Option<Vec<usize>> {
        Some(vec![1])
    }
}

impl ControllerFamily for PlanarModel {
    fn feedback(&self, est: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -self.k1 * x[0] - self.k2 * x[1] - est[0] * (x[0] + self.c * x[1]);
    }

    fn lyapunov(&self, _est: &[f64], x: &[f64]) -> f64 {
        quad_form(&self.p, x)
    }

    fn lyapunov_bound(&self, est: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.lyapunov(est, x))
    }
}

impl Model for PlanarModel {
    fn name(&self) -> &str {
        "example_4_2"
    }
}

/// Triangular plant `ẋ₁ = x₂, ẋ₂ = x₁² + θ₁x₂ + x₃, ẋ₃ = θ₂x₁² + u` with the
/// feedback-linearizing law
/// `k(ϑ, x) = -k₁x₁ - k₂x₂ - 2x₁x₂ - (ϑ₁ + k₃)(x₁² + ϑ₁x₂ + x₃) - ϑ₂x₁²`.
///
/// In the coordinates `ξ = (x₁, x₂, x₁² + ϑ₁x₂ + x₃)` the matched loop is the
/// companion matrix of `s³ + k₃s² + k₂s + k₁`, and `V_ϑ(x) = ξ'Pξ`, `Q = V`.
#[derive(Clone, Debug)]
pub struct TriangularModel {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    p: DMatrix<f64>,
}

impl TriangularModel {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0 && k3 > 0.0 && k2 * k3 > k1) {
            return Err(Error::config(
                "model",
                "example_4_3 needs k1, k2, k3 > 0 and k2*k3 > k1",
            ));
        }
        let p = solve_lyapunov(&Self::matched_matrix(k1, k2, k3))?;
        Ok(Self { k1, k2, k3, p })
    }

    pub fn matched_matrix(k1: f64, k2: f64, k3: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -k1, -k2, -k3])
    }

    pub fn lyapunov_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn linearizing_coordinates(est: &[f64], x: &[f64]) -> [f64; 3] {
        [x[0], x[1], x[0] * x[0] + est[0] * x[1] + x[2]]
    }
}

impl PlantModel for TriangularModel {
    fn dims(&self) -> Dims {
        Dims { n: 3, m: 1, l: 2 }
    }

    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = x[0] * x[0] + x[2];
        out[2] = u[0];
    }

    fn regressor(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        // row-major 3×2
        out.fill(0.0);
        out[2] = x[1];
        out[5] = x[0] * x[0];
    }

    fn structure(&self) -> Option<Vec<usize>> {
        Some(vec![1, 2])
    }
}

impl ControllerFamily for TriangularModel {
    fn feedback(&self, est: &[f64], x: &[f64], out: &mut [f64]) {
        let w = x[0] * x[0] + est[0] * x[1] + x[2];
        out[0] = -self.k1 * x[0] - self.k2 * x[1] - 2.0 * x[0] * x[1] - (est[0] + self.k3) * w
            - est[1] * x[0] * x[0];
    }

    fn lyapunov(&self, est: &[f64], x: &[f64]) -> f64 {
        quad_form(&self.p, &Self::linearizing_coordinates(est, x))
    }

    fn lyapunov_bound(&self, est: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.lyapunov(est, x))
    }
}

impl Model for TriangularModel {
    fn name(&self) -> &str {
        "example_4_3"
    }
}

pub(crate) fn quad_form(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(p * &v))
}
