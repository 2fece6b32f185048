use nalgebra::{DMatrix, DVector};

use super::{norm_sq, ControllerFamily, Dims, Model, PlantModel};
use crate::error::{Error, Result};
use crate::linalg::{estimate_exp_bound, spectral_abscissa};

/// Gain map `ϑ ↦ K_ϑ = K₀ + Σ ϑᵢ Kᵢ`.
#[derive(Clone, Debug)]
pub struct GainTable {
    pub k0: DMatrix<f64>,
    pub per_param: Vec<DMatrix<f64>>,
}

impl GainTable {
    pub fn gain(&self, est: &[f64]) -> DMatrix<f64> {
        let mut k = self.k0.clone();
        for (ki, &e) in self.per_param.iter().zip(est) {
            k += ki * e;
        }
        k
    }
}

/// `ẋ = (A + Σ θᵢCᵢ)x + Bu` with `u = K_ϑ x`, `V = |x|²` and
/// `Q = M(ϑ)²|x|²` where `|exp(t A_cl(ϑ))| ≤ M(ϑ) e^{-ω_ϑ t}`.
#[derive(Clone, Debug)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: Vec<DMatrix<f64>>,
    gains: GainTable,
    /// Fixed decay rate; when absent, half the stability margin of `A_cl(ϑ)`.
    omega: Option<f64>,
    pub grid_points: usize,
    pub horizon_factor: f64,
}

impl LinearPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Vec<DMatrix<f64>>,
        gains: GainTable,
        omega: Option<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::config("model.A", "must be a non-empty square matrix"));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::config(
                "model.B",
                format!("must have {n} rows and at least one column"),
            ));
        }
        let m = b.ncols();
        if c.is_empty() {
            return Err(Error::config("model.C", "needs at least one parameter matrix"));
        }
        for (i, ci) in c.iter().enumerate() {
            if ci.nrows() != n || ci.ncols() != n {
                return Err(Error::config(format!("model.C[{i}]"), format!("must be {n}×{n}")));
            }
        }
        if gains.k0.nrows() != m || gains.k0.ncols() != n {
            return Err(Error::config("model.K0", format!("must be {m}×{n}")));
        }
        if gains.per_param.len() != c.len() {
            return Err(Error::config(
                "model.K_theta",
                format!("needs one matrix per parameter ({} expected)", c.len()),
            ));
        }
        for (i, ki) in gains.per_param.iter().enumerate() {
            if ki.nrows() != m || ki.ncols() != n {
                return Err(Error::config(format!("model.K_theta[{i}]"), format!("must be {m}×{n}")));
            }
        }
        if let Some(w) = omega {
            if !(w > 0.0) {
                return Err(Error::config("model.omega", "must be positive"));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            gains,
            omega,
            grid_points: 2000,
            horizon_factor: 50.0,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &[DMatrix<f64>] {
        &self.c
    }

    pub fn gains(&self) -> &GainTable {
        &self.gains
    }

    /// `A + Σ ϑᵢCᵢ + B K_ϑ`, the loop realized when estimate and truth agree.
    pub fn closed_matrix(&self, est: &[f64]) -> DMatrix<f64> {
        let mut acl = &self.a + &self.b * self.gains.gain(est);
        for (ci, &e) in self.c.iter().zip(est) {
            acl += ci * e;
        }
        acl
    }

    pub fn rate(&self, est: &[f64]) -> Result<f64> {
        let alpha = spectral_abscissa(&self.closed_matrix(est));
        if !(alpha < 0.0) {
            return Err(Error::Model(format!(
                "closed loop at ϑ = {est:?} is not Hurwitz (spectral abscissa {alpha:.6e})"
            )));
        }
        match self.omega {
            Some(w) if w < -alpha => Ok(w),
            Some(w) => Err(Error::Model(format!(
                "rate ω = {w} not below the stability margin {:.6e} at ϑ = {est:?}",
                -alpha
            ))),
            None => Ok(-0.5 * alpha),
        }
    }

    /// `M(ϑ) ≥ 1`, estimated on a time grid of `horizon_factor / ω` length.
    pub fn exp_bound(&self, est: &[f64]) -> Result<f64> {
        let w = self.rate(est)?;
        estimate_exp_bound(
            &self.closed_matrix(est),
            w,
            self.horizon_factor / w,
            self.grid_points,
        )
    }

    /// Zero-based rows `N_i` when every `Cᵢ` has exactly one non-zero row and
    /// the rows are distinct.
    pub fn single_row_structure(&self) -> Option<Vec<usize>> {
        let mut rows = Vec::with_capacity(self.c.len());
        for ci in &self.c {
            let nz: Vec<usize> = (0..ci.nrows())
                .filter(|&r| ci.row(r).iter().any(|&v| v != 0.0))
                .collect();
            if nz.len() != 1 || rows.contains(&nz[0]) {
                return None;
            }
            rows.push(nz[0]);
        }
        Some(rows)
    }
}

impl PlantModel for LinearPlant {
    fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            m: self.b.ncols(),
            l: self.c.len(),
        }
    }

    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        let f = &self.a * xv + &self.b * uv;
        out.copy_from_slice(f.as_slice());
    }

    fn regressor(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        let l = self.c.len();
        let n = self.a.nrows();
        for (j, cj) in self.c.iter().enumerate() {
            for i in 0..n {
                out[i * l + j] = (0..n).map(|k| cj[(i, k)] * x[k]).sum();
            }
        }
    }

    fn structure(&self) -> Option<Vec<usize>> {
        self.single_row_structure()
    }
}

impl ControllerFamily for LinearPlant {
    fn feedback(&self, est: &[f64], x: &[f64], out: &mut [f64]) {
        let k = self.gains.gain(est);
        let u = k * DVector::from_column_slice(x);
        out.copy_from_slice(u.as_slice());
    }

    fn lyapunov(&self, _est: &[f64], x: &[f64]) -> f64 {
        norm_sq(x)
    }

    fn lyapunov_bound(&self, est: &[f64], x: &[f64]) -> Result<f64> {
        let m = self.exp_bound(est)?;
        Ok(m * m * norm_sq(x))
    }
}

impl Model for LinearPlant {
    fn name(&self) -> &str {
        "linear"
    }

    fn as_linear(&self) -> Option<&LinearPlant> {
        Some(self)
    }
}
