//! Numeric and polynomial renderings of one model, cross-checked on
//! construction.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{closed_loop_field, Model, ModelSpec, PolyPlant};
use crate::poly::{PolyVectorField, Polynomial};

/// Relative agreement tolerance `|a − b| ≤ AGREE_TOL · (1 + |a|)`.
pub const AGREE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DualModel {
    model: Arc<dyn Model>,
    plant: PolyPlant,
    theta: Vec<f64>,
    z: Vec<f64>,
    field: PolyVectorField,
    closed_regressor: Vec<Polynomial>,
}

/// Builds both renderings of `F_z` and `gᵢ(x, k(z, x))` and compares them at
/// 100 seeded points of the unit ball.
pub fn build_dual(spec: &ModelSpec, theta: &[f64], z: &[f64]) -> Result<DualModel> {
    let model = spec.build()?;
    let plant = spec.poly_plant()?;
    let d = model.dims();
    if plant.dims() != d {
        return Err(Error::Invariant(format!(
            "polynomial form has dimensions {:?}, numeric form {:?}",
            plant.dims(),
            d
        )));
    }
    let field = plant.closed_field(theta, z)?;
    let closed_regressor = plant.regressor_at(z)?;
    let dual = DualModel {
        model,
        plant,
        theta: theta.to_vec(),
        z: z.to_vec(),
        field,
        closed_regressor,
    };
    let (worst, at) = dual.max_discrepancy(100, 0xb41d)?;
    if worst > AGREE_TOL {
        return Err(Error::Invariant(format!(
            "numeric and polynomial renderings of {} disagree by {worst:.3e} (relative) at x = {at:?}",
            dual.model.name()
        )));
    }
    Ok(dual)
}

impl DualModel {
    pub fn model(&self) -> &Arc<dyn Model> {
        &self.model
    }

    pub fn plant(&self) -> &PolyPlant {
        &self.plant
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `F_z` as polynomials.
    pub fn field(&self) -> &PolyVectorField {
        &self.field
    }

    /// `gᵢ(x, k(z, x))` as polynomials.
    pub fn closed_regressor(&self) -> &[Polynomial] {
        &self.closed_regressor
    }

    /// Largest relative discrepancy over `points` seeded points drawn uniformly
    /// from the unit ball, with the point where it occurs.
    pub fn max_discrepancy(&self, points: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
        let d = self.model.dims();
        let numeric = closed_loop_field(self.model.as_ref(), &self.theta, &self.z)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = (0.0, vec![0.0; d.n]);
        let mut u = vec![0.0; d.m];
        let mut g = vec![0.0; d.n * d.l];
        let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs());
        for _ in 0..points {
            let x: Vec<f64> = loop {
                let c: Vec<f64> = (0..d.n).map(|_| rng.random_range(-1.0..1.0)).collect();
                if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    break c;
                }
            };
            let fnum = numeric.field(&x)?;
            let fpoly = self.field.eval(&x)?;
            let mut err = fnum
                .iter()
                .zip(&fpoly)
                .map(|(a, b)| rel(*a, *b))
                .fold(0.0, f64::max);
            self.model.feedback(&self.z, &x, &mut u);
            self.model.regressor(&x, &u, &mut g);
            for (i, (gp, &row)) in self.closed_regressor.iter().zip(self.plant.rows()).enumerate() {
                err = err.max(rel(g[row * d.l + i], gp.eval(&x)?));
            }
            if err > worst.0 {
                worst = (err, x);
            }
        }
        Ok(worst)
    }
}
