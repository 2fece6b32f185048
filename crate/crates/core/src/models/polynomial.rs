use super::{ControllerFamily, Dims, Model, PlantModel};
use crate::error::{Error, Result};
use crate::poly::{PolyVectorField, Polynomial};

fn names(prefixes: &[(&str, usize)]) -> Vec<String> {
    prefixes
        .iter()
        .flat_map(|(p, k)| (1..=*k).map(move |i| format!("{p}{i}")))
        .collect()
}

/// A plant with at most one unknown parameter per equation, written with
/// polynomials:
///
/// `ẋ = f(x, u) + Σᵢ gᵢ(x, u) θᵢ e_{Nᵢ}`, feedback `u = k(z, x)`.
///
/// `f` and `gᵢ` are polynomials over `(x₁..xₙ, u₁..uₘ)`; `k` is a polynomial
/// over `(x₁..xₙ, z₁..z_l)`.
#[derive(Clone, Debug)]
pub struct PolyPlant {
    dims: Dims,
    drift: Vec<Polynomial>,
    regressor: Vec<Polynomial>,
    rows: Vec<usize>,
    feedback: Vec<Polynomial>,
}

impl PolyPlant {
    pub fn new(
        dims: Dims,
        drift: Vec<Polynomial>,
        regressor: Vec<Polynomial>,
        rows: Vec<usize>,
        feedback: Vec<Polynomial>,
    ) -> Result<Self> {
        let Dims { n, m, l } = dims;
        if drift.len() != n {
            return Err(Error::dim("drift components", n, drift.len()));
        }
        if regressor.len() != l || rows.len() != l {
            return Err(Error::dim("regressor entries", l, regressor.len().min(rows.len())));
        }
        if feedback.len() != m {
            return Err(Error::dim("feedback components", m, feedback.len()));
        }
        for p in drift.iter().chain(&regressor) {
            if p.nvars() != n + m {
                return Err(Error::dim("plant polynomial variables", n + m, p.nvars()));
            }
        }
        for p in &feedback {
            if p.nvars() != n + l {
                return Err(Error::dim("feedback polynomial variables", n + l, p.nvars()));
            }
        }
        for (i, &r) in rows.iter().enumerate() {
            if r >= n {
                return Err(Error::invalid(format!("row index {} exceeds state dimension", r + 1)));
            }
            if rows[..i].contains(&r) {
                return Err(Error::invalid(format!(
                    "two parameters share equation {}; each equation may carry at most one",
                    r + 1
                )));
            }
        }
        Ok(Self {
            dims,
            drift,
            regressor,
            rows,
            feedback,
        })
    }

    /// Parses the text form. `rows` are one-based equation indices.
    pub fn parse(
        dims: Dims,
        drift: &[String],
        regressor: &[String],
        rows: &[usize],
        feedback: &[String],
    ) -> Result<Self> {
        let pn = Self::plant_names(dims);
        let kn = Self::feedback_names(dims);
        let parse_all = |src: &[String], nm: &[String]| -> Result<Vec<Polynomial>> {
            src.iter()
                .map(|s| Polynomial::parse_with(s, nm).map_err(Error::from))
                .collect()
        };
        if rows.contains(&0) {
            return Err(Error::invalid("equation indices are one-based"));
        }
        Self::new(
            dims,
            parse_all(drift, &pn)?,
            parse_all(regressor, &pn)?,
            rows.iter().map(|r| r - 1).collect(),
            parse_all(feedback, &kn)?,
        )
    }

    /// `x1..xn, u1..um`
    pub fn plant_names(d: Dims) -> Vec<String> {
        names(&[("x", d.n), ("u", d.m)])
    }

    /// `x1..xn, z1..zl`
    pub fn feedback_names(d: Dims) -> Vec<String> {
        names(&[("x", d.n), ("z", d.l)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn drift(&self) -> &[Polynomial] {
        &self.drift
    }

    pub fn regressor(&self) -> &[Polynomial] {
        &self.regressor
    }

    pub fn feedback(&self) -> &[Polynomial] {
        &self.feedback
    }

    fn check_param(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dims.l {
            return Err(Error::dim(what, self.dims.l, v.len()));
        }
        Ok(())
    }

    /// `k(z, ·)` as polynomials over `x` alone.
    pub fn feedback_at(&self, z: &[f64]) -> Result<Vec<Polynomial>> {
        self.check_param("feedback parameter", z)?;
        let n = self.dims.n;
        let subs: Vec<Polynomial> = (0..n)
            .map(|i| Polynomial::var(n, i))
            .chain(z.iter().map(|&v| Polynomial::constant(n, v)))
            .collect();
        self.feedback.iter().map(|k| k.compose(&subs)).collect()
    }

    fn closed_subs(&self, z: &[f64]) -> Result<Vec<Polynomial>> {
        let n = self.dims.n;
        let k = self.feedback_at(z)?;
        Ok((0..n).map(|i| Polynomial::var(n, i)).chain(k).collect())
    }

    /// `gᵢ(x, k(z, x))` for every parameter index.
    pub fn regressor_at(&self, z: &[f64]) -> Result<Vec<Polynomial>> {
        let subs = self.closed_subs(z)?;
        self.regressor.iter().map(|g| g.compose(&subs)).collect()
    }

    /// `F_z(x) = f(x, k(z,x)) + Σ gᵢ(x, k(z,x)) θᵢ e_{Nᵢ}`.
    pub fn closed_field(&self, theta: &[f64], z: &[f64]) -> Result<PolyVectorField> {
        self.check_param("true parameter", theta)?;
        let subs = self.closed_subs(z)?;
        let mut comps: Vec<Polynomial> = self
            .drift
            .iter()
            .map(|f| f.compose(&subs))
            .collect::<Result<_>>()?;
        for (i, g) in self.regressor.iter().enumerate() {
            let gi = g.compose(&subs)?;
            let r = self.rows[i];
            comps[r] = &comps[r] + &gi.scale(theta[i]);
        }
        PolyVectorField::new(comps)
    }
}

/// A fully polynomial model: a [`PolyPlant`] plus `V(z, x)` and `Q(z, x)`
/// given as polynomials over `(x, z)`.
#[derive(Clone, Debug)]
pub struct PolynomialModel {
    plant: PolyPlant,
    v: Polynomial,
    q: Polynomial,
}

impl PolynomialModel {
    pub fn new(plant: PolyPlant, v: Polynomial, q: Polynomial) -> Result<Self> {
        let d = plant.dims();
        for p in [&v, &q] {
            if p.nvars() != d.n + d.l {
                return Err(Error::dim("Lyapunov polynomial variables", d.n + d.l, p.nvars()));
            }
        }
        Ok(Self { plant, v, q })
    }

    pub fn plant(&self) -> &PolyPlant {
        &self.plant
    }

    fn xu(x: &[f64], u: &[f64]) -> Vec<f64> {
        x.iter().chain(u).copied().collect()
    }
}

impl PlantModel for PolynomialModel {
    fn dims(&self) -> Dims {
        self.plant.dims
    }

    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let xu = Self::xu(x, u);
        for (o, f) in out.iter_mut().zip(&self.plant.drift) {
            *o = f.eval_unchecked(&xu);
        }
    }

    fn regressor(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let xu = Self::xu(x, u);
        let l = self.plant.dims.l;
        out.fill(0.0);
        for (i, g) in self.plant.regressor.iter().enumerate() {
            out[self.plant.rows[i] * l + i] = g.eval_unchecked(&xu);
        }
    }

    fn structure(&self) -> Option<Vec<usize>> {
        Some(self.plant.rows.clone())
    }
}

impl ControllerFamily for PolynomialModel {
    fn feedback(&self, est: &[f64], x: &[f64], out: &mut [f64]) {
        let xz = Self::xu(x, est);
        for (o, k) in out.iter_mut().zip(&self.plant.feedback) {
            *o = k.eval_unchecked(&xz);
        }
    }

    fn lyapunov(&self, est: &[f64], x: &[f64]) -> f64 {
        self.v.eval_unchecked(&Self::xu(x, est))
    }

    fn lyapunov_bound(&self, est: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.q.eval_unchecked(&Self::xu(x, est)))
    }
}

impl Model for PolynomialModel {
    fn name(&self) -> &str {
        "polynomial"
    }
}
