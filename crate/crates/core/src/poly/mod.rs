//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms live in a `BTreeMap` keyed by exponent vectors, so iteration order
//! (and therefore printing) is deterministic. Every arithmetic operation prunes
//! coefficients whose magnitude falls below [`PRUNE_TOL`].

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use parse::{default_names, ParsePolyError};

use crate::error::{Error, Result};

/// Absolute coefficient magnitude below which terms are dropped.
pub const PRUNE_TOL: f64 = 1e-12;

/// Exponent vector of a monomial; its length is the variable count.
pub type Exponents = Vec<u32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate polynomial `x_{index+1}`.
    pub fn var(nvars: usize, index: usize) -> Self {
        assert!(index < nvars, "variable index {index} out of range for {nvars} variables");
        let mut e = vec![0; nvars];
        e[index] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs; repeated
    /// exponent vectors are summed.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponents, f64)>,
    {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::dim("exponent vector", nvars, e.len()));
            }
            p.add_term(e, c);
        }
        p.prune();
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> + '_ {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Sum of absolute coefficient values.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    /// True when every term has total degree exactly one.
    pub fn is_linear_form(&self) -> bool {
        self.terms.keys().all(|e| e.iter().sum::<u32>() == 1)
    }

    fn add_term(&mut self, e: Exponents, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(e).or_insert(0.0) += c;
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() >= PRUNE_TOL);
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(
            self.nvars, other.nvars,
            "polynomials over different variable counts"
        );
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars {
            return Err(Error::dim("evaluation point", self.nvars, x.len()));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * monomial(e, x))
            .sum()
    }

    /// `Σ |c_k| r^{deg_k}`: an upper bound for the magnitude of every term at
    /// any point of norm `r`.
    pub fn magnitude_scale(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.abs() * r.powi(e.iter().sum::<u32>() as i32))
            .sum()
    }

    /// `Σ |c_k| |x^{e_k}|`, the magnitude of the evaluation before any
    /// cancellation between terms.
    pub fn eval_abs(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars {
            return Err(Error::dim("evaluation point", self.nvars, x.len()));
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| {
                c.abs()
                    * e.iter()
                        .zip(x)
                        .map(|(&k, &v)| v.abs().powi(k as i32))
                        .product::<f64>()
            })
            .sum())
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), a * c);
        }
        p.prune();
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to variable `index`.
    pub fn derivative(&self, index: usize) -> Self {
        assert!(index < self.nvars);
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[index] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[index] -= 1;
            p.add_term(de, c * e[index] as f64);
        }
        p.prune();
        p
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars).map(|j| self.derivative(j)).collect()
    }

    /// Substitutes every variable `x_j` by `subs[j]`; the result lives over the
    /// variable set shared by the substitutes.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Self> {
        if subs.len() != self.nvars {
            return Err(Error::dim("substitution list", self.nvars, subs.len()));
        }
        let target = match subs.first() {
            Some(s) => s.nvars,
            None => {
                return Ok(Self::constant(0, self.coefficient(&[])));
            }
        };
        if let Some(bad) = subs.iter().find(|s| s.nvars != target) {
            return Err(Error::dim("substitute variable count", target, bad.nvars));
        }
        let mut powers: Vec<Vec<Polynomial>> = subs
            .iter()
            .map(|s| vec![Self::constant(target, 1.0), s.clone()])
            .collect();
        let mut out = Self::zero(target);
        for (e, c) in &self.terms {
            let mut term = Self::constant(target, *c);
            for (j, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while powers[j].len() <= k as usize {
                    let next = powers[j].last().unwrap() * &subs[j];
                    powers[j].push(next);
                }
                term = &term * &powers[j][k as usize];
            }
            for (te, tc) in term.terms {
                out.add_term(te, tc);
            }
        }
        out.prune();
        Ok(out)
    }

    /// Re-embeds the polynomial into a space of `nvars` variables. Variables
    /// beyond the new count must not occur.
    pub fn resize(&self, nvars: usize) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (e, c) in &self.terms {
            if e.iter().skip(nvars).any(|&k| k > 0) {
                return Err(Error::invalid(format!(
                    "polynomial depends on variables beyond x{nvars}"
                )));
            }
            let mut ne = e.clone();
            ne.resize(nvars, 0);
            p.add_term(ne, *c);
        }
        Ok(p)
    }

    pub fn to_string_with(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars);
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        // Highest degree first, then the map's lexicographic order.
        let mut ordered: Vec<_> = self.terms.iter().collect();
        ordered.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (i, (e, c)) in ordered.into_iter().enumerate() {
            let neg = *c < 0.0;
            let mag = c.abs();
            if i == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let factors: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| {
                    if k == 1 {
                        names[j].clone()
                    } else {
                        format!("{}^{}", names[j], k)
                    }
                })
                .collect();
            if factors.is_empty() {
                s.push_str(&fmt_coef(mag));
            } else {
                if mag != 1.0 {
                    s.push_str(&fmt_coef(mag));
                    s.push('*');
                }
                s.push_str(&factors.join("*"));
            }
        }
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_coef(c: f64) -> String {
    if c.fract() == 0.0 && c < 1e15 {
        format!("{c}")
    } else {
        format!("{c:?}")
    }
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter()
        .zip(x)
        .map(|(&k, &xi)| match k {
            0 => 1.0,
            1 => xi,
            2 => xi * xi,
            _ => xi.powi(k as i32),
        })
        .product()
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_string_with(&default_names(self.nvars)))
    }
}

impl<'a> Add<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), *c);
        }
        p.prune();
        p
    }
}

impl<'a> Sub<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), -*c);
        }
        p.prune();
        p
    }
}

impl<'a> Mul<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut p = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                p.add_term(e, ca * cb);
            }
        }
        p.prune();
        p
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// A polynomial vector field `x ↦ (F_1(x), …, F_n(x))` on ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::invalid("vector field needs at least one component"));
        }
        for c in &components {
            if c.nvars() != n {
                return Err(Error::dim("vector field component variables", n, c.nvars()));
            }
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn degree(&self) -> Option<u32> {
        self.components.iter().filter_map(|c| c.degree()).max()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim("evaluation point", self.dim(), x.len()));
        }
        Ok(self.components.iter().map(|c| c.eval_unchecked(x)).collect())
    }
}

/// `L_F h = Σ_j ∂h/∂x_j · F_j`.
pub fn lie_derivative(h: &Polynomial, field: &PolyVectorField) -> Result<Polynomial> {
    if h.nvars() != field.dim() {
        return Err(Error::dim("Lie derivative operand", field.dim(), h.nvars()));
    }
    let mut acc = Polynomial::zero(h.nvars());
    for (j, fj) in field.components.iter().enumerate() {
        let dh = h.derivative(j);
        if dh.is_zero() || fj.is_zero() {
            continue;
        }
        acc = &acc + &(&dh * fj);
    }
    Ok(acc)
}

/// `L_F^{(j)} h`, with `j = 0` returning `h` itself.
pub fn repeated_lie(h: &Polynomial, field: &PolyVectorField, order: usize) -> Result<Polynomial> {
    if h.nvars() != field.dim() {
        return Err(Error::dim("Lie derivative operand", field.dim(), h.nvars()));
    }
    let mut cur = h.clone();
    for _ in 0..order {
        cur = lie_derivative(&cur, field)?;
    }
    Ok(cur)
}

/// `[h, L_F h, …, L_F^{(order)} h]`.
pub fn lie_chain(h: &Polynomial, field: &PolyVectorField, order: usize) -> Result<Vec<Polynomial>> {
    let mut chain = Vec::with_capacity(order + 1);
    chain.push(h.clone());
    for _ in 0..order {
        let next = lie_derivative(chain.last().unwrap(), field)?;
        chain.push(next);
    }
    Ok(chain)
}
