//! Step-wise index-set test of parameter observability for plants with at most
//! one unknown parameter per equation, plus the Kalman rank test used by the
//! linear specialization.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, smallest_right_singular_vector};
use crate::models::{LinearPlant, PolyPlant};
use crate::par::{map_range, ExecMode};
use crate::poly::{lie_chain, Polynomial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Backend {
    LinearRank,
    NumericalSearch,
}

/// Multi-start search settings for the nonlinear zero-set test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchSettings {
    pub r_min: f64,
    pub r_max: f64,
    pub n_starts: usize,
    pub witness_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            r_min: 1e-3,
            r_max: 1e3,
            n_starts: 64,
            witness_tol: 1e-10,
            max_iters: 200,
            seed: 0x0b5e_7a61,
            mode: ExecMode::default(),
        }
    }
}

/// Verdict on "every listed polynomial vanishes at `x` ⇒ `x = 0`".
///
/// `residual` is the largest `|h_j(x)| / Σ_k |c_k x^{e_k}|` at the witness (or,
/// for a search that found none, the smallest value reached). The ratio is
/// zero at exact zeros and one wherever a polynomial has no cancellation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroSetCertificate {
    pub verdict: Verdict,
    pub witness: Option<Vec<f64>>,
    pub residual: Option<f64>,
    pub order: usize,
    pub backend: Backend,
}

impl ZeroSetCertificate {
    /// Only a rank decision over linear forms is a proof.
    pub fn is_certifying(&self) -> bool {
        self.verdict == Verdict::Holds && self.backend == Backend::LinearRank
    }
}

/// Relative residual of one polynomial; zero where every term vanishes.
pub fn relative_residual(h: &Polynomial, x: &[f64]) -> Result<f64> {
    let v = h.eval(x)?.abs();
    let m = h.eval_abs(x)?;
    Ok(if m == 0.0 { 0.0 } else { v / m })
}

fn max_relative_residual(hs: &[Polynomial], x: &[f64]) -> f64 {
    hs.iter()
        .map(|h| relative_residual(h, x).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

pub fn zero_set_certify(
    h_list: &[Polynomial],
    order: usize,
    settings: &SearchSettings,
) -> Result<ZeroSetCertificate> {
    let Some(first) = h_list.first() else {
        return Err(Error::invalid("zero-set test needs at least one polynomial"));
    };
    let n = first.nvars();
    if let Some(h) = h_list.iter().find(|h| h.nvars() != n) {
        return Err(Error::dim("polynomial variables", n, h.nvars()));
    }
    if h_list.iter().all(Polynomial::is_zero) {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        return Ok(ZeroSetCertificate {
            verdict: Verdict::Inconclusive,
            witness: Some(e1),
            residual: Some(0.0),
            order,
            backend: Backend::LinearRank,
        });
    }
    if h_list.iter().all(Polynomial::is_linear_form) {
        return Ok(linear_rank(h_list, n, order));
    }
    numerical_search(h_list, n, order, settings)
}

fn linear_rank(h_list: &[Polynomial], n: usize, order: usize) -> ZeroSetCertificate {
    let mut m = DMatrix::zeros(h_list.len(), n);
    for (r, h) in h_list.iter().enumerate() {
        for c in 0..n {
            let mut e = vec![0u32; n];
            e[c] = 1;
            m[(r, c)] = h.coefficient(&e);
        }
    }
    if numerical_rank(&m, 1e-9) == n {
        return ZeroSetCertificate {
            verdict: Verdict::Holds,
            witness: None,
            residual: None,
            order,
            backend: Backend::LinearRank,
        };
    }
    let v = smallest_right_singular_vector(&m);
    let v = &v / v.norm();
    let w: Vec<f64> = v.iter().copied().collect();
    let res = (&m * &v).amax();
    ZeroSetCertificate {
        verdict: Verdict::Inconclusive,
        witness: Some(w),
        residual: Some(res),
        order,
        backend: Backend::LinearRank,
    }
}

/// One polynomial prepared for the search: value, gradient and the radial
/// magnitude `s(ρ) = Σ |c_k| ρ^{deg_k}` used to balance the objective.
struct Prepared {
    h: Polynomial,
    grad: Vec<Polynomial>,
    radial: Vec<(f64, i32)>,
}

impl Prepared {
    fn new(h: &Polynomial) -> Self {
        let mut by_degree: Vec<(f64, i32)> = Vec::new();
        for (e, c) in h.terms() {
            let d = e.iter().sum::<u32>() as i32;
            match by_degree.iter_mut().find(|(_, k)| *k == d) {
                Some(slot) => slot.0 += c.abs(),
                None => by_degree.push((c.abs(), d)),
            }
        }
        Self {
            h: h.clone(),
            grad: h.gradient(),
            radial: by_degree,
        }
    }

    fn scale(&self, rho: f64) -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for &(c, d) in &self.radial {
            s += c * rho.powi(d);
            if d > 0 {
                ds += c * d as f64 * rho.powi(d - 1);
            }
        }
        (s, ds)
    }
}

fn project(x: &mut [f64], r_min: f64, r_max: f64) {
    let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rho == 0.0 {
        x[0] = r_min;
    } else if rho < r_min {
        x.iter_mut().for_each(|v| *v *= r_min / rho);
    } else if rho > r_max {
        x.iter_mut().for_each(|v| *v *= r_max / rho);
    }
}

/// Balanced residuals `h_j(x)/s_j(|x|)` and, on request, their Jacobian.
fn residuals(prep: &[Prepared], x: &[f64], jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
    let n = x.len();
    let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = DVector::zeros(prep.len());
    let mut jac = jac;
    for (j, p) in prep.iter().enumerate() {
        let (s, ds) = p.scale(rho);
        if s == 0.0 {
            if let Some(jm) = jac.as_deref_mut() {
                jm.row_mut(j).fill(0.0);
            }
            continue;
        }
        let h = p.h.eval_unchecked(x);
        r[j] = h / s;
        if let Some(jm) = jac.as_deref_mut() {
            for i in 0..n {
                let dh = p.grad[i].eval_unchecked(x);
                let drho = if rho > 0.0 { x[i] / rho } else { 0.0 };
                jm[(j, i)] = dh / s - h * ds * drho / (s * s);
            }
        }
    }
    r
}

fn levenberg_marquardt(prep: &[Prepared], x0: Vec<f64>, s: &SearchSettings) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0;
    let mut jac = DMatrix::zeros(prep.len(), n);
    let mut r = residuals(prep, &x, Some(&mut jac));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..s.max_iters {
        if cost == 0.0 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for i in 0..n {
                m[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = m.lu().solve(&(-&jtr)) else {
                lambda *= 4.0;
                continue;
            };
            let mut cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut cand, s.r_min, s.r_max);
            let rc = residuals(prep, &cand, None);
            let cc = rc.norm_squared();
            if cc < cost {
                let moved = cand
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let size = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                x = cand;
                r = residuals(prep, &x, Some(&mut jac));
                cost = cc;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = moved > 1e-16 * size;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    x
}

fn numerical_search(
    h_list: &[Polynomial],
    n: usize,
    order: usize,
    s: &SearchSettings,
) -> Result<ZeroSetCertificate> {
    if !(s.r_min > 0.0 && s.r_max > s.r_min) || s.n_starts == 0 {
        return Err(Error::invalid("search needs 0 < r_min < r_max and at least one start"));
    }
    let prep: Vec<Prepared> = h_list.iter().map(Prepared::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let (lo, hi) = (s.r_min.ln(), s.r_max.ln());
    let starts: Vec<Vec<f64>> = (0..s.n_starts)
        .map(|_| {
            let dir = loop {
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nd = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nd > 1e-3 && nd <= 1.0 {
                    break d.into_iter().map(|v| v / nd).collect::<Vec<f64>>();
                }
            };
            let radius = rng.random_range(lo..hi).exp();
            dir.into_iter().map(|v| v * radius).collect()
        })
        .collect();

    let outcomes = map_range(s.mode, starts.len(), |k| {
        let x = levenberg_marquardt(&prep, starts[k].clone(), s);
        // Tiny coordinates are also tried at exactly zero: singular zeros such
        // as those of x₁² are approached only linearly.
        let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let snapped: Vec<f64> = x
            .iter()
            .map(|&v| if v.abs() <= 1e-7 * rho { 0.0 } else { v })
            .collect();
        [x, snapped]
            .into_iter()
            .filter(|c| {
                let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                r >= s.r_min * (1.0 - 1e-12) && r <= s.r_max * (1.0 + 1e-12)
            })
            .map(|c| (max_relative_residual(h_list, &c), c))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    });

    if let Some((res, w)) = outcomes
        .iter()
        .flatten()
        .find(|(res, _)| *res < s.witness_tol)
    {
        return Ok(ZeroSetCertificate {
            verdict: Verdict::Inconclusive,
            witness: Some(w.clone()),
            residual: Some(*res),
            order,
            backend: Backend::NumericalSearch,
        });
    }
    let best = outcomes
        .iter()
        .flatten()
        .map(|(r, _)| *r)
        .fold(f64::INFINITY, f64::min);
    Ok(ZeroSetCertificate {
        verdict: Verdict::Holds,
        witness: None,
        residual: best.is_finite().then_some(best),
        order,
        backend: Backend::NumericalSearch,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlgorithmSettings {
    /// Highest Lie-derivative order `J`; `None` means `2n − 1`.
    pub order: Option<usize>,
    pub search: SearchSettings,
}

pub fn default_order(n: usize) -> usize {
    (2 * n).saturating_sub(1).max(1)
}

/// One step of the algorithm. Indices are one-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub z: Vec<f64>,
    /// Components of `z` overwritten with the true parameter.
    pub pinned: Vec<usize>,
    /// `I_s`.
    pub covered: Vec<usize>,
    /// One certificate per parameter index.
    pub certificates: Vec<ZeroSetCertificate>,
}

/// Outcome of the algorithm for one `(θ, θ̂₁..θ̂_l)`. Indices are one-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub order: usize,
    pub theta: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub certified: bool,
    /// `N = l` when certified.
    pub n: Option<usize>,
    pub uncovered: Option<usize>,
}

impl ObservabilityReport {
    pub fn index_sets(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|s| s.covered.clone()).collect()
    }

    pub fn union(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.steps.iter().flat_map(|s| s.covered.iter().copied()).collect();
        set.into_iter().collect()
    }

    /// Whether every `Holds` behind the certificate came from a rank test.
    pub fn is_proof(&self) -> bool {
        self.certified
            && self.steps.iter().all(|s| {
                s.covered
                    .iter()
                    .all(|&i| s.certificates[i - 1].is_certifying())
            })
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_set(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

impl fmt::Display for ObservabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "θ = {}, derivative order J = {}", fmt_vec(&self.theta), self.order)?;
        for s in &self.steps {
            write!(f, "step {}: z = {}", s.step, fmt_vec(&s.z))?;
            if !s.pinned.is_empty() {
                write!(f, " (pinned {})", fmt_set(&s.pinned))?;
            }
            writeln!(f, ", I_{} = {}", s.step, fmt_set(&s.covered))?;
            for (i, c) in s.certificates.iter().enumerate() {
                write!(f, "  index {}: {:?} via {:?}", i + 1, c.verdict, c.backend)?;
                if let Some(w) = &c.witness {
                    write!(f, ", witness {}", fmt_vec(w))?;
                }
                if let Some(r) = c.residual {
                    write!(f, ", residual {r:.3e}")?;
                }
                writeln!(f)?;
            }
        }
        if self.certified {
            write!(f, "certified with N = {}", self.n.unwrap_or(0))?;
            if !self.is_proof() {
                write!(f, " (numerical search; not a proof)")?;
            }
            writeln!(f)
        } else {
            writeln!(
                f,
                "not certified: index {} uncovered",
                self.uncovered.unwrap_or(0)
            )
        }
    }
}

/// Runs the step-wise algorithm: at step `s`, `z = θ̂_s` with `z_i = θ_i` on the
/// indices covered so far, and index `i` joins `I_s` when the chain
/// `gᵢ(x, k(z,x)), L_{F_z} gᵢ, …, L^{(J)}_{F_z} gᵢ` vanishes only at the origin.
pub fn run_observability_algorithm(
    plant: &PolyPlant,
    theta: &[f64],
    estimates: &[Vec<f64>],
    settings: &AlgorithmSettings,
) -> Result<ObservabilityReport> {
    let d = plant.dims();
    if theta.len() != d.l {
        return Err(Error::dim("true parameter", d.l, theta.len()));
    }
    if estimates.len() != d.l {
        return Err(Error::dim("number of estimates", d.l, estimates.len()));
    }
    let order = settings.order.unwrap_or_else(|| default_order(d.n));
    if order == 0 {
        return Err(Error::invalid("derivative order J must be at least 1"));
    }

    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let mut steps = Vec::with_capacity(d.l);
    for (s, est) in estimates.iter().enumerate() {
        if est.len() != d.l {
            return Err(Error::dim("parameter estimate", d.l, est.len()));
        }
        let mut z = est.clone();
        for &i in &covered {
            z[i] = theta[i];
        }
        let field = plant.closed_field(theta, &z)?;
        let gk = plant.regressor_at(&z)?;
        let certs = map_range(settings.search.mode, d.l, |i| {
            let chain = lie_chain(&gk[i], &field, order)?;
            zero_set_certify(&chain, order, &settings.search)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let step_cov: Vec<usize> = (0..d.l)
            .filter(|&i| certs[i].verdict == Verdict::Holds)
            .collect();
        steps.push(StepRecord {
            step: s + 1,
            z,
            pinned: covered.iter().map(|i| i + 1).collect(),
            covered: step_cov.iter().map(|i| i + 1).collect(),
            certificates: certs,
        });
        covered.extend(step_cov);
    }
    let certified = covered.len() == d.l;
    Ok(ObservabilityReport {
        order,
        theta: theta.to_vec(),
        steps,
        certified,
        n: certified.then_some(d.l),
        uncovered: (0..d.l).find(|i| !covered.contains(i)).map(|i| i + 1),
    })
}

/// Random `(θ, θ̂₁..θ̂_l)` draws, each entry uniform in `[-range, range]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrawSettings {
    pub draws: usize,
    pub seed: u64,
    pub range: f64,
}

impl Default for DrawSettings {
    fn default() -> Self {
        Self {
            draws: 16,
            seed: 7,
            range: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DrawOutcome {
    pub estimates: Vec<Vec<f64>>,
    pub report: ObservabilityReport,
}

pub fn observability_draws(
    plant: &PolyPlant,
    draws: &DrawSettings,
    settings: &AlgorithmSettings,
) -> Result<Vec<DrawOutcome>> {
    if !(draws.range > 0.0) {
        return Err(Error::config("observability.sample_range", "must be positive"));
    }
    let l = plant.dims().l;
    let mut rng = ChaCha8Rng::seed_from_u64(draws.seed);
    let mut sample = |k: usize| -> Vec<f64> {
        (0..k).map(|_| rng.random_range(-draws.range..draws.range)).collect()
    };
    let inputs: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..draws.draws)
        .map(|_| {
            let theta = sample(l);
            let est = (0..l).map(|_| sample(l)).collect();
            (theta, est)
        })
        .collect();
    map_range(settings.search.mode, inputs.len(), |k| {
        let (theta, est) = &inputs[k];
        run_observability_algorithm(plant, theta, est, settings).map(|report| DrawOutcome {
            estimates: est.clone(),
            report,
        })
    })
    .into_iter()
    .collect()
}

/// `[C; CA; …; CA^{n−1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("A columns", n, a.ncols()));
    }
    if c.ncols() != n {
        return Err(Error::dim("C columns", n, c.ncols()));
    }
    let p = c.nrows();
    let mut o = DMatrix::zeros(p * n, n);
    let mut block = c.clone();
    for k in 0..n {
        o.rows_mut(k * p, p).copy_from(&block);
        block = &block * a;
    }
    Ok(o)
}

/// Kalman rank test with a `1e-9` relative singular-value threshold.
pub fn kalman_observability(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<bool> {
    let o = observability_matrix(a, c)?;
    Ok(numerical_rank(&o, 1e-9) == a.nrows())
}

/// The pair `(A + Σθᵢ Cᵢ + B K_θ, Σ 𝒢ᵢ Cᵢ)` whose observability the linear
/// specialization requires for every direction `𝒢 ≠ 0`.
pub fn linear_pair(
    plant: &LinearPlant,
    theta: &[f64],
    direction: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = plant.c().len();
    if theta.len() != l {
        return Err(Error::dim("true parameter", l, theta.len()));
    }
    if direction.len() != l {
        return Err(Error::dim("direction", l, direction.len()));
    }
    let n = plant.a().nrows();
    let mut c = DMatrix::zeros(n, n);
    for (ci, &g) in plant.c().iter().zip(direction) {
        c += ci * g;
    }
    Ok((plant.closed_matrix(theta), c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    #[test]
    fn linear_examples() {
        let s = SearchSettings::default();
        let c = zero_set_certify(&[p("x1 + x2", 2), p("x1 - x2", 2)], 1, &s).unwrap();
        assert_eq!(c.verdict, Verdict::Holds);
        assert!(c.is_certifying());
        let c = zero_set_certify(&[p("x1", 2)], 1, &s).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        let w = c.witness.unwrap();
        assert!(w[0].abs() < 1e-15 && (w[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_zero_list_gives_unit_witness() {
        let c = zero_set_certify(&[Polynomial::zero(3)], 2, &SearchSettings::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        assert_eq!(c.witness.unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn nonlinear_search_finds_circle_point() {
        // x₁² + x₂² − 4 has nonzero roots on the circle of radius 2.
        let c = zero_set_certify(&[p("x1^2 + x2^2 - 4", 2)], 0, &SearchSettings::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        let w = c.witness.unwrap();
        assert!((w[0].hypot(w[1]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn nonlinear_search_finds_singular_axis_zero() {
        let c = zero_set_certify(&[p("x1^2", 2), p("x1*x2", 2)], 1, &SearchSettings::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        assert_eq!(c.witness.unwrap()[0], 0.0);
    }

    #[test]
    fn positive_definite_form_holds() {
        let c = zero_set_certify(&[p("x1^2 + x2^2", 2)], 0, &SearchSettings::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Holds);
        assert!(!c.is_certifying());
    }

    #[test]
    fn kalman_trivial_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -2.0, 0.1]);
        assert!(kalman_observability(&a, &DMatrix::identity(2, 2)).unwrap());
        assert!(!kalman_observability(&a, &DMatrix::zeros(2, 2)).unwrap());
        assert!(kalman_observability(&a, &DMatrix::zeros(2, 3)).is_err());
    }
}
