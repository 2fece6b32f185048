//! Regressor integrals, the Gram system `(G, Z)` over an estimation window and
//! the minimum-distance least-squares update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::TrajectoryLog;
use crate::models::Dims;
use crate::par::{map_range, ExecMode};

/// Eigenvalues below `RANK_TOL · λ_max` count as unexcited directions.
pub const RANK_TOL: f64 = 1e-9;

/// `(G, Z)` over the window `[μ, τ]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramSystem {
    #[serde(serialize_with = "ser_matrix")]
    pub g: DMatrix<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub z: DVector<f64>,
    pub window: (f64, f64),
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        seq.serialize_element(&m.row(r).iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

fn ser_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

impl GramSystem {
    /// Symmetrizes `g` and checks shapes and the window order.
    pub fn new(g: DMatrix<f64>, z: DVector<f64>, window: (f64, f64)) -> Result<Self> {
        let l = z.len();
        if g.nrows() != l || g.ncols() != l {
            return Err(Error::dim("Gram matrix size", l, g.nrows()));
        }
        if window.0 > window.1 {
            return Err(Error::invalid(format!(
                "window start {} exceeds its end {}",
                window.0, window.1
            )));
        }
        let g = (&g + g.transpose()) * 0.5;
        Ok(Self { g, z, window })
    }

    pub fn zero(l: usize, window: (f64, f64)) -> Self {
        Self {
            g: DMatrix::zeros(l, l),
            z: DVector::zeros(l),
            window,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// `|Gθ − Z|`.
    pub fn residual(&self, theta: &[f64]) -> f64 {
        (&self.g * DVector::from_column_slice(theta) - &self.z).norm()
    }

    /// Number of eigenvalues above `RANK_TOL · λ_max`.
    pub fn rank(&self) -> usize {
        let (vals, _) = self.spectrum();
        let top = vals.iter().copied().fold(0.0f64, f64::max);
        if top <= 0.0 {
            return 0;
        }
        vals.iter().filter(|&&v| v > RANK_TOL * top).count()
    }

    /// Smallest eigenvalue relative to `1 + λ_max`; non-negative up to
    /// quadrature noise for a Gram matrix.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let (vals, _) = self.spectrum();
        let top = vals.iter().copied().fold(0.0f64, f64::max);
        let bottom = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if vals.is_empty() {
            0.0
        } else {
            bottom / (1.0 + top)
        }
    }

    fn spectrum(&self) -> (Vec<f64>, DMatrix<f64>) {
        if self.dim() == 0 {
            return (Vec::new(), DMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.g.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateUpdate {
    pub prev: Vec<f64>,
    pub new: Vec<f64>,
    pub rank: usize,
    pub window: (f64, f64),
}

impl EstimateUpdate {
    pub fn distance(&self) -> f64 {
        self.prev
            .iter()
            .zip(&self.new)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Smallest listed event time not earlier than `next − Ñ·T`.
///
/// A relative slack of `1e-12` absorbs round-off in event times that are sums
/// of dwell caps.
pub fn compute_mu(event_times: &[f64], next: f64, window: usize, dwell: f64) -> Result<f64> {
    if let Some(&last) = event_times.last() {
        if !(next > last) {
            return Err(Error::invalid(format!(
                "next event {next} does not follow the last event {last}"
            )));
        }
    }
    if event_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("event times are not ascending"));
    }
    let threshold = next - window as f64 * dwell;
    let slack = 1e-12 * next.abs().max(1.0);
    event_times
        .iter()
        .copied()
        .find(|&t| t >= threshold - slack)
        .ok_or_else(|| {
            Error::Invariant(format!(
                "no event time at or after {threshold}; the dwell cap was violated upstream"
            ))
        })
}

/// Per-sample pieces `P_k` (length `n`) and `Q_k` (row-major `n × l`) with
/// `p(t_i, t_j) = P_i − P_j` and `q(t_i, t_j) = Q_i − Q_j`.
struct WindowSamples {
    dims: Dims,
    times: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn window_indices(log: &TrajectoryLog, mu: f64, tau: f64) -> Result<(usize, usize)> {
    if mu > tau {
        return Err(Error::invalid(format!("window start {mu} exceeds its end {tau}")));
    }
    let a = log
        .index_of_time(mu)
        .ok_or_else(|| Error::invalid(format!("window start {mu} is not a log sample time")))?;
    let b = log
        .index_of_time(tau)
        .ok_or_else(|| Error::invalid(format!("window end {tau} is not a log sample time")))?;
    Ok((a, b))
}

/// `∫∫ q′q` and `∫∫ q′p` over the window by the 2D trapezoid rule, summing the
/// strict lower triangle twice (the diagonal integrand is zero).
fn gram_from_samples(s: &WindowSamples, window: (f64, f64), mode: ExecMode) -> Result<GramSystem> {
    let Dims { n, l, .. } = s.dims;
    let k = s.times.len();
    if k < 2 {
        return Ok(GramSystem::zero(l, window));
    }
    let w: Vec<f64> = (0..k)
        .map(|i| {
            let left = if i > 0 { s.times[i] - s.times[i - 1] } else { 0.0 };
            let right = if i + 1 < k { s.times[i + 1] - s.times[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();

    let rows = map_range(mode, k, |i| {
        let mut g = vec![0.0; l * l];
        let mut z = vec![0.0; l];
        let mut dq = vec![0.0; n * l];
        let mut dp = vec![0.0; n];
        let qi = &s.q[i * n * l..(i + 1) * n * l];
        let pi = &s.p[i * n..(i + 1) * n];
        for j in 0..i {
            let ww = w[i] * w[j];
            let qj = &s.q[j * n * l..(j + 1) * n * l];
            let pj = &s.p[j * n..(j + 1) * n];
            for r in 0..n * l {
                dq[r] = qi[r] - qj[r];
            }
            for r in 0..n {
                dp[r] = pi[r] - pj[r];
            }
            for a in 0..l {
                for b in a..l {
                    let v: f64 = (0..n).map(|r| dq[r * l + a] * dq[r * l + b]).sum();
                    g[a * l + b] += ww * v;
                }
                let v: f64 = (0..n).map(|r| dq[r * l + a] * dp[r]).sum();
                z[a] += ww * v;
            }
        }
        (g, z)
    });

    let mut g = DMatrix::zeros(l, l);
    let mut z = DVector::zeros(l);
    for (gr, zr) in &rows {
        for a in 0..l {
            for b in a..l {
                g[(a, b)] += gr[a * l + b];
            }
            z[a] += zr[a];
        }
    }
    for a in 0..l {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    GramSystem::new(g * 2.0, z * 2.0, window)
}

/// Generic Gram system from the running integrals `F`, `Γ` in the log.
pub fn gram_pair(log: &TrajectoryLog, mu: f64, tau: f64) -> Result<GramSystem> {
    gram_pair_with(log, mu, tau, ExecMode::default())
}

pub fn gram_pair_with(log: &TrajectoryLog, mu: f64, tau: f64, mode: ExecMode) -> Result<GramSystem> {
    let (a, b) = window_indices(log, mu, tau)?;
    let dims = log.dims();
    let mut s = WindowSamples {
        dims,
        times: Vec::with_capacity(b + 1 - a),
        p: Vec::with_capacity((b + 1 - a) * dims.n),
        q: Vec::with_capacity((b + 1 - a) * dims.n * dims.l),
    };
    for k in a..=b {
        s.times.push(log.t(k));
        s.p.extend(log.x(k).iter().zip(log.drift_integral(k)).map(|(x, f)| x - f));
        s.q.extend_from_slice(log.regressor_integral(k));
    }
    gram_from_samples(&s, (mu, tau), mode)
}

/// Gram system from the filter states `z = ∫x`, `w = ∫u` of a linear plant:
/// `y = x − Az − Bw` replaces `p` and `L*z = [C₁z, …, C_l z]` replaces `q`.
pub fn linear_filter_gram(
    log: &TrajectoryLog,
    mu: f64,
    tau: f64,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &[DMatrix<f64>],
) -> Result<GramSystem> {
    linear_filter_gram_with(log, mu, tau, a, b, c, ExecMode::default())
}

pub fn linear_filter_gram_with(
    log: &TrajectoryLog,
    mu: f64,
    tau: f64,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &[DMatrix<f64>],
    mode: ExecMode,
) -> Result<GramSystem> {
    let dims = log.dims();
    let Dims { n, m, l } = dims;
    if a.shape() != (n, n) {
        return Err(Error::dim("filter matrix A rows", n, a.nrows()));
    }
    if b.shape() != (n, m) {
        return Err(Error::dim("filter matrix B columns", m, b.ncols()));
    }
    if c.len() != l {
        return Err(Error::dim("parameter matrices", l, c.len()));
    }
    if let Some(ci) = c.iter().find(|ci| ci.shape() != (n, n)) {
        return Err(Error::dim("parameter matrix rows", n, ci.nrows()));
    }
    let (i0, i1) = window_indices(log, mu, tau)?;
    let mut s = WindowSamples {
        dims,
        times: Vec::with_capacity(i1 + 1 - i0),
        p: Vec::with_capacity((i1 + 1 - i0) * n),
        q: Vec::with_capacity((i1 + 1 - i0) * n * l),
    };
    for k in i0..=i1 {
        s.times.push(log.t(k));
        let x = DVector::from_column_slice(log.x(k));
        let z = DVector::from_column_slice(log.filter_z(k));
        let w = DVector::from_column_slice(log.filter_w(k));
        let y = x - a * &z - b * w;
        s.p.extend(y.iter());
        let cz: Vec<DVector<f64>> = c.iter().map(|ci| ci * &z).collect();
        for r in 0..n {
            s.q.extend(cz.iter().map(|v| v[r]));
        }
    }
    gram_from_samples(&s, (mu, tau), mode)
}

/// `θ̂_new = θ̂_prev + G⁺(Z − Gθ̂_prev)` with the pseudoinverse taken from the
/// symmetric eigendecomposition, eigenvalues below `RANK_TOL · λ_max` dropped.
pub fn ls_update(gs: &GramSystem, prev: &[f64]) -> Result<EstimateUpdate> {
    let l = gs.dim();
    if prev.len() != l {
        return Err(Error::dim("previous estimate", l, prev.len()));
    }
    let mut new = prev.to_vec();
    let mut rank = 0;
    if l > 0 {
        let eig = SymmetricEigen::new(gs.g.clone());
        let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        if top > 0.0 {
            let pv = DVector::from_column_slice(prev);
            let r = &gs.z - &gs.g * &pv;
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > RANK_TOL * top {
                    rank += 1;
                    let v = eig.eigenvectors.column(k);
                    let coef = v.dot(&r) / lam;
                    for (ni, vi) in new.iter_mut().zip(v.iter()) {
                        *ni += coef * vi;
                    }
                }
            }
        }
    }
    Ok(EstimateUpdate {
        prev: prev.to_vec(),
        new,
        rank,
        window: gs.window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_examples() {
        assert_eq!(compute_mu(&[0.0, 0.4], 1.4, 2, 1.0).unwrap(), 0.0);
        assert_eq!(compute_mu(&[0.0, 1.0, 2.0], 3.0, 2, 1.0).unwrap(), 1.0);
        assert_eq!(compute_mu(&[0.0], 1.0, 1, 1.0).unwrap(), 0.0);
        assert_eq!(compute_mu(&[0.0], 1.0, 5, 1.0).unwrap(), 0.0);
        assert!(compute_mu(&[0.0], 3.0, 1, 1.0).is_err());
        assert!(compute_mu(&[0.0, 1.0], 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn mu_tolerates_summed_dwell_caps() {
        let ts: Vec<f64> = (0..4).map(|k| (0..k).map(|_| 0.1).sum()).collect();
        let next = ts[3] + 0.1;
        assert_eq!(compute_mu(&ts, next, 2, 0.1).unwrap(), ts[2]);
    }

    #[test]
    fn projection_example() {
        let gs = GramSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
            (0.0, 1.0),
        )
        .unwrap();
        let up = ls_update(&gs, &[5.0, 7.0]).unwrap();
        assert_eq!(up.new, vec![2.0, 7.0]);
        assert_eq!(up.rank, 1);
    }

    #[test]
    fn zero_gram_keeps_estimate() {
        let gs = GramSystem::zero(3, (1.0, 1.0));
        let up = ls_update(&gs, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(up.new, up.prev);
        assert_eq!(up.rank, 0);
        assert_eq!(up.distance(), 0.0);
    }

    #[test]
    fn nonsingular_gram_ignores_previous_estimate() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let theta = DVector::from_vec(vec![0.3, -1.2]);
        let gs = GramSystem::new(g.clone(), &g * &theta, (0.0, 1.0)).unwrap();
        for prev in [[0.0, 0.0], [10.0, -4.0]] {
            let up = ls_update(&gs, &prev).unwrap();
            assert!((up.new[0] - 0.3).abs() < 1e-14 && (up.new[1] + 1.2).abs() < 1e-14);
        }
    }

    #[test]
    fn gram_new_symmetrizes_and_checks_window() {
        let gs = GramSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            DVector::zeros(2),
            (0.0, 1.0),
        )
        .unwrap();
        assert_eq!(gs.g[(0, 1)], 1.0);
        assert_eq!(gs.g[(1, 0)], 1.0);
        assert!(GramSystem::new(DMatrix::zeros(1, 1), DVector::zeros(1), (2.0, 1.0)).is_err());
    }
}
