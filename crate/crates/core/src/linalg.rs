//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Builds an `rows × cols` matrix from nested row-major data.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::dim("matrix row length", c, bad.len()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Solves `A'P + PA = -I` through the Kronecker form. Only meant for the
/// small (n ≤ 10) matrices of the built-in models.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("Lyapunov matrix columns", n, a.ncols()));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(A'P + PA) = (I ⊗ A' + A' ⊗ I) vec(P) for column-major vec.
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(eye.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Model("Lyapunov equation is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral (induced 2-) norm.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

/// Numerical rank with singular values below `rel_tol · σ_max` treated as zero.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// A unit vector `v` minimizing `|A v|`, i.e. the right singular vector of the
/// smallest singular value.
pub fn smallest_right_singular_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.ncols();
    // Pad with zero rows so the thin SVD returns a full V.
    let padded = if a.nrows() < n {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) });
    v_t.row(idx).transpose()
}

/// Estimates `M ≥ 1` with `|exp(t A)| ≤ M exp(-ω t)` on a uniform grid of
/// `points` times over `[0, horizon]`.
pub fn estimate_exp_bound(a: &DMatrix<f64>, omega: f64, horizon: f64, points: usize) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("closed-loop matrix columns", n, a.ncols()));
    }
    if !(omega > 0.0) || !(horizon > 0.0) || points < 2 {
        return Err(Error::invalid("exp bound needs ω > 0, horizon > 0 and at least two grid points"));
    }
    let alpha = spectral_abscissa(a);
    if alpha > -omega {
        return Err(Error::Model(format!(
            "closed loop has spectral abscissa {alpha:.6e}, not below the required rate -ω = {:.6e}",
            -omega
        )));
    }
    let h = horizon / (points - 1) as f64;
    let step = (a * h).exp();
    let mut e = DMatrix::<f64>::identity(n, n);
    let mut m: f64 = 1.0;
    for k in 1..points {
        e = &e * &step;
        let t = k as f64 * h;
        m = m.max(spectral_norm(&e) * (omega * t).exp());
    }
    Ok(m)
}
