//! Perron roots and stationary distributions of small nonnegative matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Spectral radius of an entrywise nonnegative square matrix.
///
/// Power iteration on a positive start vector, stopped when the
/// Collatz-Wielandt bounds `min (Mx)_i/x_i <= rho <= max (Mx)_i/x_i`
/// are within `tol` relative. Falls back to a full eigenvalue solve when
/// the bounds stall, e.g. for periodic or reducible inputs.
pub fn perron_root(m: &DMatrix<f64>, tol: f64) -> f64 {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..5_000 {
        let y = m * &x;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            if x[i] > 0.0 {
                let q = y[i] / x[i];
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        let s = y.sum();
        if !(s > 0.0) {
            break;
        }
        if hi - lo <= tol * hi.max(f64::MIN_POSITIVE) {
            return 0.5 * (lo + hi);
        }
        x = y / s;
    }
    spectral_radius_dense(m)
}

/// Largest eigenvalue modulus from the real Schur form.
pub fn spectral_radius_dense(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Stationary distribution `p = Pᵀp`, `Σp = 1`, of a row-stochastic matrix,
/// found by replacing one balance equation with the normalization.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut lhs = DMatrix::<f64>::identity(n, n) - p.transpose();
    let mut rhs = DVector::<f64>::zeros(n);
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("transition matrix is not irreducible".into()))?;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::Domain("stationary distribution is not a probability vector".into()));
    }
    let clipped = sol.map(|v| v.max(0.0));
    let s = clipped.sum();
    Ok(clipped / s)
}

/// True when every state reaches every other state through positive entries.
pub fn is_irreducible(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if p[(i, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|s| *s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perron_root_of_positive_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((perron_root(&m, 1e-13) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_matrix_uses_dense_fallback() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.5, 0.0]);
        assert!((perron_root(&m, 1e-13) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_two_state_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let s = stationary_distribution(&p).unwrap();
        assert!((s[0] - 0.75).abs() < 1e-14);
        assert!(is_irreducible(&p));
        assert!(!is_irreducible(&DMatrix::identity(2, 2)));
    }
}
