//! Derivative-free maximization and nonlinear least squares.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Result of a scalar maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(Maximum { x, value, evaluations })
}

/// Result of a bound-constrained compass search.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Compass (coordinate pattern) search maximizing `f` inside the box
/// `[lower, upper]`. Infeasible points should return `Ok(None)`.
pub fn compass_search_max<F>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    lower: &[f64],
    upper: &[f64],
    initial_step: f64,
    min_step: f64,
) -> Result<PatternResult>
where
    F: FnMut(&[f64]) -> Result<Option<f64>>,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut best = f0;
    let mut step = initial_step;
    let mut evaluations = 0;
    while step >= min_step {
        let mut improved = false;
        for i in 0..dim {
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] = (trial[i] + dir * step).clamp(lower[i], upper[i]);
                if trial[i] == x[i] {
                    continue;
                }
                evaluations += 1;
                if let Some(v) = f(&trial)? {
                    if v > best {
                        best = v;
                        x = trial;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(PatternResult { x, value: best, evaluations })
}

/// Settings for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    /// Stop when the relative decrease of the cost falls below this.
    pub cost_rtol: f64,
    /// Stop when the cost itself falls below this.
    pub cost_atol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            fd_step: 1e-6,
            cost_rtol: 1e-12,
            cost_atol: 1e-24,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: DVector<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Levenberg-Marquardt with a forward-difference Jacobian whose columns are
/// evaluated in parallel.
///
/// `residuals(x)` returns the residual vector; the objective is its squared norm.
pub fn levenberg_marquardt<F>(residuals: F, x0: DVector<f64>, opts: LmOptions) -> Result<LmResult>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = residuals(&x)?;
    let mut cost = r.norm_squared();
    let mut evaluations = 1;
    let mut lambda = 1e-3;
    let mut iterations = 0;

    while iterations < opts.max_iterations && cost > opts.cost_atol {
        iterations += 1;
        let m = r.len();
        let columns: Vec<DVector<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let h = opts.fd_step * x[j].abs().max(1.0);
                let mut xp = x.clone();
                xp[j] += h;
                Ok((residuals(&xp)? - &r) / h)
            })
            .collect::<Result<_>>()?;
        evaluations += n;
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for (j, c) in columns.iter().enumerate() {
            jac.set_column(j, c);
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut accepted = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            let rt = residuals(&trial)?;
            evaluations += 1;
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost;
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < opts.cost_rtol {
                    return Ok(LmResult { x, cost, iterations, evaluations });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(LmResult { x, cost, iterations, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_locates_parabola_peak() {
        let m = golden_section_max(|x| Ok(-(x - 0.37) * (x - 0.37)), 0.0, 1.0, 1e-9).unwrap();
        assert!((m.x - 0.37).abs() < 1e-8);
    }

    #[test]
    fn compass_search_respects_bounds() {
        let f = |x: &[f64]| Ok(Some(-(x[0] + 1.0).powi(2) - (x[1] - 0.3).powi(2)));
        let x0 = [0.5, 0.5];
        let f0 = f(&x0).unwrap().unwrap();
        let res = compass_search_max(f, &x0, f0, &[0.0, 0.0], &[1.0, 1.0], 0.1, 1e-8).unwrap();
        assert!(res.x[0].abs() < 1e-12);
        assert!((res.x[1] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn lm_solves_rosenbrock_residuals() {
        let res = levenberg_marquardt(
            |x| Ok(DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])),
            DVector::from_vec(vec![-1.2, 1.0]),
            LmOptions { max_iterations: 200, ..Default::default() },
        )
        .unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }
}
