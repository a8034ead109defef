//! Scalar root finding.

use crate::error::{Error, Result};

/// Outcome of a bracketed root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

/// Brent's method on a sign-changing bracket `[a, b]`.
///
/// Terminates when the bracket is narrower than `xtol` (plus a few ulps of
/// the iterate) or when `|f(x)| <= ftol`.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, ftol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    brent_with_values(f, a, fa, b, fb, xtol, ftol, max_iter)
}

/// Brent's method when the endpoint values are already known.
#[allow(clippy::too_many_arguments)]
pub fn brent_with_values<F>(
    mut f: F,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, evaluations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, evaluations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket(format!(
            "f({a}) = {fa:e} and f({b}) = {fb:e} share a sign"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    let mut evaluations = 0;

    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb.abs() <= ftol {
            return Ok(Root { x: b, fx: fb, evaluations });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
        evaluations += 1;
    }
    Err(Error::NonConvergence {
        what: "brent root search",
        iterations: max_iter,
        residual: fb.abs(),
    })
}

/// Plain bisection for a function whose sign change is guaranteed on `[lo, hi]`.
/// `positive_at_lo` gives the sign convention; returns the midpoint of the final bracket.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, positive_at_lo: bool, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
