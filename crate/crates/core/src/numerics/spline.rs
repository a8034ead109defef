//! Natural cubic interpolating splines.

/// Natural cubic spline through `(x_i, y_i)` with zero second derivative
/// at both ends. Requires strictly increasing `x` and at least two knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        assert!(x.len() == y.len() && x.len() >= 2, "spline needs matching knots");
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self { x: x.to_vec(), y: y.to_vec(), m }
    }

    /// Evaluates the spline; outside the knot range it extends linearly.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slope_at(0) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slope_at(n - 1) * (t - self.x[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn slope_at(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i == 0 {
            let h = self.x[1] - self.x[0];
            (self.y[1] - self.y[0]) / h - h * (2.0 * self.m[0] + self.m[1]) / 6.0
        } else {
            let h = self.x[n - 1] - self.x[n - 2];
            (self.y[n - 1] - self.y[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_exactly() {
        let s = CubicSpline::new(&[0.0, 1.0, 3.0, 7.0], &[1.0, 3.0, 7.0, 15.0]);
        for t in [-1.0, 0.5, 2.0, 5.5, 9.0] {
            assert!((s.eval(t) - (1.0 + 2.0 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_knots_and_is_c1() {
        let x = [1.0, 5.0, 10.0, 20.0, 50.0, 100.0];
        let y = [0.3, -0.2, 0.1, 0.05, 0.0, 0.0];
        let s = CubicSpline::new(&x, &y);
        for (xi, yi) in x.iter().zip(y) {
            assert!((s.eval(*xi) - yi).abs() < 1e-14);
        }
        let e = 1e-6;
        let left = (s.eval(10.0) - s.eval(10.0 - e)) / e;
        let right = (s.eval(10.0 + e) - s.eval(10.0)) / e;
        assert!((left - right).abs() < 1e-4);
    }

    #[test]
    fn approximates_smooth_function() {
        let x: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = CubicSpline::new(&x, &y);
        assert!((s.eval(4.25) - 4.25f64.sin()).abs() < 2e-3);
    }
}
