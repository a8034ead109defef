//! Six-state ability process built from productivity moment targets.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AbilityProcess;
use crate::numerics::spectral::stationary_distribution;

pub use crate::model::mortality_adjusted_stationary;

/// Fraction of agents who are entrepreneurs in the baseline calibration.
pub const BASELINE_ENTREPRENEUR_SHARE: f64 = 0.115;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub sigma: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub pi_ew: f64,
    pub pi_we: f64,
    pub n_productivity_states: usize,
}

impl CalibrationTargets {
    pub fn baseline() -> Self {
        let pi_ew = 0.0192;
        let share = BASELINE_ENTREPRENEUR_SHARE;
        Self {
            sigma: 0.2473,
            skewness: -0.08,
            kurtosis: 6.22,
            pi_ew,
            pi_we: share * pi_ew / (1.0 - share),
            n_productivity_states: 5,
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(self.sigma > 0.0) {
            return bad("sigma", self.sigma, "must be positive");
        }
        if !(self.kurtosis >= 1.0 + self.skewness * self.skewness) {
            return bad("kurtosis", self.kurtosis, "must be at least 1 + skewness^2");
        }
        if !(self.pi_ew > 0.0 && self.pi_ew < 1.0) {
            return bad("pi_ew", self.pi_ew, "must lie in (0,1)");
        }
        if !(self.pi_we > 0.0 && self.pi_we < 1.0) {
            return bad("pi_we", self.pi_we, "must lie in (0,1)");
        }
        if self.n_productivity_states != 5 {
            return bad(
                "n_productivity_states",
                self.n_productivity_states as f64,
                "only the five-point support is supported",
            );
        }
        Ok(())
    }
}

/// Standardized support points: five values evenly spaced on `[-sqrt(10), sqrt(10)]`.
pub fn standardized_support() -> [f64; 5] {
    let e = 10f64.sqrt();
    [-e, -0.5 * e, 0.0, 0.5 * e, e]
}

/// Log productivities and their maximum-entropy probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductivityGrid {
    pub log_a: Vec<f64>,
    pub p_a: Vec<f64>,
    /// Gradient sup-norm of the dual at the solution.
    pub dual_gradient: f64,
    pub iterations: usize,
}

/// Maximum-entropy distribution on the fixed support matching mean 0,
/// standard deviation `sigma`, and the given skewness and kurtosis.
///
/// Works in standardized units and minimizes the convex dual
/// `log Σ exp(λ·T(z_i)) − λ·m` by damped Newton steps.
pub fn discretize_productivity(targets: &CalibrationTargets) -> Result<ProductivityGrid> {
    targets.validate()?;
    let z = standardized_support();
    let feats: Vec<Vector4<f64>> = z.iter().map(|&v| Vector4::new(v, v * v, v * v * v, v * v * v * v)).collect();
    let m = Vector4::new(0.0, 1.0, targets.skewness, targets.kurtosis);

    let dual = |lam: &Vector4<f64>| -> (f64, Vec<f64>) {
        let e: Vec<f64> = feats.iter().map(|t| lam.dot(t)).collect();
        let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
        let zsum: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|v| v / zsum).collect();
        (mx + zsum.ln() - lam.dot(&m), p)
    };

    let mut lam = Vector4::<f64>::zeros();
    let (mut f, mut p) = dual(&lam);
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for it in 0..500 {
        iterations = it;
        let mut mean = Vector4::<f64>::zeros();
        for (pi, t) in p.iter().zip(&feats) {
            mean += t * *pi;
        }
        let grad = mean - m;
        grad_norm = grad.amax();
        if grad_norm < 1e-10 {
            break;
        }
        let mut hess = Matrix4::<f64>::zeros();
        for (pi, t) in p.iter().zip(&feats) {
            let d = t - mean;
            hess += d * d.transpose() * *pi;
        }
        let step = hess
            .lu()
            .solve(&(-grad))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or(-grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial = lam + step * t;
            let (ft, pt) = dual(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * grad.dot(&step) {
                lam = trial;
                f = ft;
                p = pt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || lam.amax() > 1e6 {
            break;
        }
    }
    if grad_norm >= 1e-10 {
        return Err(Error::InfeasibleMoments(format!(
            "dual gradient stalled at {grad_norm:e} with multipliers {:?}",
            lam.as_slice()
        )));
    }
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InfeasibleMoments("solution puts zero mass on a support point".into()));
    }
    Ok(ProductivityGrid {
        log_a: z.iter().map(|v| v * targets.sigma).collect(),
        p_a: p,
        dual_gradient: grad_norm,
        iterations,
    })
}

/// Combined worker/entrepreneur transition matrix with i.i.d. productivity
/// among entrepreneurs; state 0 is the pure worker.
pub fn build_transition(targets: &CalibrationTargets, p_a: &[f64]) -> DMatrix<f64> {
    let n = p_a.len() + 1;
    let mut pi = DMatrix::<f64>::zeros(n, n);
    pi[(0, 0)] = 1.0 - targets.pi_we;
    for i in 1..n {
        pi[(i, 0)] = targets.pi_ew;
    }
    for (j, pj) in p_a.iter().enumerate() {
        pi[(0, j + 1)] = targets.pi_we * pj;
        for i in 1..n {
            pi[(i, j + 1)] = (1.0 - targets.pi_ew) * pj;
        }
    }
    pi
}

/// Assembles the ability process; newborns draw states from the stationary distribution of the chain.
pub fn build_ability_process(
    targets: &CalibrationTargets,
    grid: &ProductivityGrid,
    upsilon: f64,
) -> Result<AbilityProcess> {
    let pi = build_transition(targets, &grid.p_a);
    let newborn = stationary_distribution(&pi)?;
    let mut productivities = vec![0.0];
    productivities.extend(grid.log_a.iter().map(|v| v.exp()));
    AbilityProcess::new(productivities, pi, newborn, upsilon)
}

/// Discretizes and assembles in one step.
pub fn calibrate(targets: &CalibrationTargets, upsilon: f64) -> Result<AbilityProcess> {
    let grid = discretize_productivity(targets)?;
    build_ability_process(targets, &grid, upsilon)
}

/// Realized mean, standard deviation, skewness and kurtosis of a discrete distribution.
pub fn moments(x: &[f64], p: &[f64]) -> [f64; 4] {
    let mean: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
    let c = |k: i32| -> f64 { x.iter().zip(p).map(|(a, b)| (a - mean).powi(k) * b).sum() };
    let var = c(2);
    let sd = var.sqrt();
    [mean, sd, c(3) / (sd * var), c(4) / (var * var)]
}

pub fn entrepreneur_share(process: &AbilityProcess, dist: &DVector<f64>) -> f64 {
    (0..process.n_states).filter(|&n| process.is_entrepreneur(n)).map(|n| dist[n]).sum()
}
