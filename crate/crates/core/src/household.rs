//! The household problem: portfolio weights, value coefficients and decision rules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{box_cox_unchecked, state_returns, AbilityProcess, ModelParams, Prices, StateReturns};
use crate::numerics::roots::bisect;

/// Everything the household needs to know about its environment.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub params: &'a ModelParams,
    pub ability: &'a AbilityProcess,
    pub prices: &'a Prices,
    pub returns: &'a StateReturns,
}

impl<'a> Context<'a> {
    pub fn new(
        params: &'a ModelParams,
        ability: &'a AbilityProcess,
        prices: &'a Prices,
        returns: &'a StateReturns,
    ) -> Self {
        Self { params, ability, prices, returns }
    }

    fn n(&self) -> usize {
        self.ability.n_states
    }

    /// Gross total-wealth return in state `m` for capital weight `theta`.
    fn gross(&self, m: usize, theta: f64) -> f64 {
        ((1.0 + self.returns.r[m]) * theta + self.prices.gross_rate * (1.0 - theta)) / self.params.upsilon
    }

    /// Excess return of capital over bonds in state `m`, per unit of total wealth.
    fn spread(&self, m: usize) -> f64 {
        (1.0 + self.returns.r[m] - self.prices.gross_rate) / self.params.upsilon
    }
}

/// Borrowing-regime classification for a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StrictlyBinding,
    BarelyBinding,
    Slack,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::StrictlyBinding => "strictly_binding",
            Regime::BarelyBinding => "barely_binding",
            Regime::Slack => "slack",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `g_n(theta; a) = Σ π_nm ν_γ(a_m R_m(theta))`.
pub fn portfolio_objective(ctx: &Context, n: usize, theta: f64, a: &[f64]) -> Result<f64> {
    let gamma = ctx.params.gamma;
    let mut g = 0.0;
    for m in 0..ctx.n() {
        let p = ctx.ability.transition[(n, m)];
        if p == 0.0 {
            continue;
        }
        let x = a[m] * ctx.gross(m, theta);
        if !(x > 0.0) {
            return Err(Error::Domain(format!("a_m R_m(theta) = {x} is not positive")));
        }
        g += p * box_cox_unchecked(x, gamma);
    }
    Ok(g)
}

/// Analytic derivative of [`portfolio_objective`] in `theta`.
pub fn portfolio_derivative(ctx: &Context, n: usize, theta: f64, a: &[f64]) -> f64 {
    let gamma = ctx.params.gamma;
    let mut d = 0.0;
    for m in 0..ctx.n() {
        let p = ctx.ability.transition[(n, m)];
        if p == 0.0 {
            continue;
        }
        let x = a[m] * ctx.gross(m, theta);
        d += p * a[m] * (-gamma * x.ln()).exp() * ctx.spread(m);
    }
    d
}

/// Maximizer of `g_n(·; a)` on `[0, 1]`, by bisection on the derivative.
///
/// When capital and bonds pay the same in every reachable state the
/// objective is flat and 0 is returned.
pub fn optimal_theta(ctx: &Context, n: usize, a: &[f64]) -> f64 {
    let flat = (0..ctx.n()).all(|m| ctx.ability.transition[(n, m)] == 0.0 || ctx.spread(m).abs() < 1e-15);
    if flat {
        return 0.0;
    }
    let d0 = portfolio_derivative(ctx, n, 0.0, a);
    if d0 <= 0.0 {
        return 0.0;
    }
    let d1 = portfolio_derivative(ctx, n, 1.0, a);
    if d1 >= 0.0 {
        return 1.0;
    }
    bisect(|t| portfolio_derivative(ctx, n, t, a), 0.0, 1.0, true, 1e-12)
}

/// Log of the certainty-equivalent growth `κ_n = ν_γ^{-1}(g_n)`.
pub fn log_kappa(ctx: &Context, n: usize, theta: f64, a: &[f64]) -> f64 {
    let gamma = ctx.params.gamma;
    if gamma == 1.0 {
        return (0..ctx.n())
            .map(|m| ctx.ability.transition[(n, m)] * (a[m] * ctx.gross(m, theta)).ln())
            .sum();
    }
    let e = 1.0 - gamma;
    let terms: Vec<(f64, f64)> = (0..ctx.n())
        .filter(|&m| ctx.ability.transition[(n, m)] > 0.0)
        .map(|m| (ctx.ability.transition[(n, m)], e * (a[m] * ctx.gross(m, theta)).ln()))
        .collect();
    let mx = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|(p, v)| p * (v - mx).exp()).sum();
    (mx + s.ln()) / e
}

/// One application of the Bellman map in log coefficients.
/// Returns the image and the maximizing weights.
pub fn bellman_map(ctx: &Context, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = ctx.params;
    let a: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let constant = (1.0 - p.beta) * ((1.0 - p.beta) / (1.0 + p.tau_c)).ln() + p.beta * p.beta.ln();
    let thetas: Vec<f64> = (0..ctx.n()).map(|n| optimal_theta(ctx, n, &a)).collect();
    let image = (0..ctx.n()).map(|n| constant + p.beta * log_kappa(ctx, n, thetas[n], &a)).collect();
    (image, thetas)
}

/// Jacobian of the Bellman map in log coefficients (weights held at their optimum).
fn bellman_jacobian(ctx: &Context, x: &[f64], thetas: &[f64]) -> DMatrix<f64> {
    let n = ctx.n();
    let e = 1.0 - ctx.params.gamma;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let logs: Vec<f64> = (0..n).map(|m| e * (x[m] + ctx.gross(m, thetas[i]).ln())).collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = (0..n).map(|m| ctx.ability.transition[(i, m)] * (logs[m] - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        for m in 0..n {
            jac[(i, m)] = ctx.params.beta * w[m] / s;
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueSolverOptions {
    /// Sup-norm tolerance on `|Tx − x|`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Newton steps on `x − Tx = 0`, accepted only when they reduce the residual.
    pub accelerate: bool,
}

impl Default for ValueSolverOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iterations: 10_000, accelerate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub residual: f64,
    /// Residual after each iteration.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Solved household problem at given prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySolution {
    pub prices: Prices,
    pub a_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `growth[(n, m)] = β R_m(θ*_n)`.
    #[serde(serialize_with = "crate::model::rows::serialize")]
    pub growth: DMatrix<f64>,
    pub returns: StateReturns,
    pub regime: Vec<Regime>,
    pub convergence: Convergence,
}

impl PolicySolution {
    /// Regime of the first entrepreneurial state, which under i.i.d.
    /// productivity is shared by all of them.
    pub fn entrepreneur_regime(&self, ability: &AbilityProcess) -> Regime {
        (0..ability.n_states)
            .find(|&n| ability.is_entrepreneur(n))
            .map(|n| self.regime[n])
            .unwrap_or(Regime::Slack)
    }
}

/// Solves for the value coefficients starting from `x0 = log a` (zeros if `None`).
pub fn solve_value_coefficients(
    ctx: &Context,
    x0: Option<&[f64]>,
    opts: &ValueSolverOptions,
) -> Result<PolicySolution> {
    let n = ctx.n();
    let mut x: Vec<f64> = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let (mut tx, mut thetas) = bellman_map(ctx, &x);
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let mut residual = sup(&tx, &x);
    let mut history = vec![residual];
    let mut iterations = 0;

    while residual >= opts.tol {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence { what: "value coefficient iteration", iterations, residual });
        }
        iterations += 1;
        let mut next = tx.clone();
        if opts.accelerate {
            let jac = DMatrix::<f64>::identity(n, n) - bellman_jacobian(ctx, &x, &thetas);
            let f = DVector::from_iterator(n, x.iter().zip(&tx).map(|(a, b)| a - b));
            if let Some(step) = jac.lu().solve(&f) {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
                if cand.iter().all(|v| v.is_finite()) {
                    let (tc, _) = bellman_map(ctx, &cand);
                    // Compare against the residual a plain step would leave.
                    if sup(&tc, &cand) < ctx.params.beta * residual {
                        next = cand;
                    }
                }
            }
        }
        x = next;
        let (t, th) = bellman_map(ctx, &x);
        tx = t;
        thetas = th;
        residual = sup(&tx, &x);
        history.push(residual);
    }
    // One last plain step so the returned point is an image of the map.
    let x = tx;
    let (_, thetas) = bellman_map(ctx, &x);
    let a_star: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let kappa: Vec<f64> = (0..n).map(|i| log_kappa(ctx, i, thetas[i], &a_star).exp()).collect();
    let mut growth = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for m in 0..n {
            growth[(i, m)] = ctx.params.beta * ctx.gross(m, thetas[i]);
        }
    }
    let regime = classify(ctx, &a_star, &thetas, DEFAULT_REGIME_TOL);
    Ok(PolicySolution {
        prices: *ctx.prices,
        a_star,
        theta_star: thetas,
        kappa,
        growth,
        returns: ctx.returns.clone(),
        regime,
        convergence: Convergence { iterations, residual, history },
    })
}

/// Convenience: computes state returns and solves the household problem.
pub fn solve_at_prices(
    params: &ModelParams,
    ability: &AbilityProcess,
    prices: &Prices,
    x0: Option<&[f64]>,
    opts: &ValueSolverOptions,
) -> Result<PolicySolution> {
    let returns = state_returns(params, ability, prices)?;
    let ctx = Context::new(params, ability, prices, &returns);
    solve_value_coefficients(&ctx, x0, opts)
}

/// Residual of the value-coefficient equations evaluated by direct substitution.
pub fn fixed_point_residual(ctx: &Context, a: &[f64]) -> f64 {
    let x: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let (tx, _) = bellman_map(ctx, &x);
    tx.iter().zip(&x).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Consumption, capital, labor demand and bond holdings of an agent with total wealth `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decisions {
    pub consumption: f64,
    pub capital: f64,
    pub labor: f64,
    pub bonds: f64,
}

pub fn decision_rules(s: f64, n: usize, sol: &PolicySolution, params: &ModelParams) -> Result<Decisions> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("total wealth must be positive, got {s}")));
    }
    let theta = sol.theta_star[n];
    let save = params.beta / params.upsilon * s;
    Ok(Decisions {
        consumption: (1.0 - params.beta) * s / (1.0 + params.tau_c),
        capital: save * theta,
        labor: save * theta * sol.returns.ell[n],
        bonds: -sol.returns.h / sol.prices.gross_rate + save * (1.0 - theta),
    })
}

/// Normalized-derivative tolerance separating barely from strictly binding.
pub const DEFAULT_REGIME_TOL: f64 = 1e-8;

/// Normalized one-sided derivative `g_n'(1) / |g_n(1)|`.
pub fn normalized_edge_derivative(ctx: &Context, n: usize, a: &[f64]) -> f64 {
    let d = portfolio_derivative(ctx, n, 1.0, a);
    let g = portfolio_objective(ctx, n, 1.0, a).unwrap_or(f64::NAN).abs();
    d / g.max(f64::MIN_POSITIVE)
}

fn classify(ctx: &Context, a: &[f64], thetas: &[f64], tol: f64) -> Vec<Regime> {
    (0..ctx.n())
        .map(|n| {
            let d = normalized_edge_derivative(ctx, n, a);
            if thetas[n] < 1.0 && d < -tol {
                Regime::Slack
            } else if d > tol {
                Regime::StrictlyBinding
            } else {
                Regime::BarelyBinding
            }
        })
        .collect()
}

/// Per-state borrowing regime with tolerance `tol` on the normalized edge derivative.
pub fn classify_regime(sol: &PolicySolution, ctx: &Context, tol: f64) -> Vec<Regime> {
    classify(ctx, &sol.a_star, &sol.theta_star, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, CalibrationTargets};

    fn baseline() -> (ModelParams, AbilityProcess, Prices) {
        let params = ModelParams::baseline();
        let ability = calibrate(&CalibrationTargets::baseline(), params.upsilon).unwrap();
        (params, ability, Prices::new(1.017_27, 1.267_06))
    }

    #[test]
    fn objective_is_concave_and_derivative_matches_fd() {
        let (p, ab, pr) = baseline();
        let ret = state_returns(&p, &ab, &pr).unwrap();
        let ctx = Context::new(&p, &ab, &pr, &ret);
        let a = vec![1.1, 0.9, 1.0, 1.2, 0.8, 1.05];
        for n in 0..6 {
            for k in 1..20 {
                let t = k as f64 / 20.0;
                let e = 1e-6;
                let fd = (portfolio_objective(&ctx, n, t + e, &a).unwrap()
                    - portfolio_objective(&ctx, n, t - e, &a).unwrap())
                    / (2.0 * e);
                let an = portfolio_derivative(&ctx, n, t, &a);
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0));
            }
        }
    }

    #[test]
    fn baseline_weights_and_regimes() {
        let (p, ab, pr) = baseline();
        let sol = solve_at_prices(&p, &ab, &pr, None, &ValueSolverOptions::default()).unwrap();
        assert_eq!(sol.theta_star[0], 0.0);
        for n in 1..6 {
            assert_eq!(sol.theta_star[n], 1.0);
            assert_eq!(sol.regime[n], Regime::StrictlyBinding);
        }
        assert!(sol.growth.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn plain_and_accelerated_iterations_agree() {
        let (p, ab, pr) = baseline();
        let plain = ValueSolverOptions { accelerate: false, ..Default::default() };
        let s1 = solve_at_prices(&p, &ab, &pr, None, &plain).unwrap();
        let s2 = solve_at_prices(&p, &ab, &pr, None, &ValueSolverOptions::default()).unwrap();
        for (a, b) in s1.a_star.iter().zip(&s2.a_star) {
            assert!((a.ln() - b.ln()).abs() < 1e-10);
        }
        assert!(s2.convergence.iterations < s1.convergence.iterations);
    }

    #[test]
    fn decision_rules_budget_identity() {
        let (p, ab, pr) = baseline();
        let sol = solve_at_prices(&p, &ab, &pr, None, &ValueSolverOptions::default()).unwrap();
        for n in 0..6 {
            for s in [1.0, 22.9, 500.0] {
                let d = decision_rules(s, n, &sol, &p).unwrap();
                let lhs = (1.0 + p.tau_c) * d.consumption + p.upsilon * d.capital
                    + p.upsilon * (d.bonds - sol.returns.b_bar);
                assert!((lhs - s).abs() < 1e-12 * s.max(1.0));
            }
        }
        assert!(decision_rules(0.0, 0, &sol, &p).is_err());
    }
}
