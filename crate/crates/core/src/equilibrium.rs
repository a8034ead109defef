//! Market clearing, welfare and tax revenue in stationary equilibrium.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::household::{solve_at_prices, PolicySolution, Regime, ValueSolverOptions};
use crate::model::{AbilityProcess, ModelParams, Prices};
use crate::numerics::roots::brent;
use crate::wealth::MellinEvaluator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSettings {
    /// Sup-norm tolerance on the two excess demands.
    pub tol: f64,
    pub max_iterations: usize,
    /// Search box for the gross rate; the lower end is the survival probability.
    pub r_upper_factor: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub initial_guess: Prices,
    pub value: ValueSolverOptions,
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 60,
            r_upper_factor: 1.5,
            omega_min: 0.1,
            omega_max: 10.0,
            initial_guess: Prices::new(1.017, 1.27),
            value: ValueSolverOptions::default(),
        }
    }
}

/// Aggregates of one occupation group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GroupAggregates {
    pub population: f64,
    pub total_wealth: f64,
    pub consumption: f64,
    pub capital: f64,
    pub bonds: f64,
    pub labor_demand: f64,
}

impl GroupAggregates {
    fn add(&mut self, other: &GroupAggregates) {
        self.population += other.population;
        self.total_wealth += other.total_wealth;
        self.consumption += other.consumption;
        self.capital += other.capital;
        self.bonds += other.bonds;
        self.labor_demand += other.labor_demand;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    /// `E(S)`.
    pub total_wealth: f64,
    pub bonds: f64,
    pub labor: f64,
    pub capital: f64,
    /// Consumption net of the consumption tax.
    pub consumption: f64,
    pub workers: GroupAggregates,
    pub entrepreneurs: GroupAggregates,
    pub by_state: Vec<GroupAggregates>,
}

/// Stationary revenue by tax base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revenue {
    pub labor: f64,
    pub consumption: f64,
    pub capital: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryEquilibrium {
    pub params: ModelParams,
    pub prices: Prices,
    pub policy: PolicySolution,
    #[serde(skip)]
    pub ability: AbilityProcess,
    #[serde(skip)]
    pub mellin: MellinEvaluator,
    pub aggregates: Aggregates,
    pub welfare: f64,
    pub revenue: Revenue,
    /// Spectral radius of `A(1)`.
    pub rho_a1: f64,
    pub excess_bonds: f64,
    pub excess_labor: f64,
    pub iterations: usize,
}

impl StationaryEquilibrium {
    pub fn regime(&self) -> Regime {
        self.policy.entrepreneur_regime(&self.ability)
    }

    pub fn h(&self) -> f64 {
        self.policy.returns.h
    }

    /// Pre-tax net risk-free rate `(R − 1)/(1 − τ_K)`.
    pub fn pretax_rate(&self) -> f64 {
        (self.prices.gross_rate - 1.0) / (1.0 - self.params.tau_k)
    }

    pub fn pareto_exponent(&self) -> Result<f64> {
        self.mellin.pareto_exponent()
    }

    /// Output net of depreciation minus consumption and tax revenue; zero
    /// when the goods market clears.
    pub fn goods_market_residual(&self) -> Result<f64> {
        goods_market_residual(self)
    }
}

/// Aggregate bond and labor demands at the policy's prices.
pub fn aggregate_demands(params: &ModelParams, policy: &PolicySolution, mellin: &MellinEvaluator) -> Result<(f64, f64)> {
    let y = mellin.weights_real(1.0)?;
    let h = policy.returns.h;
    let scale = (1.0 - params.upsilon) / params.upsilon * params.beta * h;
    let mut bonds = 0.0;
    let mut labor = 0.0;
    for n in 0..y.len() {
        let th = policy.theta_star[n];
        bonds += y[n] * (1.0 - th);
        labor += y[n] * th * policy.returns.ell[n];
    }
    Ok((scale * bonds - h / policy.prices.gross_rate, scale * labor))
}

/// Solved household problem and wealth transform at trial prices.
pub struct Evaluation {
    pub policy: PolicySolution,
    pub mellin: MellinEvaluator,
    pub excess: Result<(f64, f64)>,
}

/// Excess demands `(E(B), E(L) − 1)` at `prices`; the household solve is
/// warm-started from `x0` when given.
pub fn evaluate(
    params: &ModelParams,
    ability: &AbilityProcess,
    prices: &Prices,
    x0: Option<&[f64]>,
    opts: &ValueSolverOptions,
) -> Result<Evaluation> {
    let policy = solve_at_prices(params, ability, prices, x0, opts)?;
    let mellin = MellinEvaluator::new(&policy, ability, params.upsilon);
    let excess = aggregate_demands(params, &policy, &mellin).map(|(b, l)| (b, l - 1.0));
    Ok(Evaluation { policy, mellin, excess })
}

struct Solver<'a> {
    params: &'a ModelParams,
    ability: &'a AbilityProcess,
    settings: &'a EquilibriumSettings,
    warm: Option<Vec<f64>>,
    evaluations: usize,
}

impl<'a> Solver<'a> {
    fn r_bounds(&self) -> (f64, f64) {
        (self.params.upsilon, self.settings.r_upper_factor / self.params.beta)
    }

    fn eval(&mut self, r: f64, omega: f64) -> Result<(f64, f64)> {
        self.evaluations += 1;
        let prices = Prices::new(r, omega);
        let ev = evaluate(self.params, self.ability, &prices, self.warm.as_deref(), &self.settings.value)?;
        if ev.excess.is_ok() {
            self.warm = Some(ev.policy.a_star.iter().map(|a| a.ln()).collect());
        }
        ev.excess
    }

    fn in_box(&self, r: f64, omega: f64) -> bool {
        let (lo, hi) = self.r_bounds();
        r > lo && r < hi && omega > self.settings.omega_min && omega < self.settings.omega_max
    }

    /// Newton iteration with a forward-difference Jacobian and step halving.
    fn newton(&mut self, start: Prices) -> Option<Prices> {
        let mut x = Vector2::new(start.gross_rate, start.omega);
        let mut f = match self.eval(x[0], x[1]) {
            Ok((b, l)) => Vector2::new(b, l),
            Err(_) => return None,
        };
        for _ in 0..self.settings.max_iterations {
            if f.amax() <= self.settings.tol {
                return Some(Prices::new(x[0], x[1]));
            }
            let mut jac = Matrix2::zeros();
            for j in 0..2 {
                let h = 1e-7 * x[j].abs().max(1e-3);
                let mut xp = x;
                xp[j] += h;
                let fp = self.eval(xp[0], xp[1]).ok()?;
                jac[(0, j)] = (fp.0 - f[0]) / h;
                jac[(1, j)] = (fp.1 - f[1]) / h;
            }
            let step = jac.lu().solve(&(-f))?;
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-4 {
                let trial = x + step * t;
                if self.in_box(trial[0], trial[1]) {
                    if let Ok((b, l)) = self.eval(trial[0], trial[1]) {
                        let ft = Vector2::new(b, l);
                        if ft.norm() < f.norm() {
                            x = trial;
                            f = ft;
                            accepted = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        (f.amax() <= self.settings.tol).then(|| Prices::new(x[0], x[1]))
    }

    /// Bond-clearing rate at a fixed wage, or `None` if bonds cannot clear.
    fn clear_bonds(&mut self, omega: f64) -> Result<Option<f64>> {
        let (lo, hi) = self.r_bounds();
        // Divergent wealth counts as an excess demand for bonds.
        let big = 1e6;
        let f = |s: &mut Self, r: f64| -> Result<f64> {
            match s.eval(r, omega) {
                Ok((b, _)) => Ok(b),
                Err(Error::DivergentMoment { .. }) | Err(Error::NonConvergence { .. }) => Ok(big),
                Err(e) => Err(e),
            }
        };
        // Scan upward from just above the survival probability for a sign change.
        let grid: Vec<f64> = (1..=60).map(|i| lo + (hi - lo) * (i as f64 / 61.0).powi(2)).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &r in &grid {
            let v = f(self, r)?;
            if let Some((rp, vp)) = prev {
                if vp < 0.0 && v >= 0.0 {
                    let root = brent(|x| f(self, x), rp, r, 1e-14, 1e-13, 200)?;
                    return Ok(Some(root.x));
                }
            }
            prev = Some((r, v));
        }
        Ok(None)
    }

    /// Nested bracketing: bonds clear in `R` for every trial wage, labor clears in the wage.
    fn nested(&mut self) -> Result<Prices> {
        let (wmin, wmax) = (self.settings.omega_min, self.settings.omega_max);
        let labor_at = |s: &mut Self, omega: f64| -> Result<Option<(f64, f64)>> {
            match s.clear_bonds(omega)? {
                Some(r) => Ok(Some((r, s.eval(r, omega)?.1))),
                None => Ok(None),
            }
        };
        let grid: Vec<f64> = (0..=24).map(|i| wmin * (wmax / wmin).powf(i as f64 / 24.0)).collect();
        let tol = self.settings.tol;
        let mut prev: Option<(f64, f64)> = None;
        for &w in &grid {
            let Some((_, l)) = labor_at(self, w)? else {
                prev = None;
                continue;
            };
            if let Some((wp, lp)) = prev {
                if lp.signum() != l.signum() {
                    let root = brent(
                        |x| match labor_at(self, x)? {
                            Some((_, v)) => Ok(v),
                            None => Err(Error::EquilibriumNotFound(format!("bonds cannot clear at wage {x}"))),
                        },
                        wp,
                        w,
                        1e-14,
                        tol,
                        200,
                    )?;
                    let r = self.clear_bonds(root.x)?.expect("bracketed wage clears bonds");
                    return Ok(Prices::new(r, root.x));
                }
            }
            prev = Some((w, l));
        }
        Err(Error::EquilibriumNotFound(format!(
            "no wage in ({wmin}, {wmax}) clears the labor market once bonds clear"
        )))
    }
}

/// Finds market-clearing prices and evaluates the full equilibrium.
pub fn solve_equilibrium(
    params: &ModelParams,
    ability: &AbilityProcess,
    settings: &EquilibriumSettings,
) -> Result<StationaryEquilibrium> {
    if !(0..ability.n_states).any(|n| ability.is_entrepreneur(n)) {
        return Err(Error::EquilibriumNotFound("no state can employ labor".into()));
    }
    let mut solver = Solver { params, ability, settings, warm: None, evaluations: 0 };
    let prices = match solver.newton(settings.initial_guess) {
        Some(p) => p,
        None => {
            solver.warm = None;
            let p = solver.nested()?;
            // Polish the bracketed solution.
            solver.newton(p).unwrap_or(p)
        }
    };
    let iterations = solver.evaluations;
    build_equilibrium(params, ability, &prices, settings, iterations)
}

/// Newton solves from five dispersed starts; distinct converged roots, sorted by `R`.
pub fn find_all_equilibria(
    params: &ModelParams,
    ability: &AbilityProcess,
    settings: &EquilibriumSettings,
) -> Vec<Prices> {
    let g = settings.initial_guess;
    let starts = [
        g,
        Prices::new(1.0 + 0.5 * (g.gross_rate - 1.0), 0.8 * g.omega),
        Prices::new(1.0 + 1.5 * (g.gross_rate - 1.0), 1.2 * g.omega),
        Prices::new(0.5 * (params.upsilon + 1.0), 1.5 * g.omega),
        Prices::new(1.0 / params.beta, 0.6 * g.omega),
    ];
    let mut roots: Vec<Prices> = Vec::new();
    for s in starts {
        let mut solver = Solver { params, ability, settings, warm: None, evaluations: 0 };
        if let Some(p) = solver.newton(s) {
            if !roots
                .iter()
                .any(|q| (q.gross_rate - p.gross_rate).abs() < 1e-6 && (q.omega - p.omega).abs() < 1e-6)
            {
                roots.push(p);
            }
        }
    }
    roots.sort_by(|a, b| a.gross_rate.total_cmp(&b.gross_rate));
    roots
}

/// Evaluates all equilibrium objects at given (not necessarily clearing) prices.
pub fn build_equilibrium(
    params: &ModelParams,
    ability: &AbilityProcess,
    prices: &Prices,
    settings: &EquilibriumSettings,
    iterations: usize,
) -> Result<StationaryEquilibrium> {
    let ev = evaluate(params, ability, prices, None, &settings.value)?;
    let (excess_bonds, excess_labor) = ev.excess?;
    let policy = ev.policy;
    let mellin = ev.mellin;
    let aggregates = aggregates(params, ability, &policy, &mellin)?;
    let revenue = tax_revenue(params, ability, &policy, &mellin)?;
    let welfare = welfare(&policy.a_star, policy.returns.h, ability.newborn_dist.as_slice(), params.gamma);
    let rho_a1 = mellin.spectral_radius(1.0);
    Ok(StationaryEquilibrium {
        params: *params,
        prices: *prices,
        policy,
        ability: ability.clone(),
        mellin,
        aggregates,
        welfare,
        revenue,
        rho_a1,
        excess_bonds,
        excess_labor,
        iterations,
    })
}

/// Certainty equivalent of a newborn's value.
pub fn welfare(a_star: &[f64], h: f64, newborn: &[f64], gamma: f64) -> f64 {
    if gamma == 1.0 {
        let m: f64 = a_star.iter().zip(newborn).map(|(a, w)| w * a.ln()).sum();
        return h * m.exp();
    }
    let e = 1.0 - gamma;
    // Power mean computed in logs to avoid overflow for large |1 − γ|.
    let logs: Vec<f64> = a_star.iter().map(|a| e * a.ln()).collect();
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().zip(newborn).map(|(l, w)| w * (l - mx).exp()).sum();
    h * ((mx + s.ln()) / e).exp()
}

pub fn tax_revenue(
    params: &ModelParams,
    ability: &AbilityProcess,
    policy: &PolicySolution,
    mellin: &MellinEvaluator,
) -> Result<Revenue> {
    let y = mellin.weights_real(1.0)?;
    let h = policy.returns.h;
    let labor = params.tau_l * policy.prices.omega;
    let consumption = params.tau_c / (1.0 + params.tau_c) * (1.0 - params.beta) * (1.0 - params.upsilon) * h * y.sum();
    let pr = &ability.transition * nalgebra::DVector::from_column_slice(&policy.returns.r);
    let base: f64 = (0..y.len()).map(|n| y[n] * pr[n] * policy.theta_star[n]).sum();
    let capital = params.tau_k / (1.0 - params.tau_k) * params.beta * (1.0 - params.upsilon) * h * base;
    Ok(Revenue { labor, consumption, capital, total: labor + consumption + capital })
}

/// Per-state and per-occupation aggregates from the conditional means and decision rules.
pub fn aggregates(
    params: &ModelParams,
    ability: &AbilityProcess,
    policy: &PolicySolution,
    mellin: &MellinEvaluator,
) -> Result<Aggregates> {
    let y = mellin.weights_real(1.0)?;
    let h = policy.returns.h;
    let save = params.beta / params.upsilon;
    let mut by_state = Vec::with_capacity(y.len());
    for n in 0..y.len() {
        // Joint mean E(S · 1{J = n}).
        let s = (1.0 - params.upsilon) * h * y[n];
        let p = ability.stationary_dist[n];
        let th = policy.theta_star[n];
        by_state.push(GroupAggregates {
            population: p,
            total_wealth: s,
            consumption: (1.0 - params.beta) / (1.0 + params.tau_c) * s,
            capital: save * th * s,
            bonds: -h / policy.prices.gross_rate * p + save * (1.0 - th) * s,
            labor_demand: save * th * policy.returns.ell[n] * s,
        });
    }
    let mut workers = GroupAggregates::default();
    let mut entrepreneurs = GroupAggregates::default();
    for (n, g) in by_state.iter().enumerate() {
        if ability.is_entrepreneur(n) {
            entrepreneurs.add(g);
        } else {
            workers.add(g);
        }
    }
    let mut all = workers;
    all.add(&entrepreneurs);
    Ok(Aggregates {
        total_wealth: all.total_wealth,
        bonds: all.bonds,
        labor: all.labor_demand,
        capital: all.capital,
        consumption: all.consumption,
        workers,
        entrepreneurs,
        by_state,
    })
}

/// Goods-market accounting residual of a stationary equilibrium: output net
/// of depreciation produced by survivors' firms, plus the wage bill of the
/// newborn share of the labor force, minus consumption and tax revenue.
pub fn goods_market_residual(eq: &StationaryEquilibrium) -> Result<f64> {
    let p = &eq.params;
    let y = eq.mellin.weights_real(1.0)?;
    let h = eq.h();
    let pr = &eq.ability.transition * nalgebra::DVector::from_column_slice(&eq.policy.returns.r);
    let mut profit = 0.0;
    let mut wage_bill = 0.0;
    for n in 0..y.len() {
        let k = p.beta / p.upsilon * eq.policy.theta_star[n] * (1.0 - p.upsilon) * h * y[n];
        profit += k * pr[n] / (1.0 - p.tau_k);
        wage_bill += k * eq.policy.returns.ell[n] * eq.prices.omega;
    }
    // Survivors (mass υ) run the firms.
    let net_output = p.upsilon * (profit + wage_bill);
    let uses = eq.aggregates.consumption + eq.revenue.total;
    let labor_income_of_non_employed = (1.0 - p.upsilon * eq.aggregates.labor) * eq.prices.omega;
    Ok(net_output + labor_income_of_non_employed - uses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welfare_degenerate_newborn_and_log_limit() {
        let a = [1.3, 0.7, 2.0];
        assert!((welfare(&a, 5.0, &[0.0, 1.0, 0.0], 3.0) - 3.5).abs() < 1e-12);
        let w = [0.2, 0.5, 0.3];
        let w1 = welfare(&a, 5.0, &w, 1.0);
        for g in [1.0 - 1e-6, 1.0 + 1e-6] {
            assert!((welfare(&a, 5.0, &w, g) / w1 - 1.0).abs() < 1e-5);
        }
    }

    fn baseline() -> StationaryEquilibrium {
        let params = ModelParams::baseline();
        let ability = crate::calibration::calibrate(&crate::calibration::CalibrationTargets::baseline(), params.upsilon).unwrap();
        solve_equilibrium(&params, &ability, &EquilibriumSettings::default()).unwrap()
    }

    #[test]
    fn baseline_equilibrium_clears_markets() {
        let eq = baseline();
        assert!(eq.excess_bonds.abs() < 1e-9 && eq.excess_labor.abs() < 1e-9);
        assert!((eq.prices.gross_rate - 1.01727011).abs() < 1e-6);
        assert!((eq.prices.omega - 1.26706005).abs() < 1e-6);
        assert!(eq.rho_a1 < 1.0);
        let a = &eq.aggregates;
        assert!((a.bonds - eq.excess_bonds).abs() < 1e-9);
        assert!((a.labor - 1.0 - eq.excess_labor).abs() < 1e-9);
    }
}

