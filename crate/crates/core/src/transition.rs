//! Perfect-foresight transition between two stationary equilibria.
//!
//! Year 0 is the old stationary equilibrium. The new tax rates apply from
//! year 1 on and the economy is taken to sit in the new stationary
//! equilibrium from year `horizon` on. Prices for year `t` are the wage
//! `ω_t` paid in year `t` and the post-tax gross rate `R_t` on bonds bought
//! in year `t`. Because every decision rule is affine in total wealth, the
//! state-conditional first moments `m_{n,t} = E(S_t 1{J_t = n})` carry all
//! the information the aggregates need.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{Revenue, StationaryEquilibrium};
use crate::error::{Error, Result};
use crate::household::{bellman_map, Context};
use crate::model::{state_returns, AbilityProcess, ModelParams, Prices, StateReturns};
use crate::numerics::optimize::{levenberg_marquardt, LmOptions};
use crate::numerics::spline::CubicSpline;
use crate::wealth::WealthDistribution;

/// Residual assigned to every year when a trial path leaves the model's domain.
const PENALTY: f64 = 1e2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSettings {
    pub horizon: usize,
    /// Knot years of the first stage. The horizon is always a knot.
    pub initial_knots: Vec<usize>,
    /// Knot years once refinement is complete.
    pub final_knots: Vec<usize>,
    pub max_iterations_per_stage: usize,
    /// Relative finite-difference step of the Jacobian.
    pub fd_step: f64,
    /// A stage whose relative cost decrease falls below this stops early.
    pub stage_rtol: f64,
}

impl Default for TransitionSettings {
    fn default() -> Self {
        Self::with_horizon(100)
    }
}

impl TransitionSettings {
    pub fn with_horizon(horizon: usize) -> Self {
        let initial_knots = [1, 5, 10, 20, 50].into_iter().filter(|&k| k < horizon).chain([horizon]).collect();
        Self {
            horizon,
            initial_knots,
            final_knots: refined_knots(horizon),
            max_iterations_per_stage: 30,
            fd_step: 1e-7,
            stage_rtol: 1e-10,
        }
    }

    /// Knot sets of the successive stages: the initial set, then one extra
    /// knot at a time in increasing year order.
    pub fn stages(&self) -> Vec<Vec<usize>> {
        let mut knots: Vec<usize> = self.initial_knots.clone();
        knots.push(self.horizon);
        knots.sort_unstable();
        knots.dedup();
        let mut out = vec![knots.clone()];
        for &k in &self.final_knots {
            if k >= 1 && k < self.horizon && !knots.contains(&k) {
                knots.push(k);
                knots.sort_unstable();
                out.push(knots.clone());
            }
        }
        out
    }
}

/// Every year up to 25, every fifth year up to 50, then every tenth year,
/// always ending at `horizon`.
pub fn refined_knots(horizon: usize) -> Vec<usize> {
    let mut k: Vec<usize> = (1..=25.min(horizon)).collect();
    k.extend((30..=50.min(horizon)).step_by(5));
    k.extend((60..=horizon).step_by(10));
    if k.last() != Some(&horizon) {
        k.push(horizon);
    }
    k
}

/// Prices for years `1..=T`; element `i` belongs to year `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePaths {
    pub gross_rate: Vec<f64>,
    pub omega: Vec<f64>,
}

impl PricePaths {
    pub fn constant(prices: Prices, horizon: usize) -> Self {
        Self { gross_rate: vec![prices.gross_rate; horizon], omega: vec![prices.omega; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.gross_rate.len()
    }

    /// Straight lines from `start` at year 0 to `end` at the horizon.
    pub fn linear(start: Prices, end: Prices, horizon: usize) -> Self {
        let f = |a: f64, b: f64| (1..=horizon).map(|t| a + (b - a) * t as f64 / horizon as f64).collect();
        Self { gross_rate: f(start.gross_rate, end.gross_rate), omega: f(start.omega, end.omega) }
    }

    /// Natural cubic splines through `(knot, value)` pairs; the last knot is the horizon.
    pub fn from_knots(knots: &[usize], rates: &[f64], wages: &[f64]) -> Self {
        let horizon = *knots.last().expect("at least one knot");
        let x: Vec<f64> = knots.iter().map(|&k| k as f64).collect();
        let eval = |y: &[f64]| -> Vec<f64> {
            if x.len() == 1 {
                return vec![y[0]; horizon];
            }
            let s = CubicSpline::new(&x, y);
            (1..=horizon).map(|t| s.eval(t as f64)).collect()
        };
        Self { gross_rate: eval(rates), omega: eval(wages) }
    }

    fn at(&self, t: usize) -> Prices {
        Prices::new(self.gross_rate[t - 1], self.omega[t - 1])
    }
}

/// Value coefficients, portfolio weights and human wealth for years `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePath {
    pub a: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

/// Returns on positions opened in year `t`: bonds pay `R_t`, capital earns at
/// the year-`t + 1` wage.
fn returns_on_year(params: &ModelParams, ability: &AbilityProcess, prices: &PricePaths, terminal: Prices, t: usize) -> Result<(Prices, StateReturns)> {
    let omega_next = if t < prices.horizon() { prices.omega[t] } else { terminal.omega };
    let p = Prices::new(prices.gross_rate[t - 1], omega_next);
    Ok((p, state_returns(params, ability, &p)?))
}

/// Backward recursion from the new stationary policy at the horizon.
pub fn backward_value_path(new: &StationaryEquilibrium, prices: &PricePaths) -> Result<ValuePath> {
    let (params, ability) = (&new.params, &new.ability);
    let horizon = prices.horizon();
    let mut a = vec![Vec::new(); horizon];
    let mut theta = vec![Vec::new(); horizon];
    let mut h = vec![0.0; horizon];
    let mut h_next = new.h();
    let mut x_next: Vec<f64> = new.policy.a_star.iter().map(|v| v.ln()).collect();
    for t in (1..=horizon).rev() {
        let p = prices.at(t);
        if !(p.gross_rate > params.upsilon) || !(p.omega > 0.0) {
            return Err(Error::Domain(format!("year {t} prices {p:?} are outside the domain")));
        }
        h[t - 1] = (1.0 - params.tau_l) * p.omega + params.upsilon / p.gross_rate * h_next;
        let (pn, ret) = returns_on_year(params, ability, prices, new.prices, t)?;
        let ctx = Context::new(params, ability, &pn, &ret);
        let (img, th) = bellman_map(&ctx, &x_next);
        a[t - 1] = img.iter().map(|v| v.exp()).collect();
        theta[t - 1] = th;
        x_next = img;
        h_next = h[t - 1];
    }
    Ok(ValuePath { a, theta, h })
}

/// Year-one joint moments: financial wealth carries over from the old
/// stationary distribution and human wealth is revalued to `h1`.
pub fn initial_moments(old: &StationaryEquilibrium, h1: f64) -> Vec<f64> {
    let p = &old.ability.stationary_dist;
    old.aggregates
        .by_state
        .iter()
        .enumerate()
        .map(|(n, g)| g.total_wealth + p[n] * (h1 - old.h()))
        .collect()
}

/// Forward recursion `m_{n',t+1} = υ Σ_n π_nn' β R_{n',t+1}(θ_{n,t}) m_{n,t} + (1−υ) ϖ_n' h_{t+1}`.
pub fn forward_moments(
    new: &StationaryEquilibrium,
    m1: &[f64],
    values: &ValuePath,
    prices: &PricePaths,
) -> Result<Vec<Vec<f64>>> {
    let (params, ability) = (&new.params, &new.ability);
    let n_states = ability.n_states;
    let horizon = prices.horizon();
    let mut out = Vec::with_capacity(horizon);
    out.push(m1.to_vec());
    for t in 1..horizon {
        let (pn, ret) = returns_on_year(params, ability, prices, new.prices, t)?;
        let m = &out[t - 1];
        let th = &values.theta[t - 1];
        let mut next = vec![0.0; n_states];
        for j in 0..n_states {
            let mut s = 0.0;
            for n in 0..n_states {
                let pi = ability.transition[(n, j)];
                if pi > 0.0 {
                    let gross = ((1.0 + ret.r[j]) * th[n] + pn.gross_rate * (1.0 - th[n])) / params.upsilon;
                    s += pi * params.beta * gross * m[n];
                }
            }
            next[j] = params.upsilon * s + (1.0 - params.upsilon) * ability.newborn_dist[j] * values.h[t];
        }
        out.push(next);
    }
    Ok(out)
}

/// Human wealth carried into year `t + 1`.
fn h_next(new: &StationaryEquilibrium, values: &ValuePath, t: usize) -> f64 {
    if t < values.h.len() {
        values.h[t]
    } else {
        new.h()
    }
}

/// Bond and labor excess demands in years `1..=T`.
pub fn excess_demand_path(
    new: &StationaryEquilibrium,
    values: &ValuePath,
    moments: &[Vec<f64>],
    prices: &PricePaths,
) -> Result<Vec<(f64, f64)>> {
    let (params, ability) = (&new.params, &new.ability);
    let save = params.beta / params.upsilon;
    (1..=prices.horizon())
        .map(|t| {
            let p = prices.at(t);
            let ret = state_returns(params, ability, &p)?;
            let (m, th) = (&moments[t - 1], &values.theta[t - 1]);
            let limit = h_next(new, values, t) / p.gross_rate;
            let mut bonds = -limit;
            let mut labor = -1.0;
            for n in 0..ability.n_states {
                bonds += save * (1.0 - th[n]) * m[n];
                labor += save * th[n] * ret.ell[n] * m[n];
            }
            Ok((bonds, labor))
        })
        .collect()
}

/// Everything implied by a trial pair of price paths.
#[derive(Debug, Clone)]
pub struct PathEvaluation {
    pub values: ValuePath,
    pub moments: Vec<Vec<f64>>,
    pub excess: Vec<(f64, f64)>,
}

pub fn evaluate_path(old: &StationaryEquilibrium, new: &StationaryEquilibrium, prices: &PricePaths) -> Result<PathEvaluation> {
    let values = backward_value_path(new, prices)?;
    let m1 = initial_moments(old, values.h[0]);
    let moments = forward_moments(new, &m1, &values, prices)?;
    let excess = excess_demand_path(new, &values, &moments, prices)?;
    Ok(PathEvaluation { values, moments, excess })
}

/// Aggregates of one year of the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearAggregates {
    pub consumption_total: f64,
    pub consumption_workers: f64,
    pub consumption_entrepreneurs: f64,
    pub capital: f64,
    pub bonds_workers: f64,
    pub bonds_entrepreneurs: f64,
    pub revenue: Revenue,
    /// Consumption and capital-income tax paid by agents currently in an entrepreneurial state.
    pub revenue_entrepreneurs: f64,
}

/// Aggregates of year `t` from its cross-section `(m, theta)`. Capital income
/// tax is collected on the profits earned this year by the capital chosen
/// last year, `(prev_m, prev_theta)`, at this year's returns.
#[allow(clippy::too_many_arguments)]
fn year_aggregates(
    params: &ModelParams,
    ability: &AbilityProcess,
    m: &[f64],
    theta: &[f64],
    prices: Prices,
    h_next: f64,
    prev_m: &[f64],
    prev_theta: &[f64],
    returns_now: &StateReturns,
) -> YearAggregates {
    let save = params.beta / params.upsilon;
    let cons_share = (1.0 - params.beta) / (1.0 + params.tau_c);
    let limit = h_next / prices.gross_rate;
    let mut out = YearAggregates {
        consumption_total: 0.0,
        consumption_workers: 0.0,
        consumption_entrepreneurs: 0.0,
        capital: 0.0,
        bonds_workers: 0.0,
        bonds_entrepreneurs: 0.0,
        revenue: Revenue { labor: params.tau_l * prices.omega, consumption: 0.0, capital: 0.0, total: 0.0 },
        revenue_entrepreneurs: 0.0,
    };
    let rate = params.tau_k / (1.0 - params.tau_k) * params.beta;
    for n in 0..ability.n_states {
        let c = cons_share * m[n];
        let b = -limit * ability.stationary_dist[n] + save * (1.0 - theta[n]) * m[n];
        let tc = params.tau_c * c;
        // Profits realized in state n by survivors arriving from every state.
        let tk: f64 = (0..ability.n_states)
            .map(|j| rate * prev_theta[j] * prev_m[j] * ability.transition[(j, n)] * returns_now.r[n])
            .sum();
        out.consumption_total += c;
        out.capital += save * theta[n] * m[n];
        out.revenue.consumption += tc;
        out.revenue.capital += tk;
        if ability.is_entrepreneur(n) {
            out.consumption_entrepreneurs += c;
            out.bonds_entrepreneurs += b;
            out.revenue_entrepreneurs += tc + tk;
        } else {
            out.consumption_workers += c;
            out.bonds_workers += b;
        }
    }
    out.revenue.total = out.revenue.labor + out.revenue.consumption + out.revenue.capital;
    out
}

/// Share of agents whose year-one value rises under the new regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteShares {
    pub all: f64,
    pub workers: f64,
    pub entrepreneurs: f64,
    pub by_state: Vec<StateVote>,
}

/// In favor are agents with financial wealth above (or below) `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVote {
    pub threshold: f64,
    pub in_favor_above: bool,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub knots: Vec<usize>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPath {
    pub horizon: usize,
    /// Years `0..=T`; index 0 is the old stationary equilibrium.
    pub gross_rate: Vec<f64>,
    pub omega: Vec<f64>,
    pub h: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub moments: Vec<Vec<f64>>,
    pub excess_bonds: Vec<f64>,
    pub excess_labor: Vec<f64>,
    pub aggregates: Vec<YearAggregates>,
    pub vote: Option<VoteShares>,
    pub stages: Vec<StageReport>,
    /// Set when the last stage lowered the cost by less than a relative 1e-12.
    pub stagnated: bool,
}

/// One CSV row of a transition path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub t: usize,
    #[serde(rename = "R")]
    pub gross_rate: f64,
    pub omega: f64,
    pub h: f64,
    pub consumption_total: f64,
    pub consumption_workers: f64,
    pub consumption_entrepreneurs: f64,
    pub capital: f64,
    pub bonds_workers: f64,
    pub bonds_entrepreneurs: f64,
    pub revenue_total: f64,
    pub revenue_labor: f64,
    pub revenue_consumption: f64,
    pub revenue_capital: f64,
    pub excess_bond: f64,
    pub excess_labor: f64,
}

impl TransitionPath {
    pub fn max_abs_excess(&self) -> (f64, f64) {
        let mx = |v: &[f64]| v[1..].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        (mx(&self.excess_bonds), mx(&self.excess_labor))
    }

    pub fn rows(&self) -> Vec<TransitionRow> {
        (0..=self.horizon)
            .map(|t| {
                let g = &self.aggregates[t];
                TransitionRow {
                    t,
                    gross_rate: self.gross_rate[t],
                    omega: self.omega[t],
                    h: self.h[t],
                    consumption_total: g.consumption_total,
                    consumption_workers: g.consumption_workers,
                    consumption_entrepreneurs: g.consumption_entrepreneurs,
                    capital: g.capital,
                    bonds_workers: g.bonds_workers,
                    bonds_entrepreneurs: g.bonds_entrepreneurs,
                    revenue_total: g.revenue.total,
                    revenue_labor: g.revenue.labor,
                    revenue_consumption: g.revenue.consumption,
                    revenue_capital: g.revenue.capital,
                    excess_bond: self.excess_bonds[t],
                    excess_labor: self.excess_labor[t],
                }
            })
            .collect()
    }

    /// Relative change of a year-`t` quantity against year 0.
    pub fn change_from_start(&self, t: usize, f: impl Fn(&YearAggregates) -> f64) -> f64 {
        f(&self.aggregates[t]) / f(&self.aggregates[0]) - 1.0
    }

    /// First year from 1 on at which the quantity is back at or above its year-0 level.
    pub fn recovery_year(&self, f: impl Fn(&YearAggregates) -> f64) -> Option<usize> {
        let start = f(&self.aggregates[0]);
        (1..=self.horizon).find(|&t| f(&self.aggregates[t]) >= start)
    }
}

/// Assembles the full path, year 0 included, from a solved set of prices.
pub fn build_path(
    old: &StationaryEquilibrium,
    new: &StationaryEquilibrium,
    prices: &PricePaths,
    eval: &PathEvaluation,
) -> Result<TransitionPath> {
    let horizon = prices.horizon();
    let old_now = state_returns(&old.params, &old.ability, &old.prices)?;
    let old_m: Vec<f64> = old.aggregates.by_state.iter().map(|g| g.total_wealth).collect();
    let old_theta = &old.policy.theta_star;
    let mut aggregates =
        vec![year_aggregates(&old.params, &old.ability, &old_m, old_theta, old.prices, old.h(), &old_m, old_theta, &old_now)];
    for t in 1..=horizon {
        let now = state_returns(&new.params, &new.ability, &prices.at(t))?;
        let (prev_m, prev_theta) =
            if t == 1 { (&old_m, old_theta) } else { (&eval.moments[t - 2], &eval.values.theta[t - 2]) };
        aggregates.push(year_aggregates(
            &new.params,
            &new.ability,
            &eval.moments[t - 1],
            &eval.values.theta[t - 1],
            prices.at(t),
            h_next(new, &eval.values, t),
            prev_m,
            prev_theta,
            &now,
        ));
    }
    let prepend = |x0: f64, v: &[f64]| std::iter::once(x0).chain(v.iter().copied()).collect::<Vec<f64>>();
    let prepend_vec =
        |x0: &[f64], v: &[Vec<f64>]| std::iter::once(x0.to_vec()).chain(v.iter().cloned()).collect::<Vec<_>>();
    Ok(TransitionPath {
        horizon,
        gross_rate: prepend(old.prices.gross_rate, &prices.gross_rate),
        omega: prepend(old.prices.omega, &prices.omega),
        h: prepend(old.h(), &eval.values.h),
        a: prepend_vec(&old.policy.a_star, &eval.values.a),
        theta: prepend_vec(&old.policy.theta_star, &eval.values.theta),
        moments: prepend_vec(&old_m, &eval.moments),
        excess_bonds: prepend(old.excess_bonds, &eval.excess.iter().map(|e| e.0).collect::<Vec<_>>()),
        excess_labor: prepend(old.excess_labor, &eval.excess.iter().map(|e| e.1).collect::<Vec<_>>()),
        aggregates,
        vote: None,
        stages: Vec::new(),
        stagnated: false,
    })
}

fn stage_residuals(
    old: &StationaryEquilibrium,
    new: &StationaryEquilibrium,
    knots: &[usize],
    x: &DVector<f64>,
) -> DVector<f64> {
    let horizon = *knots.last().unwrap();
    let k = knots.len() - 1;
    let mut rates: Vec<f64> = x.as_slice()[..k].to_vec();
    let mut wages: Vec<f64> = x.as_slice()[k..].to_vec();
    rates.push(new.prices.gross_rate);
    wages.push(new.prices.omega);
    let prices = PricePaths::from_knots(knots, &rates, &wages);
    match evaluate_path(old, new, &prices) {
        Ok(e) if e.excess.iter().all(|(b, l)| b.is_finite() && l.is_finite()) => {
            DVector::from_iterator(2 * horizon, e.excess.iter().flat_map(|&(b, l)| [b, l]))
        }
        _ => DVector::from_element(2 * horizon, PENALTY),
    }
}

/// Solves for price paths minimizing the sum of squared excess demands,
/// refining the spline knots one year at a time.
pub fn solve_transition(
    old: &StationaryEquilibrium,
    new: &StationaryEquilibrium,
    settings: &TransitionSettings,
) -> Result<TransitionPath> {
    let horizon = settings.horizon;
    if horizon == 0 {
        return Err(Error::Domain("transition horizon must be positive".into()));
    }
    let mut current = PricePaths::linear(old.prices, new.prices, horizon);
    let mut best = f64::INFINITY;
    let mut stages = Vec::new();
    let mut stagnated = false;
    let opts = LmOptions {
        max_iterations: settings.max_iterations_per_stage,
        fd_step: settings.fd_step,
        cost_rtol: settings.stage_rtol,
        cost_atol: 1e-20,
    };
    for knots in settings.stages() {
        let free = &knots[..knots.len() - 1];
        let x0 = DVector::from_iterator(
            2 * free.len(),
            free.iter().map(|&k| current.gross_rate[k - 1]).chain(free.iter().map(|&k| current.omega[k - 1])),
        );
        let fit = levenberg_marquardt(|x| Ok(stage_residuals(old, new, &knots, x)), x0, opts)?;
        // Re-interpolating through more knots can perturb the previous
        // spline, so a stage is only kept when it improves on the best path.
        stagnated = !(fit.cost < best * (1.0 - 1e-12));
        if fit.cost < best {
            let k = free.len();
            let mut rates = fit.x.as_slice()[..k].to_vec();
            let mut wages = fit.x.as_slice()[k..].to_vec();
            rates.push(new.prices.gross_rate);
            wages.push(new.prices.omega);
            current = PricePaths::from_knots(&knots, &rates, &wages);
            best = fit.cost;
        }
        stages.push(StageReport { knots, cost: best, iterations: fit.iterations, evaluations: fit.evaluations });
    }
    let eval = evaluate_path(old, new, &current)?;
    let mut path = build_path(old, new, &current, &eval)?;
    path.stages = stages;
    path.stagnated = stagnated;
    Ok(path)
}

/// Year-one vote of every agent on switching regimes, given the old
/// regime's state-conditional wealth distributions. Ties count against.
pub fn vote_analysis(path: &TransitionPath, old: &StationaryEquilibrium, dist: &WealthDistribution) -> VoteShares {
    vote_shares(
        &path.a[1],
        path.h[1],
        &old.policy.a_star,
        old.h(),
        &old.ability,
        |n, w| dist.conditional_exceedance(n, w),
        |n, w| {
            let s = w + dist.h;
            if s <= 0.0 {
                0.0
            } else {
                // Strictly below the threshold.
                dist.conditional_cdf_log(n, s.ln() - 1e-12)
            }
        },
    )
}

/// Vote shares from conditional exceedance `P(W > w | n)` and strict CDF `P(W < w | n)`.
pub fn vote_shares(
    a_new: &[f64],
    h_new: f64,
    a_old: &[f64],
    h_old: f64,
    ability: &AbilityProcess,
    above: impl Fn(usize, f64) -> f64,
    below: impl Fn(usize, f64) -> f64,
) -> VoteShares {
    let p = &ability.stationary_dist;
    let mut by_state = Vec::with_capacity(ability.n_states);
    for n in 0..ability.n_states {
        let slope = a_new[n] - a_old[n];
        let gap = a_old[n] * h_old - a_new[n] * h_new;
        // In favor iff slope · W > gap.
        let vote = if slope == 0.0 {
            StateVote { threshold: f64::NAN, in_favor_above: true, share: if gap < 0.0 { 1.0 } else { 0.0 } }
        } else {
            let threshold = gap / slope;
            if slope > 0.0 {
                StateVote { threshold, in_favor_above: true, share: above(n, threshold) }
            } else {
                StateVote { threshold, in_favor_above: false, share: below(n, threshold) }
            }
        };
        by_state.push(vote);
    }
    let (mut all, mut w, mut pw, mut e, mut pe) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 0..ability.n_states {
        let s = p[n] * by_state[n].share;
        all += s;
        if ability.is_entrepreneur(n) {
            e += s;
            pe += p[n];
        } else {
            w += s;
            pw += p[n];
        }
    }
    VoteShares {
        all,
        workers: if pw > 0.0 { w / pw } else { 0.0 },
        entrepreneurs: if pe > 0.0 { e / pe } else { 0.0 },
        by_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, CalibrationTargets};
    use crate::equilibrium::{solve_equilibrium, EquilibriumSettings};
    use crate::model::TaxRates;

    fn equilibria() -> (StationaryEquilibrium, StationaryEquilibrium) {
        let params = ModelParams::baseline();
        let ability = calibrate(&CalibrationTargets::baseline(), params.upsilon).unwrap();
        let settings = EquilibriumSettings::default();
        let old = solve_equilibrium(&params, &ability, &settings).unwrap();
        let reform = params.with_taxes(TaxRates::new(0.0, 0.2367, 0.3136)).unwrap();
        let new = solve_equilibrium(&reform, &ability, &settings).unwrap();
        (old, new)
    }

    #[test]
    fn knot_schedule() {
        let k = refined_knots(100);
        assert_eq!(k.len(), 35);
        assert_eq!(&k[20..], &[21, 22, 23, 24, 25, 30, 35, 40, 45, 50, 60, 70, 80, 90, 100]);
        let stages = TransitionSettings::default().stages();
        assert_eq!(stages[0], vec![1, 5, 10, 20, 50, 100]);
        assert_eq!(stages.last().unwrap(), &k);
        for w in stages.windows(2) {
            assert_eq!(w[1].len(), w[0].len() + 1);
            assert!(w[0].iter().all(|x| w[1].contains(x)));
        }
    }

    #[test]
    fn spline_paths_interpolate_knots() {
        let knots = [1, 5, 10, 20, 50, 100];
        let r = [1.03, 1.025, 1.022, 1.02, 1.018, 1.017];
        let w = [1.2, 1.25, 1.28, 1.3, 1.33, 1.34];
        let p = PricePaths::from_knots(&knots, &r, &w);
        for (i, &k) in knots.iter().enumerate() {
            assert!((p.gross_rate[k - 1] - r[i]).abs() < 1e-14);
            assert!((p.omega[k - 1] - w[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_prices_are_a_fixed_point() {
        let (old, _) = equilibria();
        let prices = PricePaths::constant(old.prices, 40);
        let e = evaluate_path(&old, &old, &prices).unwrap();
        for t in 0..40 {
            assert!((e.values.h[t] - old.h()).abs() < 1e-10);
            for n in 0..old.ability.n_states {
                assert!((e.values.a[t][n] / old.policy.a_star[n] - 1.0).abs() < 1e-10);
                assert!((e.values.theta[t][n] - old.policy.theta_star[n]).abs() < 1e-9);
                let m = old.aggregates.by_state[n].total_wealth;
                assert!((e.moments[t][n] - m).abs() < 1e-10 * m.max(1.0), "year {} state {n}", t + 1);
            }
            assert!(e.excess[t].0.abs() < 1e-8 && e.excess[t].1.abs() < 1e-8);
        }
    }

    #[test]
    fn untaxed_wage_raises_human_wealth() {
        let (old, new) = equilibria();
        let v = backward_value_path(&new, &PricePaths::constant(new.prices, 30)).unwrap();
        let direct = new.prices.omega / (1.0 - new.params.upsilon / new.prices.gross_rate);
        assert!((v.h[0] - direct).abs() < 1e-9 * direct);
        assert!(v.h[0] > old.h() && old.h() > 22.9);
    }

    #[test]
    fn wage_deviation_is_backward_causal() {
        let (_, new) = equilibria();
        let base = PricePaths::constant(new.prices, 20);
        let mut bumped = base.clone();
        bumped.omega[6] += 1e-3;
        let (v0, v1) = (backward_value_path(&new, &base).unwrap(), backward_value_path(&new, &bumped).unwrap());
        for s in 0..20 {
            let moved = (v0.h[s] - v1.h[s]).abs() > 0.0;
            assert_eq!(moved, s <= 6, "year {}", s + 1);
        }
    }

    #[test]
    fn initial_moments_revalue_human_wealth() {
        let (old, new) = equilibria();
        let m = initial_moments(&old, new.h());
        let total: f64 = m.iter().sum();
        assert!((total - (old.aggregates.total_wealth + new.h() - old.h())).abs() < 1e-10);
        assert!(m.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn labor_excess_continuous_in_wages() {
        let (old, new) = equilibria();
        let prices = PricePaths::linear(old.prices, new.prices, 30);
        let e0 = evaluate_path(&old, &new, &prices).unwrap();
        for t in [0, 9, 28] {
            let mut p = prices.clone();
            p.omega[t] += 1e-6;
            let e1 = evaluate_path(&old, &new, &p).unwrap();
            let jump = e0.excess.iter().zip(&e1.excess).map(|(a, b)| (a.1 - b.1).abs()).fold(0.0, f64::max);
            assert!(jump < 1e-4, "wage bump in year {} moved labor excess by {jump}", t + 1);
        }
    }

    #[test]
    fn identical_regimes_attract_no_votes() {
        let (old, _) = equilibria();
        let v = vote_shares(&old.policy.a_star, old.h(), &old.policy.a_star, old.h(), &old.ability, |_, _| 1.0, |_, _| 1.0);
        assert_eq!((v.all, v.workers, v.entrepreneurs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn dominant_regime_wins_every_vote() {
        let (old, _) = equilibria();
        let a_new: Vec<f64> = old.policy.a_star.iter().map(|a| a * 1.01).collect();
        let h_old = old.h();
        // Exceedance of a distribution supported on W > −h_old.
        let above = |_: usize, w: f64| if w + h_old <= 0.0 { 1.0 } else { (-(w + h_old)).exp() };
        let v = vote_shares(&a_new, h_old * 1.1, &old.policy.a_star, h_old, &old.ability, above, |_, _| 0.0);
        assert!(v.by_state.iter().all(|s| s.in_favor_above && s.threshold < -h_old && s.share == 1.0));
        assert!((v.all - 1.0).abs() < 1e-12);
    }
}
