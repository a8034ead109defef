//! Revenue-preserving tax mixes and welfare-maximizing flat rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationTargets};
use crate::equilibrium::{solve_equilibrium, EquilibriumSettings, StationaryEquilibrium};
use crate::error::{Error, Result};
use crate::household::{normalized_edge_derivative, Context, Regime, DEFAULT_REGIME_TOL};
use crate::model::{AbilityProcess, ModelParams, Prices, TaxRates};
use crate::numerics::optimize::{compass_search_max, golden_section_max};
use crate::numerics::roots::{bisect, brent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxBase {
    Labor,
    Capital,
    Consumption,
}

impl TaxBase {
    pub fn get(&self, r: &TaxRates) -> f64 {
        match self {
            TaxBase::Labor => r.labor,
            TaxBase::Capital => r.capital,
            TaxBase::Consumption => r.consumption,
        }
    }

    pub fn set(&self, r: &TaxRates, v: f64) -> TaxRates {
        let mut out = *r;
        match self {
            TaxBase::Labor => out.labor = v,
            TaxBase::Capital => out.capital = v,
            TaxBase::Consumption => out.consumption = v,
        }
        out
    }

    /// Largest rate tried when bracketing.
    fn upper(&self) -> f64 {
        match self {
            TaxBase::Labor | TaxBase::Capital => 0.95,
            TaxBase::Consumption => 3.0,
        }
    }
}

/// Economy plus the revenue every candidate mix must raise.
#[derive(Debug, Clone)]
pub struct TaxProblem {
    pub params: ModelParams,
    pub ability: AbilityProcess,
    pub settings: EquilibriumSettings,
    pub target: f64,
    /// Relative revenue tolerance.
    pub revenue_rtol: f64,
}

impl TaxProblem {
    /// Uses the revenue of `params`' own tax rates as the target.
    pub fn at_current_rates(
        params: &ModelParams,
        ability: &AbilityProcess,
        settings: &EquilibriumSettings,
    ) -> Result<(Self, StationaryEquilibrium)> {
        let eq = solve_equilibrium(params, ability, settings)?;
        let problem = Self {
            params: *params,
            ability: ability.clone(),
            settings: *settings,
            target: eq.revenue.total,
            revenue_rtol: 1e-9,
        };
        Ok((problem, eq))
    }

    pub fn equilibrium_at(&self, rates: TaxRates, guess: Option<Prices>) -> Result<StationaryEquilibrium> {
        let params = self.params.with_taxes(rates)?;
        let mut settings = self.settings;
        if let Some(g) = guess {
            settings.initial_guess = g;
        }
        solve_equilibrium(&params, &self.ability, &settings)
    }
}

/// A tax mix with its equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct TaxRegimePoint {
    pub rates: TaxRates,
    #[serde(skip)]
    pub equilibrium: StationaryEquilibrium,
    pub welfare: f64,
    /// Revenue minus target.
    pub revenue_gap: f64,
    pub regime: Regime,
    /// Normalized `g'(1)` of entrepreneurs; zero exactly at a kink.
    pub edge_derivative: f64,
}

impl TaxRegimePoint {
    pub fn new(equilibrium: StationaryEquilibrium, target: f64) -> Self {
        let edge = edge_derivative(&equilibrium);
        Self {
            rates: equilibrium.params.taxes(),
            welfare: equilibrium.welfare,
            revenue_gap: equilibrium.revenue.total - target,
            regime: equilibrium.regime(),
            edge_derivative: edge,
            equilibrium,
        }
    }

    pub fn prices(&self) -> Prices {
        self.equilibrium.prices
    }
}

/// Normalized one-sided derivative of the first entrepreneurial state's portfolio objective at full leverage.
pub fn edge_derivative(eq: &StationaryEquilibrium) -> f64 {
    let Some(n) = (0..eq.ability.n_states).find(|&n| eq.ability.is_entrepreneur(n)) else {
        return f64::NAN;
    };
    let ctx = Context::new(&eq.params, &eq.ability, &eq.prices, &eq.policy.returns);
    normalized_edge_derivative(&ctx, n, &eq.policy.a_star)
}

/// Initial values for the bracketing search.
#[derive(Debug, Clone, Copy, Default)]
pub struct Guess {
    pub rate: Option<f64>,
    pub prices: Option<Prices>,
}

impl Guess {
    pub fn from_point(p: &TaxRegimePoint, free: TaxBase) -> Self {
        Self { rate: Some(free.get(&p.rates)), prices: Some(p.prices()) }
    }
}

/// Solves for the rate on `free` that makes equilibrium revenue hit the target,
/// holding the other two rates in `rates` fixed.
pub fn revenue_preserving_rate(
    problem: &TaxProblem,
    rates: TaxRates,
    free: TaxBase,
    guess: Guess,
) -> Result<TaxRegimePoint> {
    let target = problem.target;
    let tol = problem.revenue_rtol * target.abs();
    let mut warm = guess.prices;
    let mut best: Option<StationaryEquilibrium> = None;
    let gap = |x: f64, warm: &mut Option<Prices>, best: &mut Option<StationaryEquilibrium>| -> Result<f64> {
        let eq = problem.equilibrium_at(free.set(&rates, x), *warm)?;
        *warm = Some(eq.prices);
        let g = eq.revenue.total - target;
        if best.as_ref().is_none_or(|b| (b.revenue.total - target).abs() > g.abs()) {
            *best = Some(eq);
        }
        Ok(g)
    };
    let infeasible = |msg: String| Error::InfeasibleTaxMix(format!("{free:?} rate with {rates:?}: {msg}"));
    let upper = free.upper();

    // Bracket: step outward from the guess, doubling the step.
    let x0 = guess.rate.unwrap_or(0.0).clamp(0.0, upper);
    let g0 = gap(x0, &mut warm, &mut best)?;
    let (mut a, mut fa) = (x0, g0);
    let b;
    if g0.abs() <= tol {
        return Ok(TaxRegimePoint::new(best.unwrap(), target));
    }
    // Revenue rises with the rate near any sensible solution.
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut step = if guess.rate.is_some() { 0.01 } else { 0.05 };
    loop {
        let x = (a + dir * step).clamp(0.0, upper);
        if x == a {
            return Err(infeasible(format!("revenue gap {fa:e} at the edge of the legal range")));
        }
        let fx = match gap(x, &mut warm, &mut best) {
            Ok(v) => v,
            Err(Error::EquilibriumNotFound(m)) => return Err(infeasible(m)),
            Err(e) => return Err(e),
        };
        if fx.abs() <= tol {
            return Ok(TaxRegimePoint::new(best.unwrap(), target));
        }
        if fx.signum() != fa.signum() {
            b = x;
            break;
        }
        a = x;
        fa = fx;
        step *= 2.0;
    }
    let root = brent(|x| gap(x, &mut warm, &mut best), a, b, 1e-13, tol * 0.5, 100)?;
    let eq = problem.equilibrium_at(free.set(&rates, root.x), warm)?;
    let point = TaxRegimePoint::new(eq, target);
    if point.revenue_gap.abs() > tol {
        return Err(infeasible(format!("residual revenue gap {:e}", point.revenue_gap)));
    }
    Ok(point)
}

/// A line of revenue-preserving mixes indexed by the capital tax rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    /// The rate that adjusts to preserve revenue.
    pub free: TaxBase,
    /// The rate held fixed.
    pub fixed: TaxBase,
    pub fixed_value: f64,
}

impl LineSpec {
    /// Labor income tax adjusts, no consumption tax.
    pub const NO_CONSUMPTION_TAX: LineSpec = LineSpec { free: TaxBase::Labor, fixed: TaxBase::Consumption, fixed_value: 0.0 };
    /// Consumption tax adjusts, no labor income tax.
    pub const NO_LABOR_TAX: LineSpec = LineSpec { free: TaxBase::Consumption, fixed: TaxBase::Labor, fixed_value: 0.0 };

    fn rates(&self, tau_k: f64) -> TaxRates {
        let r = self.fixed.set(&TaxRates::new(0.0, tau_k, 0.0), self.fixed_value);
        self.free.set(&r, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineOptions {
    pub k_min: f64,
    pub k_max: f64,
    pub step: f64,
    /// Final tolerance on the optimal capital tax rate.
    pub xtol: f64,
}

impl Default for LineOptions {
    fn default() -> Self {
        Self { k_min: 0.0, k_max: 0.8, step: 0.01, xtol: 1e-5 }
    }
}

/// One point of a frontier, flattened for export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub tau_l: f64,
    pub tau_k: f64,
    pub tau_c: f64,
    pub welfare: f64,
    pub gross_rate: f64,
    pub pretax_rate: f64,
    pub omega: f64,
    pub post_tax_wage: f64,
    pub capital: f64,
    pub consumption: f64,
    pub consumption_workers: f64,
    pub consumption_entrepreneurs: f64,
    pub theta_entrepreneur: f64,
    pub edge_derivative: f64,
    pub regime: Regime,
}

impl From<&TaxRegimePoint> for FrontierPoint {
    fn from(p: &TaxRegimePoint) -> Self {
        let eq = &p.equilibrium;
        let theta = (0..eq.ability.n_states)
            .find(|&n| eq.ability.is_entrepreneur(n))
            .map(|n| eq.policy.theta_star[n])
            .unwrap_or(0.0);
        Self {
            tau_l: p.rates.labor,
            tau_k: p.rates.capital,
            tau_c: p.rates.consumption,
            welfare: p.welfare,
            gross_rate: eq.prices.gross_rate,
            pretax_rate: eq.pretax_rate(),
            omega: eq.prices.omega,
            post_tax_wage: (1.0 - p.rates.labor) * eq.prices.omega,
            capital: eq.aggregates.capital,
            consumption: eq.aggregates.consumption,
            consumption_workers: eq.aggregates.workers.consumption,
            consumption_entrepreneurs: eq.aggregates.entrepreneurs.consumption,
            theta_entrepreneur: theta,
            edge_derivative: p.edge_derivative,
            regime: p.regime,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LineOptimum {
    pub line: LineSpec,
    pub points: Vec<FrontierPoint>,
    pub optimum: TaxRegimePoint,
    /// Capital tax rates where the entrepreneurs' borrowing regime changes.
    pub kinks: Vec<f64>,
    /// Grid rates where no revenue-preserving equilibrium was found.
    pub failures: Vec<(f64, String)>,
}

impl LineOptimum {
    pub fn kink_nearest(&self, tau_k: f64) -> Option<f64> {
        self.kinks.iter().copied().min_by(|a, b| (a - tau_k).abs().total_cmp(&(b - tau_k).abs()))
    }
}

fn line_point(problem: &TaxProblem, line: &LineSpec, tau_k: f64, guess: Guess) -> Result<TaxRegimePoint> {
    revenue_preserving_rate(problem, line.rates(tau_k), line.free, guess)
}

/// Capital tax rate in `[lo, hi]` where the edge derivative crosses zero.
fn locate_kink(
    problem: &TaxProblem,
    line: &LineSpec,
    lo: &TaxRegimePoint,
    hi: &TaxRegimePoint,
) -> Result<Option<TaxRegimePoint>> {
    let (dl, dh) = (lo.edge_derivative, hi.edge_derivative);
    if !(dl.signum() != dh.signum()) {
        return Ok(None);
    }
    let mut guess = Guess::from_point(lo, line.free);
    let mut f = |k: f64| -> Result<f64> {
        let p = line_point(problem, line, k, guess)?;
        guess = Guess::from_point(&p, line.free);
        Ok(p.edge_derivative)
    };
    let root = brent(&mut f, lo.rates.capital, hi.rates.capital, 1e-12, 0.1 * DEFAULT_REGIME_TOL, 100)?;
    Ok(Some(line_point(problem, line, root.x, guess)?))
}

/// Welfare-maximizing capital tax rate along a revenue-preserving line.
///
/// Coarse grid, golden-section refinement around the best grid point, and
/// direct evaluation at every regime change on the grid.
pub fn optimize_line(problem: &TaxProblem, line: LineSpec, opts: &LineOptions) -> Result<LineOptimum> {
    let n = ((opts.k_max - opts.k_min) / opts.step).round() as usize;
    let mut grid: Vec<TaxRegimePoint> = Vec::with_capacity(n + 1);
    let mut failures = Vec::new();
    let mut guess = Guess::default();
    for i in 0..=n {
        let k = opts.k_min + opts.step * i as f64;
        match line_point(problem, &line, k, guess) {
            Ok(p) => {
                guess = Guess::from_point(&p, line.free);
                grid.push(p);
            }
            Err(e @ (Error::InfeasibleTaxMix(_) | Error::EquilibriumNotFound(_) | Error::NoBracket(_))) => {
                failures.push((k, e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }
    if grid.is_empty() {
        return Err(Error::InfeasibleTaxMix(format!("no feasible point on {line:?}")));
    }

    let mut kink_points = Vec::new();
    for w in grid.windows(2) {
        let regime_changes = (w[0].regime == Regime::Slack) != (w[1].regime == Regime::Slack);
        if regime_changes {
            if let Some(p) = locate_kink(problem, &line, &w[0], &w[1])? {
                kink_points.push(p);
            }
        }
    }

    let best = (0..grid.len()).max_by(|&a, &b| grid[a].welfare.total_cmp(&grid[b].welfare)).unwrap();
    let lo = grid[best.saturating_sub(1)].rates.capital;
    let hi = grid[(best + 1).min(grid.len() - 1)].rates.capital;
    let mut candidates: Vec<TaxRegimePoint> = vec![grid[best].clone()];
    if hi > lo {
        let mut g = Guess::from_point(&grid[best], line.free);
        let m = golden_section_max(
            |k| {
                let p = line_point(problem, &line, k, g)?;
                g = Guess::from_point(&p, line.free);
                Ok(p.welfare)
            },
            lo,
            hi,
            opts.xtol,
        )?;
        candidates.push(line_point(problem, &line, m.x, g)?);
    }
    candidates.extend(kink_points.iter().cloned());
    let mut optimum = candidates.iter().max_by(|a, b| a.welfare.total_cmp(&b.welfare)).unwrap().clone();
    // A maximum sitting on the kink is reported at the kink itself.
    if let Some(k) = kink_points
        .iter()
        .find(|p| (p.rates.capital - optimum.rates.capital).abs() <= 2.0 * opts.xtol)
    {
        if k.welfare >= optimum.welfare - 1e-9 * optimum.welfare.abs() {
            optimum = k.clone();
        }
    }

    let mut points: Vec<FrontierPoint> = grid.iter().map(FrontierPoint::from).collect();
    points.sort_by(|a, b| a.tau_k.total_cmp(&b.tau_k));
    Ok(LineOptimum {
        line,
        points,
        optimum,
        kinks: kink_points.iter().map(|p| p.rates.capital).collect(),
        failures,
    })
}

/// The no-consumption-tax problem: labor income tax adjusts to preserve revenue.
pub fn optimize_no_consumption_tax(problem: &TaxProblem, opts: &LineOptions) -> Result<LineOptimum> {
    optimize_line(problem, LineSpec::NO_CONSUMPTION_TAX, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullOptions {
    pub l_max: f64,
    pub k_max: f64,
    pub step: f64,
    pub starts: usize,
    pub min_step: f64,
}

impl Default for FullOptions {
    fn default() -> Self {
        Self { l_max: 0.5, k_max: 0.8, step: 0.02, starts: 5, min_step: 1e-4 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FullOptimum {
    /// Feasible grid points in row-major order over `(τ_K, τ_L)`.
    pub grid: Vec<FrontierPoint>,
    pub optimum: TaxRegimePoint,
    /// Refined local optima from the multi-start phase, best first.
    pub candidates: Vec<TaxRegimePoint>,
    /// Consumption tax only.
    pub consumption_only: TaxRegimePoint,
}

/// Welfare maximization over `(τ_L, τ_K)` with the consumption tax preserving revenue.
pub fn optimize_full(problem: &TaxProblem, opts: &FullOptions) -> Result<FullOptimum> {
    let nk = (opts.k_max / opts.step).round() as usize;
    let nl = (opts.l_max / opts.step).round() as usize;
    // Rows over τ_L at fixed τ_K; larger τ_L only raises revenue, so each row
    // stops at the first infeasible mix.
    let rows: Vec<Vec<TaxRegimePoint>> = (0..=nk)
        .into_par_iter()
        .map(|ik| {
            let k = ik as f64 * opts.step;
            let mut row = Vec::new();
            let mut guess = Guess::default();
            for il in 0..=nl {
                let l = il as f64 * opts.step;
                match revenue_preserving_rate(problem, TaxRates::new(l, k, 0.0), TaxBase::Consumption, guess) {
                    Ok(p) => {
                        guess = Guess::from_point(&p, TaxBase::Consumption);
                        row.push(p);
                    }
                    Err(_) => break,
                }
            }
            row
        })
        .collect();

    let mut flat: Vec<(usize, usize, &TaxRegimePoint)> = Vec::new();
    for (ik, row) in rows.iter().enumerate() {
        for (il, p) in row.iter().enumerate() {
            flat.push((ik, il, p));
        }
    }
    if flat.is_empty() {
        return Err(Error::InfeasibleTaxMix("no feasible grid point".into()));
    }
    let at = |ik: isize, il: isize| -> Option<&TaxRegimePoint> {
        if ik < 0 || il < 0 {
            return None;
        }
        rows.get(ik as usize).and_then(|r| r.get(il as usize))
    };
    let mut local: Vec<&TaxRegimePoint> = flat
        .iter()
        .filter(|(ik, il, p)| {
            let (ik, il) = (*ik as isize, *il as isize);
            (-1..=1)
                .flat_map(|a| (-1..=1).map(move |b| (a, b)))
                .filter(|&(a, b)| (a, b) != (0, 0))
                .all(|(a, b)| at(ik + a, il + b).is_none_or(|q| q.welfare <= p.welfare))
        })
        .map(|(_, _, p)| *p)
        .collect();
    local.sort_by(|a, b| b.welfare.total_cmp(&a.welfare));
    // Always include the best grid points as starts even when flagged non-local.
    let mut by_welfare: Vec<&TaxRegimePoint> = flat.iter().map(|(_, _, p)| *p).collect();
    by_welfare.sort_by(|a, b| b.welfare.total_cmp(&a.welfare));
    let mut starts: Vec<&TaxRegimePoint> = Vec::new();
    for p in local.into_iter().chain(by_welfare) {
        if starts.len() >= opts.starts {
            break;
        }
        if !starts.iter().any(|q| std::ptr::eq(*q, p)) {
            starts.push(p);
        }
    }

    let mut candidates = Vec::new();
    for s in starts {
        let mut guess = Guess::from_point(s, TaxBase::Consumption);
        let mut last: Option<TaxRegimePoint> = None;
        let res = compass_search_max(
            |x| match revenue_preserving_rate(problem, TaxRates::new(x[0], x[1], 0.0), TaxBase::Consumption, guess) {
                Ok(p) => {
                    guess = Guess::from_point(&p, TaxBase::Consumption);
                    let w = p.welfare;
                    last = Some(p);
                    Ok(Some(w))
                }
                Err(Error::InfeasibleTaxMix(_) | Error::EquilibriumNotFound(_)) => Ok(None),
                Err(e) => Err(e),
            },
            &[s.rates.labor, s.rates.capital],
            s.welfare,
            &[0.0, 0.0],
            &[opts.l_max, opts.k_max],
            opts.step,
            opts.min_step,
        )?;
        let _ = last;
        let mut point = revenue_preserving_rate(
            problem,
            TaxRates::new(res.x[0], res.x[1], 0.0),
            TaxBase::Consumption,
            Guess::from_point(s, TaxBase::Consumption),
        )?;
        // The welfare surface has a ridge along the kink; check the ridge
        // point at this labor tax in the neighborhood.
        let line = LineSpec { free: TaxBase::Consumption, fixed: TaxBase::Labor, fixed_value: point.rates.labor };
        let k = point.rates.capital;
        let lo = line_point(problem, &line, (k - 2.0 * opts.step).max(0.0), Guess::from_point(&point, line.free));
        let hi = line_point(problem, &line, (k + 2.0 * opts.step).min(opts.k_max), Guess::from_point(&point, line.free));
        if let (Ok(lo), Ok(hi)) = (lo, hi) {
            let kink = [(&lo, &point), (&point, &hi)]
                .into_iter()
                .find_map(|(a, b)| locate_kink(problem, &line, a, b).ok().flatten());
            if let Some(kp) = kink {
                if kp.welfare >= point.welfare - 1e-9 * point.welfare.abs() {
                    point = kp;
                }
            }
        }
        candidates.push(point);
    }
    candidates.sort_by(|a, b| b.welfare.total_cmp(&a.welfare));
    let optimum = candidates[0].clone();
    let consumption_only =
        revenue_preserving_rate(problem, TaxRates::new(0.0, 0.0, 0.0), TaxBase::Consumption, Guess::default())?;
    Ok(FullOptimum {
        grid: flat.iter().map(|(_, _, p)| FrontierPoint::from(*p)).collect(),
        optimum,
        candidates,
        consumption_only,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Sigma,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Sigma => "sigma",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "sigma" => Ok(SweepParam::Sigma),
            other => Err(Error::Config(format!("unknown sweep parameter '{other}' (expected gamma or sigma)"))),
        }
    }
}

/// Which tax problem is re-optimized at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCase {
    /// Labor and capital income taxes only.
    NoConsumptionTax,
    /// All three taxes. The labor tax is held at zero and the sign of the
    /// welfare derivative in it is checked at the optimum.
    Full,
}

impl SweepCase {
    fn line(&self) -> LineSpec {
        match self {
            SweepCase::NoConsumptionTax => LineSpec::NO_CONSUMPTION_TAX,
            SweepCase::Full => LineSpec::NO_LABOR_TAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub params: ModelParams,
    pub targets: CalibrationTargets,
    pub settings: EquilibriumSettings,
    /// Rates whose revenue, recomputed at each parameter value, is the target.
    pub reference_rates: TaxRates,
    pub case: SweepCase,
    pub line: LineOptions,
    /// Boundary bisection tolerance in the swept parameter.
    pub boundary_tol: f64,
}

impl SweepSpec {
    pub fn new(params: ModelParams, targets: CalibrationTargets, case: SweepCase) -> Self {
        Self {
            reference_rates: params.taxes(),
            params,
            targets,
            settings: EquilibriumSettings::default(),
            case,
            line: LineOptions { step: 0.02, xtol: 1e-5, ..LineOptions::default() },
            boundary_tol: 1e-3,
        }
    }

    /// Tax problem at a given parameter value.
    pub fn problem(&self, param: SweepParam, value: f64) -> Result<TaxProblem> {
        let (params, ability) = match param {
            SweepParam::Gamma => (self.params.with_gamma(value)?, calibrate(&self.targets, self.params.upsilon)?),
            SweepParam::Sigma => (self.params, calibrate(&self.targets.with_sigma(value), self.params.upsilon)?),
        };
        let params = params.with_taxes(self.reference_rates)?;
        Ok(TaxProblem::at_current_rates(&params, &ability, &self.settings)?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub tau_l: f64,
    pub tau_k: f64,
    pub tau_c: f64,
    pub welfare: f64,
    pub gross_rate: f64,
    pub pretax_rate: f64,
    pub omega: f64,
    pub regime: Option<Regime>,
    /// Welfare derivative in the labor tax at the optimum (full case only).
    pub labor_tax_slope: Option<f64>,
    pub error: Option<String>,
}

/// Parameter value separating two adjacent regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBoundary {
    pub value: f64,
    pub below: Regime,
    pub above: Regime,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub case: SweepCase,
    pub rows: Vec<SweepRow>,
    pub boundaries: Vec<RegimeBoundary>,
}

/// Re-optimizes the tax mix at one parameter value.
pub fn sweep_point(spec: &SweepSpec, param: SweepParam, value: f64) -> Result<(SweepRow, TaxRegimePoint)> {
    let problem = spec.problem(param, value)?;
    let opt = optimize_line(&problem, spec.case.line(), &spec.line)?.optimum;
    let labor_tax_slope = match spec.case {
        SweepCase::NoConsumptionTax => None,
        SweepCase::Full => {
            // One-sided slope of welfare when a small labor tax replaces consumption tax.
            let dl = 1e-3;
            let guess = Guess::from_point(&opt, TaxBase::Consumption);
            let p = revenue_preserving_rate(
                &problem,
                TaxRates::new(dl, opt.rates.capital, 0.0),
                TaxBase::Consumption,
                guess,
            )?;
            Some((p.welfare - opt.welfare) / dl)
        }
    };
    let eq = &opt.equilibrium;
    let row = SweepRow {
        value,
        tau_l: opt.rates.labor,
        tau_k: opt.rates.capital,
        tau_c: opt.rates.consumption,
        welfare: opt.welfare,
        gross_rate: eq.prices.gross_rate,
        pretax_rate: eq.pretax_rate(),
        omega: eq.prices.omega,
        regime: Some(opt.regime),
        labor_tax_slope,
        error: None,
    };
    Ok((row, opt))
}

fn failed_row(value: f64, e: &Error) -> SweepRow {
    SweepRow {
        value,
        tau_l: f64::NAN,
        tau_k: f64::NAN,
        tau_c: f64::NAN,
        welfare: f64::NAN,
        gross_rate: f64::NAN,
        pretax_rate: f64::NAN,
        omega: f64::NAN,
        regime: None,
        labor_tax_slope: None,
        error: Some(e.to_string()),
    }
}

/// Regime at the optimum for a parameter value, or `None` on failure.
fn regime_at(spec: &SweepSpec, param: SweepParam, value: f64) -> Option<Regime> {
    sweep_point(spec, param, value).ok().map(|(r, _)| r.regime.unwrap())
}

/// Re-optimizes at every grid value and locates regime boundaries by bisection.
pub fn sweep(spec: &SweepSpec, param: SweepParam, grid: &[f64]) -> SweepTable {
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&v| match sweep_point(spec, param, v) {
            Ok((row, _)) => row,
            Err(e) => failed_row(v, &e),
        })
        .collect();
    let mut boundaries = Vec::new();
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.regime.is_some()).collect();
    for w in ok.windows(2) {
        let (a, b) = (w[0].regime.unwrap(), w[1].regime.unwrap());
        if a == b {
            continue;
        }
        let value = bisect(
            |x| match regime_at(spec, param, x) {
                // Positive while still in the lower regime.
                Some(r) if r == a => 1.0,
                Some(_) => -1.0,
                None => -1.0,
            },
            w[0].value,
            w[1].value,
            true,
            spec.boundary_tol,
        );
        boundaries.push(RegimeBoundary { value, below: a, above: b });
    }
    SweepTable { param, case: spec.case, rows, boundaries }
}

/// Evenly spaced grid including both ends.
pub fn linspace(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline_problem() -> (TaxProblem, StationaryEquilibrium) {
        let params = ModelParams::baseline();
        let ability = calibrate(&CalibrationTargets::baseline(), params.upsilon).unwrap();
        TaxProblem::at_current_rates(&params, &ability, &EquilibriumSettings::default()).unwrap()
    }

    #[test]
    fn baseline_reproduces_itself() {
        let (prob, eq) = baseline_problem();
        let p = revenue_preserving_rate(&prob, TaxRates::new(0.0, 0.398, 0.0), TaxBase::Labor, Guess::default()).unwrap();
        assert!((p.rates.labor - 0.248).abs() < 1e-6);
        assert!(p.revenue_gap.abs() <= 1e-6 * prob.target);
        assert!((p.welfare / eq.welfare - 1.0).abs() < 1e-6);
    }

    #[test]
    fn eliminating_capital_tax() {
        let (prob, _) = baseline_problem();
        let p = revenue_preserving_rate(&prob, TaxRates::new(0.0, 0.0, 0.0), TaxBase::Labor, Guess::default()).unwrap();
        assert!(p.rates.labor > 0.3 && p.rates.labor < 0.33, "{}", p.rates.labor);
    }

    #[test]
    fn consumption_tax_replacing_labor_tax() {
        let (prob, _) = baseline_problem();
        let p = revenue_preserving_rate(&prob, TaxRates::new(0.0, 0.24, 0.0), TaxBase::Consumption, Guess::default())
            .unwrap();
        assert!((p.rates.consumption - 0.31).abs() <= 0.01, "{}", p.rates.consumption);
    }

    #[test]
    fn infeasible_when_fixed_rates_overshoot() {
        let (prob, _) = baseline_problem();
        let r = revenue_preserving_rate(&prob, TaxRates::new(0.6, 0.4, 0.0), TaxBase::Consumption, Guess::default());
        assert!(matches!(r, Err(Error::InfeasibleTaxMix(_))));
    }
}
