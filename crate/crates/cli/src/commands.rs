use domar_core::calibration::{calibrate as calibrate_ability, CalibrationTargets};
use domar_core::equilibrium::{solve_equilibrium, Revenue, StationaryEquilibrium};
use domar_core::household::Regime;
use domar_core::model::{AbilityProcess, ModelParams, Prices, TaxRates};
use domar_core::oracle::{self, OracleCheck};
use domar_core::tax_optimizer::{
    linspace, optimize_full, optimize_no_consumption_tax, sweep as run_sweep, FrontierPoint, SweepCase, SweepParam,
    SweepSpec, SweepTable, TaxProblem, TaxRegimePoint,
};
use domar_core::transition::{
    build_path, evaluate_path, solve_transition, vote_analysis, PricePaths, StageReport, TransitionPath, TransitionRow,
    VoteShares,
};
use domar_core::wealth::{
    invert_distribution, wealth_shares, ExceedancePoint, InversionSettings, WealthDistribution, STANDARD_BOTTOM_GROUPS,
    STANDARD_TOP_GROUPS,
};
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::figures;
use crate::manifest::Output;

pub struct Context {
    pub cfg: Config,
    pub out: Output,
    pub seed: u64,
}

impl Context {
    fn params(&self) -> Result<ModelParams, CliError> {
        self.cfg.params()
    }

    fn ability(&self) -> Result<AbilityProcess, CliError> {
        Ok(calibrate_ability(&self.cfg.targets(), self.cfg.upsilon)?)
    }

    fn problem(&self) -> Result<(TaxProblem, StationaryEquilibrium), CliError> {
        let (mut problem, eq) = TaxProblem::at_current_rates(&self.params()?, &self.ability()?, &self.cfg.equilibrium)?;
        problem.revenue_rtol = self.cfg.revenue_rtol;
        Ok((problem, eq))
    }

    fn invert(&self, eq: &StationaryEquilibrium, per_state: bool) -> Result<WealthDistribution, CliError> {
        let zeta = eq.pareto_exponent()?;
        let settings = InversionSettings { per_state, ..self.cfg.inversion };
        Ok(invert_distribution(&eq.mellin, zeta, &settings)?)
    }

    /// Writes the figure tables built from `artifact`.
    fn emit_figures(&self, artifact: &str) -> Result<(), CliError> {
        for f in figures::figures_from(artifact) {
            figures::emit(&f, &self.out.dir)?;
        }
        Ok(())
    }
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

#[derive(Serialize)]
struct CalibrationArtifact<'a> {
    targets: CalibrationTargets,
    ability: &'a AbilityProcess,
}

pub fn calibrate(ctx: &Context) -> Result<(), CliError> {
    let ability = ctx.ability()?;
    ctx.out.write_json("ability.json", &CalibrationArtifact { targets: ctx.cfg.targets(), ability: &ability })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSummary {
    pub params: ModelParams,
    #[serde(rename = "R")]
    pub gross_rate: f64,
    /// Post-tax net risk-free rate `R − 1`.
    pub net_rate: f64,
    pub pretax_rate: f64,
    pub omega: f64,
    pub h: f64,
    pub borrowing_limit: f64,
    pub zeta: f64,
    pub regime: Regime,
    pub welfare: f64,
    pub capital: f64,
    pub consumption: f64,
    pub consumption_workers: f64,
    pub consumption_entrepreneurs: f64,
    pub total_wealth: f64,
    pub entrepreneur_share: f64,
    pub revenue: Revenue,
    pub excess_bonds: f64,
    pub excess_labor: f64,
    pub goods_market_residual: f64,
    pub rho_a1: f64,
    pub iterations: usize,
}

impl EquilibriumSummary {
    fn new(eq: &StationaryEquilibrium) -> Result<Self, CliError> {
        let a = &eq.aggregates;
        Ok(Self {
            params: eq.params,
            gross_rate: eq.prices.gross_rate,
            net_rate: eq.prices.gross_rate - 1.0,
            pretax_rate: eq.pretax_rate(),
            omega: eq.prices.omega,
            h: eq.h(),
            borrowing_limit: eq.policy.returns.b_bar,
            zeta: eq.pareto_exponent()?,
            regime: eq.regime(),
            welfare: eq.welfare,
            capital: a.capital,
            consumption: a.consumption,
            consumption_workers: a.workers.consumption,
            consumption_entrepreneurs: a.entrepreneurs.consumption,
            total_wealth: a.total_wealth,
            entrepreneur_share: a.entrepreneurs.population,
            revenue: eq.revenue,
            excess_bonds: eq.excess_bonds,
            excess_labor: eq.excess_labor,
            goods_market_residual: eq.goods_market_residual()?,
            rho_a1: eq.rho_a1,
            iterations: eq.iterations,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
struct Share {
    group: String,
    fraction: f64,
    share_pct: f64,
}

#[derive(Serialize)]
struct EquilibriumArtifact {
    summary: EquilibriumSummary,
    prob_zero_financial_wealth: f64,
    prob_negative_financial_wealth: f64,
    median_financial_wealth: f64,
    extrapolation_threshold: f64,
    mean_financial_wealth: f64,
    mean_financial_wealth_exact: f64,
    shares: Vec<Share>,
    exceedance: Vec<ExceedancePoint>,
}

pub fn equilibrium(ctx: &Context) -> Result<(), CliError> {
    let eq = solve_equilibrium(&ctx.params()?, &ctx.ability()?, &ctx.cfg.equilibrium)?;
    let dist = ctx.invert(&eq, ctx.cfg.inversion.per_state)?;
    let table = wealth_shares(&dist, &STANDARD_TOP_GROUPS, &STANDARD_BOTTOM_GROUPS)?;
    let d = &ctx.cfg.distribution;
    let exceedance = dist.exceedance_table(d.w_min, d.w_max, d.points);
    let shares: Vec<Share> = table
        .rows
        .iter()
        .map(|r| Share { group: r.group.to_string(), fraction: r.fraction, share_pct: r.share_pct })
        .collect();
    let artifact = EquilibriumArtifact {
        summary: EquilibriumSummary::new(&eq)?,
        prob_zero_financial_wealth: dist.prob_zero_financial_wealth(),
        prob_negative_financial_wealth: dist.prob_negative_financial_wealth(),
        median_financial_wealth: dist.quantile_wealth(0.5),
        extrapolation_threshold: dist.extrapolation_threshold_wealth(),
        mean_financial_wealth: table.mean_financial_wealth,
        mean_financial_wealth_exact: table.mean_financial_wealth_exact,
        shares: shares.clone(),
        exceedance: exceedance.clone(),
    };
    ctx.out.write_json("equilibrium.json", &artifact)?;
    ctx.out.write_csv("wealth_distribution.csv", &exceedance)?;
    ctx.out.write_csv("wealth_shares.csv", &shares)?;
    ctx.emit_figures("equilibrium.json")
}

fn point(eq: &StationaryEquilibrium, target: f64) -> FrontierPoint {
    FrontierPoint::from(&TaxRegimePoint::new(eq.clone(), target))
}

#[derive(Serialize)]
struct FrontierArtifact {
    target_revenue: f64,
    baseline: FrontierPoint,
    optimum: FrontierPoint,
    welfare_gain_pct: f64,
    kinks: Vec<f64>,
    points: Vec<FrontierPoint>,
    failures: Vec<(f64, String)>,
}

pub fn frontier(ctx: &Context) -> Result<(), CliError> {
    let (problem, eq) = ctx.problem()?;
    let line = optimize_no_consumption_tax(&problem, &ctx.cfg.frontier)?;
    let artifact = FrontierArtifact {
        target_revenue: problem.target,
        baseline: point(&eq, problem.target),
        optimum: FrontierPoint::from(&line.optimum),
        welfare_gain_pct: pct(line.optimum.welfare / eq.welfare - 1.0),
        kinks: line.kinks.clone(),
        points: line.points.clone(),
        failures: line.failures.clone(),
    };
    ctx.out.write_json("frontier.json", &artifact)?;
    ctx.out.write_csv("frontier.csv", &line.points)?;
    ctx.emit_figures("frontier.json")
}

/// Percentage changes of the welfare-maximizing mix against alternatives.
#[derive(Debug, Clone, Serialize)]
pub struct Gains {
    pub welfare_vs_baseline_pct: f64,
    pub welfare_vs_consumption_only_pct: f64,
    pub welfare_vs_income_only_pct: f64,
    pub capital_pct: f64,
    pub consumption_pct: f64,
    pub consumption_workers_pct: f64,
    pub consumption_entrepreneurs_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
struct WealthRow {
    wealth: f64,
    panel: &'static str,
    baseline: f64,
    optimum: f64,
}

#[derive(Serialize)]
struct OptimizeArtifact {
    target_revenue: f64,
    baseline: FrontierPoint,
    optimum: FrontierPoint,
    consumption_only: FrontierPoint,
    income_only: FrontierPoint,
    gains: Gains,
    candidates: Vec<FrontierPoint>,
    grid: Vec<FrontierPoint>,
    wealth: Vec<WealthRow>,
}

fn wealth_comparison(ctx: &Context, base: &StationaryEquilibrium, opt: &StationaryEquilibrium) -> Result<Vec<WealthRow>, CliError> {
    let (db, dopt) = (ctx.invert(base, false)?, ctx.invert(opt, false)?);
    let d = &ctx.cfg.distribution;
    let lo = base.policy.returns.b_bar.min(opt.policy.returns.b_bar);
    let n_body = 301;
    let mut rows: Vec<WealthRow> = (0..n_body)
        .map(|i| lo + (d.body_max - lo) * i as f64 / (n_body - 1) as f64)
        .map(|w| WealthRow { wealth: w, panel: "body", baseline: db.exceedance(w), optimum: dopt.exceedance(w) })
        .collect();
    let (a, b) = (d.body_max.ln(), d.w_max.ln());
    let n_tail = 200;
    rows.extend((1..=n_tail).map(|i| {
        let w = (a + (b - a) * i as f64 / n_tail as f64).exp();
        WealthRow { wealth: w, panel: "tail", baseline: db.exceedance(w), optimum: dopt.exceedance(w) }
    }));
    Ok(rows)
}

pub fn optimize(ctx: &Context) -> Result<(), CliError> {
    let (problem, eq) = ctx.problem()?;
    let full = optimize_full(&problem, &ctx.cfg.optimize)?;
    let income = optimize_no_consumption_tax(&problem, &ctx.cfg.frontier)?;
    let o = &full.optimum;
    let oa = &o.equilibrium.aggregates;
    let ba = &eq.aggregates;
    let gains = Gains {
        welfare_vs_baseline_pct: pct(o.welfare / eq.welfare - 1.0),
        welfare_vs_consumption_only_pct: pct(o.welfare / full.consumption_only.welfare - 1.0),
        welfare_vs_income_only_pct: pct(o.welfare / income.optimum.welfare - 1.0),
        capital_pct: pct(oa.capital / ba.capital - 1.0),
        consumption_pct: pct(oa.consumption / ba.consumption - 1.0),
        consumption_workers_pct: pct(oa.workers.consumption / ba.workers.consumption - 1.0),
        consumption_entrepreneurs_pct: pct(oa.entrepreneurs.consumption / ba.entrepreneurs.consumption - 1.0),
    };
    let artifact = OptimizeArtifact {
        target_revenue: problem.target,
        baseline: point(&eq, problem.target),
        optimum: FrontierPoint::from(o),
        consumption_only: FrontierPoint::from(&full.consumption_only),
        income_only: FrontierPoint::from(&income.optimum),
        gains,
        candidates: full.candidates.iter().map(FrontierPoint::from).collect(),
        grid: full.grid.clone(),
        wealth: wealth_comparison(ctx, &eq, &o.equilibrium)?,
    };
    ctx.out.write_json("optimize.json", &artifact)?;
    ctx.out.write_csv("optimize_grid.csv", &full.grid)?;
    ctx.emit_figures("optimize.json")
}

pub fn sweep_artifact_name(case: SweepCase, param: SweepParam) -> String {
    let c = match case {
        SweepCase::NoConsumptionTax => "no_consumption_tax",
        SweepCase::Full => "full",
    };
    format!("sweep_{c}_{}", param.as_str())
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn sweep(ctx: &Context, param: SweepParam, from: f64, to: f64, step: f64, case: SweepCase) -> Result<(), CliError> {
    if !(step > 0.0) || !(to >= from) {
        return Err(CliError::Config(format!("sweep grid needs step > 0 and to >= from (got {from}..{to} by {step})")));
    }
    let mut spec = SweepSpec::new(ctx.params()?, ctx.cfg.targets(), case);
    spec.settings = ctx.cfg.equilibrium;
    spec.line = ctx.cfg.sweep.line;
    spec.boundary_tol = ctx.cfg.sweep.boundary_tol;
    let table: SweepTable = run_sweep(&spec, param, &linspace(from, to, step));
    if table.rows.iter().all(|r| r.regime.is_none()) {
        let first = table.rows.first().and_then(|r| r.error.clone()).unwrap_or_default();
        return Err(CliError::Solver(domar_core::Error::EquilibriumNotFound(format!("every sweep point failed: {first}"))));
    }
    let name = sweep_artifact_name(case, param);
    ctx.out.write_json(&format!("{name}.json"), &table)?;
    ctx.out.write_csv(&format!("{name}.csv"), &table.rows)?;
    ctx.emit_figures(&format!("{name}.json"))
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionSummary {
    pub workers_year_one_pct: f64,
    pub entrepreneurs_year_one_pct: f64,
    pub total_year_one_pct: f64,
    pub revenue_year_one_pct: f64,
    pub recovery_year_workers: Option<usize>,
    pub recovery_year_total: Option<usize>,
    pub max_excess_bonds: f64,
    pub max_excess_labor: f64,
    pub stagnated: bool,
}

impl TransitionSummary {
    pub fn new(path: &TransitionPath) -> Self {
        let (b, l) = path.max_abs_excess();
        Self {
            workers_year_one_pct: pct(path.change_from_start(1, |g| g.consumption_workers)),
            entrepreneurs_year_one_pct: pct(path.change_from_start(1, |g| g.consumption_entrepreneurs)),
            total_year_one_pct: pct(path.change_from_start(1, |g| g.consumption_total)),
            revenue_year_one_pct: pct(path.change_from_start(1, |g| g.revenue.total)),
            recovery_year_workers: path.recovery_year(|g| g.consumption_workers),
            recovery_year_total: path.recovery_year(|g| g.consumption_total),
            max_excess_bonds: b,
            max_excess_labor: l,
            stagnated: path.stagnated,
        }
    }
}

#[derive(Serialize)]
struct TransitionArtifact {
    old_rates: TaxRates,
    new_rates: TaxRates,
    old_prices: Prices,
    new_prices: Prices,
    summary: TransitionSummary,
    votes: Option<VoteShares>,
    stages: Vec<StageReport>,
    rows: Vec<TransitionRow>,
}

#[derive(Serialize)]
struct VoteRow {
    group: &'static str,
    share: f64,
}

pub fn transition(ctx: &Context) -> Result<(), CliError> {
    let (problem, old) = ctx.problem()?;
    let t = &ctx.cfg.transition;
    let new = if t.use_optimum {
        optimize_full(&problem, &ctx.cfg.optimize)?.optimum.equilibrium
    } else {
        problem.equilibrium_at(TaxRates::new(t.tau_l, t.tau_k, t.tau_c), None)?
    };
    let path = solve_transition(&old, &new, &ctx.cfg.transition_settings())?;
    let votes = if t.votes { Some(vote_analysis(&path, &old, &ctx.invert(&old, true)?)) } else { None };
    let artifact = TransitionArtifact {
        old_rates: old.params.taxes(),
        new_rates: new.params.taxes(),
        old_prices: old.prices,
        new_prices: new.prices,
        summary: TransitionSummary::new(&path),
        votes: votes.clone(),
        stages: path.stages.clone(),
        rows: path.rows(),
    };
    ctx.out.write_json("transition.json", &artifact)?;
    ctx.out.write_csv("transition.csv", &artifact.rows)?;
    if let Some(v) = votes {
        let rows = [
            VoteRow { group: "all", share: v.all },
            VoteRow { group: "workers", share: v.workers },
            VoteRow { group: "entrepreneurs", share: v.entrepreneurs },
        ];
        ctx.out.write_csv("votes.csv", &rows)?;
    }
    ctx.emit_figures("transition.json")
}

#[derive(Serialize)]
struct VerifyArtifact {
    seed: u64,
    passed: bool,
    checks: Vec<OracleCheck>,
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let v = &ctx.cfg.verify;
    let params = ctx.params()?;
    let ability = ctx.ability()?;
    let eq = solve_equilibrium(&params, &ability, &ctx.cfg.equilibrium)?;
    let dist = ctx.invert(&eq, false)?;
    let s = ctx.seed;
    let mut checks = vec![oracle::mean_wealth(&eq, v.mean_agents, s)?];
    checks.extend(oracle::state_frequencies(&eq, v.mean_agents, s.wrapping_add(1)));
    checks.push(oracle::tail_slope(&eq, dist.zeta, v.cdf_agents, s.wrapping_add(2)));
    checks.push(oracle::kolmogorov(&eq, &dist, v.cdf_agents, s.wrapping_add(3)));

    // Bookkeeping along any price path: linear prices towards the configured reform.
    let t = &ctx.cfg.transition;
    let reform = params.with_taxes(TaxRates::new(t.tau_l, t.tau_k, t.tau_c))?;
    let new = solve_equilibrium(&reform, &ability, &ctx.cfg.equilibrium)?;
    let prices = PricePaths::linear(eq.prices, new.prices, v.transition_horizon);
    let path = build_path(&eq, &new, &prices, &evaluate_path(&eq, &new, &prices)?)?;
    let years = [1, 2, 5, 10, 25, 50, 100];
    checks.extend(oracle::transition_consumption(&eq, &new, &path, v.transition_agents, s.wrapping_add(4), &years));

    let passed = checks.iter().all(|c| c.passed);
    ctx.out.write_json("verify.json", &VerifyArtifact { seed: s, passed, checks: checks.clone() })?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Verification(failed.join(", ")))
    }
}
