//! Primitive parameters and closed-form per-period objects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::optimize::golden_section_max;
use crate::numerics::spectral::{is_irreducible, stationary_distribution};

/// The three flat tax rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxRates {
    #[serde(rename = "tau_L")]
    pub labor: f64,
    #[serde(rename = "tau_K")]
    pub capital: f64,
    #[serde(rename = "tau_C")]
    pub consumption: f64,
}

impl TaxRates {
    pub const BASELINE: TaxRates = TaxRates { labor: 0.248, capital: 0.398, consumption: 0.0 };

    pub fn new(labor: f64, capital: f64, consumption: f64) -> Self {
        Self { labor, capital, consumption }
    }
}

/// Preferences, technology, demography and taxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub upsilon: f64,
    #[serde(rename = "tau_K")]
    pub tau_k: f64,
    #[serde(rename = "tau_L")]
    pub tau_l: f64,
    #[serde(rename = "tau_C")]
    pub tau_c: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    delta: f64,
    beta: f64,
    gamma: f64,
    upsilon: f64,
    #[serde(rename = "tau_K")]
    tau_k: f64,
    #[serde(rename = "tau_L")]
    tau_l: f64,
    #[serde(rename = "tau_C")]
    tau_c: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.alpha, r.delta, r.beta, r.gamma, r.upsilon, TaxRates::new(r.tau_l, r.tau_k, r.tau_c))
    }
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, reason })
    }
}

impl ModelParams {
    pub fn new(alpha: f64, delta: f64, beta: f64, gamma: f64, upsilon: f64, taxes: TaxRates) -> Result<Self> {
        check("alpha", alpha, alpha > 0.0 && alpha < 1.0, "must lie in (0,1)")?;
        check("delta", delta, (0.0..=1.0).contains(&delta), "must lie in [0,1]")?;
        check("beta", beta, beta > 0.0 && beta < 1.0, "must lie in (0,1)")?;
        check("gamma", gamma, gamma > 0.0, "must be positive")?;
        check("upsilon", upsilon, upsilon > 0.0 && upsilon < 1.0, "must lie in (0,1)")?;
        check("tau_K", taxes.capital, (0.0..1.0).contains(&taxes.capital), "must lie in [0,1)")?;
        check("tau_L", taxes.labor, (0.0..1.0).contains(&taxes.labor), "must lie in [0,1)")?;
        check("tau_C", taxes.consumption, taxes.consumption >= 0.0, "must be nonnegative")?;
        Ok(Self {
            alpha,
            delta,
            beta,
            gamma,
            upsilon,
            tau_k: taxes.capital,
            tau_l: taxes.labor,
            tau_c: taxes.consumption,
        })
    }

    /// Baseline US calibration.
    pub fn baseline() -> Self {
        Self::new(0.36, 0.08, 0.96, 3.0, 0.975, TaxRates::BASELINE).expect("baseline is valid")
    }

    pub fn taxes(&self) -> TaxRates {
        TaxRates::new(self.tau_l, self.tau_k, self.tau_c)
    }

    pub fn with_taxes(&self, taxes: TaxRates) -> Result<Self> {
        Self::new(self.alpha, self.delta, self.beta, self.gamma, self.upsilon, taxes)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.alpha, self.delta, self.beta, gamma, self.upsilon, self.taxes())
    }
}

/// Markov chain of ability states with per-state productivity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbilityProcess {
    pub n_states: usize,
    pub productivities: Vec<f64>,
    #[serde(serialize_with = "rows::serialize")]
    pub transition: DMatrix<f64>,
    pub newborn_dist: DVector<f64>,
    /// Cross-sectional distribution of states under survival `upsilon` and reset to `newborn_dist`.
    pub stationary_dist: DVector<f64>,
}

impl AbilityProcess {
    pub fn new(
        productivities: Vec<f64>,
        transition: DMatrix<f64>,
        newborn_dist: DVector<f64>,
        upsilon: f64,
    ) -> Result<Self> {
        let n = productivities.len();
        if n == 0 || transition.nrows() != n || transition.ncols() != n || newborn_dist.len() != n {
            return Err(Error::Domain("ability process dimensions disagree".into()));
        }
        if productivities.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Domain("productivities must be finite and nonnegative".into()));
        }
        for i in 0..n {
            let row = transition.row(i);
            if row.iter().any(|v| *v < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} of the transition matrix is not a probability vector")));
            }
        }
        if newborn_dist.iter().any(|v| *v < 0.0) || (newborn_dist.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("newborn distribution is not a probability vector".into()));
        }
        if !is_irreducible(&transition) {
            return Err(Error::Domain("transition matrix is not irreducible".into()));
        }
        let stationary_dist = mortality_adjusted_stationary(&transition, &newborn_dist, upsilon)?;
        Ok(Self { n_states: n, productivities, transition, newborn_dist, stationary_dist })
    }

    /// True for states with positive productivity.
    pub fn is_entrepreneur(&self, n: usize) -> bool {
        self.productivities[n] > 0.0
    }

    /// Same chain with productivities multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.productivities {
            *a *= factor;
        }
        out
    }
}

/// Stationary distribution of the chain that survives with probability
/// `upsilon` and otherwise restarts from `newborn`.
pub fn mortality_adjusted_stationary(
    transition: &DMatrix<f64>,
    newborn: &DVector<f64>,
    upsilon: f64,
) -> Result<DVector<f64>> {
    let n = transition.nrows();
    let ones = DVector::from_element(n, 1.0);
    let reset = transition * upsilon + (ones * newborn.transpose()) * (1.0 - upsilon);
    stationary_distribution(&reset)
}

/// Post-tax gross risk-free rate and pre-tax wage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    #[serde(rename = "R")]
    pub gross_rate: f64,
    pub omega: f64,
}

impl Prices {
    pub fn new(gross_rate: f64, omega: f64) -> Self {
        Self { gross_rate, omega }
    }
}

/// Per-state returns and the human-wealth objects they imply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReturns {
    /// Post-tax net return per unit of capital.
    pub r: Vec<f64>,
    /// Labor hired per unit of capital.
    pub ell: Vec<f64>,
    pub h: f64,
    pub b_bar: f64,
}

/// Optimal labor per unit of capital and the post-tax net return on capital
/// under Cobb-Douglas technology `A k^alpha l^(1-alpha)`.
pub fn labor_demand_and_return(a: f64, params: &ModelParams, omega: f64) -> Result<(f64, f64)> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("wage must be positive, got {omega}")));
    }
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("productivity must be nonnegative, got {a}")));
    }
    if a == 0.0 {
        return Ok((0.0, -(1.0 - params.tau_k) * params.delta));
    }
    let alpha = params.alpha;
    let ell = ((1.0 - alpha) * a / omega).powf(1.0 / alpha);
    let r = (1.0 - params.tau_k) * (alpha * a * ell.powf(1.0 - alpha) - params.delta);
    Ok((ell, r))
}

/// Numerical profit maximization for a generic per-unit-capital output
/// function `f(l) = F(1, l)`. Returns `(l, r)` as in [`labor_demand_and_return`].
pub fn numeric_labor_demand<F>(f: F, delta: f64, tau_k: f64, omega: f64, ell_max: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let m = golden_section_max(|l| Ok(f(l) - delta - omega * l), 0.0, ell_max, 1e-13 * ell_max.max(1.0))?;
    Ok((m.x, (1.0 - tau_k) * m.value))
}

/// The natural borrowing limit `-(1-tau_L) omega / (R - upsilon)`.
pub fn borrowing_limit(params: &ModelParams, prices: &Prices) -> Result<f64> {
    let (gross_rate, upsilon) = (prices.gross_rate, params.upsilon);
    if !(gross_rate > upsilon) {
        return Err(Error::IllPosedBorrowingLimit { gross_rate, upsilon });
    }
    if !(prices.omega > 0.0) {
        return Err(Error::Domain(format!("wage must be positive, got {}", prices.omega)));
    }
    Ok(-(1.0 - params.tau_l) * prices.omega / (gross_rate - upsilon))
}

/// Present value of post-tax wages, `-R * b_bar`.
pub fn human_wealth(params: &ModelParams, prices: &Prices) -> Result<f64> {
    Ok(-prices.gross_rate * borrowing_limit(params, prices)?)
}

pub fn state_returns(params: &ModelParams, ability: &AbilityProcess, prices: &Prices) -> Result<StateReturns> {
    let b_bar = borrowing_limit(params, prices)?;
    let mut r = Vec::with_capacity(ability.n_states);
    let mut ell = Vec::with_capacity(ability.n_states);
    for &a in &ability.productivities {
        let (l, rn) = labor_demand_and_return(a, params, prices.omega)?;
        ell.push(l);
        r.push(rn);
    }
    Ok(StateReturns { r, ell, h: -prices.gross_rate * b_bar, b_bar })
}

/// Box-Cox transform `(c^(1-gamma) - 1)/(1-gamma)`, `log c` at `gamma = 1`.
pub fn box_cox(c: f64, gamma: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("Box-Cox argument must be positive, got {c}")));
    }
    Ok(box_cox_unchecked(c, gamma))
}

pub(crate) fn box_cox_unchecked(c: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        c.ln()
    } else {
        let e = 1.0 - gamma;
        (e * c.ln()).exp_m1() / e
    }
}

/// Inverse of [`box_cox`].
pub fn box_cox_inverse(v: f64, gamma: f64) -> Result<f64> {
    if gamma == 1.0 {
        return Ok(v.exp());
    }
    let e = 1.0 - gamma;
    let base = e * v;
    if !(base > -1.0) {
        return Err(Error::Domain(format!("{v} is outside the range of the Box-Cox transform")));
    }
    Ok((base.ln_1p() / e).exp())
}

/// Gross return on total wealth in state `n` for capital weight `theta`.
pub fn gross_total_return(n: usize, theta: f64, returns: &StateReturns, params: &ModelParams, prices: &Prices) -> f64 {
    ((1.0 + returns.r[n]) * theta + prices.gross_rate * (1.0 - theta)) / params.upsilon
}

/// Serializes a matrix as a list of rows.
pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(m.nrows()))?;
        for i in 0..m.nrows() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}
