//! Gil-Pelaez inversion of the stationary wealth distribution.
//!
//! The distribution of `L = log(S/h)` has point masses: a newborn sits at
//! exactly `L = 0`, and an agent who has lived `k` periods along a fixed
//! path of states sits at the sum of the corresponding log growth factors.
//! Atoms with mass above a threshold are enumerated exactly from the
//! branching tree of paths and removed from the characteristic function.
//! Only the remainder, a measure made of many tiny atoms, is inverted
//! numerically.

use serde::{Deserialize, Serialize};

use super::{MellinEvaluator, C64};
use crate::error::{Error, Result};
use crate::numerics::quadrature::PanelRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSettings {
    /// Grid for `log S − log h`.
    pub l_min: f64,
    pub l_max: f64,
    pub points: usize,
    /// Truncation point of the frequency integral.
    pub t_max: f64,
    pub panel_width: f64,
    /// Atoms at least this heavy are handled exactly.
    pub atom_mass: f64,
    /// Inversion is trusted while its error estimate stays below this
    /// fraction of the computed exceedance probability.
    pub tail_error_ratio: f64,
    /// Also compute the state-conditional distributions.
    pub per_state: bool,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            l_min: -2.0,
            l_max: 14.0,
            points: 1 << 12,
            t_max: 800.0,
            panel_width: 0.1,
            atom_mass: 1e-6,
            tail_error_ratio: 0.1,
            per_state: false,
        }
    }
}

/// A point mass of total wealth at `h · exp(log_rel)` among agents in `state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub log_rel: f64,
    pub state: usize,
    pub mass: f64,
}

/// Enumerates all path atoms with joint mass at least `min_mass`, sorted by location.
pub fn extract_atoms(ev: &MellinEvaluator, min_mass: f64) -> Vec<Atom> {
    let n = ev.n_states();
    let mut stack: Vec<Atom> = (0..n)
        .map(|s| Atom { log_rel: 0.0, state: s, mass: (1.0 - ev.upsilon) * ev.newborn[s] })
        .filter(|a| a.mass >= min_mass)
        .collect();
    let mut out = Vec::new();
    while let Some(a) = stack.pop() {
        for k in 0..n {
            let mass = a.mass * ev.upsilon * ev.transition[(a.state, k)];
            if mass >= min_mass {
                stack.push(Atom { log_rel: a.log_rel + ev.log_growth[(a.state, k)], state: k, mass });
            }
        }
        out.push(a);
    }
    out.sort_by(|a, b| a.log_rel.total_cmp(&b.log_rel).then(a.state.cmp(&b.state)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Inversion,
    Extrapolation,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Inversion => "inversion",
            Source::Extrapolation => "extrapolation",
        }
    }
}

/// One row of an exceedance table in financial wealth `W = S − h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePoint {
    pub wealth: f64,
    pub exceedance_prob: f64,
    pub source: Source,
}

/// Stationary distribution of total wealth on a log grid.
#[derive(Debug, Clone, Serialize)]
pub struct WealthDistribution {
    pub h: f64,
    pub zeta: f64,
    /// Exact `E(S)` from the Mellin transform.
    pub mean_total_wealth: f64,
    /// Grid of `log S`.
    pub log_grid: Vec<f64>,
    /// `P(log S <= y)` on the grid.
    pub cdf: Vec<f64>,
    /// `P(log S <= y | J = n)` on the grid, one vector per state, when requested.
    pub cdf_by_state: Vec<Vec<f64>>,
    /// Estimated absolute error of the inverted CDF on the grid.
    pub error_estimate: Vec<f64>,
    /// Total wealth above which the Pareto tail replaces the inversion.
    pub extrapolation_threshold: f64,
    #[serde(skip)]
    pub atoms: Vec<Atom>,
    #[serde(skip)]
    stationary: Vec<f64>,
    // Inversion of the non-atomic remainder, monotonized; index 0 is the
    // unconditional series, 1..=N the joint series by state when present.
    #[serde(skip)]
    residual: Vec<Vec<f64>>,
    #[serde(skip)]
    residual_mass: Vec<f64>,
    #[serde(skip)]
    threshold_index: usize,
    #[serde(skip)]
    l_min: f64,
    #[serde(skip)]
    dl: f64,
}

impl WealthDistribution {
    fn rel(&self, log_s: f64) -> f64 {
        log_s - self.h.ln()
    }

    fn threshold_rel(&self) -> f64 {
        self.l_min + self.threshold_index as f64 * self.dl
    }

    fn residual_at(&self, series: usize, l: f64) -> f64 {
        let r = &self.residual[series];
        let x = (l - self.l_min) / self.dl;
        if x <= 0.0 {
            return 0.0;
        }
        let i = x.floor() as usize;
        if i + 1 >= r.len() {
            return *r.last().unwrap();
        }
        let f = x - i as f64;
        r[i] * (1.0 - f) + r[i + 1] * f
    }

    fn atoms_at_or_below(&self, state: Option<usize>, l: f64) -> f64 {
        let end = self.atoms.partition_point(|a| a.log_rel <= l);
        self.atoms[..end].iter().filter(|a| state.is_none_or(|s| a.state == s)).map(|a| a.mass).sum()
    }

    fn atoms_below(&self, state: Option<usize>, l: f64) -> f64 {
        let end = self.atoms.partition_point(|a| a.log_rel < l);
        self.atoms[..end].iter().filter(|a| state.is_none_or(|s| a.state == s)).map(|a| a.mass).sum()
    }

    /// Joint `P(L <= l, J = n)` (or unconditional with `None`) before any tail splice.
    fn body_cdf(&self, state: Option<usize>, l: f64) -> f64 {
        let series = state.map(|s| s + 1).unwrap_or(0);
        self.atoms_at_or_below(state, l) + self.residual_at(series, l)
    }

    fn joint_cdf_rel(&self, state: Option<usize>, l: f64) -> f64 {
        let total = state.map(|s| self.stationary[s]).unwrap_or(1.0);
        let lt = self.threshold_rel();
        if l <= lt {
            self.body_cdf(state, l).clamp(0.0, total)
        } else {
            let tail = (total - self.body_cdf(state, lt)).max(0.0);
            total - tail * (-self.zeta * (l - lt)).exp()
        }
    }

    /// State probabilities the conditional distributions are weighted by.
    pub fn stationary_weights(&self) -> &[f64] {
        &self.stationary
    }

    pub fn has_states(&self) -> bool {
        self.residual.len() > 1
    }

    /// `P(log S <= y)`.
    pub fn cdf_log(&self, y: f64) -> f64 {
        self.joint_cdf_rel(None, self.rel(y))
    }

    /// `P(log S <= y | J = n)`; requires per-state inversion.
    pub fn conditional_cdf_log(&self, n: usize, y: f64) -> f64 {
        assert!(self.has_states(), "distribution was inverted without state detail");
        self.joint_cdf_rel(Some(n), self.rel(y)) / self.stationary[n]
    }

    /// `P(W > w)` in financial wealth.
    pub fn exceedance(&self, w: f64) -> f64 {
        let s = w + self.h;
        if s <= 0.0 {
            return 1.0;
        }
        let l = self.rel(s.ln());
        let lt = self.threshold_rel();
        if l > lt {
            // Direct tail formula avoids cancellation in 1 − CDF.
            let tail = (1.0 - self.body_cdf(None, lt)).max(0.0);
            return tail * (-self.zeta * (l - lt)).exp();
        }
        1.0 - self.cdf_log(s.ln())
    }

    /// `P(W > w | J = n)`.
    pub fn conditional_exceedance(&self, n: usize, w: f64) -> f64 {
        let s = w + self.h;
        if s <= 0.0 {
            return 1.0;
        }
        1.0 - self.conditional_cdf_log(n, s.ln())
    }

    /// Mass of newborns and any other agents with exactly zero financial wealth.
    pub fn prob_zero_financial_wealth(&self) -> f64 {
        self.atoms.iter().filter(|a| a.log_rel.abs() < 1e-12).map(|a| a.mass).sum()
    }

    /// `P(W < 0)`.
    pub fn prob_negative_financial_wealth(&self) -> f64 {
        self.atoms_below(None, -1e-12) + self.residual_at(0, 0.0)
    }

    /// Financial-wealth threshold of the Pareto splice.
    pub fn extrapolation_threshold_wealth(&self) -> f64 {
        self.extrapolation_threshold - self.h
    }

    /// Exceedance probabilities at `points` log-spaced financial-wealth levels in `[w_min, w_max]`.
    pub fn exceedance_table(&self, w_min: f64, w_max: f64, points: usize) -> Vec<ExceedancePoint> {
        let wt = self.extrapolation_threshold_wealth();
        let (a, b) = (w_min.ln(), w_max.ln());
        (0..points)
            .map(|i| {
                let w = (a + (b - a) * i as f64 / (points.max(2) - 1) as f64).exp();
                ExceedancePoint {
                    wealth: w,
                    exceedance_prob: self.exceedance(w),
                    source: if w > wt { Source::Extrapolation } else { Source::Inversion },
                }
            })
            .collect()
    }

    /// Exceedance table from wealth 1 up to `s_max`, spliced to the Pareto tail above the threshold.
    pub fn tail_extrapolate(&self, s_max: f64) -> Vec<ExceedancePoint> {
        self.exceedance_table(1.0, s_max, 400)
    }

    /// Slope of `log P(S > s)` in `log s` just below the splice.
    pub fn pre_splice_slope(&self) -> f64 {
        let lt = self.threshold_rel();
        let step = 0.25;
        let e1 = 1.0 - self.body_cdf(None, lt - step);
        let e2 = 1.0 - self.body_cdf(None, lt);
        (e2.ln() - e1.ln()) / step
    }

    /// `∫_w^∞ P(W > v) dv`, using the exact atoms, the trapezoid rule on the
    /// inverted remainder, and the Pareto tail beyond the splice.
    pub fn integrated_exceedance(&self, w: f64) -> f64 {
        let h = self.h;
        let lt = self.threshold_rel();
        let wt = h * lt.exp() - h;
        let l0 = ((w + h) / h).ln().max(self.l_min);
        let w = w.max(h * self.l_min.exp() - h);
        if l0 >= lt {
            let tail_at = 1.0 - self.joint_cdf_rel(None, l0);
            return tail_at * (w + h) / (self.zeta - 1.0);
        }
        // Atoms up to the splice.
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.log_rel <= lt)
            .map(|a| a.mass * ((h * a.log_rel.exp() - h).min(wt) - w).max(0.0))
            .sum();
        // Remainder on the grid between l0 and lt, integrated in dv = h e^l dl.
        let mr = self.residual_mass[0];
        let f = |l: f64| (mr - self.residual_at(0, l)) * h * l.exp();
        let mut body = 0.0;
        let first = ((l0 - self.l_min) / self.dl).floor() as usize + 1;
        let mut prev_l = l0;
        let mut prev_f = f(l0);
        let mut k = first;
        while k <= self.threshold_index {
            let l = self.l_min + k as f64 * self.dl;
            let fl = f(l);
            body += 0.5 * (prev_f + fl) * (l - prev_l);
            prev_l = l;
            prev_f = fl;
            k += 1;
        }
        let tail_at = 1.0 - self.joint_cdf_rel(None, lt);
        atoms + body + tail_at * (wt + h) / (self.zeta - 1.0)
    }

    /// Smallest `y` with `P(log S <= y) >= u`.
    pub fn quantile_log(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (self.log_grid[0] - 10.0, self.log_grid[self.log_grid.len() - 1] + 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_log(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        hi
    }

    /// Quantile of financial wealth.
    pub fn quantile_wealth(&self, u: f64) -> f64 {
        self.quantile_log(u).exp() - self.h
    }
}

/// Inverts the characteristic function of log total wealth.
pub fn invert_distribution(ev: &MellinEvaluator, zeta: f64, settings: &InversionSettings) -> Result<WealthDistribution> {
    let n = ev.n_states();
    let atoms = extract_atoms(ev, settings.atom_mass);
    let rule = PanelRule::uniform(0.0, settings.t_max, settings.panel_width);
    let series = if settings.per_state { n } else { 1 };

    // Residual characteristic function divided by t at every node, per series.
    let mut coef = vec![vec![C64::new(0.0, 0.0); rule.len()]; series];
    for (j, &t) in rule.nodes.iter().enumerate() {
        let y = ev
            .weights_unchecked(C64::new(0.0, t))
            .ok_or_else(|| Error::Domain(format!("singular resolvent at t = {t}")))?;
        let mut phi: Vec<C64> = (0..n).map(|s| y[s] * (1.0 - ev.upsilon)).collect();
        for a in &atoms {
            let (sn, cs) = (t * a.log_rel).sin_cos();
            phi[a.state] -= C64::new(a.mass * cs, a.mass * sn);
        }
        if settings.per_state {
            for s in 0..n {
                coef[s][j] = phi[s] / t;
            }
        } else {
            coef[0][j] = phi.iter().sum::<C64>() / t;
        }
    }

    let mut atom_mass = vec![0.0; n];
    for a in &atoms {
        atom_mass[a.state] += a.mass;
    }
    let stationary: Vec<f64> = ev.stationary.iter().copied().collect();
    let residual_mass_by_state: Vec<f64> = (0..n).map(|s| stationary[s] - atom_mass[s]).collect();
    let residual_total: f64 = residual_mass_by_state.iter().sum();

    let points = settings.points;
    let dl = (settings.l_max - settings.l_min) / (points - 1) as f64;
    let half = rule.nodes.partition_point(|t| *t <= 0.5 * settings.t_max);
    let rot: Vec<C64> = rule.nodes.iter().map(|t| C64::new(0.0, -t * dl).exp()).collect();
    let mut phase: Vec<C64> = vec![C64::new(1.0, 0.0); rule.len()];

    let mut raw = vec![vec![0.0; points]; series];
    let mut err = vec![0.0; points];
    let pi = std::f64::consts::PI;
    let mut sums_k = vec![0.0; series];
    let mut sums_g = vec![0.0; series];
    for k in 0..points {
        let l = settings.l_min + k as f64 * dl;
        if k % 64 == 0 {
            for (p, t) in phase.iter_mut().zip(&rule.nodes) {
                *p = C64::new(0.0, -t * l).exp();
            }
        }
        sums_k.iter_mut().for_each(|v| *v = 0.0);
        let mut half_total = 0.0;
        let mut quad_err = 0.0;
        for w in rule.panel_start.windows(2) {
            let mut pk = 0.0;
            let mut pg = 0.0;
            sums_g.iter_mut().for_each(|v| *v = 0.0);
            for j in w[0]..w[1] {
                let ph = phase[j];
                let mut im_total = 0.0;
                for (s, c) in coef.iter().enumerate() {
                    let im = ph.re * c[j].im + ph.im * c[j].re;
                    sums_k[s] += rule.kronrod[j] * im;
                    sums_g[s] += rule.gauss[j] * im;
                    im_total += im;
                }
                pk += rule.kronrod[j] * im_total;
                pg += rule.gauss[j] * im_total;
                if j < half {
                    half_total += rule.kronrod[j] * im_total;
                }
            }
            quad_err += (pk - pg).abs();
        }
        for (s, sum) in sums_k.iter().enumerate() {
            let mass = if settings.per_state { residual_mass_by_state[s] } else { residual_total };
            raw[s][k] = 0.5 * mass - sum / pi;
        }
        let full: f64 = sums_k.iter().sum();
        err[k] = (full - half_total).abs() / pi + quad_err / pi;
        for (p, r) in phase.iter_mut().zip(&rot) {
            *p *= r;
        }
    }

    // Monotone clipping of each remainder series.
    let masses: Vec<f64> = if settings.per_state { residual_mass_by_state.clone() } else { vec![residual_total] };
    for (r, m) in raw.iter_mut().zip(&masses) {
        let mut run = 0.0f64;
        for v in r.iter_mut() {
            run = run.max(v.clamp(0.0, *m));
            *v = run;
        }
    }
    let residual: Vec<Vec<f64>> = if settings.per_state {
        let mut total = vec![0.0; points];
        for r in &raw {
            for (t, v) in total.iter_mut().zip(r) {
                *t += v;
            }
        }
        let mut all = vec![total];
        all.extend(raw);
        all
    } else {
        raw
    };
    let mut residual_mass = vec![residual_total];
    if settings.per_state {
        residual_mass.extend(residual_mass_by_state.iter().copied());
    }

    let log_h = ev.h.ln();
    let (mean_total_wealth, _) = ev.means()?;
    let mut dist = WealthDistribution {
        h: ev.h,
        zeta,
        mean_total_wealth,
        log_grid: (0..points).map(|k| log_h + settings.l_min + k as f64 * dl).collect(),
        cdf: Vec::new(),
        cdf_by_state: Vec::new(),
        error_estimate: err,
        extrapolation_threshold: f64::NAN,
        atoms,
        stationary,
        residual,
        residual_mass,
        threshold_index: points - 1,
        l_min: settings.l_min,
        dl,
    };

    // Splice where the error estimate first exceeds the stated fraction of the exceedance.
    let body: Vec<f64> = (0..points).map(|k| dist.body_cdf(None, settings.l_min + k as f64 * dl)).collect();
    let median = body.partition_point(|c| *c < 0.5);
    let mut threshold = points - 1;
    for k in median..points {
        let exceed = 1.0 - body[k];
        if dist.error_estimate[k] > settings.tail_error_ratio * exceed {
            threshold = k.saturating_sub(1);
            break;
        }
    }
    if threshold <= median {
        return Err(Error::NonConvergence {
            what: "characteristic-function inversion",
            iterations: rule.len(),
            residual: dist.error_estimate[median.min(points - 1)],
        });
    }
    dist.threshold_index = threshold;
    dist.extrapolation_threshold = ev.h * (settings.l_min + threshold as f64 * dl).exp();
    dist.cdf = (0..points).map(|k| dist.joint_cdf_rel(None, settings.l_min + k as f64 * dl)).collect();
    if settings.per_state {
        dist.cdf_by_state = (0..n)
            .map(|s| {
                (0..points)
                    .map(|k| dist.joint_cdf_rel(Some(s), settings.l_min + k as f64 * dl) / dist.stationary[s])
                    .collect()
            })
            .collect();
    }
    Ok(dist)
}

/// Kolmogorov distance between the distribution and the empirical CDF of an
/// ascending sample of `log S`. Sample points within `1e-9` of each other are
/// treated as ties, so path atoms computed in different orders coincide.
pub fn kolmogorov_distance(dist: &WealthDistribution, sorted_log_s: &[f64]) -> f64 {
    let n = sorted_log_s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted_log_s.len() {
        let y = sorted_log_s[i];
        let mut j = i;
        while j < sorted_log_s.len() && sorted_log_s[j] - y < 2e-9 {
            j += 1;
        }
        let model_hi = dist.cdf_log(sorted_log_s[j - 1] + 1e-9);
        let model_lo = dist.cdf_log(y - 1e-9);
        d = d.max((model_hi - j as f64 / n).abs()).max((model_lo - i as f64 / n).abs());
        i = j;
    }
    d
}
