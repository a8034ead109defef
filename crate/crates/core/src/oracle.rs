//! Monte Carlo checks of the analytic wealth and transition results.
//!
//! Every check simulates agents directly from the primitives (survival,
//! ability transitions, growth factors) and compares a sample statistic with
//! the value computed from the Mellin transform, the inverted distribution or
//! the transition recursion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::StationaryEquilibrium;
use crate::model::labor_demand_and_return;
use crate::transition::TransitionPath;
use crate::wealth::{kolmogorov_distance, sample_stationary, WealthDistribution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub simulated: f64,
    pub exact: f64,
    /// Largest admissible `|simulated − exact|`.
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn new(name: impl Into<String>, simulated: f64, exact: f64, tolerance: f64) -> Self {
        let passed = (simulated - exact).abs() <= tolerance;
        Self { name: name.into(), simulated, exact, tolerance, passed }
    }
}

/// Mean total wealth against `E(S)`, within three batch-means standard errors.
pub fn mean_wealth(eq: &StationaryEquilibrium, agents: usize, seed: u64) -> crate::Result<OracleCheck> {
    let panel = sample_stationary(&eq.mellin, agents, seed);
    let (mean, _) = eq.mellin.means()?;
    let n = panel.wealth.len() as f64;
    let m = panel.wealth.iter().sum::<f64>() / n;
    // ζ < 2 leaves the variance infinite, so the iid formula is replaced by batch means.
    let batches = 200;
    let bm: Vec<f64> = panel
        .wealth
        .chunks(agents.div_ceil(batches))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let b = bm.len() as f64;
    let var = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(OracleCheck::new("mean_total_wealth", m, mean, 3.0 * (var / b).sqrt()))
}

/// Frequency of each ability state against the mortality-adjusted stationary distribution.
pub fn state_frequencies(eq: &StationaryEquilibrium, agents: usize, seed: u64) -> Vec<OracleCheck> {
    let panel = sample_stationary(&eq.mellin, agents, seed);
    let n = agents as f64;
    let p = &eq.ability.stationary_dist;
    (0..p.len())
        .map(|k| {
            let f = panel.state.iter().filter(|&&s| s == k).count() as f64 / n;
            let se = (p[k] * (1.0 - p[k]) / n).sqrt();
            OracleCheck::new(format!("state_frequency_{k}"), f, p[k], 3.0 * se)
        })
        .collect()
}

fn sorted_log_sample(eq: &StationaryEquilibrium, agents: usize, seed: u64) -> Vec<f64> {
    let panel = sample_stationary(&eq.mellin, agents, seed);
    let mut ls: Vec<f64> = panel.wealth.par_iter().map(|s| s.ln()).collect();
    ls.par_sort_unstable_by(f64::total_cmp);
    ls
}

/// Log-log slope of the empirical exceedance over the top 0.1% against `−ζ`.
pub fn tail_slope(eq: &StationaryEquilibrium, zeta: f64, agents: usize, seed: u64) -> OracleCheck {
    let ls = sorted_log_sample(eq, agents, seed);
    let n = ls.len();
    let k = n / 1000;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        let x = ls[n - 1 - i];
        let y = ((i + 1) as f64 / n as f64).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let kf = k as f64;
    let slope = (kf * sxy - sx * sy) / (kf * sxx - sx * sx);
    OracleCheck::new("tail_slope", slope, -zeta, 0.05)
}

/// Kolmogorov distance between the inverted CDF and the empirical CDF of `log S`.
pub fn kolmogorov(eq: &StationaryEquilibrium, dist: &WealthDistribution, agents: usize, seed: u64) -> OracleCheck {
    let ls = sorted_log_sample(eq, agents, seed);
    OracleCheck::new("kolmogorov_distance", kolmogorov_distance(dist, &ls), 0.0, 4e-4)
}

fn cumulative(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    v.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1)
}

/// Per-year sums and sums of squares of consumption, workers first.
#[derive(Clone)]
struct PanelMoments {
    sum: Vec<[f64; 2]>,
    sq: Vec<[f64; 2]>,
}

impl PanelMoments {
    fn zeros(years: usize) -> Self {
        Self { sum: vec![[0.0; 2]; years], sq: vec![[0.0; 2]; years] }
    }

    fn add(mut self, other: Self) -> Self {
        for t in 0..self.sum.len() {
            for k in 0..2 {
                self.sum[t][k] += other.sum[t][k];
                self.sq[t][k] += other.sq[t][k];
            }
        }
        self
    }
}

/// Simulates a cross-section drawn from the old stationary distribution along
/// a price path and compares yearly consumption, in total and by occupation,
/// with the path's aggregates within three standard errors.
pub fn transition_consumption(
    old: &StationaryEquilibrium,
    new: &StationaryEquilibrium,
    path: &TransitionPath,
    agents: usize,
    seed: u64,
    years: &[usize],
) -> Vec<OracleCheck> {
    let horizon = path.horizon;
    let p = &new.params;
    let ab = &new.ability;
    let start = sample_stationary(&old.mellin, agents, seed);
    let newborn = cumulative(ab.newborn_dist.iter().copied());
    let rows: Vec<Vec<f64>> = (0..ab.n_states).map(|i| cumulative(ab.transition.row(i).iter().copied())).collect();
    // Capital chosen in year t earns the return set by next year's wage.
    let r: Vec<Vec<f64>> = (0..=horizon)
        .map(|t| {
            let w = if t < horizon { path.omega[t + 1] } else { new.prices.omega };
            ab.productivities
                .iter()
                .map(|&a| labor_demand_and_return(a, p, w).map(|x| x.1).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let c_share = (1.0 - p.beta) / (1.0 + p.tau_c);
    let block = 1 << 15;
    let mc = start
        .wealth
        .par_chunks(block)
        .zip(start.state.par_chunks(block))
        .enumerate()
        .map(|(b, (ws, ss))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            rng.set_stream(b as u64);
            let mut acc = PanelMoments::zeros(horizon + 1);
            for (&w0, &s0) in ws.iter().zip(ss) {
                // Financial wealth carries over; human wealth is revalued.
                let (mut s, mut j) = (w0 - old.h() + path.h[1], s0);
                for t in 1..=horizon {
                    let c = c_share * s;
                    let k = usize::from(ab.is_entrepreneur(j));
                    acc.sum[t][k] += c;
                    acc.sq[t][k] += c * c;
                    if rng.random::<f64>() < p.upsilon {
                        let next = draw(&rows[j], rng.random());
                        let th = path.theta[t][j];
                        s *= p.beta * ((1.0 + r[t][next]) * th + path.gross_rate[t] * (1.0 - th)) / p.upsilon;
                        j = next;
                    } else {
                        s = if t < horizon { path.h[t + 1] } else { new.h() };
                        j = draw(&newborn, rng.random());
                    }
                }
            }
            acc
        })
        .reduce(|| PanelMoments::zeros(horizon + 1), PanelMoments::add);

    let nf = agents as f64;
    let mut out = Vec::new();
    for &t in years.iter().filter(|&&t| t >= 1 && t <= horizon) {
        let g = &path.aggregates[t];
        let groups = [
            ("total", mc.sum[t][0] + mc.sum[t][1], mc.sq[t][0] + mc.sq[t][1], g.consumption_total),
            ("workers", mc.sum[t][0], mc.sq[t][0], g.consumption_workers),
            ("entrepreneurs", mc.sum[t][1], mc.sq[t][1], g.consumption_entrepreneurs),
        ];
        for (name, sum, sq, exact) in groups {
            // Population means of c·1{group}: the variance is taken over all agents.
            let mean = sum / nf;
            let se = ((sq / nf - mean * mean) / nf).sqrt();
            out.push(OracleCheck::new(format!("consumption_{name}_year_{t}"), mean, exact, 3.0 * se));
        }
    }
    out
}
