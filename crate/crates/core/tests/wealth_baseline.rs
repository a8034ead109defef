use std::sync::OnceLock;

use domar_core::calibration::{calibrate, CalibrationTargets};
use domar_core::equilibrium::{solve_equilibrium, EquilibriumSettings, StationaryEquilibrium};
use domar_core::model::ModelParams;
use domar_core::oracle::{self, OracleCheck};
use domar_core::wealth::{
    invert_distribution, wealth_shares, InversionSettings, Source,
    WealthDistribution, STANDARD_BOTTOM_GROUPS, STANDARD_TOP_GROUPS,
};

fn baseline() -> &'static (StationaryEquilibrium, WealthDistribution) {
    static CELL: OnceLock<(StationaryEquilibrium, WealthDistribution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = ModelParams::baseline();
        let ability = calibrate(&CalibrationTargets::baseline(), params.upsilon).unwrap();
        let eq = solve_equilibrium(&params, &ability, &EquilibriumSettings::default()).unwrap();
        let zeta = eq.pareto_exponent().unwrap();
        let dist = invert_distribution(&eq.mellin, zeta, &InversionSettings { per_state: true, ..InversionSettings::default() }).unwrap();
        (eq, dist)
    })
}

#[test]
fn shares_match_table() {
    let (_, dist) = baseline();
    let t = wealth_shares(dist, &STANDARD_TOP_GROUPS, &STANDARD_BOTTOM_GROUPS).unwrap();
    let top = [4.4, 12.9, 26.6, 35.7, 64.0, 75.4];
    let bottom = [24.6, 15.3, 9.9, 6.2, 3.5, 1.6, 0.3, -0.5, -0.9];
    for (q, want) in STANDARD_TOP_GROUPS.iter().zip(top) {
        let tol = if *q == 1e-4 { 0.3 } else { 0.5 };
        let got = t.top(*q).unwrap();
        assert!((got - want).abs() <= tol, "top {q}: {got} vs {want}");
    }
    for (p, want) in STANDARD_BOTTOM_GROUPS.iter().zip(bottom) {
        let tol = if *p == 0.1 { 0.3 } else { 0.5 };
        let got = t.bottom(*p).unwrap();
        assert!((got - want).abs() <= tol, "bottom {p}: {got} vs {want}");
    }
    let sum = t.top(0.1).unwrap() + t.bottom(0.9).unwrap();
    assert!((sum - 100.0).abs() < 0.1);
    assert!((t.mean_financial_wealth / t.mean_financial_wealth_exact - 1.0).abs() < 1e-3);
}

#[test]
fn masses_at_and_below_zero() {
    let (eq, dist) = baseline();
    assert!((dist.prob_zero_financial_wealth() - (1.0 - eq.params.upsilon)).abs() < 1e-12);
    assert!((dist.prob_negative_financial_wealth() - 0.03).abs() <= 0.003);
}

#[test]
fn median_and_monotonicity() {
    let (_, dist) = baseline();
    let m = dist.quantile_log(0.5);
    // The median sits on an atom (long-lived workers), so the CDF jumps across it.
    assert!(dist.cdf_log(m) >= 0.5 - 1e-6 && dist.cdf_log(m - 1e-9) <= 0.5 + 1e-6);
    let mass: f64 = dist.atoms.iter().filter(|a| (a.log_rel + dist.h.ln() - m).abs() < 1e-9).map(|a| a.mass).sum();
    let jump = dist.cdf_log(m) - dist.cdf_log(m - 1e-9);
    if mass > 0.0 {
        assert!((jump - mass).abs() < 1e-6);
    } else {
        assert!((dist.cdf_log(m) - 0.5).abs() < 1e-6);
    }
    // Away from atoms the quantile inverts the CDF.
    for u in [0.2, 0.7, 0.95, 0.999] {
        let q = dist.quantile_log(u);
        let c = dist.cdf_log(q);
        assert!(c >= u - 1e-6 && dist.cdf_log(q - 1e-9) <= u + 1e-6);
    }
    assert!(dist.cdf.windows(2).all(|w| w[1] >= w[0]));
    assert!(dist.cdf.iter().all(|c| (0.0..=1.0).contains(c)));
    // Conditional distributions aggregate through the stationary weights.
    let p = dist.stationary_weights();
    for &y in &[3.0, 3.5, 5.0, 8.0] {
        let agg: f64 = (0..p.len()).map(|n| p[n] * dist.conditional_cdf_log(n, y)).sum();
        assert!((agg - dist.cdf_log(y)).abs() < 1e-6);
    }
}

#[test]
fn tail_splice() {
    let (_, dist) = baseline();
    let thr = dist.extrapolation_threshold_wealth();
    assert!(thr > 1e3 && thr < 1e5, "threshold {thr}");
    assert!((dist.pre_splice_slope() / -dist.zeta - 1.0).abs() < 0.05);
    let ext = dist.tail_extrapolate(1e6);
    let tail: Vec<_> = ext.iter().filter(|p| p.source == Source::Extrapolation).collect();
    for w in tail.windows(2) {
        let (s0, s1) = (w[0].wealth + dist.h, w[1].wealth + dist.h);
        let slope = (w[1].exceedance_prob.ln() - w[0].exceedance_prob.ln()) / (s1.ln() - s0.ln());
        assert!((slope + dist.zeta).abs() < 1e-9);
    }
    assert!(ext.last().unwrap().exceedance_prob < 1e-9);
    // Continuity at the splice.
    let below = dist.exceedance(thr * (1.0 - 1e-9));
    let above = dist.exceedance(thr * (1.0 + 1e-9));
    assert!((below - above).abs() < 1e-12 + 1e-6 * above);
}

fn assert_check(c: &OracleCheck) {
    assert!(c.passed, "{}: simulated {} exact {} tolerance {}", c.name, c.simulated, c.exact, c.tolerance);
}

#[test]
fn inversion_agrees_with_simulation() {
    let (eq, dist) = baseline();
    assert_check(&oracle::kolmogorov(eq, dist, 20_000_000, 11));
}

#[test]
fn simulation_mean_states_and_tail() {
    let (eq, _) = baseline();
    assert_check(&oracle::mean_wealth(eq, 2_000_000, 3).unwrap());
    for c in oracle::state_frequencies(eq, 2_000_000, 3) {
        assert_check(&c);
    }
}

#[test]
fn simulated_tail_slope() {
    let (eq, dist) = baseline();
    assert_check(&oracle::tail_slope(eq, dist.zeta, 10_000_000, 5));
}
