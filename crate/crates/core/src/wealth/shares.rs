//! Shares of aggregate financial wealth held by top and bottom groups.

use serde::Serialize;

use super::WealthDistribution;
use crate::error::{Error, Result};

pub const STANDARD_TOP_GROUPS: [f64; 6] = [1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1];
pub const STANDARD_BOTTOM_GROUPS: [f64; 9] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShareRow {
    /// "top" or "bottom".
    pub group: &'static str,
    /// Population fraction in the group.
    pub fraction: f64,
    /// Share of aggregate financial wealth, in percent.
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareTable {
    pub rows: Vec<ShareRow>,
    /// Aggregate financial wealth from integrating the distribution.
    pub mean_financial_wealth: f64,
    /// Aggregate financial wealth from the Mellin transform.
    pub mean_financial_wealth_exact: f64,
}

impl ShareTable {
    pub fn top(&self, fraction: f64) -> Option<f64> {
        self.find("top", fraction)
    }

    pub fn bottom(&self, fraction: f64) -> Option<f64> {
        self.find("bottom", fraction)
    }

    fn find(&self, group: &str, fraction: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.group == group && (r.fraction - fraction).abs() < 1e-12)
            .map(|r| r.share_pct)
    }
}

/// Wealth held by the richest fraction `q`: `q·w_q + ∫_{w_q}^∞ P(W > v) dv`
/// with `w_q` the `1 − q` quantile. Point masses at the cut are split exactly.
fn top_amount(dist: &WealthDistribution, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let w_q = dist.quantile_wealth(1.0 - q);
    q * w_q + dist.integrated_exceedance(w_q)
}

/// Financial-wealth shares of the given top and bottom population fractions.
pub fn wealth_shares(dist: &WealthDistribution, top: &[f64], bottom: &[f64]) -> Result<ShareTable> {
    if !(dist.zeta > 1.0) || !dist.mean_total_wealth.is_finite() {
        return Err(Error::DivergentMoment { z: 1.0, spectral_radius: f64::NAN });
    }
    // E(W) = w_0 + ∫_{w_0}^∞ P(W > v) dv for any w_0 below the support.
    let w0 = dist.h * (dist.log_grid[0] - dist.h.ln()).exp() - dist.h;
    let total = w0 + dist.integrated_exceedance(w0);
    let mut rows = Vec::new();
    for &q in top {
        rows.push(ShareRow { group: "top", fraction: q, share_pct: 100.0 * top_amount(dist, q) / total });
    }
    for &p in bottom {
        let amount = total - top_amount(dist, 1.0 - p);
        rows.push(ShareRow { group: "bottom", fraction: p, share_pct: 100.0 * amount / total });
    }
    Ok(ShareTable {
        rows,
        mean_financial_wealth: total,
        mean_financial_wealth_exact: dist.mean_total_wealth - dist.h,
    })
}
