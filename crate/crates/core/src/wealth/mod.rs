//! Stationary wealth distribution of the Markov multiplicative process with reset.

mod distribution;
mod shares;
mod simulate;

pub use distribution::{
    extract_atoms, invert_distribution, kolmogorov_distance, Atom, ExceedancePoint, InversionSettings, Source, WealthDistribution,
};
pub use shares::{wealth_shares, ShareRow, ShareTable, STANDARD_BOTTOM_GROUPS, STANDARD_TOP_GROUPS};
pub use simulate::{sample_stationary, simulate_panel, Panel};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::household::PolicySolution;
use crate::model::AbilityProcess;
use crate::numerics::roots::brent;
use crate::numerics::spectral::perron_root;

pub type C64 = Complex<f64>;

/// Upper end of the search interval for the Pareto exponent.
pub const ZETA_SEARCH_MAX: f64 = 50.0;

/// Evaluates `A(z) = υ Π ⊙ G^z` and the Mellin transform of stationary total wealth.
#[derive(Debug, Clone)]
pub struct MellinEvaluator {
    pub growth: DMatrix<f64>,
    pub log_growth: DMatrix<f64>,
    pub transition: DMatrix<f64>,
    pub upsilon: f64,
    pub newborn: DVector<f64>,
    pub stationary: DVector<f64>,
    /// Wealth level newborns start from (human wealth).
    pub h: f64,
}

impl MellinEvaluator {
    pub fn new(policy: &PolicySolution, ability: &AbilityProcess, upsilon: f64) -> Self {
        Self::from_parts(
            policy.growth.clone(),
            ability.transition.clone(),
            upsilon,
            ability.newborn_dist.clone(),
            ability.stationary_dist.clone(),
            policy.returns.h,
        )
    }

    pub fn from_parts(
        growth: DMatrix<f64>,
        transition: DMatrix<f64>,
        upsilon: f64,
        newborn: DVector<f64>,
        stationary: DVector<f64>,
        h: f64,
    ) -> Self {
        let log_growth = growth.map(f64::ln);
        Self { growth, log_growth, transition, upsilon, newborn, stationary, h }
    }

    pub fn n_states(&self) -> usize {
        self.transition.nrows()
    }

    /// `A(z)` for complex `z`.
    pub fn a_matrix(&self, z: C64) -> DMatrix<C64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| {
            C64::new(self.upsilon * self.transition[(i, j)], 0.0) * (z * self.log_growth[(i, j)]).exp()
        })
    }

    /// `A(z)` for real `z`.
    pub fn a_matrix_real(&self, z: f64) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| self.upsilon * self.transition[(i, j)] * (z * self.log_growth[(i, j)]).exp())
    }

    /// Spectral radius of `A(z)` for real `z`.
    pub fn spectral_radius(&self, z: f64) -> f64 {
        perron_root(&self.a_matrix_real(z), 1e-13)
    }

    /// True when some state can repeat itself with growth above one, which
    /// guarantees `ρ(A(z))` eventually exceeds one.
    pub fn has_tail_condition(&self) -> bool {
        (0..self.n_states()).any(|n| self.transition[(n, n)] > 0.0 && self.growth[(n, n)] > 1.0)
    }

    /// Positive root of `ρ(A(z)) = 1`.
    pub fn pareto_exponent(&self) -> Result<f64> {
        let f = |z: f64| Ok(self.spectral_radius(z) - 1.0);
        let mut lo = 0.0;
        let mut hi = 0.25;
        while f(hi)? < 0.0 {
            lo = hi;
            hi += 0.25;
            if hi > ZETA_SEARCH_MAX {
                return Err(Error::NoParetoTail { z_max: ZETA_SEARCH_MAX });
            }
        }
        Ok(brent(f, lo, hi, 1e-12, 1e-14, 200)?.x)
    }

    fn check_domain(&self, re: f64) -> Result<()> {
        if re != 0.0 {
            let rho = self.spectral_radius(re);
            if !(rho < 1.0) {
                return Err(Error::DivergentMoment { z: re, spectral_radius: rho });
            }
        }
        Ok(())
    }

    /// Solution `y` of `(I − A(z))ᵀ y = ϖ`, without the domain check.
    pub fn weights_unchecked(&self, z: C64) -> Option<DVector<C64>> {
        let n = self.n_states();
        let mut m = -self.a_matrix(z).transpose();
        for i in 0..n {
            m[(i, i)] += C64::new(1.0, 0.0);
        }
        let rhs = self.newborn.map(|v| C64::new(v, 0.0));
        m.lu().solve(&rhs)
    }

    /// Real-argument version of [`Self::weights_unchecked`] with the domain check.
    pub fn weights_real(&self, z: f64) -> Result<DVector<f64>> {
        self.check_domain(z)?;
        let n = self.n_states();
        let m = DMatrix::<f64>::identity(n, n) - self.a_matrix_real(z).transpose();
        m.lu()
            .solve(&self.newborn)
            .ok_or(Error::DivergentMoment { z, spectral_radius: self.spectral_radius(z) })
    }

    /// `E(S^z)`, or `E(S^z | J = n)` when `state` is given.
    pub fn mellin(&self, z: C64, state: Option<usize>) -> Result<C64> {
        self.check_domain(z.re)?;
        let y = self
            .weights_unchecked(z)
            .ok_or(Error::DivergentMoment { z: z.re, spectral_radius: self.spectral_radius(z.re) })?;
        let scale = (z * self.h.ln()).exp() * (1.0 - self.upsilon);
        Ok(match state {
            None => scale * y.sum(),
            Some(n) => scale * y[n] / self.stationary[n],
        })
    }

    /// `E(S)` and the state-conditional means `E(S | J = n)`.
    pub fn means(&self) -> Result<(f64, Vec<f64>)> {
        let y = self.weights_real(1.0)?;
        let scale = (1.0 - self.upsilon) * self.h;
        let cond = (0..self.n_states()).map(|n| scale * y[n] / self.stationary[n]).collect();
        Ok((scale * y.sum(), cond))
    }
}
