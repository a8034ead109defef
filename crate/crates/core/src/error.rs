use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("borrowing limit is ill-posed: gross rate {gross_rate} must exceed survival probability {upsilon}")]
    IllPosedBorrowingLimit { gross_rate: f64, upsilon: f64 },

    #[error("moment targets are infeasible on the fixed support: {0}")]
    InfeasibleMoments(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("aggregate wealth is infinite: spectral radius of A({z}) is {spectral_radius} >= 1")]
    DivergentMoment { z: f64, spectral_radius: f64 },

    #[error("no Pareto tail detected: rho(A(z)) stays below one on (0, {z_max}]")]
    NoParetoTail { z_max: f64 },

    #[error("no stationary equilibrium found: {0}")]
    EquilibriumNotFound(String),

    #[error("infeasible tax mix: {0}")]
    InfeasibleTaxMix(String),

    #[error("root bracket not found: {0}")]
    NoBracket(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
