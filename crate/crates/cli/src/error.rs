use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Solver(#[from] domar_core::Error),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration and artifact problems, 4 for infeasible tax mixes,
    /// 3 for every other solver or verification failure.
    pub fn exit_code(&self) -> i32 {
        use domar_core::Error as E;
        match self {
            CliError::Config(_) | CliError::MissingArtifact(_) | CliError::Io(_) => 2,
            CliError::Solver(E::Config(_) | E::InvalidParameter { .. }) => 2,
            CliError::Solver(E::InfeasibleTaxMix(_)) => 4,
            CliError::Solver(_) | CliError::Verification(_) | CliError::Csv(_) | CliError::Json(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use domar_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact(_) => "missing_artifact",
            CliError::Solver(e) => match e {
                E::InvalidParameter { .. } | E::Config(_) => "config",
                E::InfeasibleTaxMix(_) => "infeasible_tax_mix",
                E::EquilibriumNotFound(_) => "equilibrium_not_found",
                E::NonConvergence { .. } => "non_convergence",
                E::DivergentMoment { .. } => "divergent_moment",
                E::NoParetoTail { .. } => "no_pareto_tail",
                E::NoBracket(_) => "no_bracket",
                E::IllPosedBorrowingLimit { .. } => "ill_posed_borrowing_limit",
                E::InfeasibleMoments(_) => "infeasible_moments",
                E::Domain(_) => "domain",
            },
            CliError::Verification(_) => "verification",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }
}

/// Written to `error.json` in the output directory when a command fails.
#[derive(Debug, Serialize)]
pub struct Diagnostic<'a> {
    pub command: &'a str,
    pub exit_code: i32,
    pub kind: &'a str,
    pub message: String,
    pub manifest_hash: Option<&'a str>,
}
