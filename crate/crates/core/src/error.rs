use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Outage analysis was requested at a point where the relayed
    /// transmission cannot reach the threshold at all.
    #[error("feasibility error: {0}")]
    Feasibility(String),

    /// A numerical routine failed (e.g. factorization of a correlation matrix).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A structural invariant of an input was violated.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// The residual bandwidth of the lead user is below its own need.
    #[error("INFEASIBLE_BANDWIDTH: {0}")]
    InfeasibleBandwidth(String),

    /// The power box of a user cannot satisfy the outage feasibility guard.
    #[error("INFEASIBLE_POWER: {0}")]
    InfeasiblePower(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for the two resource-infeasibility variants.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleBandwidth(_) | Error::InfeasiblePower(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
