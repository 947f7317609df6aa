use thiserror::Error;

use crate::model::Bundle;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("bidder {bidder} has no value for bundle {bundle}")]
    UnknownBundle { bidder: usize, bundle: Bundle },

    #[error("enumeration too large: about {estimate} allocations exceeds the bound of {bound}")]
    EnumerationTooLarge { estimate: u128, bound: usize },

    #[error("linear program is unbounded in the objective direction")]
    UnboundedLp,

    #[error("no convex decomposition exists (phase-one residual {residual}); the declared scale is too large for this point")]
    DecompositionInfeasible { residual: String },

    #[error("family `{0}` has no relaxation recipe for this operation")]
    UnsupportedFamily(String),

    #[error("family construction failed: {0}")]
    Construction(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
