use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation of {context} failed: {source}")]
    Eval { context: String, source: EvalError },
    #[error("invalid system definition: {0}")]
    InvalidSystem(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input constraint set U is empty")]
    EmptyInputSet,
    #[error("admissible control set U(x) is empty")]
    EmptyControlSet,
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("g~ is not differentiable at the current iterate")]
    NonDifferentiable,
    #[error("degenerate adjoint: lambda vanished")]
    DegenerateAdjoint,
    #[error("empty subdifferential vertex set")]
    EmptyVertexSet,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("problem too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("step size underflow at s = {at}: {reason}")]
    StepSizeUnderflow { at: f64, reason: String },
    #[error("growth bound exceeded at elapsed time {elapsed}: |x| = {norm} > K = {bound}")]
    GrowthBoundExceeded { elapsed: f64, norm: f64, bound: f64 },
}

impl Error {
    pub(crate) fn eval(context: impl Into<String>, source: EvalError) -> Self {
        Error::Eval { context: context.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
