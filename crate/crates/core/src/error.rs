use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Array shapes do not agree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An input violates a documented invariant.
    InvalidInput(&'static str),
    /// A model was evaluated outside of the region where it is defined.
    Domain(&'static str),
    /// Iteration cap reached or a working-set system could not be factored.
    NumericalFailure(&'static str),
    /// The reduced KKT system used for differentiation is singular.
    SingularKkt,
    /// Operation requires a trace that is feasible over its whole horizon.
    TraceNotFeasible { feasible_steps: usize, horizon: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Domain(msg) => write!(f, "model evaluated outside its domain: {msg}"),
            Error::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            Error::SingularKkt => f.write_str("reduced KKT system is singular"),
            Error::TraceNotFeasible {
                feasible_steps,
                horizon,
            } => write!(
                f,
                "trace is feasible for {feasible_steps} of {horizon} steps"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
