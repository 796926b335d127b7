use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The terminal exit price (r - η)/δ · E e^{ηT} diverges when δ = 0 and r > η.
    #[error("unbounded exit boundary: dividend yield is zero while risk-free rate {risk_free} exceeds loan rate {loan_rate}")]
    UnboundedBoundary { risk_free: f64, loan_rate: f64 },

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("spot {spot} is below the accrued debt {debt}: the margin call has already fired")]
    MarginCalled { spot: f64, debt: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    #[error("newton derivative {derivative:e} is singular at {at}")]
    SingularDerivative { at: f64, derivative: f64 },

    #[error("boundary solve failed at step {step} (tau = {tau}): {source}")]
    Step {
        step: usize,
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("gauss-laguerre order {0} is outside 4..=128")]
    QuadratureOrder(usize),

    #[error("risk-neutral probability {0} is outside (0, 1); increase the number of tree steps")]
    TreeProbability(f64),

    #[error("no exercise switch found on the lattice between {low} and {high}")]
    BracketNotFound { low: f64, high: f64 },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            domain: domain.into(),
        }
    }
}
