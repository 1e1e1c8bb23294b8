use thiserror::Error;

use crate::solver::Solution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("generator is reducible: regime graph is not strongly connected")]
    ReducibleGenerator,

    #[error("model `{0}` has no per-capita parameterization")]
    NotPerCapitaModel(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown cost `{0}`")]
    UnknownCost(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("control {u} is outside the domain of cost `{cost}`")]
    DomainError { cost: String, u: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid control set: {0}")]
    InvalidControls(String),

    #[error("no admissible control at {state}")]
    EmptyAdmissibleSet { state: String },

    #[error(
        "explicit scheme unstable at gamma={gamma}, x={x}, regime={regime}, u={u}: \
         self-probability {self_probability:.6} < 0; largest stable h1 is {max_h1:.6e}"
    )]
    CflViolation {
        gamma: f64,
        x: f64,
        regime: usize,
        u: f64,
        self_probability: f64,
        max_h1: f64,
    },

    #[error("kernel is not a contraction: {0}")]
    NonContraction(String),

    #[error("no convergence after {iterations} iterations (last sup change {sup_change:.3e})")]
    MaxIterations {
        iterations: usize,
        sup_change: f64,
        partial: Box<Solution>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. }
                | Error::NonContraction(_)
                | Error::MaxIterations { .. }
                | Error::EmptyAdmissibleSet { .. }
                | Error::DomainError { .. }
        )
    }
}
