use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resolvent (jωI - A) is singular at ω = {omega}")]
    SingularResolvent { omega: f64 },

    /// The static loop `I - D22·Dk` is numerically singular.
    #[error("interconnection is not well-posed (σ_min/σ_max = {ratio:.3e})")]
    IllPosed { ratio: f64 },

    #[error("system is not Hurwitz: {0}")]
    Unstable(String),

    #[error("controller does not stabilize the local channel{}", subsystem_suffix(.subsystem))]
    NotStabilizing { subsystem: Option<usize> },

    #[error("preexisting system is not internally stable")]
    PreexistingInstability,

    #[error("missing port `{0}`")]
    MissingPort(String),

    #[error("port widths do not match the realization: {0}")]
    PortWidth(String),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("(A, B) is not stabilizable")]
    NotStabilizable,

    #[error("Hamiltonian has eigenvalues on the imaginary axis")]
    HamiltonianDichotomy,

    #[error("no iterate meets the gain bound β = {beta} (best achieved {best})")]
    InfeasibleBound { beta: f64, best: f64 },

    #[error("invalid projection pair: {0}")]
    InvalidPair(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("state is not an equilibrium (residual {residual:.3e})")]
    NotEquilibrium { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Computation(String),
}

fn subsystem_suffix(subsystem: &Option<usize>) -> String {
    match subsystem {
        Some(i) => format!(" of subsystem {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
