use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("degenerate density: {0}")]
    Degenerate(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("density not strictly positive: {0}")]
    Positivity(String),
    #[error("supremum not attained in search window: {0}")]
    Window(String),
    #[error("potential not confining enough: {0}")]
    Confinement(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("map not monotone: {0}")]
    Monotonicity(String),
    #[error("unstable time step: {0}")]
    Stability(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short lowercase tag of the variant, used as a failure reason.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Degenerate(_) => "degenerate",
            Error::Domain(_) => "domain",
            Error::Positivity(_) => "positivity",
            Error::Window(_) => "window",
            Error::Confinement(_) => "confinement",
            Error::Convergence(_) => "convergence",
            Error::Hypothesis(_) => "hypothesis",
            Error::Monotonicity(_) => "monotonicity",
            Error::Stability(_) => "stability",
            Error::Parse(_) => "parse",
        }
    }
}
