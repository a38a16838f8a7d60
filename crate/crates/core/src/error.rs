use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing key: {0}")]
    MissingKey(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("singularity: {0}")]
    Singularity(String),

    /// Faraday rotation accumulated inside a single spatial cell is too large.
    #[error("grid too coarse: {rotation:.3} rad rotation in one cell (limit 0.1 rad)")]
    Refinement { rotation: f64 },

    #[error("integration failed at t = {t:.6e} s: {message}")]
    Integration { t: f64, message: String },

    #[error("demodulated output did not settle: drift {drift:.3e} after {windows} windows")]
    Convergence { drift: f64, windows: usize },

    #[error("no extremum found")]
    NoExtremum,

    #[error("fit did not converge after {iterations} iterations (last residual {residual:.3e})")]
    FitDivergence { iterations: usize, residual: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown scenario `{name}` (valid: {valid})")]
    UnknownScenario { name: String, valid: String },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity(_)
                | Error::Refinement { .. }
                | Error::Integration { .. }
                | Error::Convergence { .. }
                | Error::NoExtremum
                | Error::FitDivergence { .. }
                | Error::Fit(_)
        )
    }
}
