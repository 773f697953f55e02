use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit index {index} out of range 1..={bits}")]
    BitIndex { index: usize, bits: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("SNR convention {convention} is not valid for {kind}")]
    SnrConvention { convention: String, kind: String },

    #[error("optimizer did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("derivative estimate is not finite at y = {0}")]
    Derivative(f64),

    #[error("Taylor center ({0}, {1}) is not a root of the LLR (|l| = {2})")]
    NotARoot(f64, f64, f64),

    #[error("density grids do not match")]
    GridMismatch,

    #[error("too few Monte Carlo samples: {0} (need at least 100000)")]
    TooFewSamples(usize),

    #[error("threshold bracket invalid: {0}")]
    Bracket(String),

    #[error("code construction failed: {0}")]
    Construction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// `fs::read_to_string` with the path in the error message.
pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
