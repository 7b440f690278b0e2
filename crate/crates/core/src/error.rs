use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (eigenvalue {value:.3e} <= floor {floor:.3e})")]
    NotPositiveDefinite { value: f64, floor: f64 },

    #[error("column {0} has zero norm")]
    DegenerateColumn(usize),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("SNR undefined for a zero signal")]
    UndefinedSnr,

    #[error("ground truth has zero norm")]
    ZeroGroundTruth,

    #[error("solver diverged at iteration {iteration} with step size eta = {eta:e} (objective {objective:e})")]
    Divergence {
        eta: f64,
        iteration: usize,
        objective: f64,
    },

    #[error("enumeration of {count} supports exceeds cap {cap}; use monte_carlo")]
    EnumerationCap { count: f64, cap: f64 },

    #[error("every lambda on the tuning grid diverged")]
    AllDiverged,

    #[error("malformed config: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("report rows carry differing config hashes ({0} vs {1})")]
    HashMismatch(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DegenerateColumn(_) => "degenerate_column",
            Error::Shape(_) => "shape",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UndefinedSnr => "undefined_snr",
            Error::ZeroGroundTruth => "zero_ground_truth",
            Error::Divergence { .. } => "divergence",
            Error::EnumerationCap { .. } => "enumeration_cap",
            Error::AllDiverged => "all_diverged",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::HashMismatch(..) => "hash_mismatch",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what}: length {got}, expected {want}")));
    }
    Ok(())
}
