use thiserror::Error;

/// Typed failures raised anywhere in the library.
///
/// Every variant except [`ApmsError::Io`] is a domain error; the CLI maps
/// the former to exit code 1 and the rest to exit code 2.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApmsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Bessel ratio {ratio} is outside the attainable interval [{lo}, {hi}] for order {order}")]
    RatioInversion { ratio: f64, order: u32, lo: f64, hi: f64 },

    #[error("modified covariance system is rank deficient (numerical rank {rank} < order {order}); use a lower AR order")]
    ArRankDeficient { rank: usize, order: usize },

    #[error("peak detection found {found} peak(s); lower the prominence or raise the AR order")]
    Detection { found: usize },

    #[error("frequency resolution failed: {0}")]
    Resolution(String),

    #[error("only singleton clusters were found; the PM spacing is undefined (k_p may be 0)")]
    SpacingUndefined,

    #[error("design matrix is underdetermined: {rows} rows for {cols} columns (need more than {cols})")]
    Underdetermined { rows: usize, cols: usize },

    #[error("least-squares system is rank deficient: near-dependent columns in groups {groups:?}")]
    SolverRankDeficient { groups: Vec<u8> },

    #[error("{0}")]
    Estimation(String),

    #[error("lower sideband absent: s is undefined")]
    SUndefined,

    #[error("residual NRMSE {nrmse:.3e} exceeds the tolerance {tolerance:.3e}; the fit was rejected")]
    PoorFit { nrmse: f64, tolerance: f64 },

    #[error("invalid model parameter `{field}` at n = {n}: {reason}")]
    InvalidModel { field: &'static str, n: i64, reason: String },

    #[error("polynomial fit failed: {0}")]
    PolynomialFit(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<ApmsError> },

    #[error("I/O error: {0}")]
    Io(String),
}

impl ApmsError {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        ApmsError::Stage { stage, source: Box::new(self) }
    }

    /// True for file-system and stream failures.
    pub fn is_io(&self) -> bool {
        match self {
            ApmsError::Io(_) => true,
            ApmsError::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        ApmsError::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for ApmsError {
    fn from(e: std::io::Error) -> Self {
        ApmsError::Io(e.to_string())
    }
}

pub type Result<T, E = ApmsError> = std::result::Result<T, E>;
