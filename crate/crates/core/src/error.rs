use thiserror::Error;

pub type Result<T, E = UrnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum UrnError {
    #[error("degenerate drawing rule: total drawing mass is zero")]
    DegenerateRule,

    #[error("degenerate mean field: Tr(f(y)) vanishes at {0:?}")]
    DegenerateMeanField(Vec<f64>),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("addition model contract violated: {0}")]
    ModelContract(String),

    #[error("shape function `{shape}` lacks {what}")]
    MissingShapeData { shape: String, what: &'static str },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("out of scope: {0}")]
    Scope(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("batch stopped after {completed} of {requested} runs: {source}")]
    PartialBatch {
        completed: usize,
        requested: usize,
        #[source]
        source: Box<UrnError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl UrnError {
    pub fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        UrnError::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        UrnError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable machine-readable identifier, used by the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            UrnError::DegenerateRule => "degenerate_rule",
            UrnError::DegenerateMeanField(_) => "degenerate_mean_field",
            UrnError::InvalidArgument { .. } => "invalid_argument",
            UrnError::ModelContract(_) => "model_contract",
            UrnError::MissingShapeData { .. } => "missing_shape_data",
            UrnError::RegimeMismatch(_) => "regime_mismatch",
            UrnError::Scope(_) => "out_of_scope",
            UrnError::Internal(_) => "internal",
            UrnError::PartialBatch { .. } => "partial_batch",
            UrnError::Config(_) => "config",
            UrnError::Io { .. } => "io",
            UrnError::Csv(_) => "csv",
            UrnError::Json(_) => "json",
        }
    }

    /// True when the failure comes from user input rather than a runtime fault.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            UrnError::Config(_)
                | UrnError::InvalidArgument { .. }
                | UrnError::MissingShapeData { .. }
                | UrnError::Scope(_)
                | UrnError::RegimeMismatch(_)
                | UrnError::Json(_)
        )
    }
}
