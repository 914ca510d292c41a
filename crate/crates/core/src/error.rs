use thiserror::Error;

/// Failures raised anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0:?} lies outside the chart bounds")]
    OutOfChart([f64; 4]),
    #[error("shooting did not converge after {iterations} iterations (defect {defect:.3e})")]
    NoConvergence { iterations: usize, defect: f64 },
    #[error("finite-difference stencil leaves the patch: {0}")]
    DegenerateStencil(String),
    #[error("exponential map Jacobian is singular (det {0:.3e})")]
    SingularJacobian(f64),
    #[error("direction is not null: g(k,k) = {0:.3e}")]
    NotNull(f64),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("stencil too narrow: {0}")]
    StencilTooNarrow(String),
    #[error("ODE step failure: {0}")]
    OdeStep(String),
    #[error("coefficient {level} vanishes along the cone near t = {t:.4} (value {value:.3e})")]
    CoefficientVanishes { level: String, t: f64, value: f64 },
    #[error("gauge enforcement for {level} left residual {residual:.3e} above {tolerance:.1e}")]
    EnforcementFailure {
        level: String,
        residual: f64,
        tolerance: f64,
    },
    #[error("pole hit: {0}")]
    PoleHit(String),
    #[error("scaling fit is degenerate: {0}")]
    FitDegenerate(String),
    #[error("invalid configuration at `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),
    #[error("unknown artifact `{0}`")]
    UnknownArtifact(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// CLI exit status: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::ConfigInvalid { .. } | Error::UnknownSuite(_) | Error::UnknownArtifact(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }

    /// Innermost error, skipping stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
