use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("boundary values ({got0}, {got1}) do not match the required ({want0}, {want1})")]
    BoundaryMismatch {
        got0: f64,
        got1: f64,
        want0: f64,
        want1: f64,
    },

    #[error("field trace `{which}` deviates from its prescribed profile")]
    TraceMismatch { which: &'static str },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no bracket for lambda* found over 2^k, k in [{k_min}, {k_max}]")]
    BracketNotFound { k_min: i32, k_max: i32 },

    #[error("nontrivial minimizer is not above the trivial profile (min gap {min_gap:e})")]
    PairNotOrdered { min_gap: f64 },

    #[error("mid-height trace never reaches {target} (range [{lo}, {hi}])")]
    TargetNotBracketed { target: f64, lo: f64, hi: f64 },

    #[error("common-window difference stalled at {last_diff:e} above {tol:e}")]
    NoConvergenceAcrossL { last_diff: f64, tol: f64 },

    #[error("level {alpha} outside field range [{min}, {max}]")]
    EmptyLevelSet { alpha: f64, min: f64, max: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a stage name to an error.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        })
    }
}

impl Error {
    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of an iterative method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::BracketNotFound { .. }
                | Error::PairNotOrdered { .. }
                | Error::TargetNotBracketed { .. }
                | Error::NoConvergenceAcrossL { .. }
        )
    }
}
