use std::fmt;

/// Identification stage, used to tag errors surfaced by [`crate::pipeline::identify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Frf,
    RationalFit,
    Bank,
    Regression,
    Prediction,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Frf => "frf",
            Stage::RationalFit => "rational_fit",
            Stage::Bank => "bank",
            Stage::Regression => "regression",
            Stage::Prediction => "prediction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular transfer function: {0}")]
    Singular(String),
    #[error("unstable system: {0}")]
    Unstable(String),
    #[error("degenerate excitation at bin {bin}: |U| = {magnitude:e}")]
    DegenerateExcitation { bin: usize, magnitude: f64 },
    #[error("rank-deficient rational fit (consider reducing n_a/n_b): {0}")]
    RankDeficient(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage tag of the innermost stage wrapper, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for errors caused by bad input or configuration rather than numerics.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidSpec(_) | Error::DimensionMismatch(_) | Error::Json(_) | Error::Csv(_) => {
                true
            }
            Error::Io(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
