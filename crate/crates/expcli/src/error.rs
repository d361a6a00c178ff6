use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("step size {mu} of `{algorithm}` at node {node} is not below the stability bound {bound}")]
    StepAboveBound { algorithm: String, node: usize, mu: f64, bound: f64 },
    #[error("every run of `{0}` diverged")]
    AllRunsDiverged(String),
    #[error(transparent)]
    Core(#[from] gmrflms::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExpError {
    /// Process exit status: 2 for bad input, 3 for instability, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::UnknownPreset(_) => 2,
            Self::StepAboveBound { .. } | Self::AllRunsDiverged(_) => 3,
            Self::Core(e) => match e {
                gmrflms::Error::Diverged { .. } | gmrflms::Error::Unstable(_) => 3,
                gmrflms::Error::NoConvergence(_) | gmrflms::Error::TooLarge { .. } => 1,
                _ => 2,
            },
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExpError>;
