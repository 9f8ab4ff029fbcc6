use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{field}` = {value} outside [{min}, {max}]")]
    Range {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure in scenario {scenario_id}: {msg}")]
    Numerical { scenario_id: u64, msg: String },

    #[error("scenario {scenario_id}: {source}")]
    InScenario {
        scenario_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("band {band} support [{lo} nm, {hi} nm] is not covered by the spectral grid")]
    Coverage { band: String, lo: f64, hi: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient samples in output sub-range for input `{input}`: {detail}")]
    InsufficientData { input: String, detail: String },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("model load failed: {0}")]
    ModelLoad(String),

    #[error("sensor mismatch: model trained for `{model}`, observation from `{observation}`")]
    SensorMismatch { model: String, observation: String },

    #[error("meteorology missing for step {0}")]
    MissingMeteo(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("r² undefined for constant reference (rmse = {rmse}, bias = {bias})")]
    UndefinedR2 { rmse: f64, bias: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a scenario id to errors raised inside the forward model.
    pub(crate) fn in_scenario(self, scenario_id: u64) -> Self {
        match self {
            Error::Numerical { msg, .. } => Error::Numerical { scenario_id, msg },
            e @ Error::InScenario { .. } => e,
            other => Error::InScenario {
                scenario_id,
                source: Box::new(other),
            },
        }
    }
}

pub(crate) fn check_range(field: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::Range {
            field,
            value,
            min,
            max,
        })
    }
}
