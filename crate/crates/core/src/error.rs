use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box (x={x}, y={y}, w={w}, h={h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("{name} must lie in {range}, received {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("referential integrity: {what} {ids:?}")]
    Referential { what: &'static str, ids: Vec<i64> },

    #[error("degenerate box in {file}: {detail}")]
    DegenerateBox { file: String, detail: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("ground-truth box carries a score; scores are only valid on detections")]
    InputRole,

    #[error("fraction {fraction} lies outside the quality curve range [{low}, {high}]")]
    Extrapolation { fraction: f64, low: f64, high: f64 },

    #[error("event log integrity: {0}")]
    LogIntegrity(String),

    #[error("operation not allowed in stage {stage}: {detail}")]
    WrongStage { stage: String, detail: String },

    #[error("image {image_id} belongs to fold {actual}, not fold {expected}")]
    FoldViolation {
        image_id: u64,
        expected: u8,
        actual: u8,
    },

    #[error("stale reference: image {image_id} has no live box at index {target_ref}")]
    StaleReference { image_id: u64, target_ref: usize },

    #[error("image {0} is already done")]
    ImageDone(u64),

    #[error("unknown image {0}")]
    UnknownImage(u64),

    #[error("campaign incomplete: {} image(s) pending {pending:?}", pending.len())]
    Incomplete { pending: Vec<u64> },

    #[error("{op} needs {needed}")]
    Missing {
        op: &'static str,
        needed: &'static str,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: &str, err: &serde_json::Error) -> Self {
        Error::Parse {
            location: format!("{context} line {} column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            range: "[0, 1]",
            value,
        })
    }
}

pub(crate) fn check_half_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            range: "(0, 1]",
            value,
        })
    }
}
