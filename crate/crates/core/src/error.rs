use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("time {0} is outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("degenerate schedule determinant {det} at t = {t}")]
    DegenerateSchedule { t: f64, det: f64 },

    #[error("unknown class id {class} (model has {num_classes} classes)")]
    UnknownClass { class: usize, num_classes: usize },

    #[error("model has no null-class embedding; classifier-free guidance is unavailable")]
    MissingNullClass,

    #[error("parameters are frozen")]
    Frozen,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("training diverged: non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("encoder accuracy {accuracy:.4} is below the required {required:.2}")]
    EncoderAccuracy { accuracy: f64, required: f64 },

    #[error("class {class} has {available} samples, fewer than k = {k}")]
    NotEnoughSamples {
        class: usize,
        available: usize,
        k: usize,
    },

    #[error("no representative vectors for class {0}")]
    MissingRepresentatives(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the experiment stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::ConfigSyntax { .. }
            | Error::UnknownDataset(_)
            | Error::UnknownClass { .. }
            | Error::TimeOutOfRange(_)
            | Error::Parse(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
