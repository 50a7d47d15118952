use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Every failure the core can report. Variants carry enough context to name
/// the offending input.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    // corpus
    MalformedRow { line: usize, reason: String },
    EmptyFile,
    BadTokenCount { name: String, found: usize },
    EmptyAudio,
    InvalidRecord(String),
    UnknownDiagnosis(String),

    // dsp
    BadFftSize(usize),
    DegenerateFilter { filter: usize, bin: usize },
    InvalidConfig(String),

    // nn / model
    ShapeMismatch { op: &'static str, expected: Vec<usize>, found: Vec<usize> },
    BadTarget { index: usize, classes: usize },
    StaleCache(&'static str),
    Divergence { epoch: usize, batch: usize, last_good_epoch: Option<usize>, detail: String },
    UnresolvedShape(String),
    UnknownArch(String),

    // metrics
    LabelOutOfRange { label: usize, classes: usize },
    EmptyMatrix,
    SingleClassOnly { class: usize },

    // risk
    OutOfRubric { age: f64 },
    EmptyTrainingSet,
    NoConvergence { iterations: usize, max_residual: f64 },
    UnfittedModel,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedRow { line, reason } => write!(f, "malformed row at line {line}: {reason}"),
            Error::EmptyFile => f.write_str("file contains no rows"),
            Error::BadTokenCount { name, found } => {
                write!(f, "file name `{name}` has {found} underscore-separated tokens, expected 5")
            }
            Error::EmptyAudio => f.write_str("audio contains no samples"),
            Error::InvalidRecord(msg) => write!(f, "invalid record: {msg}"),
            Error::UnknownDiagnosis(name) => write!(f, "unknown diagnosis `{name}`"),
            Error::BadFftSize(n) => write!(f, "FFT size {n} is not a power of two"),
            Error::DegenerateFilter { filter, bin } => write!(
                f,
                "mel filter {filter} collapses onto FFT bin {bin}; reduce the filter count or raise n_fft"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ShapeMismatch { op, expected, found } => {
                write!(f, "{op}: shape mismatch, expected {expected:?}, found {found:?}")
            }
            Error::BadTarget { index, classes } => {
                write!(f, "target class {index} out of range for {classes} classes")
            }
            Error::StaleCache(layer) => write!(f, "{layer}: backward called without a cached forward pass"),
            Error::Divergence { epoch, batch, last_good_epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}, batch {batch}: {detail}")?;
                match last_good_epoch {
                    Some(e) => write!(f, " (last good epoch {e})"),
                    None => f.write_str(" (no completed epoch)"),
                }
            }
            Error::UnresolvedShape(msg) => write!(f, "unresolved shape: {msg}"),
            Error::UnknownArch(name) => write!(f, "unknown architecture `{name}`"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::EmptyMatrix => f.write_str("confusion matrix is empty"),
            Error::SingleClassOnly { class } => {
                write!(f, "class {class} has no positives or no negatives; AUC undefined")
            }
            Error::OutOfRubric { age } => write!(f, "age {age} is below the 35-year risk rubric"),
            Error::EmptyTrainingSet => f.write_str("training set is empty"),
            Error::NoConvergence { iterations, max_residual } => write!(
                f,
                "no convergence after {iterations} iterations (max KKT residual {max_residual:.3e})"
            ),
            Error::UnfittedModel => f.write_str("model has not been fitted"),
        }
    }
}

impl core::error::Error for Error {}
