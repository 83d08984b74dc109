//! Crate-wide error type.

use core::fmt;

/// Result alias used throughout the crate.
pub type CoreResult<T> = Result<T, CoreError>;

/// Errors emitted by the numeric, margin, loss, training, and metric
/// modules. Every variant carries enough context to name the offending
/// value or shape.
#[derive(Clone, Debug, PartialEq)]
pub enum CoreError {
    /// Two matrices cannot be combined; both shapes are reported.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A buffer does not match the declared matrix shape.
    DataLength { expected: usize, got: usize },
    /// A computation received an empty input.
    EmptyInput(&'static str),
    /// A value that must be finite was NaN or infinite.
    NonFinite { what: &'static str },
    /// A vector with norm below the epsilon floor cannot be normalized.
    DegenerateNorm { norm: f64, eps: f64 },
    /// A parameter left its documented domain.
    OutOfDomain {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    /// Boundary geometry is undefined for parallel or antiparallel weights.
    ParallelWeights,
    /// The requested margin admits no boundary on the arc between the
    /// two class weights.
    MarginTooLarge { m: f64, max: f64 },
    /// A label is outside `[0, class_count)`.
    LabelOutOfRange { label: usize, classes: usize },
    /// A loss configuration combines a variant with normalization flags
    /// it does not support.
    InvalidLossConfig(&'static str),
    /// Vector lengths disagree.
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    /// Training produced a non-finite loss at the given iteration.
    Diverged { iteration: u64 },
    /// A configuration value failed validation.
    InvalidConfig(&'static str),
    /// A dataset or protocol request needs more samples than exist.
    InsufficientSamples {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    /// A protocol request needs more classes than exist.
    InsufficientClasses { needed: usize, available: usize },
    /// Open-set identification needs at least one impostor probe.
    NoImpostorProbes,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch between {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            CoreError::DataLength { expected, got } => {
                write!(f, "matrix data length {got} does not match shape ({expected} expected)")
            }
            CoreError::EmptyInput(what) => write!(f, "{what} must not be empty"),
            CoreError::NonFinite { what } => write!(f, "{what} contains a non-finite value"),
            CoreError::DegenerateNorm { norm, eps } => {
                write!(f, "vector norm {norm:e} is at or below the {eps:e} floor")
            }
            CoreError::OutOfDomain {
                what,
                value,
                min,
                max,
            } => write!(f, "{what} = {value} is outside [{min}, {max}]"),
            CoreError::ParallelWeights => {
                write!(f, "boundary undefined for parallel or antiparallel class weights")
            }
            CoreError::MarginTooLarge { m, max } => {
                write!(f, "margin {m} exceeds the largest boundary-admitting value {max}")
            }
            CoreError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            CoreError::InvalidLossConfig(msg) => write!(f, "invalid loss config: {msg}"),
            CoreError::LengthMismatch { what, left, right } => {
                write!(f, "{what}: lengths {left} and {right} disagree")
            }
            CoreError::Diverged { iteration } => {
                write!(f, "training diverged (non-finite loss) at iteration {iteration}")
            }
            CoreError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            CoreError::InsufficientSamples {
                what,
                needed,
                available,
            } => write!(f, "{what}: needs {needed} samples, only {available} available"),
            CoreError::InsufficientClasses { needed, available } => {
                write!(f, "needs {needed} classes, only {available} available")
            }
            CoreError::NoImpostorProbes => {
                write!(f, "open-set threshold undefined without impostor probes")
            }
        }
    }
}

impl core::error::Error for CoreError {}
