use thiserror::Error;

use crate::vocab::ObjectId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("object vocabulary is empty")]
    EmptyVocabulary,
    #[error("object name at position {0} is empty")]
    EmptyObjectName(usize),
    #[error("duplicate object name {0:?}")]
    DuplicateObject(String),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("object index {index} out of range for a vocabulary of {size}")]
    ObjectOutOfRange { index: ObjectId, size: usize },
    #[error("unknown verb code {0:?}")]
    UnknownVerb(String),
    #[error("verb {0} requires an object")]
    MissingObject(&'static str),
    #[error("the null therblig carries no object")]
    NullWithObject,
    #[error("malformed {what}: {input:?}")]
    Parse { what: &'static str, input: String },
    #[error("null therblig at step {0} is followed by a non-null step")]
    NullInsideSequence(usize),
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{component} is not differentiable at step {step:?}, entry {entry:?} (residual within 1e-8 of 0)")]
    NonDifferentiable {
        component: &'static str,
        step: Option<usize>,
        entry: Option<usize>,
    },
    #[error("finite-difference step must lie in (0, 1e-2], got {0}")]
    StepSize(f64),
    #[error("enumeration guard exceeded: {0}")]
    Guard(String),
    #[error("{0}")]
    Invalid(String),
}
