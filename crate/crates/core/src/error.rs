use std::io;

use thiserror::Error;

use crate::corpus::AnnotationError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: not valid UTF-8")]
    Utf8 { line: usize },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: sentence {id}: {source}")]
    Invalid {
        line: usize,
        id: String,
        source: AnnotationError,
    },
    #[error("line {line}: duplicate sentence id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("sentence {id}: token {text:?} cannot be written in the inline format")]
    Unrepresentable { id: String, text: String },
}

impl CorpusError {
    /// 1-based line of the offending record, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Utf8 { line }
            | CorpusError::Malformed { line, .. }
            | CorpusError::Invalid { line, .. }
            | CorpusError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Failures while reading a linearized sequence back into spans. Positions
/// are item indices in the sequence.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("item {position}: <{label}> is never closed")]
    Unbalanced { label: String, position: usize },
    #[error("item {position}: </{label}> closes nothing")]
    UnmatchedClose { label: String, position: usize },
    #[error("item {position}: expected </{expected}>, found </{found}>")]
    MismatchedClose {
        expected: String,
        found: String,
        position: usize,
    },
    #[error("item {position}: <{label}> encloses no tokens")]
    EmptySpan { label: String, position: usize },
    #[error("item {position}: unknown label {label}")]
    UnknownLabel { label: String, position: usize },
    #[error("item {position}: residual {surface} sentinel")]
    ResidualSentinel { surface: String, position: usize },
    #[error(transparent)]
    Invalid(#[from] AnnotationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("attention map is {found}x{found} but the sentence has {expected} tokens")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("attention row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("attention entry ({row}, {col}) is negative or not finite")]
    InvalidEntry { row: usize, col: usize },
    #[error("keyword ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("mask rate {0} is outside [0, 1]")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no embedding for sentence {0}")]
    UnknownSentence(String),
    #[error("top_n must be at least 1")]
    InvalidTopN,
}

/// Failures talking to an out-of-process worker. Each is reported against
/// one request; the rest of a batch is unaffected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkerError {
    #[error("failed to start worker {command:?}: {message}")]
    Spawn { command: String, message: String },
    #[error("worker handshake failed: {0}")]
    Handshake(String),
    #[error("request {id} timed out")]
    Timeout { id: u64 },
    #[error("malformed worker line {line:?}: {message}")]
    MalformedLine { line: String, message: String },
    #[error("response for unknown request id {id}")]
    UnexpectedId { id: u64 },
    #[error("worker exited before answering request {id}")]
    WorkerExited { id: u64 },
    #[error("worker reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("worker result for request {id} has the wrong shape: {message}")]
    BadResult { id: u64, message: String },
    #[error("i/o error talking to worker: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("cannot train a language model on an empty corpus")]
    EmptyCorpus,
    #[error("smoothing constant must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("cannot score an empty token list")]
    EmptyInput,
    #[error("generator produced reserved sentinel {0:?}")]
    GeneratedSentinel(String),
    #[error("generator left a mask unfilled")]
    UnfilledMask,
    #[error(transparent)]
    Worker(#[from] WorkerError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("silver rate {0} is outside (0, 1]")]
    InvalidRate(f64),
    #[error("sentence id {0} appears in both golden and silver data")]
    IdCollision(String),
    #[error("silver sample {id} fails corpus validation: {source}")]
    InvalidSilver { id: String, source: AnnotationError },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("sentence {0} is in the gold file but not the predictions")]
    MissingPrediction(String),
    #[error("sentence {0} is in the predictions but not the gold file")]
    UnexpectedPrediction(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("sentence {id}: {source}")]
    Sentence { id: String, source: GatewayError },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("generated sequence names unknown source sentence {0}")]
    UnknownSource(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}
