use thiserror::Error;

use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("span {id}: fragment ({start},{end}) out of bounds for document of length {len}")]
    OffsetOutOfBounds {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span {id}: fragments overlap")]
    FragmentOverlap { id: String },
    #[error("span {id}: surface {found:?} does not match text {expected:?}")]
    SurfaceMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("span {id}: no fragments")]
    NoFragments { id: String },
    #[error("span {id}: label O cannot annotate an entity")]
    OutsideLabel { id: String },
    #[error("duplicate span id {id}")]
    DuplicateId { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StandoffError {
    #[error("line {line}: malformed entity line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Span {
        line: usize,
        #[source]
        source: SpanError,
    },
}

impl StandoffError {
    pub fn line(&self) -> usize {
        match self {
            StandoffError::MalformedLine { line, .. } | StandoffError::Span { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("line {line}: malformed token-tag line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: token record before any '# doc_id = ' header")]
    MissingDocHeader { line: usize },
    #[error("line {line}: document {doc_id} appears twice")]
    DuplicateDocument { line: usize, doc_id: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("unknown document id {0}")]
    UnknownDocument(String),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("chunk parameters need max_tokens > overlap, got max_tokens={max_tokens}, overlap={overlap}")]
    BadChunkParams { max_tokens: usize, overlap: usize },
    #[error("oversampling factor must be >= 1, got {0}")]
    BadFactor(f64),
    #[error("no document contains a gold span labelled {0}")]
    LabelAbsent(Label),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no label has positive support")]
    EmptyReport,
    #[error("every label was excluded")]
    AllLabelsExcluded,
    #[error("document {doc_id}: gold has {gold} tags, prediction has {pred}")]
    LengthMismatch {
        doc_id: String,
        gold: usize,
        pred: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("nothing to merge")]
    NoInputs,
    #[error("annotation sets cover different documents ({0} vs {1})")]
    DocMismatch(String, String),
    #[error("no dev report for source {0}")]
    MissingDevReport(String),
    #[error("dev report for {source_name} has no row for label {label}")]
    MissingLabel { source_name: String, label: Label },
    #[error("priority order names unknown source {0}")]
    UnknownSource(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("no template has a slot for label {0}")]
    TemplateMissingLabel(Label),
    #[error("label O cannot be generated as an entity")]
    OutsideLabel,
    #[error("bad noise specification: {0}")]
    BadNoise(String),
}
