//! Medication-entity corpus processing and span-level evaluation.
//!
//! The crate reads stand-off and token-tag annotations, scores predictions
//! under the Strict, Exact, Partial and Type matching schemes, aggregates
//! per-label metrics, and provides corpus utilities (splitting, chunking,
//! BIO conversion, oversampling), prediction merging and a seeded synthetic
//! corpus generator.

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod standoff;
pub mod synthetic;

pub use error::{
    CorpusError, MergeError, MetricsError, SpanError, StandoffError, SynthError, TagError,
};
pub use matcher::{align, classify, overlap, Alignment, LabelCounts, MatchCounts, MatchMode};
pub use metrics::{EvaluationReport, NumberStyle, Prf, ReportFormat, TokenTally};
pub use model::{
    parse_label, validate_span, AnnotationSet, Corpus, Document, EntitySpan, Fragment, Label,
    Source, SurfacePolicy,
};
pub use standoff::{Tag, TaggedDocument, TokenTagRecord};
