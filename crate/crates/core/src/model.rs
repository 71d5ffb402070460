//! Domain types shared by every other module: labels, fragments, spans,
//! documents, annotation sets and corpora.
//!
//! All offsets are character offsets (Unicode scalar values), half-open.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CorpusError, SpanError};

/// Entity label. The nine medication labels plus `O`, and a verbatim escape
/// for names outside the closed set.
///
/// Variant order is the canonical report order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Drug,
    Strength,
    Form,
    Frequency,
    Route,
    Dosage,
    Duration,
    Reason,
    Ade,
    /// Outside tag. Never valid on an entity span.
    O,
    Unknown(String),
}

impl Label {
    /// The nine entity labels, in canonical order.
    pub const ENTITY_LABELS: [Label; 9] = [
        Label::Drug,
        Label::Strength,
        Label::Form,
        Label::Frequency,
        Label::Route,
        Label::Dosage,
        Label::Duration,
        Label::Reason,
        Label::Ade,
    ];

    /// The seven labels produced by the original Med7 model.
    pub const MED7_LABELS: [Label; 7] = [
        Label::Drug,
        Label::Strength,
        Label::Form,
        Label::Frequency,
        Label::Route,
        Label::Dosage,
        Label::Duration,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            Label::Drug => "Drug",
            Label::Strength => "Strength",
            Label::Form => "Form",
            Label::Frequency => "Frequency",
            Label::Route => "Route",
            Label::Dosage => "Dosage",
            Label::Duration => "Duration",
            Label::Reason => "Reason",
            Label::Ade => "ADE",
            Label::O => "O",
            Label::Unknown(name) => name,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Label::Unknown(_))
    }

    /// True for every label that may appear on an entity span.
    pub fn is_entity(&self) -> bool {
        !matches!(self, Label::O)
    }
}

/// Parses a label case-insensitively. Unknown names are carried verbatim and
/// logged once per call.
pub fn parse_label(s: &str) -> Label {
    let label = lookup_label(s);
    if label.is_unknown() {
        log::warn!("unknown label {s:?} carried verbatim");
    }
    label
}

fn lookup_label(s: &str) -> Label {
    match s.trim().to_ascii_lowercase().as_str() {
        "drug" => Label::Drug,
        "strength" => Label::Strength,
        "form" => Label::Form,
        "frequency" => Label::Frequency,
        "route" => Label::Route,
        "dosage" => Label::Dosage,
        "duration" => Label::Duration,
        "reason" => Label::Reason,
        "ade" => Label::Ade,
        "o" => Label::O,
        _ => Label::Unknown(s.trim().to_string()),
    }
}

impl FromStr for Label {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(lookup_label(s))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(lookup_label(&s))
    }
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Self {
        Fragment { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of characters shared with `other`.
    pub fn intersection(&self, other: &Fragment) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

/// One annotated entity: a label over one or more fragments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub id: String,
    pub label: Label,
    pub fragments: Vec<Fragment>,
    pub surface: String,
}

impl EntitySpan {
    pub fn new(id: impl Into<String>, label: Label, fragments: Vec<Fragment>) -> Self {
        EntitySpan {
            id: id.into(),
            label,
            fragments,
            surface: String::new(),
        }
    }

    pub fn single(id: impl Into<String>, label: Label, start: usize, end: usize) -> Self {
        Self::new(id, label, vec![Fragment::new(start, end)])
    }

    /// `(min start, max end)` over all fragments.
    pub fn extent(&self) -> Fragment {
        let start = self.fragments.iter().map(|f| f.start).min().unwrap_or(0);
        let end = self.fragments.iter().map(|f| f.end).max().unwrap_or(0);
        Fragment { start, end }
    }

    /// Total characters covered by the fragments.
    pub fn covered_len(&self) -> usize {
        self.fragments.iter().map(Fragment::len).sum()
    }

    pub fn same_boundaries(&self, other: &EntitySpan) -> bool {
        self.fragments == other.fragments
    }
}

/// How a surface-string disagreement is treated during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfacePolicy {
    /// Mismatches are reported as warnings and the surface is replaced.
    #[default]
    Lenient,
    /// Mismatches are errors.
    Strict,
}

/// Result of [`validate_span`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedSpan {
    pub span: EntitySpan,
    /// The original surface, when it disagreed with the text (lenient mode).
    pub surface_mismatch: Option<String>,
}

/// A document's text with a char→byte index, so span slicing is O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: String,
    text: String,
    // byte offset of every char boundary, including the end
    boundaries: Vec<usize>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut boundaries: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        boundaries.push(text.len());
        Document {
            doc_id: doc_id.into(),
            text,
            boundaries,
        }
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Substring by character offsets; `None` when out of range.
    pub fn slice(&self, start: usize, end: usize) -> Option<&str> {
        if start > end || end > self.char_len() {
            return None;
        }
        Some(&self.text[self.boundaries[start]..self.boundaries[end]])
    }

    /// Surface string of a fragment list: fragment texts joined by one space.
    pub fn surface_of(&self, fragments: &[Fragment]) -> Option<String> {
        let mut parts = Vec::with_capacity(fragments.len());
        for f in fragments {
            parts.push(self.slice(f.start, f.end)?);
        }
        Some(parts.join(" "))
    }

    pub fn with_id(&self, doc_id: impl Into<String>) -> Document {
        Document {
            doc_id: doc_id.into(),
            text: self.text.clone(),
            boundaries: self.boundaries.clone(),
        }
    }
}

impl Serialize for Document {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            doc_id: &'a str,
            text: &'a str,
        }
        Repr {
            doc_id: &self.doc_id,
            text: &self.text,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            doc_id: String,
            text: String,
        }
        let r = Repr::deserialize(deserializer)?;
        Ok(Document::new(r.doc_id, r.text))
    }
}

// Whitespace inside a surface is not significant for comparison; stand-off
// lines cannot carry tabs or newlines.
fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Checks a span against its document and recomputes its surface.
///
/// Fragments are sorted by start. An empty surface on input is treated as
/// absent and never produces a mismatch.
pub fn validate_span(
    doc: &Document,
    span: &EntitySpan,
    policy: SurfacePolicy,
) -> Result<CheckedSpan, SpanError> {
    if !span.label.is_entity() {
        return Err(SpanError::OutsideLabel {
            id: span.id.clone(),
        });
    }
    if span.fragments.is_empty() {
        return Err(SpanError::NoFragments {
            id: span.id.clone(),
        });
    }
    let len = doc.char_len();
    let mut fragments = span.fragments.clone();
    fragments.sort();
    for f in &fragments {
        if f.start >= f.end || f.end > len {
            return Err(SpanError::OffsetOutOfBounds {
                id: span.id.clone(),
                start: f.start,
                end: f.end,
                len,
            });
        }
    }
    for w in fragments.windows(2) {
        if w[1].start < w[0].end {
            return Err(SpanError::FragmentOverlap {
                id: span.id.clone(),
            });
        }
    }
    let surface = doc
        .surface_of(&fragments)
        .expect("fragments checked against document length");
    let mismatch =
        !span.surface.is_empty() && normalize_ws(&span.surface) != normalize_ws(&surface);
    let surface_mismatch = if mismatch {
        match policy {
            SurfacePolicy::Strict => {
                return Err(SpanError::SurfaceMismatch {
                    id: span.id.clone(),
                    expected: surface,
                    found: span.surface.clone(),
                })
            }
            SurfacePolicy::Lenient => {
                log::warn!(
                    "{}: surface {:?} does not match text {:?}",
                    span.id,
                    span.surface,
                    surface
                );
                Some(span.surface.clone())
            }
        }
    } else {
        None
    };
    Ok(CheckedSpan {
        span: EntitySpan {
            id: span.id.clone(),
            label: span.label.clone(),
            fragments,
            surface,
        },
        surface_mismatch,
    })
}

/// Where an annotation set came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Gold,
    Model(String),
}

impl Source {
    pub fn name(&self) -> &str {
        match self {
            Source::Gold => "gold",
            Source::Model(name) => name,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<&str> for Source {
    fn from(s: &str) -> Self {
        if s == "gold" {
            Source::Gold
        } else {
            Source::Model(s.to_string())
        }
    }
}

impl Serialize for Source {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Source::from(s.as_str()))
    }
}

/// All spans of one document from one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub source: Source,
    pub spans: Vec<EntitySpan>,
}

impl AnnotationSet {
    pub fn new(doc_id: impl Into<String>, source: Source) -> Self {
        AnnotationSet {
            doc_id: doc_id.into(),
            source,
            spans: Vec::new(),
        }
    }

    /// Validates every span against `doc` and checks id uniqueness.
    /// Returns the checked set and the number of surface warnings.
    pub fn validated(
        doc: &Document,
        source: Source,
        spans: Vec<EntitySpan>,
        policy: SurfacePolicy,
    ) -> Result<(AnnotationSet, usize), SpanError> {
        let mut seen = HashSet::new();
        let mut checked = Vec::with_capacity(spans.len());
        let mut warnings = 0;
        for span in &spans {
            if !seen.insert(span.id.as_str()) {
                return Err(SpanError::DuplicateId {
                    id: span.id.clone(),
                });
            }
            let c = validate_span(doc, span, policy)?;
            warnings += usize::from(c.surface_mismatch.is_some());
            checked.push(c.span);
        }
        Ok((
            AnnotationSet {
                doc_id: doc.doc_id().to_string(),
                source,
                spans: checked,
            },
            warnings,
        ))
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Documents with gold annotations and any number of prediction sources.
///
/// Documents are kept ordered by `doc_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: BTreeMap<String, Document>,
    gold: BTreeMap<String, AnnotationSet>,
    predictions: BTreeMap<String, BTreeMap<String, AnnotationSet>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, doc: Document) -> Result<(), CorpusError> {
        if self.documents.contains_key(doc.doc_id()) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id().to_string()));
        }
        self.documents.insert(doc.doc_id().to_string(), doc);
        Ok(())
    }

    /// Inserts (or replaces) the gold set for its document.
    pub fn set_gold(&mut self, set: AnnotationSet) -> Result<(), CorpusError> {
        if !self.documents.contains_key(&set.doc_id) {
            return Err(CorpusError::UnknownDocument(set.doc_id));
        }
        self.gold.insert(set.doc_id.clone(), set);
        Ok(())
    }

    /// Inserts (or replaces) a prediction set under its source name.
    pub fn set_prediction(&mut self, set: AnnotationSet) -> Result<(), CorpusError> {
        if !self.documents.contains_key(&set.doc_id) {
            return Err(CorpusError::UnknownDocument(set.doc_id));
        }
        self.predictions
            .entry(set.source.name().to_string())
            .or_default()
            .insert(set.doc_id.clone(), set);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.documents.keys().map(String::as_str)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.get(doc_id)
    }

    pub fn gold(&self, doc_id: &str) -> Option<&AnnotationSet> {
        self.gold.get(doc_id)
    }

    /// Gold spans of a document; empty when the document has no gold set.
    pub fn gold_spans(&self, doc_id: &str) -> &[EntitySpan] {
        self.gold
            .get(doc_id)
            .map(|s| s.spans.as_slice())
            .unwrap_or(&[])
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.predictions.keys().map(String::as_str)
    }

    pub fn prediction(&self, source: &str, doc_id: &str) -> Option<&AnnotationSet> {
        self.predictions.get(source)?.get(doc_id)
    }

    pub fn prediction_spans(&self, source: &str, doc_id: &str) -> &[EntitySpan] {
        self.prediction(source, doc_id)
            .map(|s| s.spans.as_slice())
            .unwrap_or(&[])
    }

    /// A new corpus holding only the given documents with their annotations.
    /// Unknown ids are ignored.
    pub fn subset<'a>(&self, doc_ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let mut out = Corpus::new();
        for id in doc_ids {
            let Some(doc) = self.documents.get(id) else {
                continue;
            };
            out.documents.insert(id.to_string(), doc.clone());
            if let Some(g) = self.gold.get(id) {
                out.gold.insert(id.to_string(), g.clone());
            }
            for (source, sets) in &self.predictions {
                if let Some(p) = sets.get(id) {
                    out.predictions
                        .entry(source.clone())
                        .or_default()
                        .insert(id.to_string(), p.clone());
                }
            }
        }
        out
    }

    /// Copies a document with all its annotation sets under a new id.
    pub fn duplicate_document(&mut self, doc_id: &str, new_id: &str) -> Result<(), CorpusError> {
        let doc = self
            .documents
            .get(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_string()))?
            .with_id(new_id);
        self.add_document(doc)?;
        if let Some(g) = self.gold.get(doc_id) {
            let mut g = g.clone();
            g.doc_id = new_id.to_string();
            self.gold.insert(new_id.to_string(), g);
        }
        for sets in self.predictions.values_mut() {
            if let Some(p) = sets.get(doc_id) {
                let mut p = p.clone();
                p.doc_id = new_id.to_string();
                sets.insert(new_id.to_string(), p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        Document::new("d1", "take aspirin daily")
    }

    #[test]
    fn validate_recomputes_surface() {
        let span = EntitySpan::single("T1", Label::Drug, 5, 12);
        let c = validate_span(&doc(), &span, SurfacePolicy::Lenient).unwrap();
        assert_eq!(c.span.surface, "aspirin");
        assert!(c.surface_mismatch.is_none());
    }

    #[test]
    fn empty_fragment_is_out_of_bounds() {
        let span = EntitySpan::single("T1", Label::Drug, 10, 10);
        let err = validate_span(&doc(), &span, SurfacePolicy::Lenient).unwrap_err();
        assert!(matches!(err, SpanError::OffsetOutOfBounds { .. }));
    }

    #[test]
    fn past_end_is_out_of_bounds() {
        let span = EntitySpan::single("T1", Label::Drug, 5, 19);
        assert!(matches!(
            validate_span(&doc(), &span, SurfacePolicy::Lenient),
            Err(SpanError::OffsetOutOfBounds { len: 18, .. })
        ));
    }

    #[test]
    fn overlapping_fragments_rejected() {
        let span = EntitySpan::new(
            "T1",
            Label::Ade,
            vec![Fragment::new(0, 4), Fragment::new(3, 8)],
        );
        assert!(matches!(
            validate_span(&doc(), &span, SurfacePolicy::Lenient),
            Err(SpanError::FragmentOverlap { .. })
        ));
    }

    #[test]
    fn fragments_are_sorted_and_joined() {
        let span = EntitySpan::new(
            "T1",
            Label::Ade,
            vec![Fragment::new(13, 18), Fragment::new(0, 4)],
        );
        let c = validate_span(&doc(), &span, SurfacePolicy::Lenient).unwrap();
        assert_eq!(
            c.span.fragments,
            vec![Fragment::new(0, 4), Fragment::new(13, 18)]
        );
        assert_eq!(c.span.surface, "take daily");
    }

    #[test]
    fn surface_mismatch_policy() {
        let mut span = EntitySpan::single("T1", Label::Drug, 5, 12);
        span.surface = "asprin".into();
        let c = validate_span(&doc(), &span, SurfacePolicy::Lenient).unwrap();
        assert_eq!(c.surface_mismatch.as_deref(), Some("asprin"));
        assert_eq!(c.span.surface, "aspirin");
        assert!(matches!(
            validate_span(&doc(), &span, SurfacePolicy::Strict),
            Err(SpanError::SurfaceMismatch { .. })
        ));
    }

    #[test]
    fn o_label_rejected_on_spans() {
        let span = EntitySpan::single("T1", Label::O, 5, 12);
        assert!(validate_span(&doc(), &span, SurfacePolicy::Lenient).is_err());
    }

    #[test]
    fn char_offsets_not_bytes() {
        let d = Document::new("u", "naïve café dose");
        let span = EntitySpan::single("T1", Label::Drug, 6, 10);
        let c = validate_span(&d, &span, SurfacePolicy::Strict).unwrap();
        assert_eq!(c.span.surface, "café");
        assert_eq!(d.char_len(), 15);
    }

    #[test]
    fn parse_label_cases() {
        assert_eq!(parse_label("drug"), Label::Drug);
        assert_eq!(parse_label("ADE"), Label::Ade);
        assert_eq!(parse_label("ade"), Label::Ade);
        assert_eq!(parse_label("Temporal"), Label::Unknown("Temporal".into()));
        assert_eq!(Label::Ade.to_string(), "ADE");
        assert_eq!(parse_label("FREQUENCY").to_string(), "Frequency");
    }

    #[test]
    fn canonical_order() {
        let mut labels = vec![
            Label::O,
            Label::Ade,
            Label::Unknown("X".into()),
            Label::Drug,
        ];
        labels.sort();
        assert_eq!(
            labels,
            vec![
                Label::Drug,
                Label::Ade,
                Label::O,
                Label::Unknown("X".into())
            ]
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let spans = vec![
            EntitySpan::single("T1", Label::Drug, 5, 12),
            EntitySpan::single("T1", Label::Frequency, 13, 18),
        ];
        assert!(matches!(
            AnnotationSet::validated(&doc(), Source::Gold, spans, SurfacePolicy::Lenient),
            Err(SpanError::DuplicateId { .. })
        ));
    }

    #[test]
    fn corpus_rejects_unknown_doc() {
        let mut c = Corpus::new();
        c.add_document(doc()).unwrap();
        assert!(c.add_document(doc()).is_err());
        assert!(c
            .set_gold(AnnotationSet::new("nope", Source::Gold))
            .is_err());
        c.set_gold(AnnotationSet::new("d1", Source::Gold)).unwrap();
        c.duplicate_document("d1", "d1.dup1").unwrap();
        assert_eq!(c.gold("d1.dup1").unwrap().doc_id, "d1.dup1");
    }
}
