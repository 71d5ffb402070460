//! Stand-off (`.txt` + `.ann`) and token-per-line (`.tags`) formats.
//!
//! Entity lines in `.ann` files look like
//!
//! ```text
//! T1<TAB>Drug 5 12<TAB>aspirin
//! T2<TAB>ADE 0 4;10 14<TAB>pain rash
//! ```
//!
//! Lines whose id does not start with `T` (relations, attributes, notes) are
//! skipped and counted.
//!
//! Token-tag files hold blank-line separated documents:
//!
//! ```text
//! # doc_id = 100-01
//! Aspirin<TAB>0<TAB>7<TAB>B-Drug
//! 81<TAB>8<TAB>10<TAB>B-Strength
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{StandoffError, TagError};
use crate::model::{
    validate_span, AnnotationSet, Document, EntitySpan, Fragment, Label, Source, SurfacePolicy,
};

const ENTITY_PREFIX: char = 'T';
const DOC_HEADER: &str = "# doc_id = ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStandoff {
    pub set: AnnotationSet,
    /// Non-entity lines ignored.
    pub skipped_lines: usize,
    pub surface_warnings: usize,
}

/// Parses one `.ann` file against its document text.
pub fn parse_standoff(
    doc: &Document,
    ann_content: &str,
    source: Source,
    policy: SurfacePolicy,
) -> Result<ParsedStandoff, StandoffError> {
    let mut set = AnnotationSet::new(doc.doc_id(), source);
    let mut skipped_lines = 0;
    let mut surface_warnings = 0;
    let mut ids = HashSet::new();

    for (idx, raw) in ann_content.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        if !raw.starts_with(ENTITY_PREFIX) {
            skipped_lines += 1;
            continue;
        }
        let span = parse_entity_line(raw, line)?;
        if !ids.insert(span.id.clone()) {
            return Err(StandoffError::MalformedLine {
                line,
                reason: format!("duplicate id {}", span.id),
            });
        }
        let checked = validate_span(doc, &span, policy)
            .map_err(|source| StandoffError::Span { line, source })?;
        surface_warnings += usize::from(checked.surface_mismatch.is_some());
        set.spans.push(checked.span);
    }

    Ok(ParsedStandoff {
        set,
        skipped_lines,
        surface_warnings,
    })
}

fn malformed(line: usize, reason: impl Into<String>) -> StandoffError {
    StandoffError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_entity_line(raw: &str, line: usize) -> Result<EntitySpan, StandoffError> {
    let mut fields = raw.splitn(3, '\t');
    let id = fields.next().unwrap_or_default();
    let Some(body) = fields.next() else {
        return Err(malformed(line, "expected tab-separated fields"));
    };
    let surface = fields.next().unwrap_or_default();
    if id.is_empty() || id.contains(char::is_whitespace) {
        return Err(malformed(line, format!("bad id {id:?}")));
    }

    let (label, ranges) = body
        .split_once(' ')
        .ok_or_else(|| malformed(line, "expected 'LABEL start end'"))?;
    if label.is_empty() {
        return Err(malformed(line, "empty label"));
    }
    let mut fragments = Vec::new();
    for range in ranges.split(';') {
        let mut nums = range.split_whitespace();
        let (Some(s), Some(e), None) = (nums.next(), nums.next(), nums.next()) else {
            return Err(malformed(line, format!("bad range {range:?}")));
        };
        let start = s
            .parse::<usize>()
            .map_err(|_| malformed(line, format!("bad offset {s:?}")))?;
        let end = e
            .parse::<usize>()
            .map_err(|_| malformed(line, format!("bad offset {e:?}")))?;
        fragments.push(Fragment::new(start, end));
    }

    let label: Label = crate::model::parse_label(label);
    Ok(EntitySpan {
        id: id.to_string(),
        label,
        fragments,
        surface: surface.to_string(),
    })
}

fn flatten_ws(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c == '\t' || c == '\n' || c == '\r' {
                ' '
            } else {
                c
            }
        })
        .collect()
}

/// Renders an annotation set as `.ann` content. Empty sets render as "".
pub fn write_standoff(set: &AnnotationSet) -> String {
    let mut out = String::new();
    for span in &set.spans {
        let ranges: Vec<String> = span
            .fragments
            .iter()
            .map(|f| format!("{} {}", f.start, f.end))
            .collect();
        out.push_str(&format!(
            "{}\t{} {}\t{}\n",
            span.id,
            span.label,
            ranges.join(";"),
            flatten_ws(&span.surface)
        ));
    }
    out
}

/// IOB2 token tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    Begin(Label),
    Inside(Label),
}

impl Tag {
    pub fn label(&self) -> Option<&Label> {
        match self {
            Tag::O => None,
            Tag::Begin(l) | Tag::Inside(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let (prefix, name) = s.split_once('-').ok_or_else(|| format!("bad tag {s:?}"))?;
        if name.is_empty() {
            return Err(format!("bad tag {s:?}"));
        }
        let label: Label = crate::model::parse_label(name);
        if !label.is_entity() {
            return Err(format!("bad tag {s:?}"));
        }
        match prefix {
            "B" => Ok(Tag::Begin(label)),
            "I" => Ok(Tag::Inside(label)),
            _ => Err(format!("bad tag {s:?}")),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Promotes every orphan `I-X` (not preceded by `B-X` or `I-X`) to `B-X`.
/// Returns the number of repairs.
pub fn repair_iob2(tags: &mut [Tag]) -> usize {
    let mut repairs = 0;
    let mut prev: Option<Label> = None;
    for tag in tags.iter_mut() {
        match tag {
            Tag::O => prev = None,
            Tag::Begin(l) => prev = Some(l.clone()),
            Tag::Inside(l) => {
                if prev.as_ref() != Some(l) {
                    let l = l.clone();
                    *tag = Tag::Begin(l.clone());
                    prev = Some(l);
                    repairs += 1;
                }
            }
        }
    }
    repairs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTagRecord {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedDocument {
    pub doc_id: String,
    pub records: Vec<TokenTagRecord>,
}

impl TaggedDocument {
    pub fn tags(&self) -> Vec<Tag> {
        self.records.iter().map(|r| r.tag.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTokenTags {
    /// Documents in file order.
    pub documents: Vec<TaggedDocument>,
    /// Orphan `I-` tags promoted to `B-`.
    pub repairs: usize,
}

fn tag_malformed(line: usize, reason: impl Into<String>) -> TagError {
    TagError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

/// Parses a `.tags` file and repairs IOB2 violations.
pub fn parse_token_tags(content: &str) -> Result<ParsedTokenTags, TagError> {
    let mut documents: Vec<TaggedDocument> = Vec::new();
    let mut seen = HashSet::new();
    let mut open = false;

    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            open = false;
            continue;
        }
        if let Some(id) = raw.strip_prefix(DOC_HEADER) {
            let id = id.trim();
            if id.is_empty() {
                return Err(tag_malformed(line, "empty doc_id"));
            }
            if !seen.insert(id.to_string()) {
                return Err(TagError::DuplicateDocument {
                    line,
                    doc_id: id.to_string(),
                });
            }
            documents.push(TaggedDocument {
                doc_id: id.to_string(),
                records: Vec::new(),
            });
            open = true;
            continue;
        }
        if !open {
            return Err(TagError::MissingDocHeader { line });
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [token, start, end, tag] = fields[..] else {
            return Err(tag_malformed(
                line,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        };
        let start = start
            .parse::<usize>()
            .map_err(|_| tag_malformed(line, format!("bad offset {start:?}")))?;
        let end = end
            .parse::<usize>()
            .map_err(|_| tag_malformed(line, format!("bad offset {end:?}")))?;
        if start >= end {
            return Err(tag_malformed(line, "token start must be before end"));
        }
        let tag: Tag = tag.parse().map_err(|e: String| tag_malformed(line, e))?;
        documents
            .last_mut()
            .expect("open implies a document")
            .records
            .push(TokenTagRecord {
                token: token.to_string(),
                start,
                end,
                tag,
            });
    }

    let mut repairs = 0;
    for doc in &mut documents {
        let mut tags = doc.tags();
        let n = repair_iob2(&mut tags);
        if n > 0 {
            log::warn!("{}: repaired {n} orphan I- tags", doc.doc_id);
            for (r, t) in doc.records.iter_mut().zip(tags) {
                r.tag = t;
            }
        }
        repairs += n;
    }

    Ok(ParsedTokenTags { documents, repairs })
}

/// Renders documents as a `.tags` file, in the given order.
pub fn write_token_tags(documents: &[TaggedDocument]) -> String {
    let mut out = String::new();
    for (i, doc) in documents.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(DOC_HEADER);
        out.push_str(&doc.doc_id);
        out.push('\n');
        for r in &doc.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                flatten_ws(&r.token),
                r.start,
                r.end,
                r.tag
            ));
        }
    }
    out
}

/// Errors from reading or writing corpus directories.
#[derive(Debug, thiserror::Error)]
pub enum DirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Standoff {
        path: PathBuf,
        #[source]
        source: StandoffError,
    },
    #[error("{path}: {source}")]
    Tags {
        path: PathBuf,
        #[source]
        source: TagError,
    },
    #[error("{path}: no document {doc_id} in the text directory")]
    UnknownDocument { path: PathBuf, doc_id: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DirError + '_ {
    move |source| DirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files in `dir` with the given extension, sorted by file stem.
pub fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, DirError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every `<id>.txt` in `dir`.
pub fn read_documents(dir: &Path) -> Result<Vec<Document>, DirError> {
    files_with_extension(dir, "txt")?
        .into_iter()
        .map(|(id, path)| {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(Document::new(id, text))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationDir {
    pub sets: BTreeMap<String, AnnotationSet>,
    pub skipped_lines: usize,
    pub surface_warnings: usize,
}

/// Reads every `<id>.ann` in `dir` against the matching document. Documents
/// without an `.ann` file get an empty set.
pub fn read_annotations(
    dir: &Path,
    documents: &[Document],
    source: &Source,
    policy: SurfacePolicy,
) -> Result<AnnotationDir, DirError> {
    let by_id: BTreeMap<&str, &Document> = documents.iter().map(|d| (d.doc_id(), d)).collect();
    let mut out = AnnotationDir::default();
    for (id, path) in files_with_extension(dir, "ann")? {
        let doc = by_id
            .get(id.as_str())
            .ok_or_else(|| DirError::UnknownDocument {
                path: path.clone(),
                doc_id: id.clone(),
            })?;
        let content = fs::read_to_string(&path).map_err(io_err(&path))?;
        let parsed = parse_standoff(doc, &content, source.clone(), policy).map_err(|source| {
            DirError::Standoff {
                path: path.clone(),
                source,
            }
        })?;
        out.skipped_lines += parsed.skipped_lines;
        out.surface_warnings += parsed.surface_warnings;
        out.sets.insert(id, parsed.set);
    }
    for doc in documents {
        out.sets
            .entry(doc.doc_id().to_string())
            .or_insert_with(|| AnnotationSet::new(doc.doc_id(), source.clone()));
    }
    Ok(out)
}

/// Writes `<id>.txt` and `<id>.ann` for each document into `dir`.
pub fn write_corpus_dir<'a>(
    dir: &Path,
    items: impl IntoIterator<Item = (&'a Document, Option<&'a AnnotationSet>)>,
) -> Result<(), DirError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (doc, set) in items {
        let txt = dir.join(format!("{}.txt", doc.doc_id()));
        fs::write(&txt, doc.text()).map_err(io_err(&txt))?;
        let ann = dir.join(format!("{}.ann", doc.doc_id()));
        let content = set.map(write_standoff).unwrap_or_default();
        fs::write(&ann, content).map_err(io_err(&ann))?;
    }
    Ok(())
}

/// Writes `<id>.ann` files only.
pub fn write_annotation_dir<'a>(
    dir: &Path,
    sets: impl IntoIterator<Item = &'a AnnotationSet>,
) -> Result<(), DirError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for set in sets {
        let ann = dir.join(format!("{}.ann", set.doc_id));
        fs::write(&ann, write_standoff(set)).map_err(io_err(&ann))?;
    }
    Ok(())
}

pub fn read_token_tags_file(path: &Path) -> Result<ParsedTokenTags, DirError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    parse_token_tags(&content).map_err(|source| DirError::Tags {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        Document::new("d1", "take aspirin daily")
    }

    fn parse(ann: &str) -> Result<ParsedStandoff, StandoffError> {
        parse_standoff(&doc(), ann, Source::Gold, SurfacePolicy::Lenient)
    }

    #[test]
    fn single_entity_line() {
        let p = parse("T1\tDrug 5 12\taspirin\n").unwrap();
        assert_eq!(p.set.spans.len(), 1);
        let s = &p.set.spans[0];
        assert_eq!(s.label, Label::Drug);
        assert_eq!(s.fragments, vec![Fragment::new(5, 12)]);
        assert_eq!(s.surface, "aspirin");
    }

    #[test]
    fn discontinuous_entity() {
        let p = parse("T2\tADE 0 4;13 18\ttake daily\n").unwrap();
        assert_eq!(
            p.set.spans[0].fragments,
            vec![Fragment::new(0, 4), Fragment::new(13, 18)]
        );
        assert_eq!(p.surface_warnings, 0);
    }

    #[test]
    fn spaces_instead_of_tabs() {
        let err = parse("T3 Drug 5 12 aspirin").unwrap_err();
        assert_eq!(err.line(), 1);
        assert!(matches!(err, StandoffError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn non_entity_lines_are_counted() {
        let p = parse(
            "T1\tDrug 5 12\taspirin\nR1\tReason-Drug Arg1:T1 Arg2:T1\n#1\tNote T1\tx\nA1\tNeg T1\n",
        )
        .unwrap();
        assert_eq!(p.set.spans.len(), 1);
        assert_eq!(p.skipped_lines, 3);
    }

    #[test]
    fn errors_are_located() {
        let err = parse("T1\tDrug 5 12\taspirin\nT2\tDrug 5 x\tx\n").unwrap_err();
        assert_eq!(err.line(), 2);
        let err = parse("\nT1\tDrug 5 40\taspirin\n").unwrap_err();
        assert!(matches!(err, StandoffError::Span { line: 2, .. }));
        let err = parse("T1\tDrug 5 12\taspirin\nT1\tDrug 13 18\tdaily\n").unwrap_err();
        assert_eq!(err.line(), 2);
    }

    #[test]
    fn write_examples() {
        assert_eq!(write_standoff(&AnnotationSet::new("d1", Source::Gold)), "");
        let p = parse("T2\tADE 0 4;13 18\ttake daily\n").unwrap();
        assert_eq!(write_standoff(&p.set), "T2\tADE 0 4;13 18\ttake daily\n");
        let again = parse(&write_standoff(&p.set)).unwrap();
        assert_eq!(again.set, p.set);
    }

    #[test]
    fn tags_basic() {
        let content =
            "# doc_id = d1\ntake\t0\t4\tB-Drug\naspirin\t5\t12\tI-Drug\ndaily\t13\t18\tO\n";
        let p = parse_token_tags(content).unwrap();
        assert_eq!(p.repairs, 0);
        assert_eq!(p.documents.len(), 1);
        assert_eq!(
            p.documents[0].tags(),
            vec![Tag::Begin(Label::Drug), Tag::Inside(Label::Drug), Tag::O]
        );
        assert_eq!(write_token_tags(&p.documents), content);
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let content = "# doc_id = d1\nPO\t0\t2\tI-Route\nx\t3\t4\tO\n";
        let p = parse_token_tags(content).unwrap();
        assert_eq!(p.repairs, 1);
        assert_eq!(p.documents[0].records[0].tag, Tag::Begin(Label::Route));
    }

    #[test]
    fn label_change_inside_is_orphan() {
        let mut tags = vec![
            Tag::Begin(Label::Drug),
            Tag::Inside(Label::Route),
            Tag::Inside(Label::Route),
        ];
        assert_eq!(repair_iob2(&mut tags), 1);
        assert_eq!(tags[1], Tag::Begin(Label::Route));
        assert_eq!(tags[2], Tag::Inside(Label::Route));
    }

    #[test]
    fn missing_header() {
        assert_eq!(
            parse_token_tags("take\t0\t4\tO\n").unwrap_err(),
            TagError::MissingDocHeader { line: 1 }
        );
        // a blank line closes the document
        let content = "# doc_id = a\nx\t0\t1\tO\n\ny\t2\t3\tO\n";
        assert_eq!(
            parse_token_tags(content).unwrap_err(),
            TagError::MissingDocHeader { line: 4 }
        );
    }

    #[test]
    fn multiple_documents() {
        let content = "# doc_id = a\nx\t0\t1\tO\n\n# doc_id = b\ny\t0\t1\tB-Form\n";
        let p = parse_token_tags(content).unwrap();
        assert_eq!(p.documents.len(), 2);
        assert_eq!(write_token_tags(&p.documents), content);
        assert!(matches!(
            parse_token_tags("# doc_id = a\n\n# doc_id = a\n"),
            Err(TagError::DuplicateDocument { line: 3, .. })
        ));
    }

    #[test]
    fn bad_tag_lines() {
        for bad in [
            "x\t0\t1\tB-",
            "x\t0\t1\tE-Drug",
            "x\t0\t1",
            "x\t1\t1\tO",
            "x\t0\t1\tB-O",
        ] {
            let content = format!("# doc_id = a\n{bad}\n");
            assert!(
                matches!(
                    parse_token_tags(&content),
                    Err(TagError::MalformedLine { line: 2, .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = doc();
        let set = parse("T1\tDrug 5 12\taspirin\n").unwrap().set;
        write_corpus_dir(dir.path(), [(&d, Some(&set))]).unwrap();
        let docs = read_documents(dir.path()).unwrap();
        assert_eq!(docs, vec![d]);
        let anns =
            read_annotations(dir.path(), &docs, &Source::Gold, SurfacePolicy::Strict).unwrap();
        assert_eq!(anns.sets["d1"], set);
    }
}
