//! Merging prediction sets from several models into one.
//!
//! None of these rules is learned. Each merged span records the source it
//! came from.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::MergeError;
use crate::matcher::{overlap, MatchMode};
use crate::metrics::EvaluationReport;
use crate::model::{AnnotationSet, EntitySpan, Label, Source};

#[derive(Debug, Clone, PartialEq)]
pub enum MergeStrategy {
    /// Every span from every source. With `resolve_conflicts`, a span that
    /// overlaps an already kept span of a different label is dropped, so
    /// earlier sources win.
    Union { resolve_conflicts: bool },
    /// Spans of the first source confirmed by every other source under the
    /// mode's COR criterion.
    Intersection { mode: MatchMode },
    /// For each label, that label's spans from the source with the best dev
    /// F1. Reports are listed in priority order, which breaks ties.
    PerLabelBest {
        dev_reports: Vec<(String, EvaluationReport)>,
    },
    /// Sources in the given order; a span overlapping anything already kept
    /// is dropped regardless of label.
    Priority(Vec<String>),
}

impl MergeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            MergeStrategy::Union { .. } => "union",
            MergeStrategy::Intersection { .. } => "intersection",
            MergeStrategy::PerLabelBest { .. } => "per-label-best",
            MergeStrategy::Priority(_) => "priority",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub span_id: String,
    pub source: String,
    pub source_span_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedSet {
    pub set: AnnotationSet,
    pub provenance: Vec<Provenance>,
}

/// Label → source with the highest F1 on that label. Ties go to the earlier
/// source. Labels are those with gold support in any report.
pub fn per_label_table(
    dev_reports: &[(String, EvaluationReport)],
) -> Result<BTreeMap<Label, String>, MergeError> {
    let labels: std::collections::BTreeSet<&Label> = dev_reports
        .iter()
        .flat_map(|(_, r)| {
            r.per_label
                .iter()
                .filter(|(_, p)| p.support > 0)
                .map(|(l, _)| l)
        })
        .filter(|l| l.is_entity())
        .collect();
    let mut table = BTreeMap::new();
    for label in labels {
        let mut best: Option<(&str, f64)> = None;
        for (source, report) in dev_reports {
            let f1 = report.f1(label).ok_or_else(|| MergeError::MissingLabel {
                source_name: source.clone(),
                label: label.clone(),
            })?;
            if best.map_or(true, |(_, b)| f1 > b) {
                best = Some((source, f1));
            }
        }
        if let Some((source, _)) = best {
            table.insert(label.clone(), source.to_string());
        }
    }
    Ok(table)
}

struct Builder {
    kept: Vec<EntitySpan>,
    provenance: Vec<Provenance>,
    ids: HashSet<String>,
    next: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            kept: Vec::new(),
            provenance: Vec::new(),
            ids: HashSet::new(),
            next: 1,
        }
    }

    fn contains(&self, span: &EntitySpan) -> bool {
        self.kept
            .iter()
            .any(|k| k.label == span.label && k.fragments == span.fragments)
    }

    fn conflicts(&self, span: &EntitySpan, any_label: bool) -> bool {
        self.kept
            .iter()
            .any(|k| (any_label || k.label != span.label) && overlap(k, span) > 0)
    }

    fn push(&mut self, source: &str, span: &EntitySpan) {
        let mut out = span.clone();
        if !self.ids.insert(out.id.clone()) {
            out.id = loop {
                let candidate = format!("T{}", self.next);
                self.next += 1;
                if self.ids.insert(candidate.clone()) {
                    break candidate;
                }
            };
        }
        self.provenance.push(Provenance {
            span_id: out.id.clone(),
            source: source.to_string(),
            source_span_id: span.id.clone(),
        });
        self.kept.push(out);
    }
}

/// Merges sets for one document; inputs are in priority order.
pub fn merge(inputs: &[AnnotationSet], strategy: &MergeStrategy) -> Result<MergedSet, MergeError> {
    let first = inputs.first().ok_or(MergeError::NoInputs)?;
    if let Some(other) = inputs.iter().find(|s| s.doc_id != first.doc_id) {
        return Err(MergeError::DocMismatch(
            first.doc_id.clone(),
            other.doc_id.clone(),
        ));
    }
    let mut b = Builder::new();
    match strategy {
        MergeStrategy::Union { resolve_conflicts } => {
            for set in inputs {
                for span in &set.spans {
                    if b.contains(span) || (*resolve_conflicts && b.conflicts(span, false)) {
                        continue;
                    }
                    b.push(set.source.name(), span);
                }
            }
        }
        MergeStrategy::Intersection { mode } => {
            for span in &first.spans {
                let confirmed = inputs[1..].iter().all(|other| {
                    other
                        .spans
                        .iter()
                        .any(|o| overlap(span, o) > 0 && mode.is_correct(span, o))
                });
                if confirmed {
                    b.push(first.source.name(), span);
                }
            }
        }
        MergeStrategy::Priority(order) => {
            for name in order {
                let set = inputs
                    .iter()
                    .find(|s| s.source.name() == name)
                    .ok_or_else(|| MergeError::UnknownSource(name.clone()))?;
                for span in &set.spans {
                    if !b.conflicts(span, true) {
                        b.push(name, span);
                    }
                }
            }
        }
        MergeStrategy::PerLabelBest { dev_reports } => {
            for set in inputs {
                if !dev_reports.iter().any(|(s, _)| s == set.source.name()) {
                    return Err(MergeError::MissingDevReport(set.source.name().to_string()));
                }
            }
            let table = per_label_table(dev_reports)?;
            let f1_of = |source: &str, label: &Label| {
                dev_reports
                    .iter()
                    .find(|(s, _)| s == source)
                    .and_then(|(_, r)| r.f1(label))
                    .unwrap_or(0.0)
            };
            // (f1, source rank, span rank) so the best-scoring labels claim text first
            let mut candidates: Vec<(f64, usize, usize, &str, &EntitySpan)> = Vec::new();
            for (rank, set) in inputs.iter().enumerate() {
                let name = set.source.name();
                for (k, span) in set.spans.iter().enumerate() {
                    let chosen = match table.get(&span.label) {
                        Some(s) => s == name,
                        // labels no report scored come from the first source
                        None => rank == 0,
                    };
                    if chosen {
                        candidates.push((f1_of(name, &span.label), rank, k, name, span));
                    }
                }
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            for (_, _, _, name, span) in candidates {
                if !b.conflicts(span, false) {
                    b.push(name, span);
                }
            }
        }
    }
    Ok(MergedSet {
        set: AnnotationSet {
            doc_id: first.doc_id.clone(),
            source: Source::Model("merged".into()),
            spans: b.kept,
        },
        provenance: b.provenance,
    })
}
