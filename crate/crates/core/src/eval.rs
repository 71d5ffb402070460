//! Corpus-level scoring: per-document alignment run in parallel, counts
//! summed, then turned into reports.

use rayon::prelude::*;

use crate::corpus::{spans_to_bio, tokenize};
use crate::error::MetricsError;
use crate::matcher::{score_document, LabelCounts, MatchMode};
use crate::metrics::{filter_and_reaggregate, tally_tags, EvaluationReport, TokenTally};
use crate::model::{Corpus, EntitySpan, Label};

/// Counts for every mode, in [`MatchMode::ALL`] order, summed over all
/// documents of the corpus. Documents without predictions count as empty.
pub fn corpus_counts(corpus: &Corpus, source: &str) -> [LabelCounts; 4] {
    let docs: Vec<&str> = corpus.doc_ids().collect();
    docs.par_iter()
        .map(|id| score_document(corpus.gold_spans(id), corpus.prediction_spans(source, id)))
        .reduce(
            || std::array::from_fn(|_| LabelCounts::new()),
            |mut acc, doc| {
                for (a, d) in acc.iter_mut().zip(&doc) {
                    a.merge(d);
                }
                acc
            },
        )
}

/// Token accuracy of the prediction's BIO tags against the gold BIO tags,
/// both derived with the rule tokenizer.
pub fn corpus_token_tally(corpus: &Corpus, source: &str) -> TokenTally {
    let docs: Vec<_> = corpus.documents().collect();
    docs.par_iter()
        .map(|doc| {
            let tokens = tokenize(doc);
            let gold = spans_to_bio(&tokens, corpus.gold_spans(doc.doc_id())).tags;
            let pred = spans_to_bio(&tokens, corpus.prediction_spans(source, doc.doc_id())).tags;
            tally_tags(doc.doc_id(), &gold, &pred).expect("same tokenization on both sides")
        })
        .reduce(TokenTally::default, |mut a, b| {
            a.add(b);
            a
        })
}

/// Report for one source under one mode.
pub fn evaluate_source(
    corpus: &Corpus,
    source: &str,
    mode: MatchMode,
    excluded: &[Label],
) -> Result<EvaluationReport, MetricsError> {
    let counts = corpus_counts(corpus, source);
    let idx = MatchMode::ALL
        .iter()
        .position(|m| *m == mode)
        .expect("mode in ALL");
    let tally = corpus_token_tally(corpus, source);
    filter_and_reaggregate(&counts[idx], mode, excluded, Some(tally))
}

/// Single-document helper: counts for one mode.
pub fn document_counts(gold: &[EntitySpan], pred: &[EntitySpan], mode: MatchMode) -> LabelCounts {
    let idx = MatchMode::ALL
        .iter()
        .position(|m| *m == mode)
        .expect("mode in ALL");
    let [a, b, c, d] = score_document(gold, pred);
    [a, b, c, d].into_iter().nth(idx).expect("four modes")
}
