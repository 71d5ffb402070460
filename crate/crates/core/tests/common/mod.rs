#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use medmine_core::synthetic::PerturbLedger;
use medmine_core::{EntitySpan, Label, LabelCounts, MatchMode, Prf};

/// Med7+ rows on the n2c2 test set: precision, recall, f1, support.
pub const MED7_PLUS_ROWS: [(&str, f64, f64, f64, usize); 10] = [
    ("O", 0.0, 0.0, 0.0, 874),
    ("reason", 0.7276, 0.4552, 0.5601, 927),
    ("ade", 0.5579, 0.2190, 0.3145, 242),
    ("form", 0.9229, 0.9393, 0.9310, 1696),
    ("strength", 0.9749, 0.9494, 0.9620, 1639),
    ("dosage", 0.9124, 0.8816, 0.8967, 1039),
    ("drug", 0.9345, 0.9135, 0.9239, 3954),
    ("route", 0.9580, 0.9366, 0.9472, 1341),
    ("frequency", 0.8502, 0.9399, 0.8928, 1564),
    ("duration", 0.8015, 0.7554, 0.7778, 139),
];

/// Original Med7 rows.
pub const MED7_BASELINE_ROWS: [(&str, f64, f64, f64, usize); 7] = [
    ("form", 0.90, 0.90, 0.90, 1696),
    ("strength", 0.70, 0.80, 0.75, 1639),
    ("dosage", 0.11, 0.24, 0.15, 1039),
    ("drug", 0.90, 0.77, 0.83, 3954),
    ("route", 0.96, 0.94, 0.94, 1341),
    ("frequency", 0.74, 0.79, 0.76, 1564),
    ("duration", 0.73, 0.75, 0.74, 139),
];

/// Clinical-XLM-R rows in percent: precision, recall, f1.
pub const XLMR_ROWS_PCT: [(&str, f64, f64, f64); 9] = [
    ("ADE", 51.96, 55.09, 53.48),
    ("Dosage", 85.94, 91.40, 88.59),
    ("Drug", 93.05, 95.63, 94.32),
    ("Duration", 58.40, 67.34, 62.55),
    ("Form", 91.69, 90.46, 91.07),
    ("Frequency", 88.13, 90.09, 89.10),
    ("Reason", 59.57, 62.01, 60.77),
    ("Route", 90.90, 91.28, 91.09),
    ("Strength", 94.83, 96.00, 95.41),
];

pub fn label(name: &str) -> Label {
    name.parse().expect("label names parse")
}

pub fn rows<const N: usize>(table: &[(&str, f64, f64, f64, usize); N]) -> BTreeMap<Label, Prf> {
    table
        .iter()
        .map(|&(l, p, r, f, s)| (label(l), Prf::from_row(p, r, f, s)))
        .collect()
}

/// Plain macro and support-weighted mean of an F1 column.
pub fn f1_means(table: &[(&str, f64, f64, f64, usize)], skip: &[&str]) -> (f64, f64) {
    let kept: Vec<_> = table.iter().filter(|r| !skip.contains(&r.0)).collect();
    let n = kept.len() as f64;
    let total: usize = kept.iter().map(|r| r.4).sum();
    let macro_f1 = kept.iter().map(|r| r.3).sum::<f64>() / n;
    let weighted = kept.iter().map(|r| r.3 * r.4 as f64).sum::<f64>() / total as f64;
    (macro_f1, weighted)
}

/// Integer counts that realize a printed row: COR = round(R·S),
/// ACTUAL = round(COR/P), SPU = ACTUAL − COR, MIS = S − COR.
pub fn counts_for_row(p: f64, r: f64, support: usize) -> (usize, usize, usize) {
    let cor = (r * support as f64).round() as usize;
    let actual = if p > 0.0 {
        (cor as f64 / p).round() as usize
    } else {
        cor
    };
    (cor, actual - cor, support - cor)
}

/// What every mode should report for a perturbed corpus, read straight off
/// the perturbation ledgers.
///
/// Kept span, same boundaries, same label: COR everywhere.
/// Boundaries moved: Strict INC, Exact INC, Partial PAR, Type COR (or INC if
/// also relabeled).
/// Relabeled only: Strict INC, Exact COR, Partial COR, Type INC.
/// Deleted: MIS. Spurious: SPU under its own label.
pub fn expected_counts(ledgers: &[PerturbLedger]) -> [LabelCounts; 4] {
    let mut out: [LabelCounts; 4] = std::array::from_fn(|_| LabelCounts::new());
    for ledger in ledgers {
        for a in &ledger.actions {
            for (i, mode) in MatchMode::ALL.iter().enumerate() {
                let c = out[i].entry(&a.gold_label);
                if a.deleted {
                    c.mis += 1;
                    continue;
                }
                let moved = a.jittered.is_some();
                let relabeled = a.relabeled.is_some();
                match mode {
                    MatchMode::Strict => {
                        if moved || relabeled {
                            c.inc += 1
                        } else {
                            c.cor += 1
                        }
                    }
                    MatchMode::Exact => {
                        if moved {
                            c.inc += 1
                        } else {
                            c.cor += 1
                        }
                    }
                    MatchMode::Partial => {
                        if moved {
                            c.par += 1
                        } else {
                            c.cor += 1
                        }
                    }
                    MatchMode::Type => {
                        if relabeled {
                            c.inc += 1
                        } else {
                            c.cor += 1
                        }
                    }
                }
            }
        }
        for s in &ledger.spurious {
            for counts in out.iter_mut() {
                counts.entry(&s.label).spu += 1;
            }
        }
    }
    out
}

/// Characters covered by a span, as a set.
pub fn char_set(span: &EntitySpan) -> BTreeSet<usize> {
    span.fragments.iter().flat_map(|f| f.start..f.end).collect()
}

pub fn char_overlap(a: &EntitySpan, b: &EntitySpan) -> usize {
    char_set(a).intersection(&char_set(b)).count()
}

/// Largest total overlap achievable by any one-to-one matching of
/// overlapping pairs. Exhaustive; keep inputs small.
pub fn best_total_overlap(gold: &[EntitySpan], pred: &[EntitySpan]) -> usize {
    fn go(i: usize, gold: &[EntitySpan], pred: &[EntitySpan], used: &mut Vec<bool>) -> usize {
        if i == gold.len() {
            return 0;
        }
        let mut best = go(i + 1, gold, pred, used);
        for j in 0..pred.len() {
            if used[j] {
                continue;
            }
            let o = char_overlap(&gold[i], &pred[j]);
            if o == 0 {
                continue;
            }
            used[j] = true;
            best = best.max(o + go(i + 1, gold, pred, used));
            used[j] = false;
        }
        best
    }
    go(0, gold, pred, &mut vec![false; pred.len()])
}
