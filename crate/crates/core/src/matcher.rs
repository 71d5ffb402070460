//! Alignment of predicted spans to gold spans and classification under the
//! four SemEval-2013 matching schemes.
//!
//! | scheme  | COR when                     | otherwise |
//! |---------|------------------------------|-----------|
//! | Strict  | same boundaries and label    | INC       |
//! | Exact   | same boundaries              | INC       |
//! | Partial | same boundaries              | PAR       |
//! | Type    | same label (any overlap)     | INC       |
//!
//! Unpaired gold spans are MIS and unpaired predictions SPU in every scheme.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{EntitySpan, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Strict,
    Exact,
    Partial,
    Type,
}

impl MatchMode {
    pub const ALL: [MatchMode; 4] = [
        MatchMode::Strict,
        MatchMode::Exact,
        MatchMode::Partial,
        MatchMode::Type,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Exact => "exact",
            MatchMode::Partial => "partial",
            MatchMode::Type => "type",
        }
    }

    /// Whether two spans would be a COR pair under this mode. Assumes they
    /// overlap.
    pub fn is_correct(&self, gold: &EntitySpan, pred: &EntitySpan) -> bool {
        match self {
            MatchMode::Strict => gold.same_boundaries(pred) && gold.label == pred.label,
            MatchMode::Exact | MatchMode::Partial => gold.same_boundaries(pred),
            MatchMode::Type => gold.label == pred.label,
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(MatchMode::Strict),
            "exact" => Ok(MatchMode::Exact),
            "partial" => Ok(MatchMode::Partial),
            "type" | "lenient" => Ok(MatchMode::Type),
            _ => Err(format!("unknown match mode {s:?}")),
        }
    }
}

/// COR/INC/PAR/MIS/SPU tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchCounts {
    pub cor: usize,
    pub inc: usize,
    pub par: usize,
    pub mis: usize,
    pub spu: usize,
}

impl MatchCounts {
    /// Gold spans accounted for: COR + INC + PAR + MIS.
    pub fn possible(&self) -> usize {
        self.cor + self.inc + self.par + self.mis
    }

    /// Predicted spans accounted for: COR + INC + PAR + SPU.
    pub fn actual(&self) -> usize {
        self.cor + self.inc + self.par + self.spu
    }

    pub fn is_zero(&self) -> bool {
        *self == MatchCounts::default()
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            cor: self.cor + o.cor,
            inc: self.inc + o.inc,
            par: self.par + o.par,
            mis: self.mis + o.mis,
            spu: self.spu + o.spu,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

/// Per-label counts, keyed in canonical label order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelCounts(pub BTreeMap<Label, MatchCounts>);

impl LabelCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&mut self, label: &Label) -> &mut MatchCounts {
        self.0.entry(label.clone()).or_default()
    }

    pub fn get(&self, label: &Label) -> MatchCounts {
        self.0.get(label).copied().unwrap_or_default()
    }

    pub fn total(&self) -> MatchCounts {
        self.0.values().copied().sum()
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        for (label, c) in &other.0 {
            *self.entry(label) += *c;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &MatchCounts)> {
        self.0.iter()
    }
}

impl FromIterator<(Label, MatchCounts)> for LabelCounts {
    fn from_iter<I: IntoIterator<Item = (Label, MatchCounts)>>(iter: I) -> Self {
        let mut out = LabelCounts::new();
        for (l, c) in iter {
            *out.entry(&l) += c;
        }
        out
    }
}

/// Characters shared by the fragment unions of two spans.
pub fn overlap(a: &EntitySpan, b: &EntitySpan) -> usize {
    let (ea, eb) = (a.extent(), b.extent());
    if ea.intersection(&eb) == 0 {
        return 0;
    }
    a.fragments
        .iter()
        .flat_map(|fa| b.fragments.iter().map(move |fb| fa.intersection(fb)))
        .sum()
}

/// One-to-one pairing of gold and predicted spans, by index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    /// `(gold index, pred index)`, sorted by gold index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedy overlap-maximising alignment.
///
/// Candidates are all pairs sharing at least one character, taken in order of
/// overlap (descending), equal label first, gold start, pred start.
pub fn align(gold: &[EntitySpan], pred: &[EntitySpan]) -> Alignment {
    struct Candidate {
        overlap: usize,
        same_label: bool,
        gold_start: usize,
        pred_start: usize,
        g: usize,
        p: usize,
    }

    let pred_extents: Vec<_> = pred.iter().map(EntitySpan::extent).collect();
    let mut candidates = Vec::new();
    for (g, gs) in gold.iter().enumerate() {
        let ge = gs.extent();
        for (p, ps) in pred.iter().enumerate() {
            if ge.intersection(&pred_extents[p]) == 0 {
                continue;
            }
            let ov = overlap(gs, ps);
            if ov > 0 {
                candidates.push(Candidate {
                    overlap: ov,
                    same_label: gs.label == ps.label,
                    gold_start: ge.start,
                    pred_start: pred_extents[p].start,
                    g,
                    p,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.overlap
            .cmp(&a.overlap)
            .then(b.same_label.cmp(&a.same_label))
            .then(a.gold_start.cmp(&b.gold_start))
            .then(a.pred_start.cmp(&b.pred_start))
            .then(a.g.cmp(&b.g))
            .then(a.p.cmp(&b.p))
    });

    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if gold_used[c.g] || pred_used[c.p] {
            continue;
        }
        gold_used[c.g] = true;
        pred_used[c.p] = true;
        pairs.push((c.g, c.p));
    }
    pairs.sort_unstable();
    Alignment {
        pairs,
        unmatched_gold: (0..gold.len()).filter(|&i| !gold_used[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
    }
}

/// Counts for one alignment under one mode.
///
/// Pairs and misses are attributed to the gold label, spurious predictions to
/// the predicted label.
pub fn classify(
    gold: &[EntitySpan],
    pred: &[EntitySpan],
    alignment: &Alignment,
    mode: MatchMode,
) -> LabelCounts {
    let mut counts = LabelCounts::new();
    for &(g, p) in &alignment.pairs {
        let (gs, ps) = (&gold[g], &pred[p]);
        let cell = counts.entry(&gs.label);
        if mode.is_correct(gs, ps) {
            cell.cor += 1;
        } else if mode == MatchMode::Partial {
            cell.par += 1;
        } else {
            cell.inc += 1;
        }
    }
    for &g in &alignment.unmatched_gold {
        counts.entry(&gold[g].label).mis += 1;
    }
    for &p in &alignment.unmatched_pred {
        counts.entry(&pred[p].label).spu += 1;
    }
    counts
}

/// Aligns once and classifies under every mode, in [`MatchMode::ALL`] order.
pub fn score_document(gold: &[EntitySpan], pred: &[EntitySpan]) -> [LabelCounts; 4] {
    let alignment = align(gold, pred);
    MatchMode::ALL.map(|mode| classify(gold, pred, &alignment, mode))
}
