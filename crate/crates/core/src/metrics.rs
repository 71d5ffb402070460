//! Precision/recall/F1 from match counts, micro/macro/weighted aggregation,
//! label filtering, token accuracy and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::matcher::{LabelCounts, MatchCounts, MatchMode};
use crate::model::Label;
use crate::standoff::Tag;

/// Credit given to a PAR match in partial mode.
pub const PARTIAL_CREDIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when precision or recall had a zero denominator and was scored 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_division: bool,
}

impl Prf {
    /// Builds a row from precision and recall, deriving F1.
    pub fn new(precision: f64, recall: f64, support: usize) -> Self {
        Prf {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
            zero_division: false,
        }
    }

    /// A row taken verbatim, e.g. from a published table.
    pub fn from_row(precision: f64, recall: f64, f1: f64, support: usize) -> Self {
        Prf {
            precision,
            recall,
            f1,
            support,
            zero_division: false,
        }
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision/recall/F1 under the mode's credit rule. Support is POSSIBLE.
pub fn prf_from_counts(c: &MatchCounts, mode: MatchMode) -> Prf {
    let credit = match mode {
        MatchMode::Partial => c.cor as f64 + PARTIAL_CREDIT * c.par as f64,
        _ => c.cor as f64,
    };
    let (actual, possible) = (c.actual(), c.possible());
    let precision = if actual > 0 {
        credit / actual as f64
    } else {
        0.0
    };
    let recall = if possible > 0 {
        credit / possible as f64
    } else {
        0.0
    };
    Prf {
        zero_division: actual == 0 || possible == 0,
        ..Prf::new(precision, recall, possible)
    }
}

/// Macro (unweighted mean) and support-weighted mean of per-label rows.
/// Precision, recall and F1 are averaged independently.
pub fn aggregate_rows(rows: &BTreeMap<Label, Prf>) -> Result<(Prf, Prf), MetricsError> {
    let total: usize = rows.values().map(|r| r.support).sum();
    if rows.is_empty() || total == 0 {
        return Err(MetricsError::EmptyReport);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&Prf) -> f64| rows.values().map(f).sum::<f64>() / n;
    let weighted = |f: fn(&Prf) -> f64| {
        rows.values().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
    };
    let macro_avg = Prf::from_row(
        mean(|r| r.precision),
        mean(|r| r.recall),
        mean(|r| r.f1),
        total,
    );
    let weighted_avg = Prf::from_row(
        weighted(|r| r.precision),
        weighted(|r| r.recall),
        weighted(|r| r.f1),
        total,
    );
    Ok((macro_avg, weighted_avg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub micro: Prf,
    pub macro_avg: Prf,
    pub weighted: Prf,
}

/// Micro from summed counts; macro and weighted from per-label rows.
pub fn aggregate(counts: &LabelCounts, mode: MatchMode) -> Result<Aggregates, MetricsError> {
    let rows: BTreeMap<Label, Prf> = counts
        .iter()
        .map(|(l, c)| (l.clone(), prf_from_counts(c, mode)))
        .collect();
    let (macro_avg, weighted) = aggregate_rows(&rows)?;
    Ok(Aggregates {
        micro: prf_from_counts(&counts.total(), mode),
        macro_avg,
        weighted,
    })
}

/// Matching tags over all tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTally {
    pub matched: usize,
    pub total: usize,
}

impl TokenTally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }

    pub fn add(&mut self, o: TokenTally) {
        self.matched += o.matched;
        self.total += o.total;
    }
}

/// Compares full tag strings (`B-X` does not match `I-X`), `O` included.
pub fn tally_tags(doc_id: &str, gold: &[Tag], pred: &[Tag]) -> Result<TokenTally, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            doc_id: doc_id.to_string(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    Ok(TokenTally {
        matched: gold.iter().zip(pred).filter(|(g, p)| g == p).count(),
        total: gold.len(),
    })
}

pub fn token_accuracy(gold: &[Tag], pred: &[Tag]) -> Result<f64, MetricsError> {
    Ok(tally_tags("", gold, pred)?.accuracy())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: MatchMode,
    pub per_label: BTreeMap<Label, Prf>,
    /// Absent when the report was built from rows rather than counts.
    pub micro: Option<Prf>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub weighted: Prf,
    pub token_accuracy: Option<TokenTally>,
    pub total_support: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<Label>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_labels: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<LabelCounts>,
}

impl EvaluationReport {
    pub fn f1(&self, label: &Label) -> Option<f64> {
        self.per_label.get(label).map(|r| r.f1)
    }
}

/// Full report from per-label counts.
pub fn build_report(
    counts: &LabelCounts,
    mode: MatchMode,
    token_accuracy: Option<TokenTally>,
) -> Result<EvaluationReport, MetricsError> {
    let agg = aggregate(counts, mode)?;
    let per_label: BTreeMap<Label, Prf> = counts
        .iter()
        .map(|(l, c)| (l.clone(), prf_from_counts(c, mode)))
        .collect();
    Ok(EvaluationReport {
        mode,
        total_support: per_label.values().map(|r| r.support).sum(),
        unknown_labels: per_label
            .keys()
            .filter(|l| l.is_unknown())
            .cloned()
            .collect(),
        per_label,
        micro: Some(agg.micro),
        macro_avg: agg.macro_avg,
        weighted: agg.weighted,
        token_accuracy,
        excluded: Vec::new(),
        counts: Some(counts.clone()),
    })
}

fn exclusion_set(excluded: &[Label]) -> BTreeSet<Label> {
    excluded.iter().cloned().collect()
}

/// Drops the excluded labels' cells (their gold from POSSIBLE, their
/// predictions from ACTUAL) and recomputes every aggregate. Excluding a label
/// that is not present is a no-op.
pub fn filter_and_reaggregate(
    counts: &LabelCounts,
    mode: MatchMode,
    excluded: &[Label],
    token_accuracy: Option<TokenTally>,
) -> Result<EvaluationReport, MetricsError> {
    let drop = exclusion_set(excluded);
    let kept: LabelCounts = counts
        .iter()
        .filter(|(l, _)| !drop.contains(*l))
        .map(|(l, c)| (l.clone(), *c))
        .collect();
    if kept.0.is_empty() && !counts.0.is_empty() {
        return Err(MetricsError::AllLabelsExcluded);
    }
    let mut report = build_report(&kept, mode, token_accuracy)?;
    report.excluded = drop.into_iter().collect();
    Ok(report)
}

/// Report from already-computed per-label rows (no micro row).
pub fn report_from_rows(
    mode: MatchMode,
    rows: &BTreeMap<Label, Prf>,
    excluded: &[Label],
) -> Result<EvaluationReport, MetricsError> {
    let drop = exclusion_set(excluded);
    let kept: BTreeMap<Label, Prf> = rows
        .iter()
        .filter(|(l, _)| !drop.contains(*l))
        .map(|(l, r)| (l.clone(), *r))
        .collect();
    if kept.is_empty() && !rows.is_empty() {
        return Err(MetricsError::AllLabelsExcluded);
    }
    let (macro_avg, weighted) = aggregate_rows(&kept)?;
    Ok(EvaluationReport {
        mode,
        total_support: kept.values().map(|r| r.support).sum(),
        unknown_labels: kept.keys().filter(|l| l.is_unknown()).cloned().collect(),
        per_label: kept,
        micro: None,
        macro_avg,
        weighted,
        token_accuracy: None,
        excluded: drop.into_iter().collect(),
        counts: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Tsv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

/// Number style for text renderings. JSON always carries raw fractions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberStyle {
    /// `0.9239`
    #[default]
    Decimal,
    /// `92.39%`
    Percent,
}

impl NumberStyle {
    fn fmt(&self, x: f64) -> String {
        match self {
            NumberStyle::Decimal => format!("{x:.4}"),
            NumberStyle::Percent => format!("{:.2}%", x * 100.0),
        }
    }
}

struct Row {
    name: String,
    cells: [String; 4],
}

fn table_rows(report: &EvaluationReport, style: NumberStyle) -> (Vec<Row>, Vec<Row>) {
    let prf_row = |name: String, r: &Prf| Row {
        name,
        cells: [
            style.fmt(r.precision),
            style.fmt(r.recall),
            style.fmt(r.f1),
            r.support.to_string(),
        ],
    };
    let body = report
        .per_label
        .iter()
        .map(|(l, r)| prf_row(l.to_string(), r))
        .collect();
    let mut footer = Vec::new();
    if let Some(t) = &report.token_accuracy {
        footer.push(Row {
            name: "accuracy".into(),
            cells: [
                String::new(),
                String::new(),
                style.fmt(t.accuracy()),
                t.total.to_string(),
            ],
        });
    }
    if let Some(m) = &report.micro {
        footer.push(prf_row("micro avg".into(), m));
    }
    footer.push(prf_row("macro avg".into(), &report.macro_avg));
    footer.push(prf_row("weighted avg".into(), &report.weighted));
    (body, footer)
}

/// Deterministic rendering; labels in canonical order.
pub fn render_report(
    report: &EvaluationReport,
    format: ReportFormat,
    style: NumberStyle,
) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::Tsv => {
            let (body, footer) = table_rows(report, style);
            let mut out = String::from("label\tprecision\trecall\tf1\tsupport\n");
            for row in body.iter().chain(&footer) {
                let _ = writeln!(out, "{}\t{}", row.name, row.cells.join("\t"));
            }
            out
        }
        ReportFormat::Markdown => {
            let (body, footer) = table_rows(report, style);
            let mut out = format!("Evaluation: {}\n", report.mode);
            if !report.excluded.is_empty() {
                let names: Vec<String> = report.excluded.iter().map(Label::to_string).collect();
                let _ = writeln!(out, "Excluded labels: {}", names.join(", "));
            }
            out.push_str("\n| Category | Precision | Recall | F1 | Support |\n");
            out.push_str("|---|---:|---:|---:|---:|\n");
            for row in &body {
                let _ = writeln!(out, "| {} | {} |", row.name, row.cells.join(" | "));
            }
            for row in &footer {
                let _ = writeln!(out, "| **{}** | {} |", row.name, row.cells.join(" | "));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn prf_examples() {
        let c = MatchCounts {
            cor: 5,
            ..Default::default()
        };
        for mode in MatchMode::ALL {
            let p = prf_from_counts(&c, mode);
            assert!(close(p.precision, 1.0) && close(p.recall, 1.0) && close(p.f1, 1.0));
            assert_eq!(p.support, 5);
        }
        let c = MatchCounts {
            par: 4,
            ..Default::default()
        };
        let p = prf_from_counts(&c, MatchMode::Partial);
        assert!(close(p.precision, 0.5) && close(p.recall, 0.5));
        let p = prf_from_counts(&c, MatchMode::Strict);
        assert!(close(p.precision, 0.0));
    }

    #[test]
    fn zero_denominators_flagged() {
        let p = prf_from_counts(
            &MatchCounts {
                mis: 3,
                ..Default::default()
            },
            MatchMode::Type,
        );
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        assert!(p.zero_division);
        assert!(
            !prf_from_counts(
                &MatchCounts {
                    cor: 1,
                    ..Default::default()
                },
                MatchMode::Type
            )
            .zero_division
        );
    }

    #[test]
    fn harmonic_mean_of_published_row() {
        let f1 = f1_score(0.5196, 0.5509);
        assert!((f1 - 0.5348).abs() < 5e-5, "{f1}");
    }

    #[test]
    fn single_label_aggregates_agree() {
        let mut counts = LabelCounts::new();
        *counts.entry(&Label::Drug) = MatchCounts {
            cor: 3,
            inc: 1,
            mis: 2,
            spu: 1,
            par: 0,
        };
        let agg = aggregate(&counts, MatchMode::Type).unwrap();
        assert_eq!(agg.micro, agg.macro_avg);
        assert_eq!(agg.micro, agg.weighted);
    }

    #[test]
    fn empty_report_errors() {
        assert_eq!(
            aggregate(&LabelCounts::new(), MatchMode::Type).unwrap_err(),
            MetricsError::EmptyReport
        );
        let mut spu_only = LabelCounts::new();
        spu_only.entry(&Label::Drug).spu = 2;
        assert_eq!(
            aggregate(&spu_only, MatchMode::Type).unwrap_err(),
            MetricsError::EmptyReport
        );
    }

    #[test]
    fn exclusion() {
        let mut counts = LabelCounts::new();
        *counts.entry(&Label::Drug) = MatchCounts {
            cor: 4,
            ..Default::default()
        };
        *counts.entry(&Label::Ade) = MatchCounts {
            mis: 4,
            spu: 2,
            ..Default::default()
        };
        let all = build_report(&counts, MatchMode::Type, None).unwrap();
        let same = filter_and_reaggregate(&counts, MatchMode::Type, &[], None).unwrap();
        assert_eq!(all, same);
        let no_ade =
            filter_and_reaggregate(&counts, MatchMode::Type, &[Label::Ade, Label::O], None)
                .unwrap();
        assert_eq!(no_ade.total_support, 4);
        assert!(close(no_ade.micro.unwrap().precision, 1.0));
        assert_eq!(
            filter_and_reaggregate(&counts, MatchMode::Type, &[Label::Ade, Label::Drug], None)
                .unwrap_err(),
            MetricsError::AllLabelsExcluded
        );
    }

    #[test]
    fn token_accuracy_examples() {
        let g = [Tag::Begin(Label::Drug), Tag::O];
        assert!(close(token_accuracy(&g, &g).unwrap(), 1.0));
        let all_o = vec![Tag::O; 5];
        assert!(close(token_accuracy(&all_o, &all_o).unwrap(), 1.0));
        let p = [Tag::Begin(Label::Drug), Tag::Begin(Label::Drug)];
        assert!(close(token_accuracy(&g, &p).unwrap(), 0.5));
        let p = [Tag::Inside(Label::Drug), Tag::O];
        assert!(close(token_accuracy(&g, &p).unwrap(), 0.5));
        assert!(matches!(
            token_accuracy(&g, &[Tag::O]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn render_is_stable() {
        let mut counts = LabelCounts::new();
        *counts.entry(&Label::Route) = MatchCounts {
            cor: 9,
            spu: 1,
            ..Default::default()
        };
        *counts.entry(&Label::Drug) = MatchCounts {
            cor: 3,
            mis: 1,
            ..Default::default()
        };
        let report = build_report(
            &counts,
            MatchMode::Type,
            Some(TokenTally {
                matched: 9,
                total: 10,
            }),
        )
        .unwrap();
        for format in [
            ReportFormat::Tsv,
            ReportFormat::Json,
            ReportFormat::Markdown,
        ] {
            assert_eq!(
                render_report(&report, format, NumberStyle::Decimal),
                render_report(&report, format, NumberStyle::Decimal)
            );
        }
        let tsv = render_report(&report, ReportFormat::Tsv, NumberStyle::Decimal);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[1], "Drug\t1.0000\t0.7500\t0.8571\t4");
        assert_eq!(lines[2], "Route\t0.9000\t1.0000\t0.9474\t9");
        assert_eq!(lines[3], "accuracy\t\t\t0.9000\t10");
        let md = render_report(&report, ReportFormat::Markdown, NumberStyle::Percent);
        assert!(md.contains("| Drug | 100.00% | 75.00% | 85.71% | 4 |"));
        assert!(md.contains("| **weighted avg** |"));
        let json: EvaluationReport = serde_json::from_str(&render_report(
            &report,
            ReportFormat::Json,
            NumberStyle::Decimal,
        ))
        .unwrap();
        assert_eq!(json, report);
    }
}
