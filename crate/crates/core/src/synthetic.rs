//! Seeded synthetic letters with controlled label counts, and seeded
//! perturbation of gold annotations into simulated model output.
//!
//! Both generators keep a ledger of exactly what they did so tests can derive
//! expected counts without running the matcher.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::SynthError;
use crate::model::{AnnotationSet, Corpus, Document, EntitySpan, Fragment, Label, Source};

/// Gold support per label on the 76-letter test split (nine labels).
pub const REFERENCE_SUPPORT: [(Label, usize); 9] = [
    (Label::Drug, 3954),
    (Label::Form, 1696),
    (Label::Strength, 1639),
    (Label::Frequency, 1564),
    (Label::Route, 1341),
    (Label::Dosage, 1039),
    (Label::Reason, 927),
    (Label::Ade, 242),
    (Label::Duration, 139),
];

const DEFAULT_TEMPLATES: &[&str] = &[
    "{Drug} {Strength} {Form} {Route} {Frequency}.",
    "Started {Drug} {Dosage} {Route} {Frequency} for {Duration}.",
    "{Drug} was stopped after she developed {ADE}.",
    "He takes {Drug} {Strength} {Frequency} for {Reason}.",
    "Continue {Drug} {Dosage} {Form} {Frequency}.",
    "Please prescribe {Drug} {Strength} {Route}.",
    "Medication: {Drug}.",
    "Strength noted as {Strength}.",
    "Supplied as {Form}.",
    "Taken {Frequency}.",
    "Given {Route}.",
    "Dose: {Dosage}.",
    "Course of {Duration}.",
    "Indication: {Reason}.",
    "Reported {ADE} since then.",
];

const DEFAULT_FILLER: &[&str] = &[
    "Patient reviewed in clinic today.",
    "Blood pressure was stable.",
    "No known allergies.",
    "Follow up in the outpatient department.",
    "Observations remained within normal limits.",
    "Discussed the plan with the family.",
];

fn default_vocabulary() -> BTreeMap<Label, Vec<String>> {
    let entries: [(Label, &[&str]); 9] = [
        (
            Label::Drug,
            &[
                "aspirin",
                "metformin",
                "lisinopril",
                "atorvastatin",
                "warfarin",
                "amoxicillin",
                "furosemide",
                "omeprazole",
                "insulin glargine",
                "paracetamol",
                "ramipril",
                "bisoprolol",
                "clopidogrel",
                "prednisolone",
                "co-amoxiclav",
            ],
        ),
        (
            Label::Strength,
            &[
                "81 mg", "500 mg", "10 mg", "20 mg", "5 mg/ml", "40 mg", "1 g", "250 mg",
            ],
        ),
        (
            Label::Form,
            &[
                "tablet",
                "capsule",
                "oral solution",
                "inhaler",
                "patch",
                "injection",
                "cream",
            ],
        ),
        (
            Label::Frequency,
            &[
                "daily",
                "twice daily",
                "once a day",
                "every 8 hours",
                "at night",
                "BD",
                "TDS",
                "as required",
            ],
        ),
        (
            Label::Route,
            &[
                "PO",
                "orally",
                "IV",
                "intravenously",
                "subcutaneously",
                "topically",
                "inhaled",
            ],
        ),
        (
            Label::Dosage,
            &[
                "one tablet",
                "two tablets",
                "2 puffs",
                "10 units",
                "one capsule",
                "5 ml",
            ],
        ),
        (
            Label::Duration,
            &["7 days", "two weeks", "5 days", "one month", "10 days"],
        ),
        (
            Label::Reason,
            &[
                "hypertension",
                "atrial fibrillation",
                "pain",
                "infection",
                "diabetes",
                "reflux",
            ],
        ),
        (
            Label::Ade,
            &[
                "rash",
                "nausea",
                "dizziness",
                "bleeding",
                "diarrhoea",
                "hypotension",
                "cough",
            ],
        ),
    ];
    entries
        .into_iter()
        .map(|(l, words)| (l, words.iter().map(|w| w.to_string()).collect()))
        .collect()
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub n_docs: usize,
    /// Exact number of gold spans per label across the corpus.
    pub targets: BTreeMap<Label, usize>,
    /// Sentences with `{Label}` slots.
    pub templates: Vec<String>,
    /// Sentences without slots, sprinkled between templates.
    pub filler: Vec<String>,
    /// Surface strings per label.
    pub vocabulary: BTreeMap<Label, Vec<String>>,
    /// Probability of a filler sentence before each template sentence.
    pub filler_rate: f64,
}

impl GenSpec {
    pub fn with_targets(seed: u64, n_docs: usize, targets: BTreeMap<Label, usize>) -> Self {
        GenSpec {
            seed,
            n_docs,
            targets,
            templates: DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            filler: DEFAULT_FILLER.iter().map(|s| s.to_string()).collect(),
            vocabulary: default_vocabulary(),
            filler_rate: 0.3,
        }
    }

    /// Targets equal to the reference supports (12,541 spans).
    pub fn reference(seed: u64, n_docs: usize) -> Self {
        Self::with_targets(seed, n_docs, REFERENCE_SUPPORT.iter().cloned().collect())
    }

    /// Reference proportions scaled to `total` spans (largest remainder).
    pub fn scaled_default(seed: u64, n_docs: usize, total: usize) -> Self {
        let reference: usize = REFERENCE_SUPPORT.iter().map(|(_, n)| n).sum();
        let mut targets: BTreeMap<Label, usize> = BTreeMap::new();
        let mut remainders = Vec::new();
        for (label, n) in &REFERENCE_SUPPORT {
            let exact = (*n as f64) * total as f64 / reference as f64;
            targets.insert(label.clone(), exact.floor() as usize);
            remainders.push((exact - exact.floor(), label.clone()));
        }
        let assigned: usize = targets.values().sum();
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, label) in remainders.into_iter().take(total - assigned) {
            *targets.get_mut(&label).expect("present") += 1;
        }
        Self::with_targets(seed, n_docs, targets)
    }
}

/// Ground truth recorded during generation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenLedger {
    pub seed: u64,
    pub per_label: BTreeMap<Label, usize>,
    pub per_doc: BTreeMap<String, BTreeMap<Label, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub corpus: Corpus,
    pub ledger: GenLedger,
}

enum Segment {
    Text(String),
    Slot(Label),
}

struct Template {
    segments: Vec<Segment>,
    slots: BTreeMap<Label, usize>,
}

fn parse_template(t: &str) -> Template {
    let mut segments = Vec::new();
    let mut slots = BTreeMap::new();
    let mut rest = t;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            break;
        };
        if open > 0 {
            segments.push(Segment::Text(rest[..open].to_string()));
        }
        let label = crate::model::parse_label(&rest[open + 1..open + close]);
        *slots.entry(label.clone()).or_insert(0) += 1;
        segments.push(Segment::Slot(label));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest.to_string()));
    }
    Template { segments, slots }
}

/// Builds text incrementally, tracking the character offset.
struct TextBuilder {
    text: String,
    chars: usize,
}

impl TextBuilder {
    fn push(&mut self, s: &str) -> Fragment {
        let start = self.chars;
        self.text.push_str(s);
        self.chars += s.chars().count();
        Fragment::new(start, self.chars)
    }
}

/// Generates a corpus whose gold label counts equal `spec.targets` exactly.
pub fn generate(spec: &GenSpec) -> Result<Generated, SynthError> {
    if spec.targets.get(&Label::O).copied().unwrap_or(0) > 0 {
        return Err(SynthError::OutsideLabel);
    }
    let templates: Vec<Template> = spec.templates.iter().map(|t| parse_template(t)).collect();
    for (label, &n) in &spec.targets {
        let covered = templates.iter().any(|t| t.slots.contains_key(label));
        let has_words = spec.vocabulary.get(label).is_some_and(|v| !v.is_empty());
        if n > 0 && !(covered && has_words) {
            return Err(SynthError::TemplateMissingLabel(label.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<Label> = spec
        .targets
        .iter()
        .flat_map(|(l, &n)| std::iter::repeat(l.clone()).take(n))
        .collect();
    pool.shuffle(&mut rng);

    let width = spec.n_docs.max(1).to_string().len().max(4);
    let mut corpus = Corpus::new();
    let mut ledger = GenLedger {
        seed: spec.seed,
        ..Default::default()
    };
    for d in 0..spec.n_docs {
        let lo = d * pool.len() / spec.n_docs;
        let hi = (d + 1) * pool.len() / spec.n_docs;
        let mut remaining: BTreeMap<Label, usize> = BTreeMap::new();
        for l in &pool[lo..hi] {
            *remaining.entry(l.clone()).or_default() += 1;
        }
        let doc_id = format!("synth-{:0width$}", d + 1);
        let (doc, spans) = generate_document(&doc_id, spec, &templates, remaining, &mut rng);

        let mut counts = BTreeMap::new();
        for s in &spans {
            *counts.entry(s.label.clone()).or_insert(0) += 1;
            *ledger.per_label.entry(s.label.clone()).or_insert(0) += 1;
        }
        ledger.per_doc.insert(doc_id.clone(), counts);
        let (set, _) = AnnotationSet::validated(&doc, Source::Gold, spans, Default::default())
            .expect("generated spans index their own text");
        corpus.add_document(doc).expect("fresh ids");
        corpus.set_gold(set).expect("document added");
    }
    Ok(Generated { corpus, ledger })
}

fn generate_document(
    doc_id: &str,
    spec: &GenSpec,
    templates: &[Template],
    mut remaining: BTreeMap<Label, usize>,
    rng: &mut ChaCha8Rng,
) -> (Document, Vec<EntitySpan>) {
    let mut out = TextBuilder {
        text: String::new(),
        chars: 0,
    };
    let mut spans = Vec::new();
    let mut sentences = 0usize;
    let sep = |out: &mut TextBuilder, sentences: &mut usize| {
        if *sentences > 0 {
            out.push(if *sentences % 4 == 0 { "\n" } else { " " });
        }
        *sentences += 1;
    };
    let fits = |t: &Template, rem: &BTreeMap<Label, usize>| {
        !t.slots.is_empty()
            && t.slots
                .iter()
                .all(|(l, n)| rem.get(l).copied().unwrap_or(0) >= *n)
    };

    loop {
        remaining.retain(|_, n| *n > 0);
        if remaining.is_empty() {
            break;
        }
        if !spec.filler.is_empty() && rng.gen_bool(spec.filler_rate.clamp(0.0, 1.0)) {
            sep(&mut out, &mut sentences);
            out.push(spec.filler.choose(rng).expect("non-empty"));
        }
        let fitting: Vec<&Template> = templates.iter().filter(|t| fits(t, &remaining)).collect();
        let template = match fitting.choose(rng) {
            Some(t) => *t,
            None => {
                // no template fits exactly: take one holding the first missing
                // label and leave its surplus slots unannotated
                let need = remaining.keys().next().expect("non-empty").clone();
                let holding: Vec<&Template> = templates
                    .iter()
                    .filter(|t| t.slots.contains_key(&need))
                    .collect();
                *holding.choose(rng).expect("coverage checked")
            }
        };
        sep(&mut out, &mut sentences);
        for seg in &template.segments {
            match seg {
                Segment::Text(t) => {
                    out.push(t);
                }
                Segment::Slot(label) => {
                    let words = &spec.vocabulary[label];
                    let word = words.choose(rng).expect("non-empty vocabulary");
                    match remaining.get_mut(label) {
                        Some(n) if *n > 0 => {
                            *n -= 1;
                            let frag = out.push(word);
                            let mut span = EntitySpan::single(
                                format!("T{}", spans.len() + 1),
                                label.clone(),
                                frag.start,
                                frag.end,
                            );
                            span.surface = word.clone();
                            spans.push(span);
                        }
                        _ => {
                            out.push("the same");
                        }
                    }
                }
            }
        }
    }
    if sentences == 0 {
        let filler = spec
            .filler
            .choose(rng)
            .map(String::as_str)
            .unwrap_or("No medication changes.");
        out.push(filler);
    }
    out.push("\n");
    (Document::new(doc_id, out.text), spans)
}

/// Noise applied by [`perturb`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Deletion probability for labels not in `deletion_by_label`.
    pub deletion: f64,
    #[serde(default)]
    pub deletion_by_label: BTreeMap<Label, f64>,
    pub jitter_prob: f64,
    /// Largest boundary shift in characters.
    pub max_jitter: usize,
    /// Row-stochastic label confusion; a missing row means identity.
    #[serde(default)]
    pub confusion: BTreeMap<Label, BTreeMap<Label, f64>>,
    /// Expected spurious spans per document.
    pub spurious_rate: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            seed: 0,
            deletion: 0.0,
            deletion_by_label: BTreeMap::new(),
            jitter_prob: 0.0,
            max_jitter: 3,
            confusion: BTreeMap::new(),
            spurious_rate: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn with_deletion(p: f64) -> Self {
        NoiseSpec {
            deletion: p,
            ..Default::default()
        }
    }

    /// Uniform confusion: each label is swapped for a different entity label
    /// with probability `p`.
    pub fn uniform_confusion(p: f64) -> BTreeMap<Label, BTreeMap<Label, f64>> {
        let labels = Label::ENTITY_LABELS;
        let off = p / (labels.len() - 1) as f64;
        labels
            .iter()
            .map(|from| {
                let row = labels
                    .iter()
                    .map(|to| (to.clone(), if to == from { 1.0 - p } else { off }))
                    .collect();
                (from.clone(), row)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::BadNoise(format!(
                    "{name} = {p} is not a probability"
                )))
            }
        };
        prob("deletion", self.deletion)?;
        for (l, p) in &self.deletion_by_label {
            prob(&format!("deletion[{l}]"), *p)?;
        }
        prob("jitter_prob", self.jitter_prob)?;
        if !self.spurious_rate.is_finite() || self.spurious_rate < 0.0 {
            return Err(SynthError::BadNoise(format!(
                "spurious_rate = {} must be >= 0",
                self.spurious_rate
            )));
        }
        for (from, row) in &self.confusion {
            let mut sum = 0.0;
            for (to, p) in row {
                prob(&format!("confusion[{from}][{to}]"), *p)?;
                if !to.is_entity() {
                    return Err(SynthError::BadNoise(format!("confusion[{from}] targets O")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::BadNoise(format!(
                    "confusion row {from} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    fn deletion_for(&self, label: &Label) -> f64 {
        self.deletion_by_label
            .get(label)
            .copied()
            .unwrap_or(self.deletion)
    }
}

/// What happened to one gold span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAction {
    pub gold_id: String,
    pub gold_label: Label,
    pub deleted: bool,
    /// New fragments when the boundaries were moved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jittered: Option<Vec<Fragment>>,
    /// New label when the label was changed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabeled: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpuriousSpan {
    pub pred_id: String,
    pub label: Label,
    pub fragment: Fragment,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbLedger {
    pub doc_id: String,
    pub actions: Vec<SpanAction>,
    pub spurious: Vec<SpuriousSpan>,
    /// Spurious spans drawn before placement; fewer are placed when the
    /// document has no free tokens left.
    pub requested_spurious: usize,
}

// FNV-1a, so per-document streams do not depend on iteration order.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100000001b3)
    })
}

fn sample_label(row: &BTreeMap<Label, f64>, rng: &mut ChaCha8Rng) -> Option<Label> {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (label, p) in row {
        acc += p;
        if *p > 0.0 {
            last = Some(label.clone());
        }
        if x < acc {
            return Some(label.clone());
        }
    }
    last
}

/// Candidate jittered fragment lists for a span, excluding the original.
/// The outer boundaries move by at most `max` characters and stay within
/// `[lo, hi)`; the result always overlaps the original.
fn jitter_candidates(span: &EntitySpan, lo: usize, hi: usize, max: usize) -> Vec<Vec<Fragment>> {
    let first = span.fragments[0];
    let last = *span.fragments.last().expect("validated span");
    let ext = span.extent();
    let s_lo = ext.start.saturating_sub(max).max(lo);
    let s_hi = (ext.start + max).min(first.end - 1);
    let e_lo = ext.end.saturating_sub(max).max(last.start + 1);
    let e_hi = (ext.end + max).min(hi);
    let mut out = Vec::new();
    for s in s_lo..=s_hi {
        for e in e_lo..=e_hi {
            if (s, e) == (ext.start, ext.end) || s >= e {
                continue;
            }
            let mut frags = span.fragments.clone();
            if frags.len() == 1 {
                frags[0] = Fragment::new(s, e);
            } else {
                frags[0].start = s;
                let n = frags.len();
                frags[n - 1].end = e;
            }
            out.push(frags);
        }
    }
    out
}

/// Simulates a model's output from gold: each span independently deleted,
/// jittered, relabeled; spurious spans added on free tokens.
///
/// Jittered spans never reach a neighbouring gold span, and spurious spans
/// only cover text outside every gold span and every kept prediction, so each
/// prediction overlaps at most its own gold span.
pub fn perturb(
    doc: &Document,
    gold: &AnnotationSet,
    source: &str,
    noise: &NoiseSpec,
) -> Result<(AnnotationSet, PerturbLedger), SynthError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ stable_hash(doc.doc_id()));

    let mut by_start: Vec<usize> = (0..gold.spans.len()).collect();
    by_start.sort_by_key(|&i| (gold.spans[i].extent().start, gold.spans[i].extent().end));
    let mut bounds = vec![(0usize, doc.char_len()); gold.spans.len()];
    for (k, &i) in by_start.iter().enumerate() {
        let ext = gold.spans[i].extent();
        let lo = if k > 0 {
            gold.spans[by_start[k - 1]].extent().end
        } else {
            0
        };
        let hi = by_start
            .get(k + 1)
            .map(|&j| gold.spans[j].extent().start)
            .unwrap_or(doc.char_len());
        bounds[i] = (lo.min(ext.start), hi.max(ext.end));
    }

    let mut pred = AnnotationSet::new(doc.doc_id(), Source::Model(source.to_string()));
    let mut ledger = PerturbLedger {
        doc_id: doc.doc_id().to_string(),
        ..Default::default()
    };
    for (i, g) in gold.spans.iter().enumerate() {
        let mut action = SpanAction {
            gold_id: g.id.clone(),
            gold_label: g.label.clone(),
            deleted: false,
            jittered: None,
            relabeled: None,
        };
        if rng.gen_bool(noise.deletion_for(&g.label)) {
            action.deleted = true;
            ledger.actions.push(action);
            continue;
        }
        let mut span = g.clone();
        if rng.gen_bool(noise.jitter_prob) {
            let (lo, hi) = bounds[i];
            let candidates = jitter_candidates(g, lo, hi, noise.max_jitter);
            if let Some(frags) = candidates.choose(&mut rng) {
                span.fragments = frags.clone();
                action.jittered = Some(frags.clone());
            }
        }
        if let Some(row) = noise.confusion.get(&g.label) {
            if let Some(to) = sample_label(row, &mut rng) {
                if to != g.label {
                    span.label = to.clone();
                    action.relabeled = Some(to);
                }
            }
        }
        span.surface = doc.surface_of(&span.fragments).unwrap_or_default();
        pred.spans.push(span);
        ledger.actions.push(action);
    }

    let whole = noise.spurious_rate.floor();
    let extra = rng.gen_bool(noise.spurious_rate - whole);
    ledger.requested_spurious = whole as usize + usize::from(extra);
    if ledger.requested_spurious > 0 {
        let occupied: Vec<Fragment> = gold
            .spans
            .iter()
            .chain(&pred.spans)
            .map(EntitySpan::extent)
            .collect();
        let mut free: Vec<Fragment> = tokenize(doc)
            .iter()
            .map(|t| t.fragment())
            .filter(|f| occupied.iter().all(|o| o.intersection(f) == 0))
            .collect();
        free.shuffle(&mut rng);
        let mut taken: BTreeSet<String> = gold.spans.iter().map(|s| s.id.clone()).collect();
        let mut next = 1usize;
        for frag in free.into_iter().take(ledger.requested_spurious) {
            let label = Label::ENTITY_LABELS
                .choose(&mut rng)
                .expect("non-empty")
                .clone();
            let id = loop {
                let candidate = format!("T{}", gold.spans.len() + next);
                next += 1;
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
            };
            let mut span = EntitySpan::single(id.clone(), label.clone(), frag.start, frag.end);
            span.surface = doc
                .slice(frag.start, frag.end)
                .unwrap_or_default()
                .to_string();
            pred.spans.push(span);
            ledger.spurious.push(SpuriousSpan {
                pred_id: id,
                label,
                fragment: frag,
            });
        }
    }
    Ok((pred, ledger))
}

/// Perturbs the gold of every document and stores the result as prediction
/// source `source`.
pub fn perturb_corpus(
    corpus: &mut Corpus,
    source: &str,
    noise: &NoiseSpec,
) -> Result<Vec<PerturbLedger>, SynthError> {
    let ids: Vec<String> = corpus.doc_ids().map(str::to_string).collect();
    let mut ledgers = Vec::with_capacity(ids.len());
    for id in ids {
        let doc = corpus.document(&id).expect("listed id").clone();
        let gold = corpus
            .gold(&id)
            .cloned()
            .unwrap_or_else(|| AnnotationSet::new(&id, Source::Gold));
        let (pred, ledger) = perturb(&doc, &gold, source, noise)?;
        corpus.set_prediction(pred).expect("document exists");
        ledgers.push(ledger);
    }
    Ok(ledgers)
}
