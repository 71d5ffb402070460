//! Corpus preparation: seeded splitting, rule tokenization, fixed-size
//! chunking with offset remapping, span/BIO conversion, label statistics and
//! oversampling of rare labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::model::{Corpus, Document, EntitySpan, Fragment, Label};
use crate::standoff::{repair_iob2, Tag, TaggedDocument, TokenTagRecord};

const RATIO_TOLERANCE: f64 = 1e-9;

/// Train/dev/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self, CorpusError> {
        let sum: f64 = ratios.iter().sum();
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > RATIO_TOLERANCE
        {
            return Err(CorpusError::BadRatios(ratios));
        }
        Ok(SplitSpec { ratios, seed })
    }

    /// Split sizes for `n` documents. Train is floored; dev and test are
    /// floored and the surplus goes to dev first, then test.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let floor = |r: f64| (((n as f64) * r + RATIO_TOLERANCE).floor() as usize).min(n);
        let train = floor(self.ratios[0]);
        let mut dev = floor(self.ratios[1]).min(n - train);
        let mut test = floor(self.ratios[2]).min(n - train - dev);
        let mut surplus = n - train - dev - test;
        let receivers: Vec<usize> = [1usize, 2]
            .into_iter()
            .filter(|&i| self.ratios[i] > 0.0)
            .collect();
        let mut k = 0;
        while surplus > 0 {
            match receivers.get(k % receivers.len().max(1)) {
                Some(1) => dev += 1,
                Some(_) => test += 1,
                // only train has weight; rounding leftovers stay with it
                None => return [n - dev - test, dev, test],
            }
            surplus -= 1;
            k += 1;
        }
        [train, dev, test]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl CorpusSplit {
    pub fn parts(&self) -> [(&'static str, &Corpus); 3] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

/// Shuffles documents (ordered by id) under the seed and cuts them into
/// train/dev/test. Annotations follow their documents.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<CorpusSplit, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ids: Vec<&str> = corpus.doc_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let [train, dev, _] = spec.sizes(ids.len());
    let (train_ids, rest) = ids.split_at(train);
    let (dev_ids, test_ids) = rest.split_at(dev);
    Ok(CorpusSplit {
        train: corpus.subset(train_ids.iter().copied()),
        dev: corpus.subset(dev_ids.iter().copied()),
        test: corpus.subset(test_ids.iter().copied()),
    })
}

/// A token with character offsets into its document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn fragment(&self) -> Fragment {
        Fragment::new(self.start, self.end)
    }
}

/// Maximal runs of alphanumerics, or single punctuation characters.
pub fn tokenize(doc: &Document) -> Vec<Token> {
    tokenize_str(doc.text())
}

pub fn tokenize_str(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (pos, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            match &mut current {
                Some((_, s)) => s.push(ch),
                None => current = Some((pos, ch.to_string())),
            }
            continue;
        }
        if let Some((start, s)) = current.take() {
            tokens.push(Token {
                end: pos,
                text: s,
                start,
            });
        }
        if !ch.is_whitespace() {
            tokens.push(Token {
                text: ch.to_string(),
                start: pos,
                end: pos + 1,
            });
        }
    }
    if let Some((start, s)) = current {
        let end = start + s.chars().count();
        tokens.push(Token {
            text: s,
            start,
            end,
        });
    }
    tokens
}

/// A window of consecutive tokens from a parent document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    /// Token range `[token_start, token_end)` in the parent's token list.
    pub token_start: usize,
    pub token_end: usize,
    /// Character offset of the chunk start in the parent text.
    pub char_offset_base: usize,
    /// Character offset one past the chunk end in the parent text.
    pub char_end: usize,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end == self.token_start
    }

    pub fn chunk_id(&self) -> String {
        format!("{}.chunk{}", self.doc_id, self.index)
    }

    /// The chunk's text as a standalone document.
    pub fn to_document(&self, parent: &Document) -> Document {
        let text = parent
            .slice(self.char_offset_base, self.char_end)
            .unwrap_or_default();
        Document::new(self.chunk_id(), text)
    }

    pub fn to_parent_offset(&self, local: usize) -> usize {
        local + self.char_offset_base
    }

    /// Spans restricted to this chunk, in chunk-local offsets. Fragments are
    /// clipped at the chunk edges; spans left with no characters are dropped.
    pub fn localize_spans(&self, spans: &[EntitySpan]) -> Vec<EntitySpan> {
        let window = Fragment::new(self.char_offset_base, self.char_end);
        spans
            .iter()
            .filter_map(|span| {
                let fragments: Vec<Fragment> = span
                    .fragments
                    .iter()
                    .filter(|f| f.intersection(&window) > 0)
                    .map(|f| {
                        Fragment::new(
                            f.start.max(window.start) - self.char_offset_base,
                            f.end.min(window.end) - self.char_offset_base,
                        )
                    })
                    .collect();
                (!fragments.is_empty()).then(|| EntitySpan {
                    id: span.id.clone(),
                    label: span.label.clone(),
                    fragments,
                    surface: String::new(),
                })
            })
            .collect()
    }

    /// Inverse of [`Chunk::localize_spans`] for spans inside the chunk.
    pub fn to_parent_spans(&self, spans: &[EntitySpan]) -> Vec<EntitySpan> {
        spans
            .iter()
            .map(|span| EntitySpan {
                id: span.id.clone(),
                label: span.label.clone(),
                fragments: span
                    .fragments
                    .iter()
                    .map(|f| {
                        Fragment::new(self.to_parent_offset(f.start), self.to_parent_offset(f.end))
                    })
                    .collect(),
                surface: span.surface.clone(),
            })
            .collect()
    }
}

/// Cuts a document into windows of at most `max_tokens` tokens, consecutive
/// windows sharing `overlap` tokens. A document without tokens has no chunks.
pub fn chunk_document(
    doc: &Document,
    max_tokens: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    chunk_tokens(doc.doc_id(), &tokenize(doc), max_tokens, overlap)
}

pub fn chunk_tokens(
    doc_id: &str,
    tokens: &[Token],
    max_tokens: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    if max_tokens == 0 || overlap >= max_tokens {
        return Err(CorpusError::BadChunkParams {
            max_tokens,
            overlap,
        });
    }
    let stride = max_tokens - overlap;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + max_tokens).min(tokens.len());
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            index: chunks.len(),
            token_start: start,
            token_end: end,
            char_offset_base: tokens[start].start,
            char_end: tokens[end - 1].end,
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

/// Tags produced by [`spans_to_bio`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioTags {
    pub tags: Vec<Tag>,
    /// Spans dropped because a higher-ranked span already claimed a token.
    pub dropped: Vec<String>,
}

/// Tags tokens from spans. A token is tagged with a span's label iff it
/// overlaps one of the span's fragments.
///
/// Where spans compete for a token, the span covering more characters wins,
/// then the earlier start, then the label name; losers are dropped whole.
pub fn spans_to_bio(tokens: &[Token], spans: &[EntitySpan]) -> BioTags {
    let mut order: Vec<&EntitySpan> = spans.iter().collect();
    order.sort_by(|a, b| {
        b.covered_len()
            .cmp(&a.covered_len())
            .then(a.extent().start.cmp(&b.extent().start))
            .then_with(|| a.label.as_str().cmp(b.label.as_str()))
            .then_with(|| a.id.cmp(&b.id))
    });

    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    let mut dropped = Vec::new();
    for (rank, span) in order.iter().enumerate() {
        let hit: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                span.fragments
                    .iter()
                    .any(|f| f.intersection(&t.fragment()) > 0)
            })
            .map(|(i, _)| i)
            .collect();
        if hit.iter().any(|&i| owner[i].is_some()) {
            log::warn!(
                "span {} overlaps a longer span; dropped from BIO tags",
                span.id
            );
            dropped.push(span.id.clone());
            continue;
        }
        for i in hit {
            owner[i] = Some(rank);
        }
    }

    let mut tags = Vec::with_capacity(tokens.len());
    let mut prev: Option<usize> = None;
    for o in &owner {
        tags.push(match o {
            None => Tag::O,
            Some(r) if prev == Some(*r) => Tag::Inside(order[*r].label.clone()),
            Some(r) => Tag::Begin(order[*r].label.clone()),
        });
        prev = *o;
    }
    BioTags { tags, dropped }
}

/// Turns maximal B/I runs into single-fragment spans with ids `T1..`.
/// Orphan `I-` tags are treated as `B-`.
pub fn bio_to_spans(doc: &Document, tokens: &[Token], tags: &[Tag]) -> Vec<EntitySpan> {
    let mut tags = tags.to_vec();
    repair_iob2(&mut tags);
    let mut spans = Vec::new();
    let mut current: Option<(Label, usize, usize)> = None;
    let flush = |cur: Option<(Label, usize, usize)>, spans: &mut Vec<EntitySpan>| {
        if let Some((label, start, end)) = cur {
            let mut span = EntitySpan::single(format!("T{}", spans.len() + 1), label, start, end);
            span.surface = doc.slice(start, end).unwrap_or_default().to_string();
            spans.push(span);
        }
    };
    for (token, tag) in tokens.iter().zip(&tags) {
        match tag {
            Tag::O => flush(current.take(), &mut spans),
            Tag::Begin(l) => {
                flush(current.take(), &mut spans);
                current = Some((l.clone(), token.start, token.end));
            }
            Tag::Inside(_) => {
                if let Some(cur) = current.as_mut() {
                    cur.2 = token.end;
                }
            }
        }
    }
    flush(current, &mut spans);
    spans
}

/// Token-tag records for a document's gold (or any) spans.
pub fn tag_document(doc: &Document, spans: &[EntitySpan]) -> (TaggedDocument, Vec<String>) {
    let tokens = tokenize(doc);
    let bio = spans_to_bio(&tokens, spans);
    let records = tokens
        .into_iter()
        .zip(bio.tags)
        .map(|(t, tag)| TokenTagRecord {
            token: t.text,
            start: t.start,
            end: t.end,
            tag,
        })
        .collect();
    (
        TaggedDocument {
            doc_id: doc.doc_id().to_string(),
            records,
        },
        bio.dropped,
    )
}

/// Gold label counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub per_label: BTreeMap<Label, usize>,
    pub total: usize,
    /// Documents containing at least one span of the label.
    pub doc_frequency: BTreeMap<Label, usize>,
    pub documents: usize,
}

impl LabelStats {
    pub fn count(&self, label: &Label) -> usize {
        self.per_label.get(label).copied().unwrap_or(0)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\tcount\tdoc_frequency\n");
        for (label, count) in &self.per_label {
            let df = self.doc_frequency.get(label).copied().unwrap_or(0);
            out.push_str(&format!("{label}\t{count}\t{df}\n"));
        }
        out.push_str(&format!("total\t{}\t{}\n", self.total, self.documents));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }
}

/// Per-label gold span counts. The nine entity labels are always present.
pub fn label_stats(corpus: &Corpus) -> LabelStats {
    let mut per_label: BTreeMap<Label, usize> = Label::ENTITY_LABELS
        .iter()
        .map(|l| (l.clone(), 0))
        .collect();
    let mut doc_frequency = per_label.clone();
    for doc in corpus.documents() {
        let mut present = std::collections::BTreeSet::new();
        for span in corpus.gold_spans(doc.doc_id()) {
            *per_label.entry(span.label.clone()).or_default() += 1;
            present.insert(span.label.clone());
        }
        for label in present {
            *doc_frequency.entry(label).or_default() += 1;
        }
    }
    let total = per_label.values().sum();
    LabelStats {
        per_label,
        total,
        doc_frequency,
        documents: corpus.len(),
    }
}

/// Duplicates documents holding `label` (sampled with replacement) until the
/// label's gold count reaches `factor` times the original.
///
/// Copies get ids `<doc_id>.dup<N>`.
pub fn oversample(
    corpus: &Corpus,
    label: &Label,
    factor: f64,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if !factor.is_finite() || factor < 1.0 {
        return Err(CorpusError::BadFactor(factor));
    }
    let candidates: Vec<(&str, usize)> = corpus
        .doc_ids()
        .map(|id| {
            let n = corpus
                .gold_spans(id)
                .iter()
                .filter(|s| &s.label == label)
                .count();
            (id, n)
        })
        .filter(|(_, n)| *n > 0)
        .collect();
    if candidates.is_empty() {
        return Err(CorpusError::LabelAbsent(label.clone()));
    }
    let original: usize = candidates.iter().map(|(_, n)| n).sum();
    let target = ((original as f64) * factor - RATIO_TOLERANCE).ceil() as usize;

    let mut out = corpus.clone();
    let mut copies: BTreeMap<&str, usize> = BTreeMap::new();
    let mut count = original;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while count < target {
        let (id, n) = candidates[rng.gen_range(0..candidates.len())];
        let k = copies.entry(id).or_default();
        // skip ids already taken by pre-existing documents
        let new_id = loop {
            *k += 1;
            let candidate = format!("{id}.dup{k}");
            if out.document(&candidate).is_none() {
                break candidate;
            }
        };
        out.duplicate_document(id, &new_id)?;
        count += n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnnotationSet, Source};

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::new([0.7, 0.15, 0.15], 1).unwrap();
        assert_eq!(spec.sizes(505), [353, 76, 76]);
        assert_eq!(spec.sizes(20), [14, 3, 3]);
        assert_eq!(spec.sizes(3), [2, 1, 0]);
        let all = SplitSpec::new([1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(all.sizes(10), [10, 0, 0]);
        let no_dev = SplitSpec::new([0.5, 0.0, 0.5], 1).unwrap();
        assert_eq!(no_dev.sizes(3), [1, 0, 2]);
    }

    #[test]
    fn split_sizes_always_sum() {
        let spec = SplitSpec::new([0.33, 0.33, 0.34], 1).unwrap();
        for n in 0..300 {
            assert_eq!(spec.sizes(n).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn bad_ratios() {
        assert!(SplitSpec::new([0.7, 0.2, 0.2], 0).is_err());
        assert!(SplitSpec::new([1.2, -0.2, 0.0], 0).is_err());
        assert!(SplitSpec::new([f64::NAN, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn split_empty_corpus() {
        let spec = SplitSpec::new([0.7, 0.15, 0.15], 1).unwrap();
        assert_eq!(
            split_corpus(&Corpus::new(), &spec).unwrap_err(),
            CorpusError::EmptyCorpus
        );
    }

    #[test]
    fn tokenizer_rules() {
        let d = Document::new("d", "Aspirin 81 mg PO daily.");
        assert_eq!(
            texts(&tokenize(&d)),
            ["Aspirin", "81", "mg", "PO", "daily", "."]
        );
        assert!(tokenize(&Document::new("d", "")).is_empty());
        let t = tokenize_str("x-ray");
        assert_eq!(texts(&t), ["x", "-", "ray"]);
        assert_eq!((t[2].start, t[2].end), (2, 5));
        let t = tokenize_str("é5 ü");
        assert_eq!(texts(&t), ["é5", "ü"]);
        assert_eq!((t[1].start, t[1].end), (3, 4));
    }

    #[test]
    fn chunk_params() {
        let tokens = tokenize_str(&"a ".repeat(10));
        assert!(chunk_tokens("d", &tokens, 4, 4).is_err());
        assert!(chunk_tokens("d", &tokens, 0, 0).is_err());
        assert!(chunk_tokens("d", &[], 4, 0).unwrap().is_empty());
        let chunks = chunk_tokens("d", &tokens, 4, 1).unwrap();
        let spans: Vec<(usize, usize)> = chunks
            .iter()
            .map(|c| (c.token_start, c.token_end))
            .collect();
        assert_eq!(spans, [(0, 4), (3, 7), (6, 10)]);
    }

    #[test]
    fn bio_example() {
        let tokens = tokenize_str("Aspirin 81 mg");
        let spans = [
            EntitySpan::single("T1", Label::Drug, 0, 7),
            EntitySpan::single("T2", Label::Strength, 8, 13),
        ];
        let bio = spans_to_bio(&tokens, &spans);
        assert_eq!(
            bio.tags,
            [
                Tag::Begin(Label::Drug),
                Tag::Begin(Label::Strength),
                Tag::Inside(Label::Strength)
            ]
        );
        assert!(bio.dropped.is_empty());
        assert_eq!(spans_to_bio(&tokens, &[]).tags, vec![Tag::O; 3]);
    }

    #[test]
    fn bio_longest_span_wins() {
        let tokens = tokenize_str("Aspirin 81 mg");
        let spans = [
            EntitySpan::single("T1", Label::Drug, 0, 7),
            EntitySpan::single("T2", Label::Reason, 0, 13),
        ];
        let bio = spans_to_bio(&tokens, &spans);
        assert_eq!(
            bio.tags,
            [
                Tag::Begin(Label::Reason),
                Tag::Inside(Label::Reason),
                Tag::Inside(Label::Reason)
            ]
        );
        assert_eq!(bio.dropped, ["T1"]);
    }

    #[test]
    fn bio_tie_by_start_then_label() {
        let tokens = tokenize_str("ab cd ef");
        // equal length, earlier start wins
        let spans = [
            EntitySpan::single("T1", Label::Route, 3, 8),
            EntitySpan::single("T2", Label::Form, 0, 5),
        ];
        let bio = spans_to_bio(&tokens, &spans);
        assert_eq!(bio.dropped, ["T1"]);
        // same extent: label name order
        let spans = [
            EntitySpan::single("T1", Label::Route, 0, 5),
            EntitySpan::single("T2", Label::Form, 0, 5),
        ];
        assert_eq!(
            spans_to_bio(&tokens, &spans).tags[0],
            Tag::Begin(Label::Form)
        );
    }

    #[test]
    fn bio_to_spans_examples() {
        let d = Document::new("d", "aspirin sulfate daily");
        let tokens = tokenize(&d);
        let tags = [Tag::Begin(Label::Drug), Tag::Inside(Label::Drug), Tag::O];
        let spans = bio_to_spans(&d, &tokens, &tags);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "aspirin sulfate");
        assert_eq!(spans[0].extent(), Fragment::new(0, 15));
        assert!(bio_to_spans(&d, &tokens, &[Tag::O, Tag::O, Tag::O]).is_empty());
        // adjacent B-B stays two spans
        let tags = [Tag::Begin(Label::Drug), Tag::Begin(Label::Drug), Tag::O];
        assert_eq!(bio_to_spans(&d, &tokens, &tags).len(), 2);
    }

    #[test]
    fn discontinuous_span_bio() {
        let tokens = tokenize_str("a b c");
        let span = EntitySpan::new(
            "T1",
            Label::Ade,
            vec![Fragment::new(0, 1), Fragment::new(4, 5)],
        );
        let tags = spans_to_bio(&tokens, &[span]).tags;
        // the second fragment restarts with B- so the sequence stays valid IOB2
        assert_eq!(
            tags,
            [Tag::Begin(Label::Ade), Tag::O, Tag::Begin(Label::Ade)]
        );
    }

    fn small_corpus() -> Corpus {
        let mut c = Corpus::new();
        let d1 = Document::new("a", "take aspirin for 5 days");
        let d2 = Document::new("b", "aspirin");
        c.add_document(d1.clone()).unwrap();
        c.add_document(d2.clone()).unwrap();
        let (g1, _) = AnnotationSet::validated(
            &d1,
            Source::Gold,
            vec![
                EntitySpan::single("T1", Label::Drug, 5, 12),
                EntitySpan::single("T2", Label::Duration, 13, 23),
            ],
            Default::default(),
        )
        .unwrap();
        let (g2, _) = AnnotationSet::validated(
            &d2,
            Source::Gold,
            vec![EntitySpan::single("T1", Label::Drug, 0, 7)],
            Default::default(),
        )
        .unwrap();
        c.set_gold(g1).unwrap();
        c.set_gold(g2).unwrap();
        c
    }

    #[test]
    fn stats() {
        let s = label_stats(&small_corpus());
        assert_eq!(s.count(&Label::Drug), 2);
        assert_eq!(s.count(&Label::Duration), 1);
        assert_eq!(s.total, 3);
        assert_eq!(s.doc_frequency[&Label::Drug], 2);
        let empty = label_stats(&Corpus::new());
        assert_eq!(empty.total, 0);
        assert_eq!(empty.per_label.len(), 9);
        assert!(empty.per_label.values().all(|&n| n == 0));
        assert!(s
            .to_tsv()
            .starts_with("label\tcount\tdoc_frequency\nDrug\t2\t2\n"));
    }

    #[test]
    fn oversample_rules() {
        let c = small_corpus();
        assert_eq!(oversample(&c, &Label::Duration, 1.0, 7).unwrap(), c);
        let up = oversample(&c, &Label::Duration, 3.0, 7).unwrap();
        assert_eq!(label_stats(&up).count(&Label::Duration), 3);
        assert!(up.document("a.dup1").is_some());
        assert!(matches!(
            oversample(&c, &Label::Ade, 2.0, 7),
            Err(CorpusError::LabelAbsent(Label::Ade))
        ));
        assert!(matches!(
            oversample(&c, &Label::Drug, 0.5, 7),
            Err(CorpusError::BadFactor(_))
        ));
    }
}
