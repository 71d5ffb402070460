use std::collections::BTreeMap;

use proptest::prelude::*;

use medmine_core::corpus::{bio_to_spans, spans_to_bio, tag_document, tokenize};
use medmine_core::matcher::score_document;
use medmine_core::metrics::report_from_rows;
use medmine_core::standoff::{parse_standoff, parse_token_tags, write_standoff, write_token_tags};
use medmine_core::{
    AnnotationSet, Document, EntitySpan, Fragment, Label, MatchMode, Prf, Source, SurfacePolicy,
};

const WORDS: [&str; 10] = [
    "aspirin", "75", "mg", "daily", "oral", "é", "tablet", ",", "for", "pain",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(&WORDS[..]), prop::bool::ANY), 1..40).prop_map(
        |words| {
            words
                .into_iter()
                .map(|(w, nl)| format!("{w}{}", if nl { "\n" } else { " " }))
                .collect()
        },
    )
}

fn label() -> impl Strategy<Value = Label> {
    prop::sample::select(&Label::ENTITY_LABELS[..])
}

/// Non-overlapping single-token spans over a document's tokens.
fn doc_and_spans() -> impl Strategy<Value = (Document, Vec<EntitySpan>)> {
    text()
        .prop_flat_map(|t| {
            let doc = Document::new("d", t);
            let n = tokenize(&doc).len();
            (
                Just(doc),
                prop::collection::vec((prop::bool::weighted(0.4), 1..4usize, label()), n),
            )
        })
        .prop_map(|(doc, picks)| {
            let tokens = tokenize(&doc);
            let mut spans = Vec::new();
            let mut i = 0;
            while i < tokens.len() {
                let (take, width, ref lab) = picks[i];
                if take {
                    let last = (i + width).min(tokens.len()) - 1;
                    let frag = Fragment::new(tokens[i].start, tokens[last].end);
                    let mut span = EntitySpan::single(
                        format!("T{}", spans.len() + 1),
                        lab.clone(),
                        frag.start,
                        frag.end,
                    );
                    span.surface = doc.slice(frag.start, frag.end).unwrap().to_string();
                    spans.push(span);
                    i = last + 2;
                } else {
                    i += 1;
                }
            }
            (doc, spans)
        })
}

fn loose_spans() -> impl Strategy<Value = Vec<EntitySpan>> {
    prop::collection::vec(
        (
            0..30usize,
            1..8usize,
            label(),
            prop::option::of((1..4usize, 1..4usize)),
        ),
        0..7,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (s, w, l, second))| {
                let mut frags = vec![Fragment::new(s, s + w)];
                if let Some((gap, w2)) = second {
                    frags.push(Fragment::new(s + w + gap, s + w + gap + w2));
                }
                EntitySpan::new(format!("T{i}"), l, frags)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn standoff_round_trip((doc, spans) in doc_and_spans()) {
        let set = AnnotationSet { doc_id: "d".into(), source: Source::Gold, spans };
        let text = write_standoff(&set);
        let parsed = parse_standoff(&doc, &text, Source::Gold, SurfacePolicy::Strict).unwrap();
        prop_assert_eq!(&parsed.set, &set);
        prop_assert_eq!(write_standoff(&parsed.set), text);
    }

    #[test]
    fn token_tag_round_trip((doc, spans) in doc_and_spans()) {
        let (tagged, dropped) = tag_document(&doc, &spans);
        prop_assert!(dropped.is_empty());
        let text = write_token_tags(std::slice::from_ref(&tagged));
        let parsed = parse_token_tags(&text).unwrap();
        prop_assert_eq!(parsed.repairs, 0);
        prop_assert_eq!(&parsed.documents, &vec![tagged]);
    }

    #[test]
    fn bio_round_trip((doc, spans) in doc_and_spans()) {
        let tokens = tokenize(&doc);
        let bio = spans_to_bio(&tokens, &spans);
        let back = bio_to_spans(&doc, &tokens, &bio.tags);
        let key = |s: &[EntitySpan]| s.iter().map(|x| (x.label.clone(), x.fragments.clone())).collect::<Vec<_>>();
        prop_assert_eq!(key(&back), key(&spans));
    }

    #[test]
    fn parsers_never_panic(input in ".{0,200}") {
        let doc = Document::new("d", "Aspirin 75 mg daily.");
        let _ = parse_standoff(&doc, &input, Source::Gold, SurfacePolicy::Strict);
        let _ = parse_token_tags(&input);
    }

    #[test]
    fn parsers_never_panic_on_near_valid(lines in prop::collection::vec(
        ("T[0-9]{1,2}", "(Drug|ADE|O|Route|B-X)", "[0-9]{1,3}", "-?[0-9]{1,3}", "[a-z ;\t]{0,6}"), 0..6)) {
        let doc = Document::new("d", "Aspirin 75 mg daily.");
        let ann: String = lines.iter().map(|(id, l, s, e, rest)| format!("{id}\t{l} {s} {e}{rest}\tx\n")).collect();
        let _ = parse_standoff(&doc, &ann, Source::Gold, SurfacePolicy::Lenient);
        let tags: String = lines.iter().map(|(id, l, s, e, _)| format!("{id}\t{s}\t{e}\t{l}\n")).collect();
        let _ = parse_token_tags(&format!("# doc_id = d\n{tags}"));
    }

    #[test]
    fn conservation_and_monotonicity(gold in loose_spans(), pred in loose_spans()) {
        let counts = score_document(&gold, &pred);
        for c in &counts {
            let t = c.total();
            prop_assert_eq!(t.cor + t.inc + t.par + t.mis, gold.len());
            prop_assert_eq!(t.cor + t.inc + t.par + t.spu, pred.len());
        }
        let cor = counts.clone().map(|c| c.total().cor);
        prop_assert!(cor[0] <= cor[1]);
        prop_assert!(cor[0] <= cor[3]);
        prop_assert!(cor[1] <= cor[2]);
    }

    #[test]
    fn aggregation_permutation_invariant(
        rows in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 1..5000usize), 9),
        order in Just((0..9usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let table: BTreeMap<Label, Prf> = Label::ENTITY_LABELS
            .iter()
            .zip(&rows)
            .map(|(l, &(p, r, s))| (l.clone(), Prf::new(p, r, s)))
            .collect();
        let shuffled: BTreeMap<Label, Prf> = order
            .iter()
            .map(|&i| (Label::ENTITY_LABELS[i].clone(), Prf::new(rows[i].0, rows[i].1, rows[i].2)))
            .collect();
        let a = report_from_rows(MatchMode::Strict, &table, &[]).unwrap();
        let b = report_from_rows(MatchMode::Strict, &shuffled, &[]).unwrap();
        prop_assert_eq!(a, b);
    }
}
