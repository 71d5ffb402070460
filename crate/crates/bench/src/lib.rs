//! Shared fixtures for the criterion benches.

use medmine_core::synthetic::{generate, perturb, GenSpec, NoiseSpec};
use medmine_core::{AnnotationSet, Corpus};

/// Default-distribution synthetic corpus with one perturbed prediction source
/// named `model`.
pub fn scored_corpus(n_docs: usize, seed: u64) -> Corpus {
    let spec = GenSpec::scaled_default(seed, n_docs, 40 * n_docs);
    let mut corpus = generate(&spec)
        .expect("default templates cover all labels")
        .corpus;
    let noise = NoiseSpec {
        seed,
        jitter_prob: 0.2,
        spurious_rate: 1.0,
        ..NoiseSpec::with_deletion(0.1)
    };
    let ids: Vec<String> = corpus.doc_ids().map(str::to_string).collect();
    for id in ids {
        let doc = corpus.document(&id).expect("listed").clone();
        let gold = corpus
            .gold(&id)
            .cloned()
            .unwrap_or_else(|| AnnotationSet::new(&id, medmine_core::Source::Gold));
        let (pred, _) = perturb(&doc, &gold, "model", &noise).expect("valid noise");
        corpus.set_prediction(pred).expect("document exists");
    }
    corpus
}
