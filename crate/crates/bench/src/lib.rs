//! Seeded inputs for the benchmarks.

use aidtopics::synthetic::{generate, SyntheticConfig};
use aidtopics::{Corpus, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points around `clusters` centers in `d` dimensions, with labels.
pub fn clustered_points(
    n: usize,
    d: usize,
    clusters: usize,
    seed: u64,
) -> (EmbeddingMatrix, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.random_range(-20.0..20.0)).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % clusters;
        rows.push(
            centers[c]
                .iter()
                .map(|m| m + rng.random_range(-2.0..2.0f32))
                .collect::<Vec<f32>>(),
        );
        labels.push(c as i32);
    }
    (
        EmbeddingMatrix::from_rows(&rows).expect("finite rows"),
        labels,
    )
}

/// Deduplicated synthetic corpus and its planted topic per document.
pub fn corpus(n_docs: usize) -> (Corpus, Vec<i32>) {
    let synth = generate(&SyntheticConfig {
        n_docs,
        n_duplicates: 0,
        ..SyntheticConfig::default()
    });
    let corpus = aidtopics::corpus::deduplicate(&synth.records);
    let labels = corpus
        .documents
        .iter()
        .map(|d| synth.topics[d.member_record_ids[0] as usize] as i32)
        .collect();
    (corpus, labels)
}
