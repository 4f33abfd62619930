//! Synthetic fixtures shared by the benchmarks.

use embir_core::{build_index, AnalyzerConfig, EmbeddingStore, Index, RawDocument, SourceFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn word(i: usize) -> String {
    format!("w{i}")
}

/// `n` documents of 50-300 tokens drawn from a skewed `vocab`-word distribution.
pub fn corpus(n: usize, vocab: usize, seed: u64) -> Index {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<_> = (0..n)
        .map(|i| {
            let len = rng.gen_range(50..300);
            let body: Vec<String> = (0..len).map(|_| word(skewed(&mut rng, vocab))).collect();
            Ok(RawDocument {
                doc_id: format!("d{i:06}"),
                title: String::new(),
                body: body.join(" "),
                source_format: SourceFormat::Jsonl,
            })
        })
        .collect();
    build_index(docs, &AnalyzerConfig::default()).expect("synthetic corpus indexes")
}

pub fn store(words: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingStore::from_rows((0..words).map(|i| {
        (
            word(i),
            (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        )
    }))
    .expect("synthetic store builds")
}

pub fn queries(count: usize, len: usize, vocab: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..len).map(|_| word(skewed(&mut rng, vocab))).collect())
        .collect()
}

fn skewed(rng: &mut ChaCha8Rng, vocab: usize) -> usize {
    let x: f64 = rng.gen_range(0.0..1.0);
    ((x * x) * vocab as f64) as usize
}
