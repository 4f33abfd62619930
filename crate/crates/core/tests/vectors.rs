mod common;

use common::*;
use embir_core::awe::{score_awe, text_vector, AweConfig, Weighting, ABSENT_SCORE};
use embir_core::expansion::{expand_query, substitution_clauses, ExpansionConfig};
use embir_core::{EmbeddingFormat, EmbeddingStore, Similarity};
use proptest::prelude::*;

fn rows(max_words: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(
        prop::collection::vec(-8i8..=8, dim)
            .prop_map(|v| v.into_iter().map(|x| x as f32 / 4.0).collect()),
        2..=max_words,
    )
}

fn smooth_rows(words: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), words)
}

fn exhaustive(store: &EmbeddingStore, q: &str, k: usize, min_cos: f64) -> Vec<(String, f64)> {
    let mut all: Vec<(usize, f64)> = store
        .words()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.as_str() != q)
        .filter_map(|(i, w)| match store.cosine(q, w) {
            Similarity::Value(c) if c > min_cos => Some((i, c)),
            _ => None,
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter()
        .take(k)
        .map(|(i, c)| (store.words()[i].clone(), c))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_equals_exhaustive_scan(rows in rows(80, 5), q in 0usize..80, k in 1usize..12, min_cos in -1.0f64..0.9) {
        let store = store_of(&rows);
        let q = word(q % rows.len());
        let got: Vec<(String, f64)> = store
            .nearest_neighbors(&q, k, min_cos)
            .unwrap()
            .into_iter()
            .map(|n| (n.word, n.cosine))
            .collect();
        prop_assert_eq!(got, exhaustive(&store, &q, k, min_cos));
    }

    #[test]
    fn full_neighbor_list_is_consistent(rows in rows(100, 4), q in 0usize..100) {
        let store = store_of(&rows);
        let q = word(q % rows.len());
        let all = store.nearest_neighbors(&q, rows.len(), -1.0).unwrap();
        for pair in all.windows(2) {
            prop_assert!(pair[0].cosine >= pair[1].cosine);
            prop_assert_eq!(store.cosine(&q, &pair[0].word).value(), Some(pair[0].cosine));
        }
    }

    #[test]
    fn cosine_symmetric_and_bounded(rows in rows(30, 6), a in 0usize..30, b in 0usize..30) {
        let store = store_of(&rows);
        let (a, b) = (word(a % rows.len()), word(b % rows.len()));
        prop_assert_eq!(store.cosine(&a, &b), store.cosine(&b, &a));
        if let Some(c) = store.cosine(&a, &b).value() {
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn load_is_deterministic(rows in rows(20, 3)) {
        let text: String = rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{} {}\n", word(i), r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, &text).unwrap();
        let (a, _) = EmbeddingStore::load(&path, EmbeddingFormat::GloveText).unwrap();
        let (b, _) = EmbeddingStore::load(&path, EmbeddingFormat::GloveText).unwrap();
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
        prop_assert_eq!(a.fingerprint(), store_of(&rows).fingerprint());
    }

    #[test]
    fn raising_threshold_never_adds_clauses(rows in rows(40, 3), q in prop::collection::vec(0usize..45, 1..5), t1 in -1.0f64..1.0, dt in 0.0f64..1.0) {
        let store = store_of(&rows);
        let q: Vec<String> = q.into_iter().map(word).collect();
        let t2 = (t1 + dt).min(1.0);
        let count = |t| {
            let c = ExpansionConfig { threshold: t, neighbors_per_term: 2, max_alternatives: 64 };
            expand_query(&q, &store, &c).unwrap().clauses().len()
        };
        prop_assert!(count(t2) <= count(t1));
        let c = ExpansionConfig { threshold: t1, neighbors_per_term: 2, max_alternatives: 64 };
        prop_assert_eq!(expand_query(&q, &store, &c).unwrap().clauses()[0].clone(), q);
    }

    #[test]
    fn clause_count_formula(sizes in prop::collection::vec(0usize..3, 1..=4), max_alt in 1usize..20) {
        let q: Vec<String> = (0..sizes.len()).map(|i| format!("q{i}")).collect();
        let cands: Vec<Vec<String>> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (0..n).map(|j| format!("e{i}_{j}")).collect())
            .collect();
        let product: usize = sizes.iter().map(|n| n + 1).product();
        prop_assert_eq!(substitution_clauses(&q, &cands, max_alt).len(), product.min(1 + max_alt));
    }

    #[test]
    fn awe_scale_invariance(docs in corpus(30, 12, 8), rows in smooth_rows(14, 4), q in prop::collection::vec(0usize..14, 1..4), c in 0.01f32..50.0) {
        let ix = index_of(&docs);
        let store = store_of(&rows);
        let scaled: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let scaled = store_of(&scaled);
        let q: Vec<String> = q.into_iter().map(word).collect();
        for weighting in [Weighting::Mean, Weighting::TfidfWeighted, Weighting::TfidfDivided] {
            let config = AweConfig { weighting, rerank_depth: 0, ..AweConfig::default() };
            let ids = |s: &EmbeddingStore| {
                score_awe(&q, &ix, s, &config).unwrap().ranked.into_iter().map(|d| d.doc_id).collect::<Vec<_>>()
            };
            prop_assert_eq!(ids(&store), ids(&scaled), "{}", weighting);
        }
    }

    #[test]
    fn awe_scores_are_cosines_or_sentinel(docs in corpus(30, 12, 8), rows in rows(10, 3), q in prop::collection::vec(0usize..14, 1..4)) {
        let ix = index_of(&docs);
        let store = store_of(&rows);
        let q: Vec<String> = q.into_iter().map(word).collect();
        let config = AweConfig { rerank_depth: 0, ..AweConfig::default() };
        let r = score_awe(&q, &ix, &store, &config).unwrap();
        if !r.fallback {
            prop_assert_eq!(r.ranked.len(), docs.len());
            for d in &r.ranked {
                prop_assert!(d.score == ABSENT_SCORE || (-1.0 - 1e-9..=1.0 + 1e-9).contains(&d.score));
            }
        }
        prop_assert_eq!(score_awe(&q, &ix, &store, &config).unwrap(), r);
    }

    #[test]
    fn awe_full_depth_equals_exhaustive(docs in corpus(50, 15, 10), rows in rows(15, 3), q in prop::collection::vec(0usize..15, 1..4)) {
        let ix = index_of(&docs);
        let store = store_of(&rows);
        let q: Vec<String> = q.into_iter().map(word).collect();
        let all = AweConfig { rerank_depth: 0, ..AweConfig::default() };
        let full = AweConfig { rerank_depth: docs.len(), ..AweConfig::default() };
        prop_assert_eq!(score_awe(&q, &ix, &store, &all).unwrap(), score_awe(&q, &ix, &store, &full).unwrap());
    }
}

/// Every word occurs in exactly `width` documents, once each, so tf * idf is
/// the same for every term.
fn cyclic_corpus(n: usize, width: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|d| (0..width).map(|j| (d + j) % n).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_weights_collapse_to_mean(rows in rows(12, 4).prop_filter("12 words", |r| r.len() == 12), width in 1usize..5, q in prop::collection::btree_set(0usize..12, 1..4)) {
        let docs = cyclic_corpus(12, width);
        let ix = index_of(&docs);
        let store = store_of(&rows);
        let q: Vec<String> = q.into_iter().map(word).collect();
        let ids = |weighting| {
            let config = AweConfig { weighting, rerank_depth: 0, ..AweConfig::default() };
            score_awe(&q, &ix, &store, &config).unwrap().ranked.into_iter().map(|d| d.doc_id).collect::<Vec<_>>()
        };
        prop_assert_eq!(ids(Weighting::TfidfWeighted), ids(Weighting::Mean));
    }

    #[test]
    fn text_vector_mean_oracle(rows in rows(10, 3), text in prop::collection::vec(0usize..13, 1..10)) {
        let ix = index_of(std::slice::from_ref(&text));
        let store = store_of(&rows);
        let terms: Vec<String> = text.iter().map(|&w| word(w)).collect();
        let known: Vec<&Vec<f32>> = text.iter().filter(|&&w| w < rows.len()).map(|&w| &rows[w]).collect();
        let got = text_vector(&terms, &store, &ix, Weighting::Mean);
        if known.is_empty() {
            prop_assert!(got.is_none());
        } else {
            let got = got.unwrap();
            for j in 0..3 {
                let want = known.iter().map(|r| r[j] as f64).sum::<f64>() / known.len() as f64;
                prop_assert!((got[j] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parallel_knn_matches_exhaustive_with_ties() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    // coarse integer vectors make many exact cosine ties across scan chunks
    let rows: Vec<Vec<f32>> = (0..25_000)
        .map(|_| (0..6).map(|_| rng.gen_range(-2..=2) as f32).collect())
        .collect();
    let store = store_of(&rows);
    for _ in 0..20 {
        let q = word(rng.gen_range(0..rows.len()));
        for (k, min_cos) in [(1, -1.0), (25, 0.5), (400, -1.0)] {
            let got: Vec<(String, f64)> = store
                .nearest_neighbors(&q, k, min_cos)
                .unwrap()
                .into_iter()
                .map(|n| (n.word, n.cosine))
                .collect();
            assert_eq!(got, exhaustive(&store, &q, k, min_cos));
        }
    }
}
