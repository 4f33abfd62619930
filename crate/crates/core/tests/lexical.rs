mod common;

use common::*;
use embir_core::{score_bm25, score_ql, Bm25Params, Index, QlParams};
use proptest::prelude::*;

fn query(vocab: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0..vocab + 3).prop_map(word), 1..6)
}

fn check_against(
    got: &[embir_core::ScoredDoc],
    want: &[(String, f64)],
) -> Result<(), TestCaseError> {
    prop_assert_eq!(got.len(), want.len());
    for (g, (id, s)) in got.iter().zip(want) {
        prop_assert_eq!(&g.doc_id, id);
        prop_assert!(rel_close(g.score, *s, 1e-9), "{} vs {}", g.score, s);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cf_sums_to_total_tokens(docs in corpus(60, 30, 25)) {
        let ix = index_of(&docs);
        let sum: u64 = ix.terms().iter().map(|t| ix.cf(t)).sum();
        prop_assert_eq!(sum, ix.stats().total_tokens);
    }

    #[test]
    fn shard_merge_equals_whole(docs in prop::collection::vec(prop::collection::vec(0..40usize, 0..=20), 50), split in 0usize..=50) {
        let whole = index_of(&docs);
        let left = index_of(&docs[..split]);
        let right_docs = raw_docs(&docs);
        let right = embir_core::build_index(
            right_docs[split..].iter().cloned().map(Ok),
            &embir_core::AnalyzerConfig::default(),
        ).unwrap();
        let merged = left.merge(&right).unwrap();
        prop_assert!(merged == whole);
        prop_assert_eq!(merged.content_fingerprint(), whole.content_fingerprint());
    }

    #[test]
    fn tfidf_weight_positive(docs in corpus(40, 20, 15)) {
        let ix = index_of(&docs);
        for t in ix.terms() {
            for p in ix.postings(t) {
                prop_assert!(ix.tfidf_weight(t, p.doc).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn bm25_matches_oracle(docs in corpus(100, 50, 30), q in query(50), k1 in 0.0f64..3.0, b in 0.0f64..=1.0) {
        let ix = index_of(&docs);
        let got = score_bm25(&q, &ix, Bm25Params { k1, b }, usize::MAX).unwrap();
        check_against(&got, &LexicalOracle::new(&docs).bm25(&q, k1, b))?;
    }

    #[test]
    fn ql_matches_oracle(docs in corpus(100, 50, 30), q in query(50), mu in 1.0f64..5000.0) {
        let ix = index_of(&docs);
        let got = score_ql(&q, &ix, QlParams { mu }, usize::MAX).unwrap();
        check_against(&got, &LexicalOracle::new(&docs).ql(&q, mu))?;
    }

    #[test]
    fn results_match_a_term_and_have_sign(docs in corpus(50, 20, 15), q in query(20), seed in any::<u64>()) {
        let ix = index_of(&docs);
        let bm = score_bm25(&q, &ix, Bm25Params::default(), usize::MAX).unwrap();
        let ql = score_ql(&q, &ix, QlParams::default(), usize::MAX).unwrap();
        let matches = |ix: &Index, id: &str| {
            let d = ix.doc_ordinal(id).unwrap();
            q.iter().any(|t| ix.tf(t, d) > 0)
        };
        prop_assert!(bm.iter().all(|d| d.score >= 0.0 && matches(&ix, &d.doc_id)));
        prop_assert!(ql.iter().all(|d| d.score <= 0.0 && matches(&ix, &d.doc_id)));

        let mut shuffled = q.clone();
        let n = shuffled.len();
        shuffled.rotate_left((seed as usize) % n);
        shuffled.reverse();
        prop_assert_eq!(score_bm25(&shuffled, &ix, Bm25Params::default(), usize::MAX).unwrap(), bm);
        prop_assert_eq!(score_ql(&shuffled, &ix, QlParams::default(), usize::MAX).unwrap(), ql);
    }

    #[test]
    fn index_file_round_trip(docs in corpus(30, 20, 10)) {
        let ix = index_of(&docs);
        let back = Index::from_bytes(&ix.to_bytes()).unwrap();
        prop_assert!(back == ix);
    }
}
