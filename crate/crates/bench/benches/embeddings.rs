use criterion::{criterion_group, criterion_main, Criterion};
use embir_bench::{corpus, queries, store, word};
use embir_core::awe::{score_awe, AweConfig, DocVectorTable, Weighting};
use embir_core::expansion::{expand_query, ExpansionConfig};

fn knn(c: &mut Criterion) {
    for words in [5_000, 50_000] {
        let store = store(words, 100, 3);
        c.bench_function(&format!("knn_k10_{words}x100"), |b| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 7919) % words;
                std::hint::black_box(store.nearest_neighbors(&word(i), 10, -1.0).unwrap())
            })
        });
    }
}

fn expansion(c: &mut Criterion) {
    let store = store(20_000, 100, 4);
    let qs = queries(20, 4, 20_000, 5);
    let config = ExpansionConfig {
        threshold: 0.2,
        neighbors_per_term: 3,
        ..ExpansionConfig::default()
    };
    c.bench_function("expand_20_queries", |b| {
        b.iter(|| {
            for q in &qs {
                std::hint::black_box(expand_query(q, &store, &config).unwrap());
            }
        })
    });
}

fn awe(c: &mut Criterion) {
    let index = corpus(2_000, 3_000, 6);
    let store = store(3_000, 100, 7);
    let qs = queries(20, 3, 3_000, 8);
    for weighting in [Weighting::Mean, Weighting::TfidfWeighted] {
        let config = AweConfig {
            weighting,
            ..AweConfig::default()
        };
        c.bench_function(&format!("awe_{weighting}_20_queries_2k_docs"), |b| {
            b.iter(|| {
                for q in &qs {
                    std::hint::black_box(score_awe(q, &index, &store, &config).unwrap());
                }
            })
        });
    }
    c.bench_function("awe_doc_vector_table_2k_docs", |b| {
        b.iter(|| DocVectorTable::build(&index, &store, Weighting::TfidfWeighted))
    });
}

criterion_group!(benches, knn, expansion, awe);
criterion_main!(benches);
