use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use embir_core::ExperimentConfig;

fn embir(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embir"))
        .args(args)
        .current_dir(dir)
        .env("EMBIR_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = embir(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let docs = [
        ("d1", "cheap flights to paris"),
        ("d2", "budget airline tickets"),
        ("d3", "paris museum guide"),
        ("d4", "cheap hotel deals in rome"),
        ("d5", "low cost flights and tickets"),
        ("d6", "rome travel guide"),
    ];
    let jsonl: String = docs
        .iter()
        .map(|(id, body)| format!("{{\"id\":\"{id}\",\"title\":\"\",\"body\":\"{body}\"}}\n"))
        .collect();
    fs::write(p.join("docs.jsonl"), jsonl).unwrap();
    fs::write(
        p.join("topics.tsv"),
        "1\tcheap flights\n2\trome guide\n3\tairline tickets\n",
    )
    .unwrap();
    fs::write(
        p.join("qrels.txt"),
        "1 0 d1 2\n1 0 d5 1\n1 0 d2 1\n2 0 d6 2\n2 0 d4 1\n3 0 d2 2\n3 0 d5 1\n",
    )
    .unwrap();
    let words = [
        "cheap", "flights", "to", "paris", "budget", "airline", "tickets", "museum", "guide",
        "hotel", "deals", "in", "rome", "low", "cost", "and", "travel",
    ];
    for (n, seed) in [(1, 3usize), (2, 7), (3, 11)] {
        let text: String = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let v: Vec<String> = (0..4)
                    .map(|k| format!("{}", ((i * seed + k * 5) % 13) as f64 / 4.0 - 1.5))
                    .collect();
                format!("{w} {}\n", v.join(" "))
            })
            .collect();
        fs::write(p.join(format!("vec{n}.txt")), text).unwrap();
    }
    ok(
        p,
        &[
            "index",
            "--format",
            "jsonl",
            "--input",
            "docs.jsonl",
            "--output",
            "ix.bin",
        ],
    );
    dir
}

const TOPICS: [&str; 4] = ["--topics", "topics.tsv", "--topic-format", "tsv"];

#[test]
fn missing_flag_is_a_usage_error_naming_the_flag() {
    let dir = fixture();
    let p = dir.path();
    ok(
        p,
        &[
            &["search", "--index", "ix.bin", "--output", "run.txt"][..],
            &TOPICS,
        ]
        .concat(),
    );

    let out = embir(p, &["eval", "--run", "run.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--qrels"));

    let out = embir(p, &["eval", "--run", "run.txt", "--qrels", "nowhere.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--qrels"));
}

#[test]
fn bad_parameter_is_a_usage_error() {
    let dir = fixture();
    let out = embir(
        dir.path(),
        &[
            &[
                "search", "--index", "ix.bin", "--output", "run.txt", "--k1", "-1",
            ][..],
            &TOPICS,
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_index_is_a_data_error() {
    let dir = fixture();
    let p = dir.path();
    let mut bytes = fs::read(p.join("ix.bin")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(p.join("ix.bin"), bytes).unwrap();
    let out = embir(
        p,
        &[
            &["search", "--index", "ix.bin", "--output", "run.txt"][..],
            &TOPICS,
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meta_hash_matches_equivalent_config_file() {
    let dir = fixture();
    let p = dir.path();
    ok(
        p,
        &[
            &[
                "search", "--index", "ix.bin", "--scorer", "ql", "--mu", "250", "--tag", "q",
                "--output", "run.txt",
            ][..],
            &TOPICS,
        ]
        .concat(),
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("run.txt.meta")).unwrap()).unwrap();
    let config = ExperimentConfig::from_toml(
        r#"
tag = "q"
pipeline = "ql"
output = "run.txt"
index = "ix.bin"
topics = { path = "topics.tsv", format = "tsv" }
ql = { mu = 250.0 }
"#,
    )
    .unwrap();
    assert_eq!(
        meta["config_hash"].as_str().unwrap(),
        config.config_hash().to_string()
    );
    let recorded: ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(recorded, config);
}

#[test]
fn runs_are_byte_identical_across_invocations() {
    let dir = fixture();
    let p = dir.path();
    for out in ["a.txt", "b.txt"] {
        ok(
            p,
            &[
                &[
                    "awe-run",
                    "--index",
                    "ix.bin",
                    "--embeddings",
                    "vec1.txt",
                    "--output",
                    out,
                ][..],
                &TOPICS,
            ]
            .concat(),
        );
    }
    assert_eq!(
        fs::read(p.join("a.txt")).unwrap(),
        fs::read(p.join("b.txt")).unwrap()
    );
}

fn all_value(eval: &str, metric: &str) -> String {
    eval.lines()
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .find(|c| c[0].eq_ignore_ascii_case(metric) && c[1] == "all")
        .map(|c| c[2].to_string())
        .unwrap()
}

#[test]
fn batch_matches_individual_invocations() {
    let dir = fixture();
    let p = dir.path();
    let mut batch = String::from(
        "qrels = \"qrels.txt\"\ntable = \"table.tsv\"\n\n[defaults]\nindex = \"ix.bin\"\npipeline = \"awe\"\n\
         topics = { path = \"topics.tsv\", format = \"tsv\" }\n",
    );
    for n in 1..=3 {
        batch.push_str(&format!(
            "\n[[experiment]]\ntag = \"awe{n}\"\noutput = \"batch/awe{n}.txt\"\nembeddings = {{ path = \"vec{n}.txt\" }}\n"
        ));
    }
    fs::write(p.join("batch.toml"), batch).unwrap();
    ok(p, &["batch", "batch.toml", "--jobs", "3"]);
    let table = fs::read_to_string(p.join("table.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "tag\tNDCG\tMAP");
    assert_eq!(rows.len(), 4);

    for (n, row) in rows.iter().enumerate().skip(1) {
        let (run, eval) = (format!("awe{n}.txt"), format!("awe{n}.eval"));
        let vec = format!("vec{n}.txt");
        let tag = format!("awe{n}");
        ok(
            p,
            &[
                &[
                    "awe-run",
                    "--index",
                    "ix.bin",
                    "--embeddings",
                    &vec,
                    "--tag",
                    &tag,
                    "--output",
                    &run,
                ][..],
                &TOPICS,
            ]
            .concat(),
        );
        assert_eq!(
            fs::read(p.join(&run)).unwrap(),
            fs::read(p.join("batch").join(&run)).unwrap(),
            "{run}"
        );
        ok(
            p,
            &[
                "eval",
                "--run",
                &run,
                "--qrels",
                "qrels.txt",
                "--output",
                &eval,
            ],
        );
        let eval = fs::read_to_string(p.join(&eval)).unwrap();
        let want = format!(
            "{tag}\t{}\t{}",
            all_value(&eval, "ndcg"),
            all_value(&eval, "map")
        );
        assert_eq!(*row, want);
    }
}

#[test]
fn failed_batch_entry_keeps_other_rows() {
    let dir = fixture();
    let p = dir.path();
    let batch = r#"
qrels = "qrels.txt"
table = "table.tsv"

[defaults]
index = "ix.bin"
topics = { path = "topics.tsv", format = "tsv" }

[[experiment]]
tag = "bm25"
pipeline = "bm25"
output = "bm25.txt"

[[experiment]]
tag = "broken"
pipeline = "awe"
output = "broken.txt"
embeddings = { path = "missing.txt" }

[[experiment]]
tag = "ql"
pipeline = "ql"
output = "ql.txt"
"#;
    fs::write(p.join("batch.toml"), batch).unwrap();
    let out = embir(p, &["batch", "batch.toml"]);
    assert_ne!(out.status.code(), Some(0));
    let table = fs::read_to_string(p.join("table.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[2], "broken\tNA\tNA");
    assert!(!rows[1].contains("NA") && !rows[3].contains("NA"));
    assert!(p.join("bm25.txt").exists() && p.join("ql.txt").exists());
}

#[test]
fn affect_score_writes_json_report() {
    let dir = fixture();
    let p = dir.path();
    fs::write(
        p.join("lex.tsv"),
        "word\tvalence\ncheap\t1\nguide\t5\nrome\t9\n",
    )
    .unwrap();
    ok(
        p,
        &[
            "affect-score",
            "--input",
            "docs.jsonl",
            "--format",
            "jsonl",
            "--lexicon",
            "lex.tsv",
            "--output",
            "affect.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("affect.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("valence"));
}
