use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semgraph::corpus::{ingest, load_corpus, DomainTable, IngestOptions, LemmaTable, Stoplist};
use semgraph::experiment::{run_grid, Dataset};
use semgraph::graph::{SentimentLexicon, WordVectors};
use semgraph::Exec;
use semgraph_cli::config::{Overrides, RunConfig};
use semgraph_cli::fixture::write_fixture;
use semgraph_cli::pipeline::{Pipeline, Stage, StageStatus};

fn semgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semgraph"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_same_tree(dir: &Path, expected: &BTreeMap<PathBuf, Vec<u8>>) {
    let now = read_tree(dir);
    let changed: Vec<&PathBuf> = expected
        .keys()
        .chain(now.keys())
        .filter(|k| expected.get(*k) != now.get(*k))
        .collect();
    assert!(changed.is_empty(), "changed: {changed:?}");
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn full_pipeline_on_fixture_then_rerun_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 50, 0).unwrap();
    let out = semgraph(&["run", "--config", path_str(&config)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.status.code(), Some(0));
    let out_dir = dir.path().join("out");
    for f in ["report.json", "summary.csv", "comparisons.csv", "article_metrics.csv", "manifest.json", "cells.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    assert!(out_dir.join("predictions/corpus-seed-0.csv").is_file());
    let before = read_tree(&out_dir);

    let again = semgraph(&["run", "--config", path_str(&config)]);
    assert!(again.status.success());
    let stdout = String::from_utf8_lossy(&again.stdout);
    assert_eq!(stdout.matches("up to date").count(), 5, "{stdout}");
    assert_same_tree(&out_dir, &before);

    let forced = semgraph(&["run", "--config", path_str(&config), "--force", "--sequential"]);
    assert!(forced.status.success());
    assert_same_tree(&out_dir, &before);
}

#[test]
fn corrupt_corpus_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 20, 1).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let mut text = std::fs::read_to_string(&corpus).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    text = format!("{}\n{}\n{{\"id\": \"x\", oops\n{}\n", lines[0], lines[1], lines[2..].join("\n"));
    std::fs::write(&corpus, text).unwrap();
    let out = semgraph(&["ingest", "--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("corpus.jsonl:3:"), "{err}");
}

#[test]
fn stages_demand_their_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 20, 2).unwrap();
    let out = semgraph(&["train-embed", "--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("documents.jsonl") && err.contains("semgraph ingest"), "{err}");

    assert!(semgraph(&["ingest", "--config", path_str(&config)]).status.success());
    let err = String::from_utf8_lossy(&semgraph(&["train-embed", "--config", path_str(&config)]).stderr).into_owned();
    assert!(err.contains("semgraph build-graphs"), "{err}");

    // a changed split invalidates the ingest stage for downstream commands
    let out = semgraph(&["build-graphs", "--config", path_str(&config), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage ingest is out of date"));
}

#[test]
fn bad_config_exits_with_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 20, 3).unwrap();
    let out = semgraph(&["ingest", "--config", path_str(&config), "--set", "embeddings=[\"graph2vec:nope\"]"]);
    assert_eq!(out.status.code(), Some(1));
    let out = semgraph(&["ingest", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = semgraph(&["ingest"]);
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit with 2");
}

#[test]
fn staged_run_matches_the_in_memory_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 40, 5).unwrap();
    let cfg = RunConfig::load(&config, &Overrides::default()).unwrap();
    let mut p = Pipeline::new(cfg.clone(), &config, false).unwrap();
    for stage in Stage::ALL {
        assert_eq!(p.run(stage).unwrap(), StageStatus::Ran);
    }
    let manifest = p.manifest().clone();
    assert_eq!(manifest.split_hashes.len(), cfg.grid.seeds.len());
    assert_eq!(manifest.config_hash, cfg.hash());
    assert!(manifest.corpus_hash.is_some());

    let articles = load_corpus(&cfg.corpus).unwrap();
    let domains = DomainTable::load(&cfg.domains).unwrap();
    let docs = ingest(
        &articles,
        &domains,
        &LemmaTable::new(),
        &Stoplist::default(),
        &IngestOptions::default(),
        Exec::Parallel,
    )
    .documents;
    let mut ds = Dataset::new(cfg.dataset_name(), docs);
    ds.vectors = Some(WordVectors::load(cfg.vectors.as_ref().unwrap()).unwrap());
    ds.lexicon = Some(SentimentLexicon::load(cfg.lexicon.as_ref().unwrap()).unwrap());
    let grid = run_grid(&[ds], &cfg.grid, Exec::Parallel).unwrap();
    let on_disk = std::fs::read_to_string(cfg.output_dir.join("report.json")).unwrap();
    assert_eq!(on_disk, grid.report.to_json());
    assert_eq!(manifest.corpus_hash.as_deref(), Some(grid.report.datasets[0].corpus_hash.as_str()));
}

#[test]
fn export_writes_graphml() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), 20, 6).unwrap();
    let c = path_str(&config);
    assert!(semgraph(&["ingest", "--config", c]).status.success());
    assert!(semgraph(&["build-graphs", "--config", c]).status.success());
    let out = semgraph(&["export-graph", "--config", c, "--doc", "syn-0003"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/export/word-node/syn-0003.graphml")).unwrap();
    let g = semgraph::graph::from_graphml(&text).unwrap();
    assert_eq!(g.doc_id, "syn-0003");
    let missing = semgraph(&["export-graph", "--config", c, "--doc", "nope"]);
    assert_eq!(missing.status.code(), Some(1));
}
