//! A small synthetic workspace: corpus, domain ratings, word vectors,
//! lexicon and a run configuration that uses them.

use std::path::{Path, PathBuf};

use semgraph::corpus::write_jsonl;
use semgraph::synth::{generate, pseudo_word, synthetic_resources, SynthConfig};

use crate::error::{io_err, CliResult};

const VECTOR_DIM: usize = 8;

pub const FIXTURE_CONFIG: &str = r#"corpus = "corpus.jsonl"
domains = "domains.csv"
vectors = "vectors.txt"
lexicon = "lexicon.tsv"
output_dir = "out"
embeddings = ["graph2vec:word-node", "graph2vec:vector-node", "doc2vec:dbow", "hybrid:base+dm"]
schemes = ["full", "lcr", "binary"]
aggregations = ["none", "mean", "topic-diff-norm"]
seeds = [0, 1]
comparisons = [["graph2vec:word-node", "doc2vec:dbow"]]
graph_metrics = true

[hyper]
dim = 32
epochs = 20
min_count = 1

[llm]
endpoint = "http://127.0.0.1:8080/v1/chat/completions"
model = "local-model"
scheme = "binary"
"#;

fn write(path: &Path, body: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Writes the fixture into `dir` and returns the config path.
pub fn write_fixture(dir: &Path, docs: usize, seed: u64) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg = SynthConfig {
        docs,
        seed,
        ..SynthConfig::default()
    };
    let corpus = generate(&cfg);
    write_jsonl(&dir.join("corpus.jsonl"), &corpus.articles)?;
    write(&dir.join("domains.csv"), corpus.domains.to_csv())?;

    let (vectors, lexicon) = synthetic_resources(cfg.vocab, VECTOR_DIM, seed)?;
    let mut vec_text = String::new();
    let mut lex_text = String::from("# token\tvalence\n");
    for i in 0..cfg.vocab {
        let w = pseudo_word(i);
        let values: Vec<String> = vectors.get(&w).iter().map(|x| format!("{x:?}")).collect();
        vec_text.push_str(&format!("{w} {}\n", values.join(" ")));
        lex_text.push_str(&format!("{w}\t{:?}\n", lexicon.valence(&w)));
    }
    write(&dir.join("vectors.txt"), vec_text)?;
    write(&dir.join("lexicon.tsv"), lex_text)?;

    let config = dir.join("config.toml");
    write(&config, FIXTURE_CONFIG)?;
    Ok(config)
}
