//! Command-line surface and command dispatch.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use semgraph::corpus::{clean_text, load_corpus};
use semgraph::graph::{ExportFormat, GraphVariant};

use crate::config::{LlmSplit, Overrides, RunConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::fixture::write_fixture;
use crate::llm::{llm_baseline, predictions_csv, LlmArticle, OpenAiClient, ResponseCache};
use crate::pipeline::{Pipeline, Stage, StageStatus};

#[derive(Debug, Parser)]
#[command(name = "semgraph", version, about = "Graph-embedding news bias detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Use the single-threaded code paths.
    #[arg(long)]
    pub sequential: bool,
    /// Override a config key, e.g. `--set graph_metrics=true`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Rerun stages even when the manifest says they are up to date.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, lemmatize and weakly label the corpus; draw the splits.
    Ingest(Common),
    /// Build co-occurrence graphs and WL feature documents.
    BuildGraphs(Common),
    /// Train the embedding models and infer test vectors.
    TrainEmbed(Common),
    /// Fit and score the classifiers.
    TrainClf(Common),
    /// Paired tests, summary tables and the graph-metric study.
    Evaluate(Common),
    /// Every stage in order.
    Run(Common),
    /// Write article graphs as GraphML or DOT.
    ExportGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "word-node")]
        variant: GraphVariant,
        #[arg(long, default_value = "graphml")]
        format: ExportFormat,
        /// Documents to export; every document when omitted.
        #[arg(long = "doc", value_name = "ID")]
        docs: Vec<String>,
    },
    /// Zero-shot classification through a chat-completions endpoint.
    LlmBaseline {
        #[command(flatten)]
        common: Common,
        /// Classify at most this many articles.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Write a synthetic corpus and a matching config.
    GenFixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn open(common: &Common) -> CliResult<Pipeline> {
    let overrides = Overrides {
        seed: common.seed,
        output_dir: common.output_dir.clone(),
        sequential: common.sequential,
        set: common.set.clone(),
    };
    let cfg = RunConfig::load(&common.config, &overrides)?;
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    Pipeline::new(cfg, &common.config, common.force)
}

fn run_stage(common: &Common, stage: Stage) -> CliResult<()> {
    let mut p = open(common)?;
    let status = p.run(stage)?;
    if status == StageStatus::Skipped {
        println!("{stage}: up to date");
    } else {
        println!("{stage}: done ({})", p.output_dir().display());
    }
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(c) => run_stage(&c, Stage::Ingest),
        Command::BuildGraphs(c) => run_stage(&c, Stage::BuildGraphs),
        Command::TrainEmbed(c) => run_stage(&c, Stage::TrainEmbed),
        Command::TrainClf(c) => run_stage(&c, Stage::TrainClf),
        Command::Evaluate(c) => run_stage(&c, Stage::Evaluate),
        Command::Run(c) => {
            let mut p = open(&c)?;
            for (stage, status) in Stage::ALL.iter().zip(p.run_all()?) {
                let word = if status == StageStatus::Skipped { "up to date" } else { "done" };
                println!("{stage}: {word}");
            }
            println!("report: {}", p.output_dir().join("report.json").display());
            Ok(())
        }
        Command::ExportGraph {
            common,
            variant,
            format,
            docs,
        } => {
            let p = open(&common)?;
            let written = p.export_graphs(variant, &docs, format)?;
            println!("exported {} graphs to {}", written.len(), p.output_dir().join("export").display());
            Ok(())
        }
        Command::LlmBaseline { common, limit } => llm_command(&common, limit),
        Command::GenFixture { dir, docs, seed } => {
            let config = write_fixture(&dir, docs, seed)?;
            println!("wrote {}", config.display());
            Ok(())
        }
    }
}

fn llm_command(common: &Common, limit: Option<usize>) -> CliResult<()> {
    let p = open(common)?;
    let cfg = p.config();
    let llm = cfg
        .llm
        .clone()
        .ok_or_else(|| CliError::Config("llm-baseline needs an [llm] table in the config".into()))?;
    let (ds, splits) = p.ingested()?;
    let ids: Vec<String> = match llm.split {
        LlmSplit::All => ds.documents.iter().map(|d| d.id.clone()).collect(),
        LlmSplit::Test => {
            let seed = llm.seed.unwrap_or(cfg.grid.seeds[0]);
            let planned = splits
                .iter()
                .find(|s| s.seed == seed)
                .ok_or_else(|| CliError::Config(format!("seed {seed} has no split; add it to `seeds`")))?;
            planned.split.test_ids.clone()
        }
    };
    let raw: HashMap<String, (String, String)> = load_corpus(&cfg.corpus)?
        .into_iter()
        .map(|a| (a.id, (a.title, a.body)))
        .collect();
    let docs: HashMap<&str, &semgraph::corpus::Document> = ds.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut articles = Vec::new();
    for id in ids.iter().take(limit.unwrap_or(usize::MAX)) {
        let (Some(doc), Some((title, body))) = (docs.get(id.as_str()), raw.get(id)) else {
            return Err(CliError::Config(format!("article {id} is missing from the corpus; rerun ingest")));
        };
        articles.push(LlmArticle {
            id: id.clone(),
            title: clean_text(title),
            body: clean_text(body),
            truth: llm.scheme.map(doc.article_label.unwrap_or(doc.label)),
        });
    }

    let api_key = if llm.api_key_env.is_empty() {
        None
    } else {
        Some(std::env::var(&llm.api_key_env).map_err(|_| {
            CliError::Config(format!("set the {} environment variable to the API key", llm.api_key_env))
        })?)
    };
    let client = OpenAiClient::new(&llm.endpoint, api_key, Duration::from_secs(llm.timeout_secs), llm.max_retries)?;
    let dir = p.output_dir().join("llm");
    let cache = ResponseCache::open(&dir.join("cache.jsonl"))?;
    let result = llm_baseline(&client, &llm, &articles, &cache);
    cache.save()?;
    let run = result?;

    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))
    };
    write("predictions.csv", predictions_csv(&run))?;
    write("run.json", serde_json::to_string_pretty(&run)? + "\n")?;
    println!(
        "llm-baseline: {} articles, accuracy {:.3}, macro F1 {:.3}, {} unparseable, {} errors",
        run.n, run.scores.accuracy, run.scores.macro_f1, run.unparseable, run.errors
    );
    Ok(())
}
