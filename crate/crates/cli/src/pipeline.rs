//! The checkpointed stages. Each stage reads the previous stages' artifacts
//! from the output directory, and records an input hash and its output
//! hashes in the manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use semgraph::corpus::{
    ingest, load_corpus, read_jsonl, write_jsonl, DomainTable, IngestOptions, LemmaTable, SplitSpec,
    Stoplist,
};
use semgraph::embed::{embeddings_csv, read_embeddings_csv, DocVector, TrainDoc};
use semgraph::experiment::{
    article_metrics_csv, assemble_report, classify_all, embed_docs, plan_splits, predictions_csv,
    required_components, CellResult, Component, Dataset, PlannedSplit, SplitVectors, VectorTable,
};
use semgraph::graph::{build_graph, export_graph, DocGraph, ExportFormat, GraphVariant, NodeResources, SentimentLexicon, WordVectors};
use semgraph::wl::{wl_relabel, FeatureDoc};
use semgraph::Exec;

use crate::config::{hex, RunConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::manifest::{file_hash, hash_outputs, Manifest, StageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    BuildGraphs,
    TrainEmbed,
    TrainClf,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::BuildGraphs,
        Stage::TrainEmbed,
        Stage::TrainClf,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::BuildGraphs => "build-graphs",
            Stage::TrainEmbed => "train-embed",
            Stage::TrainClf => "train-clf",
            Stage::Evaluate => "evaluate",
        }
    }

    fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::BuildGraphs => &[Stage::Ingest],
            Stage::TrainEmbed => &[Stage::Ingest, Stage::BuildGraphs],
            Stage::TrainClf => &[Stage::Ingest, Stage::TrainEmbed],
            Stage::Evaluate => &[Stage::Ingest, Stage::TrainClf],
        }
    }

    /// The artifact named in a missing-prerequisite error.
    fn marker(self) -> &'static str {
        match self {
            Stage::Ingest => DOCUMENTS,
            Stage::BuildGraphs => "features",
            Stage::TrainEmbed => "embeddings",
            Stage::TrainClf => CELLS,
            Stage::Evaluate => "report.json",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

const DOCUMENTS: &str = "documents.jsonl";
const EXCLUDED: &str = "excluded.txt";
const SPLITS: &str = "splits.json";
const CELLS: &str = "cells.json";

/// Status of one trained component, stored next to its vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub component: String,
    pub seed: u64,
    pub split_hash: String,
    pub all_oov: usize,
    pub model_hash: Option<String>,
    pub error: Option<String>,
}

fn component_file(c: Component) -> String {
    c.name().replace([':', '+'], "-")
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

fn sha_json(v: &serde_json::Value) -> String {
    hex(&Sha256::digest(serde_json::to_vec(v).expect("json serializes")))
}

fn safe_file_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub struct Pipeline {
    cfg: RunConfig,
    config_path: PathBuf,
    out: PathBuf,
    exec: Exec,
    manifest: Manifest,
    force: bool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, config_path: &Path, force: bool) -> CliResult<Self> {
        let out = cfg.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        let manifest = Manifest::load(&out)?;
        Ok(Pipeline {
            exec: cfg.exec(),
            cfg,
            config_path: config_path.to_path_buf(),
            out,
            manifest,
            force,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn file_hashes(&self, files: &[(&str, Option<&PathBuf>)]) -> CliResult<serde_json::Value> {
        let mut map = serde_json::Map::new();
        for (key, path) in files {
            let v = match path {
                Some(p) => json!(file_hash(p)?),
                None => serde_json::Value::Null,
            };
            map.insert(key.to_string(), v);
        }
        Ok(serde_json::Value::Object(map))
    }

    /// The configuration a stage depends on.
    fn settings(&self, stage: Stage) -> CliResult<serde_json::Value> {
        let c = &self.cfg;
        let g = &c.grid;
        Ok(match stage {
            Stage::Ingest => json!({
                "files": self.file_hashes(&[
                    ("corpus", Some(&c.corpus)),
                    ("domains", Some(&c.domains)),
                    ("lemmas", c.lemmas.as_ref()),
                    ("stoplist", c.stoplist.as_ref()),
                ])?,
                "dataset": c.dataset_name(),
                "include_title": c.include_title,
                "seeds": g.seeds,
                "train_fraction": g.train_fraction,
                "stratify": g.stratify,
            }),
            Stage::BuildGraphs => json!({
                "files": self.file_hashes(&[("vectors", c.vectors.as_ref()), ("lexicon", c.lexicon.as_ref())])?,
                "variants": c.graph_variants(),
                "wl_iterations": g.wl_iterations,
                "quant_step": g.quant_step,
            }),
            Stage::TrainEmbed => json!({
                "components": required_components(g).into_iter().map(Component::name).collect::<Vec<_>>(),
                "hyper": g.hyper,
                "hogwild_workers": g.hogwild_workers,
            }),
            Stage::TrainClf => json!({
                "embeddings": g.embeddings,
                "schemes": g.schemes,
                "aggregations": g.aggregations,
                "softmax": g.softmax,
                "regroup_full": g.regroup_full,
            }),
            Stage::Evaluate => json!({ "grid": g }),
        })
    }

    fn input_hash(&self, stage: Stage) -> CliResult<String> {
        let mut deps = serde_json::Map::new();
        for &dep in stage.deps() {
            let rec = self.current_record(dep)?;
            deps.insert(dep.name().to_string(), json!(rec.outputs));
        }
        Ok(sha_json(&json!({
            "stage": stage.name(),
            "library_version": env!("CARGO_PKG_VERSION"),
            "settings": self.settings(stage)?,
            "deps": deps,
        })))
    }

    /// The manifest record of a prerequisite, after checking that it is
    /// present, intact and was produced from the current inputs.
    fn current_record(&self, stage: Stage) -> CliResult<&StageRecord> {
        let missing = |artifact: PathBuf| CliError::MissingPrerequisite {
            artifact,
            stage: stage.name(),
            config: self.config_path.clone(),
        };
        let rec = self
            .manifest
            .stages
            .get(stage.name())
            .ok_or_else(|| missing(self.out.join(stage.marker())))?;
        for (path, hash) in &rec.outputs {
            let full = self.out.join(path);
            if !full.is_file() {
                return Err(missing(full));
            }
            if &file_hash(&full)? != hash {
                return Err(self.stale(stage));
            }
        }
        if self.input_hash(stage)? != rec.input_hash {
            return Err(self.stale(stage));
        }
        Ok(rec)
    }

    fn stale(&self, stage: Stage) -> CliError {
        CliError::StaleStage {
            stage: stage.name(),
            config: self.config_path.clone(),
        }
    }

    pub fn run(&mut self, stage: Stage) -> CliResult<StageStatus> {
        let input_hash = self.input_hash(stage)?;
        if !self.force {
            if let Some(rec) = self.manifest.stages.get(stage.name()) {
                if rec.input_hash == input_hash && rec.is_intact(&self.out) {
                    log::info!("{stage}: up to date, skipped");
                    return Ok(StageStatus::Skipped);
                }
            }
        }
        log::info!("{stage}: running");
        self.manifest.stages.remove(stage.name());
        let outputs = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::BuildGraphs => self.build_graphs()?,
            Stage::TrainEmbed => self.train_embed()?,
            Stage::TrainClf => self.train_clf()?,
            Stage::Evaluate => self.evaluate()?,
        };
        let record = StageRecord {
            input_hash,
            outputs: hash_outputs(&self.out, &outputs)?,
        };
        self.manifest.stages.insert(stage.name().to_string(), record);
        self.manifest.library_version = env!("CARGO_PKG_VERSION").to_string();
        self.manifest.config_hash = self.cfg.hash();
        self.manifest.save(&self.out)?;
        log::info!("{stage}: wrote {} artifacts", outputs.len());
        Ok(StageStatus::Ran)
    }

    pub fn run_all(&mut self) -> CliResult<Vec<StageStatus>> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    fn write(&self, rel_path: &str, body: impl AsRef<[u8]>) -> CliResult<String> {
        let path = self.out.join(rel_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        Ok(rel_path.to_string())
    }

    fn write_jsonl<T: Serialize>(&self, rel_path: &str, items: &[T]) -> CliResult<String> {
        let path = self.out.join(rel_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        write_jsonl(&path, items)?;
        Ok(rel_path.to_string())
    }

    fn clear_dirs(&self, dirs: &[&str]) -> CliResult<()> {
        for d in dirs {
            let path = self.out.join(d);
            if path.exists() {
                std::fs::remove_dir_all(&path).map_err(|e| io_err(&path, e))?;
            }
        }
        Ok(())
    }

    fn load_dataset(&self) -> CliResult<Dataset> {
        let documents = read_jsonl(&self.out.join(DOCUMENTS))?;
        Ok(Dataset::new(self.cfg.dataset_name(), documents))
    }

    fn load_splits(&self) -> CliResult<Vec<PlannedSplit>> {
        let path = self.out.join(SPLITS);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let specs: Vec<SplitSpec> = serde_json::from_str(&text)?;
        Ok(specs
            .into_iter()
            .map(|split| PlannedSplit {
                dataset: 0,
                seed: split.seed,
                split,
            })
            .collect())
    }

    fn ingest(&mut self) -> CliResult<Vec<String>> {
        let c = &self.cfg;
        let articles = load_corpus(&c.corpus)?;
        let domains = DomainTable::load(&c.domains)?;
        let lemmas = c.lemmas.as_deref().map(LemmaTable::load).transpose()?.unwrap_or_default();
        let stoplist = c.stoplist.as_deref().map(Stoplist::load).transpose()?.unwrap_or_default();
        let options = IngestOptions {
            include_title: c.include_title,
        };
        let outcome = ingest(&articles, &domains, &lemmas, &stoplist, &options, self.exec);
        log::info!(
            "ingest: {} articles kept, {} excluded",
            outcome.documents.len(),
            outcome.excluded.len()
        );
        let dataset = Dataset::new(c.dataset_name(), outcome.documents);
        let splits = plan_splits(std::slice::from_ref(&dataset), &c.grid)?;

        let mut excluded = outcome.excluded.join("\n");
        if !excluded.is_empty() {
            excluded.push('\n');
        }
        let mut outputs = vec![
            self.write_jsonl(DOCUMENTS, &dataset.documents)?,
            self.write(EXCLUDED, excluded)?,
        ];
        let specs: Vec<&SplitSpec> = splits.iter().map(|p| &p.split).collect();
        outputs.push(self.write(SPLITS, serde_json::to_string_pretty(&specs)? + "\n")?);

        self.manifest.corpus_hash = Some(dataset.corpus_hash());
        self.manifest.split_hashes = splits.iter().map(|p| (p.seed, p.split.hash())).collect();
        Ok(outputs)
    }

    fn build_graphs(&self) -> CliResult<Vec<String>> {
        let ds = self.load_dataset()?;
        let c = &self.cfg;
        let vectors = c.vectors.as_deref().map(WordVectors::load).transpose()?;
        let lexicon = c.lexicon.as_deref().map(SentimentLexicon::load).transpose()?;
        let res = NodeResources {
            vectors: vectors.as_ref(),
            lexicon: lexicon.as_ref(),
        };
        self.clear_dirs(&["graphs", "features"])?;
        let mut outputs = Vec::new();
        for variant in c.graph_variants() {
            let graphs: Vec<DocGraph> = self.exec.try_map(&ds.documents, |d| build_graph(d, variant, res))?;
            let features: Vec<FeatureDoc> = self
                .exec
                .map(&graphs, |g| wl_relabel(g, c.grid.wl_iterations, c.grid.quant_step));
            let file = format!("{}.jsonl", variant.as_str());
            outputs.push(self.write_jsonl(&rel(&["graphs", &file]), &graphs)?);
            outputs.push(self.write_jsonl(&rel(&["features", &file]), &features)?);
        }
        Ok(outputs)
    }

    fn train_embed(&self) -> CliResult<Vec<String>> {
        let ds = self.load_dataset()?;
        let splits = self.load_splits()?;
        let grid = &self.cfg.grid;
        let components: Vec<Component> = required_components(grid).into_iter().collect();

        let mut features: HashMap<GraphVariant, HashMap<String, Vec<String>>> = HashMap::new();
        for c in &components {
            if let Component::Graph(v) = *c {
                let path = self.out.join(rel(&["features", &format!("{}.jsonl", v.as_str())]));
                let docs: Vec<FeatureDoc> = read_jsonl(&path)?;
                features.insert(v, docs.into_iter().map(|f| (f.doc_id, f.tokens)).collect());
            }
        }
        let tokens_of = |comp: Component, id: &str, stream: &dyn Fn() -> Vec<String>| -> CliResult<TrainDoc> {
            let tokens = match comp {
                Component::Graph(v) => features[&v]
                    .get(id)
                    .cloned()
                    .ok_or_else(|| self.stale(Stage::BuildGraphs))?,
                Component::Text(_) => stream(),
            };
            Ok(TrainDoc {
                id: id.to_string(),
                tokens,
            })
        };

        let jobs: Vec<(usize, Component)> = (0..splits.len())
            .flat_map(|s| components.iter().map(move |&c| (s, c)))
            .collect();
        let exec = self.exec;
        let trained = exec.try_map(&jobs, |&(s, comp)| -> CliResult<_> {
            let planned = &splits[s];
            let (train_docs, test_docs) = planned.split.partition(&ds.documents, |d| d.id.as_str());
            let to_train = |docs: Vec<&semgraph::corpus::Document>| -> CliResult<Vec<TrainDoc>> {
                docs.into_iter().map(|d| tokens_of(comp, &d.id, &|| d.token_stream())).collect()
            };
            let (train_set, test_set) = (to_train(train_docs)?, to_train(test_docs)?);
            Ok(embed_docs(&train_set, &test_set, comp, grid, planned.seed, exec).map_err(|e| {
                log::warn!("train-embed: seed {} {} failed: {e}", planned.seed, comp.name());
                e.to_string()
            }))
        })?;

        self.clear_dirs(&["embeddings", "models"])?;
        let mut outputs = Vec::new();
        for (&(s, comp), result) in jobs.iter().zip(trained) {
            let planned = &splits[s];
            let seed_dir = format!("seed-{}", planned.seed);
            let file = component_file(comp);
            let mut record = EmbeddingRecord {
                component: comp.name(),
                seed: planned.seed,
                split_hash: planned.split.hash(),
                all_oov: 0,
                model_hash: None,
                error: None,
            };
            match result {
                Ok((model, vectors)) => {
                    let model_path = rel(&["models", &seed_dir, &format!("{file}.json")]);
                    self.write(&model_path, serde_json::to_vec(&model)?)?;
                    outputs.push(model_path);
                    record.model_hash = Some(model.parameter_hash());
                    record.all_oov = vectors.all_oov;
                    for (part, map) in [("train", &vectors.train), ("test", &vectors.test)] {
                        let rows: Vec<DocVector> = map
                            .iter()
                            .map(|(id, v)| DocVector {
                                doc_id: id.clone(),
                                values: v.clone(),
                            })
                            .collect();
                        let path = rel(&["embeddings", &seed_dir, &format!("{file}.{part}.csv")]);
                        outputs.push(self.write(&path, embeddings_csv(&rows))?);
                    }
                }
                Err(msg) => record.error = Some(msg),
            }
            let path = rel(&["embeddings", &seed_dir, &format!("{file}.json")]);
            outputs.push(self.write(&path, serde_json::to_string_pretty(&record)? + "\n")?);
        }
        Ok(outputs)
    }

    fn load_vectors(&self, splits: &[PlannedSplit]) -> CliResult<VectorTable> {
        let mut table = VectorTable::new();
        for (s, planned) in splits.iter().enumerate() {
            let seed_dir = format!("seed-{}", planned.seed);
            for comp in required_components(&self.cfg.grid) {
                let file = component_file(comp);
                let meta_path = self.out.join(rel(&["embeddings", &seed_dir, &format!("{file}.json")]));
                let text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
                let record: EmbeddingRecord = serde_json::from_str(&text)?;
                if record.split_hash != planned.split.hash() {
                    return Err(self.stale(Stage::TrainEmbed));
                }
                let entry = match record.error {
                    Some(msg) => Err(msg),
                    None => {
                        let read = |part: &str| -> CliResult<BTreeMap<String, Vec<f64>>> {
                            let path = self.out.join(rel(&["embeddings", &seed_dir, &format!("{file}.{part}.csv")]));
                            Ok(read_embeddings_csv(&path)?
                                .into_iter()
                                .map(|v| (v.doc_id, v.values))
                                .collect())
                        };
                        Ok(SplitVectors {
                            train: read("train")?,
                            test: read("test")?,
                            all_oov: record.all_oov,
                        })
                    }
                };
                table.insert((s, comp), entry);
            }
        }
        Ok(table)
    }

    fn train_clf(&self) -> CliResult<Vec<String>> {
        let ds = self.load_dataset()?;
        let splits = self.load_splits()?;
        let vectors = self.load_vectors(&splits)?;
        let datasets = [ds];
        let (cells, predictions) = classify_all(&datasets, &splits, &vectors, &self.cfg.grid, self.exec);
        let failed = cells.iter().filter(|c| c.error.is_some()).count();
        if failed > 0 {
            log::warn!("train-clf: {failed} of {} cells failed; see cells.json", cells.len());
        }
        self.clear_dirs(&["predictions"])?;
        let mut outputs = vec![self.write(CELLS, serde_json::to_string_pretty(&cells)? + "\n")?];
        for planned in &splits {
            let rows: Vec<_> = predictions
                .iter()
                .filter(|r| r.seed == planned.seed)
                .cloned()
                .collect();
            let path = rel(&["predictions", &format!("{}-seed-{}.csv", datasets[0].name, planned.seed)]);
            outputs.push(self.write(&path, predictions_csv(&rows))?);
        }
        Ok(outputs)
    }

    fn evaluate(&self) -> CliResult<Vec<String>> {
        let ds = self.load_dataset()?;
        let splits = self.load_splits()?;
        let path = self.out.join(CELLS);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let cells: Vec<CellResult> = serde_json::from_str(&text)?;
        let labels: BTreeMap<String, i32> = ds
            .documents
            .iter()
            .map(|d| (d.id.clone(), d.label.ordinal()))
            .collect();
        let datasets = [ds];
        let (report, metrics) = assemble_report(&datasets, &splits, cells, &self.cfg.grid, self.exec);
        report.write(&self.out)?;
        let mut outputs = vec![
            "report.json".to_string(),
            "summary.csv".to_string(),
            "comparisons.csv".to_string(),
        ];
        let metrics_path = "article_metrics.csv";
        match metrics.get(&datasets[0].name) {
            Some(rows) => outputs.push(self.write(metrics_path, article_metrics_csv(rows, &labels))?),
            None => {
                let stale = self.out.join(metrics_path);
                if stale.exists() {
                    std::fs::remove_file(&stale).map_err(|e| io_err(&stale, e))?;
                }
            }
        }
        Ok(outputs)
    }

    /// Writes the graphs of the given documents (every document when `ids`
    /// is empty) to `export/<variant>/`. Returns the written paths.
    pub fn export_graphs(&self, variant: GraphVariant, ids: &[String], format: ExportFormat) -> CliResult<Vec<PathBuf>> {
        self.current_record(Stage::BuildGraphs)?;
        let path = self.out.join(rel(&["graphs", &format!("{}.jsonl", variant.as_str())]));
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "no {} graphs were built; add \"{}\" to `variants` and rerun build-graphs",
                variant.as_str(),
                variant.as_str()
            )));
        }
        let graphs: Vec<DocGraph> = read_jsonl(&path)?;
        let selected: Vec<&DocGraph> = if ids.is_empty() {
            graphs.iter().collect()
        } else {
            let by_id: HashMap<&str, &DocGraph> = graphs.iter().map(|g| (g.doc_id.as_str(), g)).collect();
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| CliError::Config(format!("no document with id {id:?}")))
                })
                .collect::<CliResult<_>>()?
        };
        let dir = self.out.join("export").join(variant.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        selected
            .into_iter()
            .map(|g| {
                let target = dir.join(format!("{}.{}", safe_file_name(&g.doc_id), format.extension()));
                export_graph(g, format, &target)?;
                Ok(target)
            })
            .collect()
    }

    /// Documents and splits for commands outside the stage chain.
    pub fn ingested(&self) -> CliResult<(Dataset, Vec<PlannedSplit>)> {
        self.current_record(Stage::Ingest)?;
        Ok((self.load_dataset()?, self.load_splits()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_portable() {
        let c: Component = semgraph::experiment::Component::Graph(GraphVariant::WordNode);
        assert_eq!(component_file(c), "graph2vec-word-node");
        assert_eq!(safe_file_name("a/b c.d"), "a_b_c.d");
    }

    #[test]
    fn dependencies_precede_their_stage() {
        for s in Stage::ALL {
            assert!(s.deps().iter().all(|d| *d < s), "{s}");
        }
    }
}
