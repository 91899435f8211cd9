//! Experiment grid: embeddings trained on shared splits, classifiers fitted
//! per label scheme and aggregation, paired tests, and the report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{hex_digest, make_split, Document, SplitSpec};
use crate::detector::{
    aggregate_domain_with, regroup_predictions, to_matrix, topic_means, train_softmax, zero_rule,
    Aggregation, ArticleVec, LabelScheme, SoftmaxConfig,
};
use crate::embed::{build_vocab, train, EmbedMode, EmbeddingModel, Hyperparams, TrainDoc, Training};
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphVariant, NodeResources, SentimentLexicon, WordVectors};
use crate::graph_metrics::{graph_metrics, metrics_baseline, GraphMetricVector, METRIC_NAMES};
use crate::par::Exec;
use crate::stats::{mean_std, pearson_r, score, format_mean_std, wilcoxon_one_sided, MetricPair, WilcoxonResult};
use crate::wl::{wl_relabel, FeatureDoc, DEFAULT_QUANT_STEP, DEFAULT_WL_ITERATIONS};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const ZERO_RULE: &str = "zero-rule";

/// One half of a document embedding: graph features or raw lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Graph(GraphVariant),
    Text(EmbedMode),
}

impl Component {
    pub fn name(self) -> String {
        match self {
            Component::Graph(v) => format!("graph2vec:{}", v.as_str()),
            Component::Text(m) => format!("doc2vec:{}", text_mode_str(m)),
        }
    }
}

fn text_mode_str(m: EmbedMode) -> &'static str {
    match m {
        EmbedMode::Dm => "dm",
        EmbedMode::Dbow => "dbow",
        EmbedMode::Graph2VecDbow => "graph2vec",
    }
}

/// A document representation fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EmbeddingConfig {
    Graph2Vec(GraphVariant),
    Doc2Vec(EmbedMode),
    /// Graph embedding followed by a lemma-stream embedding.
    Hybrid(GraphVariant, EmbedMode),
}

impl EmbeddingConfig {
    pub fn components(self) -> Vec<Component> {
        match self {
            EmbeddingConfig::Graph2Vec(v) => vec![Component::Graph(v)],
            EmbeddingConfig::Doc2Vec(m) => vec![Component::Text(m)],
            EmbeddingConfig::Hybrid(v, m) => vec![Component::Graph(v), Component::Text(m)],
        }
    }
}

impl fmt::Display for EmbeddingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingConfig::Graph2Vec(v) => write!(f, "graph2vec:{}", v.as_str()),
            EmbeddingConfig::Doc2Vec(m) => write!(f, "doc2vec:{}", text_mode_str(*m)),
            EmbeddingConfig::Hybrid(v, m) => write!(f, "hybrid:{}+{}", v.as_str(), text_mode_str(*m)),
        }
    }
}

fn parse_text_mode(s: &str) -> Result<EmbedMode> {
    match s {
        "dm" => Ok(EmbedMode::Dm),
        "dbow" => Ok(EmbedMode::Dbow),
        _ => Err(Error::Config(format!("unknown doc2vec mode {s:?} (expected dm or dbow)"))),
    }
}

impl std::str::FromStr for EmbeddingConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!(
            "unknown embedding {s:?}; expected graph2vec:<variant>, doc2vec:<dm|dbow> or hybrid:<variant>+<dm|dbow>"
        ));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "graph2vec" => Ok(EmbeddingConfig::Graph2Vec(rest.parse()?)),
            "doc2vec" => Ok(EmbeddingConfig::Doc2Vec(parse_text_mode(rest)?)),
            "hybrid" => {
                let (v, m) = rest.split_once('+').ok_or_else(bad)?;
                Ok(EmbeddingConfig::Hybrid(v.parse()?, parse_text_mode(m)?))
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for EmbeddingConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EmbeddingConfig> for String {
    fn from(e: EmbeddingConfig) -> String {
        e.to_string()
    }
}

/// What a classifier predicts: each article's label, or each domain's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Article,
    Domain,
}

/// How a cell's predictions were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Softmax trained on the cell's own scheme.
    Native,
    /// Full-scheme softmax with its predictions mapped to the cell's scheme.
    Regrouped,
    ZeroRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub embeddings: Vec<EmbeddingConfig>,
    pub schemes: Vec<LabelScheme>,
    pub aggregations: Vec<Aggregation>,
    pub seeds: Vec<u64>,
    /// Extra paired tests between embeddings; every embedding is always
    /// compared against the Zero Rule.
    pub comparisons: Vec<(EmbeddingConfig, EmbeddingConfig)>,
    pub hyper: Hyperparams,
    pub wl_iterations: usize,
    pub quant_step: f64,
    pub softmax: SoftmaxConfig,
    pub train_fraction: f64,
    pub stratify: bool,
    /// Also score Full-scheme predictions regrouped to coarser schemes.
    pub regroup_full: bool,
    /// Lock-free multi-worker training; `None` trains deterministically.
    pub hogwild_workers: Option<usize>,
    /// Graph-metric correlations and the metrics-only baseline.
    pub graph_metrics: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            embeddings: vec![EmbeddingConfig::Graph2Vec(GraphVariant::WordNode)],
            schemes: vec![LabelScheme::Binary],
            aggregations: vec![Aggregation::None],
            seeds: vec![0],
            comparisons: Vec::new(),
            hyper: Hyperparams::default(),
            wl_iterations: DEFAULT_WL_ITERATIONS,
            quant_step: DEFAULT_QUANT_STEP,
            softmax: SoftmaxConfig::default(),
            train_fraction: crate::corpus::DEFAULT_TRAIN_FRACTION,
            stratify: false,
            regroup_full: true,
            hogwild_workers: None,
            graph_metrics: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() || self.schemes.is_empty() {
            return Err(Error::Config("a grid needs at least one embedding and one scheme".into()));
        }
        if self.aggregations.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("a grid needs at least one aggregation and one seed".into()));
        }
        if self.hogwild_workers == Some(0) {
            return Err(Error::Config("hogwild_workers must be positive".into()));
        }
        Ok(())
    }

    fn training(&self) -> Training {
        match self.hogwild_workers {
            Some(workers) => Training::Hogwild { workers },
            None => Training::Deterministic,
        }
    }
}

/// A labeled corpus plus the resources its vector-node graphs need.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub documents: Vec<Document>,
    pub vectors: Option<WordVectors>,
    pub lexicon: Option<SentimentLexicon>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Self {
        Dataset {
            name: name.into(),
            documents,
            vectors: None,
            lexicon: None,
        }
    }

    fn resources(&self) -> NodeResources<'_> {
        NodeResources {
            vectors: self.vectors.as_ref(),
            lexicon: self.lexicon.as_ref(),
        }
    }

    /// Articles carry human labels in addition to their domain's.
    pub fn has_article_labels(&self) -> bool {
        !self.documents.is_empty() && self.documents.iter().all(|d| d.article_label.is_some())
    }

    pub fn corpus_hash(&self) -> String {
        hex_digest(&serde_json::to_vec(&self.documents).expect("documents serialize"))
    }
}

/// WL feature document of one article.
pub fn feature_doc(
    doc: &Document,
    variant: GraphVariant,
    res: NodeResources<'_>,
    wl_iterations: usize,
    quant_step: f64,
) -> Result<FeatureDoc> {
    let g = build_graph(doc, variant, res)?;
    Ok(wl_relabel(&g, wl_iterations, quant_step))
}

/// Tokens a component's trainer sees for one document.
pub fn component_tokens(ds: &Dataset, doc: &Document, comp: Component, cfg: &GridConfig) -> Result<TrainDoc> {
    let tokens = match comp {
        Component::Graph(v) => feature_doc(doc, v, ds.resources(), cfg.wl_iterations, cfg.quant_step)?.tokens,
        Component::Text(_) => doc.token_stream(),
    };
    Ok(TrainDoc {
        id: doc.id.clone(),
        tokens,
    })
}

/// Embeddings of one component for one split: trained vectors for the
/// training articles, inferred vectors for the test articles.
#[derive(Debug, Clone, Default)]
pub struct SplitVectors {
    pub train: BTreeMap<String, Vec<f64>>,
    pub test: BTreeMap<String, Vec<f64>>,
    pub all_oov: usize,
}

pub fn embed_split(
    ds: &Dataset,
    split: &SplitSpec,
    comp: Component,
    cfg: &GridConfig,
    seed: u64,
    exec: Exec,
) -> Result<SplitVectors> {
    let (train_docs, test_docs) = split.partition(&ds.documents, |d| d.id.as_str());
    let train_set: Vec<TrainDoc> = exec.try_map(&train_docs, |d| component_tokens(ds, d, comp, cfg))?;
    let test_set: Vec<TrainDoc> = exec.try_map(&test_docs, |d| component_tokens(ds, d, comp, cfg))?;
    Ok(embed_docs(&train_set, &test_set, comp, cfg, seed, exec)?.1)
}

/// Trains a component model on `train_set` and infers `test_set` against it.
pub fn embed_docs(
    train_set: &[TrainDoc],
    test_set: &[TrainDoc],
    comp: Component,
    cfg: &GridConfig,
    seed: u64,
    exec: Exec,
) -> Result<(EmbeddingModel, SplitVectors)> {
    let vocab = build_vocab(train_set.iter().map(|d| &d.tokens), cfg.hyper.min_count)?;
    let mode = match comp {
        Component::Graph(_) => EmbedMode::Graph2VecDbow,
        Component::Text(m) => m,
    };
    let model = train(train_set, vocab, mode, cfg.hyper, seed, cfg.training(), exec)?;
    let inferred = model.infer_many(test_set, exec);
    let vectors = SplitVectors {
        train: model
            .trained_vectors()
            .into_iter()
            .map(|v| (v.doc_id, v.values))
            .collect(),
        all_oov: inferred.iter().filter(|i| i.all_oov).count(),
        test: inferred
            .into_iter()
            .map(|i| (i.vector.doc_id, i.vector.values))
            .collect(),
    };
    Ok((model, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub dataset: String,
    pub seed: u64,
    pub hash: String,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub seed: u64,
    pub embedding: String,
    pub scheme: LabelScheme,
    pub aggregation: Aggregation,
    pub target: Target,
    pub method: Method,
    pub split_hash: String,
    pub n_train: usize,
    pub n_test: usize,
    pub scores: Option<MetricPair>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl CellResult {
    fn group_key(&self) -> (String, String, LabelScheme, Aggregation, Target, Method) {
        (
            self.dataset.clone(),
            self.embedding.clone(),
            self.scheme,
            self.aggregation,
            self.target,
            self.method,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub dataset: String,
    pub seed: u64,
    pub doc_or_domain_id: String,
    pub true_label: String,
    pub pred_label: String,
    pub scheme: String,
    pub aggregation: Aggregation,
    pub embedding_config: String,
    pub prob_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub dataset: String,
    pub a: String,
    pub b: String,
    pub scheme: LabelScheme,
    pub aggregation: Aggregation,
    pub target: Target,
    pub method: Method,
    pub split_hashes: Vec<String>,
    pub accuracy_diffs: Vec<f64>,
    pub macro_f1_diffs: Vec<f64>,
    /// One-sided, alternative: `a` scores higher than `b`.
    pub accuracy: Option<WilcoxonResult>,
    pub macro_f1: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub embedding: String,
    pub aggregation: Aggregation,
    pub target: Target,
    pub method: Method,
    pub scheme: LabelScheme,
    pub n: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    /// `mean (std)` as printed in tables.
    pub accuracy: String,
    pub macro_f1: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBaselineRun {
    pub seed: u64,
    pub split_hash: String,
    pub scores: Option<MetricPair>,
    pub dropped_columns: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub dataset: String,
    pub correlations: Vec<MetricCorrelation>,
    pub baseline: Vec<MetricsBaselineRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub name: String,
    pub documents: usize,
    pub corpus_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub library_version: String,
    pub config: GridConfig,
    pub datasets: Vec<DatasetRecord>,
    pub splits: Vec<SplitRecord>,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<PairedComparison>,
    pub summary: Vec<SummaryRow>,
    pub case_study: Vec<CaseStudy>,
    /// SHA-256 of the report serialized with this field empty.
    pub report_hash: String,
}

pub struct GridOutput {
    pub report: ExperimentReport,
    pub predictions: Vec<PredictionRow>,
    /// Per-article graph metrics, per dataset, for external plotting.
    pub article_metrics: BTreeMap<String, Vec<(String, GraphMetricVector)>>,
}

/// The classification views a dataset supports under the configured
/// aggregations.
fn views(ds: &Dataset, aggregations: &[Aggregation]) -> Vec<(Aggregation, Target)> {
    let mut out = Vec::new();
    for &agg in aggregations {
        match (agg, ds.has_article_labels()) {
            (Aggregation::None, false) => out.push((agg, Target::Article)),
            // article-annotated corpora also predict the domain label of
            // each article directly from its embedding
            (Aggregation::None, true) => {
                out.push((agg, Target::Article));
                out.push((agg, Target::Domain));
            }
            (_, false) => out.push((agg, Target::Domain)),
            (_, true) => log::warn!(
                "dataset {}: aggregation {agg} skipped; article-annotated corpora are not aggregated",
                ds.name
            ),
        }
    }
    out
}

/// Rows to classify: ids, feature vectors and the true seven-way labels.
struct Design {
    train_ids: Vec<String>,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<crate::corpus::BiasLabel>,
    test_ids: Vec<String>,
    test_x: Vec<Vec<f64>>,
    test_y: Vec<crate::corpus::BiasLabel>,
}

fn article_vecs(docs: &[&Document], vectors: &BTreeMap<String, Vec<f64>>) -> Result<Vec<ArticleVec>> {
    docs.iter()
        .map(|d| {
            let v = vectors
                .get(&d.id)
                .ok_or_else(|| Error::Invalid(format!("no embedding for article {}", d.id)))?;
            Ok(ArticleVec {
                id: d.id.clone(),
                domain: d.domain.clone(),
                topic: d.topic.clone(),
                vector: v.clone(),
            })
        })
        .collect()
}

fn design(
    ds: &Dataset,
    split: &SplitSpec,
    vectors: &SplitVectors,
    agg: Aggregation,
    target: Target,
) -> Result<Design> {
    let (train_docs, test_docs) = split.partition(&ds.documents, |d| d.id.as_str());
    let label = |d: &Document| match target {
        Target::Article => d.article_label.unwrap_or(d.label),
        Target::Domain => d.label,
    };
    if agg == Aggregation::None {
        let rows = |docs: &[&Document], vs: &BTreeMap<String, Vec<f64>>| -> Result<_> {
            let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
            let x = article_vecs(docs, vs)?.into_iter().map(|a| a.vector).collect();
            let y = docs.iter().map(|d| label(d)).collect();
            Ok((ids, x, y))
        };
        let (train_ids, train_x, train_y) = rows(&train_docs, &vectors.train)?;
        let (test_ids, test_x, test_y) = rows(&test_docs, &vectors.test)?;
        return Ok(Design { train_ids, train_x, train_y, test_ids, test_x, test_y });
    }

    let domain_label: BTreeMap<&str, crate::corpus::BiasLabel> =
        ds.documents.iter().map(|d| (d.domain.as_str(), d.label)).collect();
    let train_articles = article_vecs(&train_docs, &vectors.train)?;
    let test_articles = article_vecs(&test_docs, &vectors.test)?;
    let means = topic_means(&train_articles);
    let train_domains = aggregate_domain_with(&train_articles, agg, &means)?;
    let test_domains = aggregate_domain_with(&test_articles, agg, &means)?;
    let unzip = |m: BTreeMap<String, Vec<f64>>| {
        let y = m.keys().map(|k| domain_label[k.as_str()]).collect();
        let (ids, x): (Vec<String>, Vec<Vec<f64>>) = m.into_iter().unzip();
        (ids, x, y)
    };
    let (train_ids, train_x, train_y) = unzip(train_domains);
    let (test_ids, test_x, test_y) = unzip(test_domains);
    Ok(Design { train_ids, train_x, train_y, test_ids, test_x, test_y })
}

struct CellContext<'a> {
    ds: &'a Dataset,
    seed: u64,
    split_hash: &'a str,
    embedding: String,
    agg: Aggregation,
    target: Target,
}

impl CellContext<'_> {
    fn cell(&self, scheme: LabelScheme, method: Method, n_train: usize, n_test: usize) -> CellResult {
        CellResult {
            dataset: self.ds.name.clone(),
            seed: self.seed,
            embedding: self.embedding.clone(),
            scheme,
            aggregation: self.agg,
            target: self.target,
            method,
            split_hash: self.split_hash.to_string(),
            n_train,
            n_test,
            scores: None,
            converged: None,
            error: None,
        }
    }

    fn prediction_rows(
        &self,
        ids: &[String],
        truth: &[usize],
        preds: &[usize],
        probs: &[f64],
        scheme_name: &str,
        scheme: LabelScheme,
    ) -> Vec<PredictionRow> {
        ids.iter()
            .zip(truth)
            .zip(preds.iter().zip(probs))
            .map(|((id, &t), (&p, &prob))| PredictionRow {
                dataset: self.ds.name.clone(),
                seed: self.seed,
                doc_or_domain_id: id.clone(),
                true_label: scheme.class_name(t).to_string(),
                pred_label: scheme.class_name(p).to_string(),
                scheme: scheme_name.to_string(),
                aggregation: self.agg,
                embedding_config: self.embedding.clone(),
                prob_max: prob,
            })
            .collect()
    }
}

#[derive(Clone)]
struct Fitted {
    preds: Vec<usize>,
    probs: Vec<f64>,
    converged: bool,
}

type Fit = std::result::Result<Fitted, String>;

/// Softmax cells of one embedding and one view, for every scheme.
fn classify(
    ctx: &CellContext<'_>,
    d: &Design,
    schemes: &[LabelScheme],
    cfg: &GridConfig,
) -> (Vec<CellResult>, Vec<PredictionRow>) {
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    let (n_train, n_test) = (d.train_ids.len(), d.test_ids.len());

    let fit = |scheme: LabelScheme| -> Fit {
        if d.test_ids.is_empty() {
            return Err("empty test set".into());
        }
        let train_rows: Vec<&[f64]> = d.train_x.iter().map(Vec::as_slice).collect();
        let test_rows: Vec<&[f64]> = d.test_x.iter().map(Vec::as_slice).collect();
        let y: Vec<usize> = d.train_y.iter().map(|&l| scheme.map(l)).collect();
        let run = || -> Result<Fitted> {
            let model = train_softmax(&to_matrix(&train_rows)?, &y, &cfg.softmax)?;
            let preds = model.predict(&to_matrix(&test_rows)?);
            Ok(Fitted {
                preds: preds.iter().map(|p| p.class).collect(),
                probs: preds.iter().map(|p| p.prob).collect(),
                converged: model.converged,
            })
        };
        run().map_err(|e| e.to_string())
    };

    let needs_full = schemes.contains(&LabelScheme::Full)
        || (cfg.regroup_full && schemes.iter().any(|&s| s != LabelScheme::Full));
    let full: Option<Fit> = needs_full.then(|| fit(LabelScheme::Full));

    let mut record = |cell: &mut CellResult, fitted: Fit, truth: &[usize], scheme_name: &str, scheme: LabelScheme| {
        let scored = fitted.and_then(|f| {
            let s = score(&f.preds, truth).map_err(|e| e.to_string())?;
            Ok((s, f))
        });
        match scored {
            Ok((s, f)) => {
                cell.scores = Some(s);
                cell.converged = Some(f.converged);
                rows.extend(ctx.prediction_rows(&d.test_ids, truth, &f.preds, &f.probs, scheme_name, scheme));
            }
            Err(e) => cell.error = Some(e),
        }
    };

    for &scheme in schemes {
        let truth: Vec<usize> = d.test_y.iter().map(|&l| scheme.map(l)).collect();
        let native = match (scheme, &full) {
            (LabelScheme::Full, Some(f)) => f.clone(),
            _ => fit(scheme),
        };
        let mut cell = ctx.cell(scheme, Method::Native, n_train, n_test);
        record(&mut cell, native, &truth, scheme.as_str(), scheme);
        cells.push(cell);

        if scheme != LabelScheme::Full && cfg.regroup_full {
            let mut cell = ctx.cell(scheme, Method::Regrouped, n_train, n_test);
            let regrouped = full.clone().expect("full model fitted").map(|mut f| {
                f.preds = regroup_predictions(&f.preds, scheme);
                f
            });
            let name = format!("full->{}", scheme.as_str());
            record(&mut cell, regrouped, &truth, &name, scheme);
            cells.push(cell);
        }
    }
    (cells, rows)
}

fn zero_rule_cells(ctx: &CellContext<'_>, d: &Design, schemes: &[LabelScheme]) -> (Vec<CellResult>, Vec<PredictionRow>) {
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for &scheme in schemes {
        let mut cell = ctx.cell(scheme, Method::ZeroRule, d.train_ids.len(), d.test_ids.len());
        let y: Vec<usize> = d.train_y.iter().map(|&l| scheme.map(l)).collect();
        let truth: Vec<usize> = d.test_y.iter().map(|&l| scheme.map(l)).collect();
        match zero_rule(&y).and_then(|z| {
            let p = z.predict(truth.len());
            Ok((score(&p, &truth)?, p))
        }) {
            Ok((s, p)) => {
                cell.scores = Some(s);
                let ones = vec![1.0; p.len()];
                rows.extend(ctx.prediction_rows(&d.test_ids, &truth, &p, &ones, scheme.as_str(), scheme));
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
        cells.push(cell);
    }
    (cells, rows)
}

fn concat_components(parts: &[&SplitVectors]) -> SplitVectors {
    let join = |pick: fn(&SplitVectors) -> &BTreeMap<String, Vec<f64>>| {
        pick(parts[0])
            .keys()
            .map(|id| {
                let v: Vec<f64> = parts.iter().flat_map(|p| pick(p)[id].iter().copied()).collect();
                (id.clone(), v)
            })
            .collect()
    };
    SplitVectors {
        train: join(|s| &s.train),
        test: join(|s| &s.test),
        all_oov: parts.iter().map(|p| p.all_oov).sum(),
    }
}

/// Pairs the seeds of two cell groups and tests whether `a` beats `b`.
fn compare(a: &[&CellResult], b: &[&CellResult], b_name: &str) -> PairedComparison {
    let first = a[0];
    let b_by_seed: BTreeMap<u64, &CellResult> = b.iter().map(|c| (c.seed, *c)).collect();
    let mut hashes = Vec::new();
    let mut acc = Vec::new();
    let mut f1 = Vec::new();
    for ca in a {
        let Some(cb) = b_by_seed.get(&ca.seed) else { continue };
        // pairing is only valid on identical test memberships
        if ca.split_hash != cb.split_hash {
            continue;
        }
        if let (Some(sa), Some(sb)) = (ca.scores, cb.scores) {
            hashes.push(ca.split_hash.clone());
            acc.push(sa.accuracy - sb.accuracy);
            f1.push(sa.macro_f1 - sb.macro_f1);
        }
    }
    PairedComparison {
        dataset: first.dataset.clone(),
        a: first.embedding.clone(),
        b: b_name.to_string(),
        scheme: first.scheme,
        aggregation: first.aggregation,
        target: first.target,
        method: first.method,
        split_hashes: hashes,
        accuracy: (!acc.is_empty()).then(|| wilcoxon_one_sided(&acc)),
        macro_f1: (!f1.is_empty()).then(|| wilcoxon_one_sided(&f1)),
        accuracy_diffs: acc,
        macro_f1_diffs: f1,
    }
}

fn summarize(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<_, Vec<MetricPair>> = BTreeMap::new();
    for c in cells {
        if let Some(s) = c.scores {
            groups.entry(c.group_key()).or_default().push(s);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, embedding, scheme, aggregation, target, method), scores)| {
            let acc: Vec<f64> = scores.iter().map(|s| s.accuracy).collect();
            let f1: Vec<f64> = scores.iter().map(|s| s.macro_f1).collect();
            let (am, asd) = mean_std(&acc);
            let (fm, fsd) = mean_std(&f1);
            SummaryRow {
                dataset,
                embedding,
                aggregation,
                target,
                method,
                scheme,
                n: scores.len(),
                accuracy_mean: am,
                accuracy_std: asd,
                macro_f1_mean: fm,
                macro_f1_std: fsd,
                accuracy: format_mean_std(&acc),
                macro_f1: format_mean_std(&f1),
            }
        })
        .collect()
}

fn case_study(
    ds: &Dataset,
    splits: &[(u64, SplitSpec)],
    cfg: &GridConfig,
    exec: Exec,
) -> (CaseStudy, Vec<(String, GraphMetricVector)>) {
    let metrics: Vec<(String, GraphMetricVector)> = exec.map(&ds.documents, |d| {
        let m = build_graph(d, GraphVariant::Base, NodeResources::default())
            .map(|g| graph_metrics(&g))
            .unwrap_or_else(|_| graph_metrics(&crate::graph::DocGraph {
                doc_id: d.id.clone(),
                variant: GraphVariant::Base,
                nodes: Vec::new(),
                edges: Vec::new(),
            }));
        (d.id.clone(), m)
    });
    let ordinal: Vec<f64> = ds.documents.iter().map(|d| d.label.ordinal() as f64).collect();
    let correlations = METRIC_NAMES
        .iter()
        .map(|&name| {
            let values: Vec<f64> = metrics.iter().map(|(_, m)| m.get(name).unwrap_or(0.0)).collect();
            let res = pearson_r(&ordinal, &values).ok().flatten();
            MetricCorrelation {
                metric: name.to_string(),
                n: values.len(),
                r: res.as_ref().map(|r| r.r),
                p_value: res.map(|r| r.p_value),
            }
        })
        .collect();

    let by_id: BTreeMap<&str, (&GraphMetricVector, usize)> = ds
        .documents
        .iter()
        .zip(&metrics)
        .map(|(d, (_, m))| (d.id.as_str(), (m, LabelScheme::Binary.map(d.label))))
        .collect();
    let baseline = splits
        .iter()
        .map(|(seed, split)| {
            let rows = |ids: &[String]| -> Vec<(GraphMetricVector, usize)> {
                ids.iter()
                    .filter_map(|id| by_id.get(id.as_str()).map(|(m, y)| ((*m).clone(), *y)))
                    .collect()
            };
            let res = metrics_baseline(&rows(&split.train_ids), &rows(&split.test_ids), &METRIC_NAMES, &cfg.softmax);
            MetricsBaselineRun {
                seed: *seed,
                split_hash: split.hash(),
                scores: res.as_ref().ok().map(|r| r.scores),
                dropped_columns: res.as_ref().map(|r| r.dropped_columns.clone()).unwrap_or_default(),
                error: res.err().map(|e| e.to_string()),
            }
        })
        .collect();
    (
        CaseStudy {
            dataset: ds.name.clone(),
            correlations,
            baseline,
        },
        metrics,
    )
}

/// A train/test split of one dataset for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSplit {
    pub dataset: usize,
    pub seed: u64,
    pub split: SplitSpec,
}

/// Embeddings per (split index, component); failures are kept as messages.
pub type VectorTable = BTreeMap<(usize, Component), std::result::Result<SplitVectors, String>>;

/// Validates the grid and draws one split per dataset and seed.
pub fn plan_splits(datasets: &[Dataset], cfg: &GridConfig) -> Result<Vec<PlannedSplit>> {
    cfg.validate()?;
    let names: BTreeSet<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    if names.len() != datasets.len() {
        return Err(Error::Config("dataset names must be unique".into()));
    }
    let mut splits = Vec::new();
    for (di, ds) in datasets.iter().enumerate() {
        for &seed in &cfg.seeds {
            splits.push(PlannedSplit {
                dataset: di,
                seed,
                split: make_split(&ds.documents, seed, cfg.train_fraction, cfg.stratify)?,
            });
        }
    }
    Ok(splits)
}

/// Every component the configured embeddings need.
pub fn required_components(cfg: &GridConfig) -> BTreeSet<Component> {
    cfg.embeddings.iter().flat_map(|e| e.components()).collect()
}

pub fn embed_all(datasets: &[Dataset], splits: &[PlannedSplit], cfg: &GridConfig, exec: Exec) -> VectorTable {
    let components = required_components(cfg);
    let jobs: Vec<(usize, Component)> = (0..splits.len())
        .flat_map(|s| components.iter().map(move |&c| (s, c)))
        .collect();
    let trained = exec.map(&jobs, |&(s, comp)| {
        let PlannedSplit { dataset: di, seed, ref split } = splits[s];
        embed_split(&datasets[di], split, comp, cfg, seed, exec).map_err(|e| {
            log::warn!("dataset {} seed {seed}: {} failed: {e}", datasets[di].name, comp.name());
            e.to_string()
        })
    });
    jobs.into_iter().zip(trained).collect()
}

/// Fits and scores every classifier cell, plus the Zero Rule cells. Cells
/// come back sorted by group, then seed.
pub fn classify_all(
    datasets: &[Dataset],
    splits: &[PlannedSplit],
    vectors: &VectorTable,
    cfg: &GridConfig,
    exec: Exec,
) -> (Vec<CellResult>, Vec<PredictionRow>) {
    let mut cell_jobs = Vec::new();
    for (s, planned) in splits.iter().enumerate() {
        for view in views(&datasets[planned.dataset], &cfg.aggregations) {
            cell_jobs.push((s, None, view));
            for &e in &cfg.embeddings {
                cell_jobs.push((s, Some(e), view));
            }
        }
    }
    let results = exec.map(&cell_jobs, |&(s, emb, (agg, target))| {
        let PlannedSplit { dataset: di, seed, ref split } = splits[s];
        let ds = &datasets[di];
        let split_hash = split.hash();
        let ctx = CellContext {
            ds,
            seed,
            split_hash: &split_hash,
            embedding: emb.map_or_else(|| ZERO_RULE.to_string(), |e| e.to_string()),
            agg,
            target,
        };
        let fail = |msg: String, methods: &[Method]| {
            let cells = cfg
                .schemes
                .iter()
                .flat_map(|&scheme| {
                    methods.iter().map(move |&m| (scheme, m))
                })
                .filter(|&(scheme, m)| m != Method::Regrouped || (scheme != LabelScheme::Full && cfg.regroup_full))
                .map(|(scheme, m)| {
                    let mut c = ctx.cell(scheme, m, 0, 0);
                    c.error = Some(msg.clone());
                    c
                })
                .collect();
            (cells, Vec::new())
        };
        let Some(emb) = emb else {
            // the zero rule only needs labels, so any vectors will do
            let placeholder = SplitVectors {
                train: split.train_ids.iter().map(|id| (id.clone(), vec![0.0])).collect(),
                test: split.test_ids.iter().map(|id| (id.clone(), vec![0.0])).collect(),
                all_oov: 0,
            };
            return match design(ds, split, &placeholder, agg, target) {
                Ok(d) => zero_rule_cells(&ctx, &d, &cfg.schemes),
                Err(e) => fail(e.to_string(), &[Method::ZeroRule]),
            };
        };
        let mut parts = Vec::new();
        for comp in emb.components() {
            match vectors.get(&(s, comp)) {
                Some(Ok(v)) => parts.push(v),
                Some(Err(e)) => return fail(format!("{}: {e}", comp.name()), &[Method::Native, Method::Regrouped]),
                None => return fail(format!("{}: no embeddings", comp.name()), &[Method::Native, Method::Regrouped]),
            }
        }
        let joined;
        let v = if parts.len() == 1 {
            parts[0]
        } else {
            joined = concat_components(&parts);
            &joined
        };
        match design(ds, split, v, agg, target) {
            Ok(d) => classify(&ctx, &d, &cfg.schemes, cfg),
            Err(e) => fail(e.to_string(), &[Method::Native, Method::Regrouped]),
        }
    });

    let mut cells = Vec::new();
    let mut predictions = Vec::new();
    for (c, p) in results {
        cells.extend(c);
        predictions.extend(p);
    }
    cells.sort_by(|a, b| a.group_key().cmp(&b.group_key()).then(a.seed.cmp(&b.seed)));

    (cells, predictions)
}

/// Paired tests, summary tables and the graph-metric study over finished
/// cells.
pub fn assemble_report(
    datasets: &[Dataset],
    splits: &[PlannedSplit],
    cells: Vec<CellResult>,
    cfg: &GridConfig,
    exec: Exec,
) -> (ExperimentReport, BTreeMap<String, Vec<(String, GraphMetricVector)>>) {
    let mut groups: BTreeMap<_, Vec<&CellResult>> = BTreeMap::new();
    for c in &cells {
        groups.entry(c.group_key()).or_default().push(c);
    }
    let mut comparisons = Vec::new();
    for (key, members) in &groups {
        let (dataset, embedding, scheme, agg, target, method) = key;
        if *method == Method::ZeroRule {
            continue;
        }
        let base_key = (dataset.clone(), ZERO_RULE.to_string(), *scheme, *agg, *target, Method::ZeroRule);
        if let Some(base) = groups.get(&base_key) {
            comparisons.push(compare(members, base, ZERO_RULE));
        }
        for (a, b) in &cfg.comparisons {
            if a.to_string() == *embedding {
                let other = (dataset.clone(), b.to_string(), *scheme, *agg, *target, *method);
                if let Some(bm) = groups.get(&other) {
                    comparisons.push(compare(members, bm, &b.to_string()));
                }
            }
        }
    }

    let mut case_studies = Vec::new();
    let mut article_metrics = BTreeMap::new();
    if cfg.graph_metrics {
        for (di, ds) in datasets.iter().enumerate() {
            let ds_splits: Vec<(u64, SplitSpec)> = splits
                .iter()
                .filter(|p| p.dataset == di)
                .map(|p| (p.seed, p.split.clone()))
                .collect();
            let (cs, metrics) = case_study(ds, &ds_splits, cfg, exec);
            case_studies.push(cs);
            article_metrics.insert(ds.name.clone(), metrics);
        }
    }

    let summary = summarize(&cells);
    let mut report = ExperimentReport {
        format_version: REPORT_FORMAT_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        datasets: datasets
            .iter()
            .map(|d| DatasetRecord {
                name: d.name.clone(),
                documents: d.documents.len(),
                corpus_hash: d.corpus_hash(),
            })
            .collect(),
        splits: splits
            .iter()
            .map(|p| SplitRecord {
                dataset: datasets[p.dataset].name.clone(),
                seed: p.seed,
                hash: p.split.hash(),
                n_train: p.split.train_ids.len(),
                n_test: p.split.test_ids.len(),
            })
            .collect(),
        cells,
        comparisons,
        summary,
        case_study: case_studies,
        report_hash: String::new(),
    };
    report.report_hash = report.compute_hash();
    (report, article_metrics)
}

/// Runs every cell of the grid. Cell failures are recorded in the report
/// and do not stop the run; an invalid configuration or split does.
pub fn run_grid(datasets: &[Dataset], cfg: &GridConfig, exec: Exec) -> Result<GridOutput> {
    let splits = plan_splits(datasets, cfg)?;
    let vectors = embed_all(datasets, &splits, cfg, exec);
    let (cells, predictions) = classify_all(datasets, &splits, &vectors, cfg, exec);
    let (report, article_metrics) = assemble_report(datasets, &splits, cells, cfg, exec);
    Ok(GridOutput {
        report,
        predictions,
        article_metrics,
    })
}

impl ExperimentReport {
    pub fn compute_hash(&self) -> String {
        let mut copy = self.clone();
        copy.report_hash.clear();
        hex_digest(&serde_json::to_vec(&copy).expect("report serializes"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Mean (std) table: one row per dataset, embedding, view and method,
    /// with accuracy and macro F1 columns per scheme.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "dataset,embedding,aggregation,target,method,scheme,n,accuracy,macro_f1,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std\n",
        );
        for r in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},\"{}\",\"{}\",{:?},{:?},{:?},{:?}\n",
                r.dataset,
                r.embedding,
                r.aggregation,
                serde_plain(&r.target),
                serde_plain(&r.method),
                r.scheme,
                r.n,
                r.accuracy,
                r.macro_f1,
                r.accuracy_mean,
                r.accuracy_std,
                r.macro_f1_mean,
                r.macro_f1_std
            ));
        }
        out
    }

    pub fn comparisons_csv(&self) -> String {
        let mut out = String::from(
            "dataset,a,b,scheme,aggregation,target,method,n_pairs,accuracy_w,accuracy_p,macro_f1_w,macro_f1_p\n",
        );
        let fmt = |w: &Option<WilcoxonResult>| match w {
            Some(w) => (format!("{:?}", w.statistic), format!("{:?}", w.p_value)),
            None => (String::new(), String::new()),
        };
        for c in &self.comparisons {
            let (aw, ap) = fmt(&c.accuracy);
            let (fw, fp) = fmt(&c.macro_f1);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.dataset,
                c.a,
                c.b,
                c.scheme,
                c.aggregation,
                serde_plain(&c.target),
                serde_plain(&c.method),
                c.split_hashes.len(),
                aw,
                ap,
                fw,
                fp
            ));
        }
        out
    }

    /// Writes `report.json`, `summary.csv` and `comparisons.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.json", self.to_json()),
            ("summary.csv", self.summary_csv()),
            ("comparisons.csv", self.comparisons_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut out = String::from("doc_or_domain_id,true_label,pred_label,scheme,aggregation,embedding_config,prob_max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:?}\n",
            csv_field(&r.doc_or_domain_id),
            r.true_label,
            r.pred_label,
            r.scheme,
            r.aggregation,
            r.embedding_config,
            r.prob_max
        ));
    }
    out
}

pub fn article_metrics_csv(rows: &[(String, GraphMetricVector)], labels: &BTreeMap<String, i32>) -> String {
    let mut out = format!("doc_id,ordinal_label,{},empty\n", METRIC_NAMES.join(","));
    for (id, m) in rows {
        let values: Vec<String> = METRIC_NAMES
            .iter()
            .map(|n| match (*n, m.degree_assortativity) {
                ("degree_assortativity", None) => String::new(),
                _ => format!("{:?}", m.get(n).unwrap_or(0.0)),
            })
            .collect();
        let label = labels.get(id).map_or(String::new(), |l| l.to_string());
        out.push_str(&format!("{},{label},{},{}\n", csv_field(id), values.join(","), m.empty));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn small_hyper() -> Hyperparams {
        Hyperparams {
            dim: 16,
            epochs: 10,
            ..Hyperparams::default()
        }
    }

    fn dataset(docs: usize, seed: u64) -> Dataset {
        let corpus = generate(&SynthConfig { docs, seed, ..SynthConfig::default() });
        Dataset::new("synthetic", corpus.documents(Exec::Sequential))
    }

    #[test]
    fn embedding_names_round_trip() {
        for s in ["graph2vec:base", "graph2vec:word-node", "graph2vec:vector-node", "doc2vec:dm", "doc2vec:dbow", "hybrid:word-node+dbow"] {
            let e: EmbeddingConfig = s.parse().unwrap();
            assert_eq!(e.to_string(), s);
        }
        assert!("graph2vec:nope".parse::<EmbeddingConfig>().is_err());
        assert!("doc2vec:graph2vec".parse::<EmbeddingConfig>().is_err());
        assert!("word2vec:dm".parse::<EmbeddingConfig>().is_err());
    }

    #[test]
    fn grid_cardinality() {
        let ds = dataset(60, 1);
        let cfg = GridConfig {
            embeddings: vec![EmbeddingConfig::Graph2Vec(GraphVariant::WordNode), EmbeddingConfig::Doc2Vec(EmbedMode::Dbow)],
            schemes: vec![LabelScheme::Full, LabelScheme::Binary],
            regroup_full: false,
            hyper: small_hyper(),
            ..GridConfig::default()
        };
        let out = run_grid(&[ds], &cfg, Exec::Parallel).unwrap();
        let native = out.report.cells.iter().filter(|c| c.method == Method::Native).count();
        let zero = out.report.cells.iter().filter(|c| c.method == Method::ZeroRule).count();
        assert_eq!((native, zero), (4, 2));
        assert!(out.report.cells.iter().all(|c| c.error.is_none()), "{:?}", out.report.cells);
        // every native cell is compared with the zero rule
        assert_eq!(out.report.comparisons.len(), 4);
    }

    #[test]
    fn regrouped_cells_share_split_with_native() {
        let ds = dataset(60, 2);
        let cfg = GridConfig {
            schemes: vec![LabelScheme::Full, LabelScheme::Lcr, LabelScheme::Binary],
            seeds: vec![0, 1],
            hyper: small_hyper(),
            ..GridConfig::default()
        };
        let out = run_grid(&[ds], &cfg, Exec::Sequential).unwrap();
        let regrouped: Vec<_> = out.report.cells.iter().filter(|c| c.method == Method::Regrouped).collect();
        assert_eq!(regrouped.len(), 4);
        for r in regrouped {
            let native = out
                .report
                .cells
                .iter()
                .find(|c| c.method == Method::Native && c.scheme == r.scheme && c.seed == r.seed)
                .unwrap();
            assert_eq!(native.split_hash, r.split_hash);
            assert_eq!(native.n_test, r.n_test);
        }
    }

    #[test]
    fn domain_aggregation_cells() {
        let ds = dataset(80, 3);
        let cfg = GridConfig {
            aggregations: vec![Aggregation::Mean, Aggregation::TopicDiffAvg, Aggregation::TopicDiffNorm],
            hyper: small_hyper(),
            ..GridConfig::default()
        };
        let out = run_grid(&[ds], &cfg, Exec::Parallel).unwrap();
        for c in &out.report.cells {
            assert_eq!(c.target, Target::Domain);
            // four biased and four unbiased domains
            assert_eq!(c.n_train, 8, "{c:?}");
        }
    }

    #[test]
    fn article_annotated_corpora_skip_aggregation() {
        let mut ds = dataset(60, 4);
        for d in &mut ds.documents {
            d.article_label = Some(crate::corpus::BiasLabel::Center);
        }
        ds.documents[0].article_label = Some(crate::corpus::BiasLabel::Left);
        ds.documents[1].article_label = Some(crate::corpus::BiasLabel::Right);
        let v = views(&ds, &[Aggregation::None, Aggregation::Mean]);
        assert_eq!(v, vec![(Aggregation::None, Target::Article), (Aggregation::None, Target::Domain)]);
        let cfg = GridConfig { hyper: small_hyper(), ..GridConfig::default() };
        let out = run_grid(&[ds.clone()], &cfg, Exec::Parallel).unwrap();
        // no aggregation: one row per test article in both targets
        for c in out.report.cells.iter().filter(|c| c.error.is_none()) {
            assert_eq!(c.n_test, 12);
        }
    }

    #[test]
    fn failures_are_recorded() {
        let ds = dataset(30, 5);
        let cfg = GridConfig {
            hyper: Hyperparams { min_count: 10_000, ..small_hyper() },
            ..GridConfig::default()
        };
        let out = run_grid(&[ds], &cfg, Exec::Parallel).unwrap();
        let failed: Vec<_> = out.report.cells.iter().filter(|c| c.error.is_some()).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|c| c.method != Method::ZeroRule));
        assert!(out.report.cells.iter().any(|c| c.method == Method::ZeroRule && c.scores.is_some()));
    }

    #[test]
    fn report_is_deterministic_and_hashed() {
        let cfg = GridConfig {
            embeddings: vec![EmbeddingConfig::Hybrid(GraphVariant::Base, EmbedMode::Dm)],
            schemes: vec![LabelScheme::Lcr],
            seeds: vec![3, 4],
            hyper: small_hyper(),
            graph_metrics: true,
            ..GridConfig::default()
        };
        let a = run_grid(&[dataset(50, 6)], &cfg, Exec::Parallel).unwrap().report;
        let b = run_grid(&[dataset(50, 6)], &cfg, Exec::Sequential).unwrap().report;
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.report_hash, a.compute_hash());
        let back = ExperimentReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back.to_json(), a.to_json());
        assert_eq!(a.case_study[0].correlations.len(), METRIC_NAMES.len());
    }

    #[test]
    fn summary_and_csv_formats() {
        let cells: Vec<CellResult> = [0.5, 0.7]
            .iter()
            .enumerate()
            .map(|(i, &acc)| CellResult {
                dataset: "d".into(),
                seed: i as u64,
                embedding: "doc2vec:dm".into(),
                scheme: LabelScheme::Binary,
                aggregation: Aggregation::None,
                target: Target::Article,
                method: Method::Native,
                split_hash: format!("h{i}"),
                n_train: 8,
                n_test: 2,
                scores: Some(MetricPair { accuracy: acc, macro_f1: acc }),
                converged: Some(true),
                error: None,
            })
            .collect();
        let rows = summarize(&cells);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].accuracy, "0.600 (.141)");
        let csv = predictions_csv(&[PredictionRow {
            dataset: "d".into(),
            seed: 0,
            doc_or_domain_id: "a,b".into(),
            true_label: "biased".into(),
            pred_label: "unbiased".into(),
            scheme: "binary".into(),
            aggregation: Aggregation::None,
            embedding_config: "doc2vec:dm".into(),
            prob_max: 0.75,
        }]);
        assert_eq!(
            csv,
            "doc_or_domain_id,true_label,pred_label,scheme,aggregation,embedding_config,prob_max\n\"a,b\",biased,unbiased,binary,none,doc2vec:dm,0.75\n"
        );
    }

    #[test]
    fn pairing_skips_mismatched_splits() {
        let mk = |seed: u64, hash: &str, acc: f64, emb: &str| CellResult {
            dataset: "d".into(),
            seed,
            embedding: emb.into(),
            scheme: LabelScheme::Binary,
            aggregation: Aggregation::None,
            target: Target::Article,
            method: Method::Native,
            split_hash: hash.into(),
            n_train: 1,
            n_test: 1,
            scores: Some(MetricPair { accuracy: acc, macro_f1: acc }),
            converged: None,
            error: None,
        };
        let a = [mk(0, "x", 0.9, "a"), mk(1, "y", 0.8, "a")];
        let b = [mk(0, "x", 0.5, "b"), mk(1, "z", 0.5, "b")];
        let c = compare(&a.iter().collect::<Vec<_>>(), &b.iter().collect::<Vec<_>>(), "b");
        assert_eq!(c.split_hashes, vec!["x"]);
        assert!((c.accuracy_diffs[0] - 0.4).abs() < 1e-12);
        assert_eq!(c.accuracy.unwrap().p_value, 0.5);
    }
}
