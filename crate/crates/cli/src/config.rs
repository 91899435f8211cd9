//! Run configuration: one TOML file with flat keys, plus an optional `[llm]`
//! table. Relative paths are resolved against the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semgraph::detector::LabelScheme;
use semgraph::experiment::GridConfig;
use semgraph::graph::GraphVariant;
use semgraph::Exec;

use crate::error::{io_err, CliError, CliResult};

const RUN_KEYS: [&str; 13] = [
    "corpus",
    "domains",
    "lemmas",
    "stoplist",
    "lexicon",
    "vectors",
    "output_dir",
    "dataset_name",
    "include_title",
    "variants",
    "sequential",
    "threads",
    "llm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// `domain,label` CSV of bias ratings.
    pub domains: PathBuf,
    pub lemmas: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to the corpus file stem.
    pub dataset_name: Option<String>,
    pub include_title: bool,
    /// Graph variants to build in addition to those the embeddings use.
    pub variants: Vec<GraphVariant>,
    pub sequential: bool,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub grid: GridConfig,
    pub llm: Option<LlmConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::new(),
            domains: PathBuf::new(),
            lemmas: None,
            stoplist: None,
            lexicon: None,
            vectors: None,
            output_dir: PathBuf::from("out"),
            dataset_name: None,
            include_title: false,
            variants: Vec::new(),
            sequential: false,
            threads: None,
            grid: GridConfig::default(),
            llm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmSplit {
    /// The test articles of one seed's split.
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// A chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub scheme: LabelScheme,
    /// Must equal the scheme's class names when given.
    pub labels: Option<Vec<String>>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub split: LlmSplit,
    /// Seed whose test split is used; defaults to the first grid seed.
    pub seed: Option<u64>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            scheme: LabelScheme::Binary,
            labels: None,
            timeout_secs: 60,
            max_retries: 2,
            max_in_flight: 4,
            split: LlmSplit::Test,
            seed: None,
        }
    }
}

impl LlmConfig {
    pub fn labels(&self) -> Vec<String> {
        self.scheme.classes().iter().map(|s| s.to_string()).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(given) = &self.labels {
            let expected = self.labels();
            let normalized: Vec<String> = given.iter().map(|l| l.trim().to_lowercase()).collect();
            if normalized != expected {
                return Err(CliError::Config(format!(
                    "llm.labels {given:?} do not match the {} scheme classes {expected:?}",
                    self.scheme
                )));
            }
        }
        if self.max_in_flight == 0 {
            return Err(CliError::Config("llm.max_in_flight must be positive".into()));
        }
        if self.timeout_secs == 0 {
            return Err(CliError::Config("llm.timeout_secs must be positive".into()));
        }
        if !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return Err(CliError::Config(format!("llm.endpoint {:?} is not an http(s) URL", self.endpoint)));
        }
        Ok(())
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub sequential: bool,
    /// `key=value` pairs; values are TOML, or a bare string.
    pub set: Vec<String>,
}

fn parse_override(pair: &str) -> CliResult<(String, toml::Value)> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {pair:?} is not key=value")))?;
    let key = key.trim().to_string();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    Ok((key, value))
}

fn known_keys() -> BTreeSet<String> {
    let grid = serde_json::to_value(GridConfig::default()).expect("grid config serializes");
    let mut keys: BTreeSet<String> = RUN_KEYS.iter().map(|k| k.to_string()).collect();
    if let serde_json::Value::Object(map) = grid {
        keys.extend(map.keys().cloned());
    }
    keys
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let file_err = |reason: String| CliError::ConfigFile {
            path: path.to_path_buf(),
            reason,
        };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| file_err(e.to_string()))?;
        for pair in &overrides.set {
            let (key, value) = parse_override(pair)?;
            table.insert(key, value);
        }
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} is too large")))?;
            table.insert("seeds".into(), toml::Value::Array(vec![toml::Value::Integer(seed)]));
        }
        let known = known_keys();
        let unknown: Vec<&String> = table.keys().filter(|k| !known.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(file_err(format!("unknown keys {unknown:?}")));
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| file_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Some(dir) = &overrides.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.sequential |= overrides.sequential;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.domains);
        fix(&mut self.output_dir);
        for p in [&mut self.lemmas, &mut self.stoplist, &mut self.lexicon, &mut self.vectors]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for (key, path) in self.input_files() {
            if path.as_os_str().is_empty() {
                return Err(CliError::Config(format!("`{key}` is required")));
            }
            if !path.is_file() {
                return Err(CliError::Config(format!("{key} file {} does not exist", path.display())));
            }
        }
        self.grid.validate()?;
        if self.graph_variants().contains(&GraphVariant::VectorNode) && self.vectors.is_none() {
            return Err(CliError::Config(
                "the vector-node graph variant needs a `vectors` file".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        if let Some(llm) = &self.llm {
            llm.validate()?;
        }
        Ok(())
    }

    /// Every referenced input file, keyed by its config name.
    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        let mut files = vec![("corpus", self.corpus.as_path()), ("domains", self.domains.as_path())];
        for (key, p) in [
            ("lemmas", &self.lemmas),
            ("stoplist", &self.stoplist),
            ("lexicon", &self.lexicon),
            ("vectors", &self.vectors),
        ] {
            if let Some(p) = p {
                files.push((key, p.as_path()));
            }
        }
        files
    }

    pub fn dataset_name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.corpus
                .file_stem()
                .map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// Variants the build stage produces, sorted.
    pub fn graph_variants(&self) -> Vec<GraphVariant> {
        let mut set: BTreeSet<GraphVariant> = self.variants.iter().copied().collect();
        for e in &self.grid.embeddings {
            for c in e.components() {
                if let semgraph::experiment::Component::Graph(v) = c {
                    set.insert(v);
                }
            }
        }
        set.into_iter().collect()
    }

    pub fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    /// SHA-256 of the resolved configuration, leaving out settings that
    /// only choose how the work is scheduled.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            sequential: false,
            threads: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("run config serializes");
        hex(&Sha256::digest(json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use semgraph::detector::Aggregation;
    use semgraph::experiment::EmbeddingConfig;

    fn workspace() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("d.csv"), "").unwrap();
        dir
    }

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn flat_keys_and_relative_paths() {
        let dir = workspace();
        let p = write(
            dir.path(),
            r#"
corpus = "c.jsonl"
domains = "d.csv"
embeddings = ["graph2vec:word-node", "hybrid:base+dbow"]
schemes = ["full", "binary"]
aggregations = ["none", "topic-diff-norm"]
seeds = [1, 2]
comparisons = [["graph2vec:word-node", "hybrid:base+dbow"]]

[hyper]
epochs = 5

[llm]
model = "local"
scheme = "lcr"
"#,
        );
        let cfg = RunConfig::load(&p, &Overrides::default()).unwrap();
        assert_eq!(cfg.corpus, dir.path().join("c.jsonl"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.grid.embeddings[1], "hybrid:base+dbow".parse::<EmbeddingConfig>().unwrap());
        assert_eq!(cfg.grid.aggregations, vec![Aggregation::None, Aggregation::TopicDiffNorm]);
        assert_eq!(cfg.grid.hyper.epochs, 5);
        assert_eq!(cfg.grid.hyper.dim, 128);
        assert_eq!(cfg.graph_variants(), vec![GraphVariant::Base, GraphVariant::WordNode]);
        assert_eq!(cfg.dataset_name(), "c");
        assert_eq!(cfg.llm.unwrap().labels(), vec!["left", "center", "right"]);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = workspace();
        let p = write(dir.path(), "corpus = \"c.jsonl\"\ndomains = \"d.csv\"\nseeds = [1, 2]\n");
        let o = Overrides {
            seed: Some(7),
            set: vec!["graph_metrics=true".into(), "dataset_name=news".into()],
            ..Overrides::default()
        };
        let cfg = RunConfig::load(&p, &o).unwrap();
        assert_eq!(cfg.grid.seeds, vec![7]);
        assert!(cfg.grid.graph_metrics);
        assert_eq!(cfg.dataset_name(), "news");
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = workspace();
        let cases = [
            ("corpus = \"c.jsonl\"\ndomains = \"d.csv\"\nembedings = []\n", "unknown keys"),
            ("corpus = \"missing.jsonl\"\ndomains = \"d.csv\"\n", "does not exist"),
            ("domains = \"d.csv\"\n", "`corpus` is required"),
            ("corpus = \"c.jsonl\"\ndomains = \"d.csv\"\nschemes = []\n", "at least one"),
            (
                "corpus = \"c.jsonl\"\ndomains = \"d.csv\"\nembeddings = [\"graph2vec:vector-node\"]\n",
                "vectors",
            ),
            (
                "corpus = \"c.jsonl\"\ndomains = \"d.csv\"\n[llm]\nscheme = \"binary\"\nlabels = [\"left\", \"right\"]\n",
                "do not match",
            ),
        ];
        for (body, needle) in cases {
            let p = write(dir.path(), body);
            let err = RunConfig::load(&p, &Overrides::default()).unwrap_err().to_string();
            assert!(err.contains(needle), "{body:?}: {err}");
        }
    }

    #[test]
    fn llm_labels_are_case_insensitive() {
        let cfg = LlmConfig {
            labels: Some(vec!["Biased".into(), "UNBIASED".into()]),
            ..LlmConfig::default()
        };
        cfg.validate().unwrap();
    }
}
