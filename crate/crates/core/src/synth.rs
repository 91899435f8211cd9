//! Synthetic labeled corpora for tests, benchmarks and the fixture pipeline.
//!
//! Biased articles are written by a dense generator (long sentences of words
//! drawn from a shared pool, so each sentence becomes a clique) and unbiased
//! articles by a sparse one (two-word sentences walking a fixed chain, so the
//! graph is a path). Both draw from the same vocabulary.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    ingest, BiasLabel, DomainTable, IngestOptions, LemmaTable, RawArticle, Stoplist,
};
use crate::error::Result;
use crate::graph::{SentimentLexicon, WordVectors};
use crate::par::Exec;

const SYLLABLES: [&str; 20] = [
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu", "na", "pe", "qui", "ro", "su",
    "ta", "ve", "wi", "xo", "zu",
];

/// A distinct three-syllable pseudo-word for every `i < 8000`.
pub fn pseudo_word(i: usize) -> String {
    let n = SYLLABLES.len();
    format!(
        "{}{}{}",
        SYLLABLES[(i / (n * n)) % n],
        SYLLABLES[(i / n) % n],
        SYLLABLES[i % n]
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub docs: usize,
    /// Share of articles from biased domains.
    pub biased_fraction: f64,
    pub vocab: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_dense_width: usize,
    pub max_dense_width: usize,
    pub domains_per_class: usize,
    pub topics: usize,
    /// When false, the generator is picked independently of the label.
    pub label_signal: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 200,
            biased_fraction: 0.5,
            vocab: 40,
            min_sentences: 8,
            max_sentences: 12,
            min_dense_width: 6,
            max_dense_width: 8,
            domains_per_class: 4,
            topics: 3,
            label_signal: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub articles: Vec<RawArticle>,
    pub domains: DomainTable,
}

const BIASED: [BiasLabel; 4] = [
    BiasLabel::FarLeft,
    BiasLabel::Left,
    BiasLabel::Right,
    BiasLabel::FarRight,
];
const UNBIASED: [BiasLabel; 3] = [BiasLabel::LeftCenter, BiasLabel::Center, BiasLabel::RightCenter];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn sentence(words: &[String]) -> String {
    let mut s = capitalize(&words[0]);
    for w in &words[1..] {
        s.push(' ');
        s.push_str(w);
    }
    s.push('.');
    s
}

fn dense_body(cfg: &SynthConfig, words: &[String], rng: &mut ChaCha8Rng) -> String {
    let k = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
    (0..k)
        .map(|_| {
            let width = rng.random_range(cfg.min_dense_width..=cfg.max_dense_width);
            let picked: Vec<String> = words.choose_multiple(rng, width).cloned().collect();
            sentence(&picked)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn chain_body(cfg: &SynthConfig, words: &[String], rng: &mut ChaCha8Rng) -> String {
    let k = rng
        .random_range(cfg.min_sentences..=cfg.max_sentences)
        .min(words.len() - 1);
    let start = rng.random_range(0..words.len() - k);
    (start..start + k)
        .map(|i| sentence(&words[i..i + 2]))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    assert!(cfg.vocab >= cfg.max_dense_width.max(3), "vocabulary too small");
    assert!(cfg.min_dense_width >= 2 && cfg.min_sentences >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words: Vec<String> = (0..cfg.vocab).map(pseudo_word).collect();

    let mut domains = DomainTable::default();
    let biased_domains: Vec<String> = (0..cfg.domains_per_class)
        .map(|i| {
            let d = format!("partisan{i}.example");
            domains.insert(d.clone(), BIASED[i % BIASED.len()]);
            d
        })
        .collect();
    let unbiased_domains: Vec<String> = (0..cfg.domains_per_class)
        .map(|i| {
            let d = format!("wire{i}.example");
            domains.insert(d.clone(), UNBIASED[i % UNBIASED.len()]);
            d
        })
        .collect();

    let n_biased = (cfg.docs as f64 * cfg.biased_fraction).round() as usize;
    let mut biased: Vec<bool> = (0..cfg.docs).map(|i| i < n_biased).collect();
    biased.shuffle(&mut rng);

    let articles = biased
        .iter()
        .enumerate()
        .map(|(i, &is_biased)| {
            let dense = if cfg.label_signal { is_biased } else { rng.random_bool(0.5) };
            let body = if dense {
                dense_body(cfg, &words, &mut rng)
            } else {
                chain_body(cfg, &words, &mut rng)
            };
            let pool = if is_biased { &biased_domains } else { &unbiased_domains };
            RawArticle {
                id: format!("syn-{i:04}"),
                title: String::new(),
                body,
                domain: pool[i % pool.len()].clone(),
                topic: format!("topic-{}", rng.random_range(0..cfg.topics.max(1))),
                article_label: None,
            }
        })
        .collect();
    SynthCorpus { articles, domains }
}

impl SynthCorpus {
    /// Ingests with identity lemmas and no stop words.
    pub fn documents(&self, exec: Exec) -> Vec<crate::corpus::Document> {
        let out = ingest(
            &self.articles,
            &self.domains,
            &LemmaTable::new(),
            &Stoplist::default(),
            &IngestOptions::default(),
            exec,
        );
        debug_assert!(out.excluded.is_empty());
        out.documents
    }
}

/// Random word vectors and valences for the first `vocab` pseudo-words.
pub fn synthetic_resources(vocab: usize, dim: usize, seed: u64) -> Result<(WordVectors, SentimentLexicon)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = WordVectors::new(dim);
    let mut lexicon = SentimentLexicon::new();
    for i in 0..vocab {
        let w = pseudo_word(i);
        vectors.insert(w.clone(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        lexicon.insert(w, rng.random_range(-1.0..=1.0))?;
    }
    Ok((vectors, lexicon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::LabelScheme;
    use crate::graph::{build_graph, GraphVariant, NodeResources};

    #[test]
    fn pseudo_words_are_distinct_lemmas() {
        let words: std::collections::HashSet<String> = (0..8000).map(pseudo_word).collect();
        assert_eq!(words.len(), 8000);
        assert!(words.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn class_ratio_and_structure() {
        let cfg = SynthConfig { docs: 100, biased_fraction: 0.7, seed: 5, ..SynthConfig::default() };
        let corpus = generate(&cfg);
        let docs = corpus.documents(Exec::Sequential);
        assert_eq!(docs.len(), 100);
        let biased: Vec<_> = docs
            .iter()
            .filter(|d| LabelScheme::Binary.map(d.label) == 0)
            .collect();
        assert_eq!(biased.len(), 70);
        for d in &docs {
            let g = build_graph(d, GraphVariant::Base, NodeResources::default()).unwrap();
            let max_deg = g.degrees().into_iter().max().unwrap();
            if LabelScheme::Binary.map(d.label) == 0 {
                assert!(max_deg >= cfg.min_dense_width - 1, "{}", d.id);
            } else {
                // a path
                assert!(max_deg <= 2, "{}", d.id);
                assert_eq!(g.edge_count(), g.node_count() - 1);
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig { docs: 20, ..SynthConfig::default() };
        assert_eq!(generate(&cfg).articles, generate(&cfg).articles);
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).articles, generate(&other).articles);
    }

    #[test]
    fn resources_cover_the_vocabulary() {
        let (v, lex) = synthetic_resources(10, 4, 0).unwrap();
        assert_eq!(v.dim(), 4);
        assert_ne!(v.get(&pseudo_word(3)), vec![0.0; 4]);
        assert!(lex.valence(&pseudo_word(3)).abs() <= 1.0);
    }
}
