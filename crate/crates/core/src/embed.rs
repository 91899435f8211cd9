//! Paragraph-vector document embeddings trained with negative sampling.
//!
//! The same trainer serves three roles: PV-DBOW over WL feature documents
//! (graph embeddings), PV-DBOW over lemma streams, and PV-DM over lemma
//! streams. Parameters live in lock-free matrices of `AtomicU64`-encoded
//! `f64`s, so a single kernel covers both the deterministic single-worker
//! mode and the racy multi-worker (Hogwild) mode.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::wl::fnv1a64;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMode {
    /// Distributed bag of words over a lemma stream.
    Dbow,
    /// Distributed memory over a lemma stream.
    Dm,
    /// Distributed bag of words over WL feature documents.
    Graph2VecDbow,
}

impl EmbedMode {
    fn is_dm(self) -> bool {
        self == EmbedMode::Dm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub dim: usize,
    pub window: usize,
    pub lr0: f64,
    pub min_lr: f64,
    pub epochs: usize,
    pub negative: usize,
    pub min_count: u64,
    pub noise_exponent: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 128,
            window: 10,
            lr0: 0.05,
            min_lr: 1e-4,
            epochs: 50,
            negative: 5,
            min_count: 3,
            noise_exponent: 0.75,
        }
    }
}

impl Hyperparams {
    /// Linear decay from `lr0` to `min_lr` over `progress` in [0, 1].
    pub fn lr_at(&self, progress: f64) -> f64 {
        (self.lr0 - (self.lr0 - self.min_lr) * progress.clamp(0.0, 1.0)).max(self.min_lr)
    }
}

/// Worker layout for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Training {
    /// One worker, one RNG stream: bit-reproducible for a fixed seed.
    #[default]
    Deterministic,
    /// `workers` chunks updating shared matrices without locks.
    Hogwild { workers: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub min_count: u64,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.get(t)).collect()
    }
}

/// Counts tokens over the training corpus and keeps those seen at least
/// `min_count` times. Indices are assigned by descending count, then token.
pub fn build_vocab<'a, I, D>(docs: I, min_count: u64) -> Result<Vocab>
where
    I: IntoIterator<Item = D>,
    D: IntoIterator<Item = &'a String>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for tok in doc {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Training(format!(
            "vocabulary is empty after applying min_count = {min_count}"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocab {
        words: kept.iter().map(|(w, _)| w.to_string()).collect(),
        counts: kept.iter().map(|(_, c)| *c).collect(),
        index: HashMap::new(),
        min_count,
    };
    vocab.reindex();
    Ok(vocab)
}

/// Unigram noise distribution proportional to `count^exponent`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub fn new(vocab: &Vocab, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = vocab
            .counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(exponent);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    pub fn probability(&self, idx: usize) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let prev = if idx == 0 { 0.0 } else { self.cumulative[idx - 1] };
        (self.cumulative[idx] - prev) / total
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Row-major matrix of `f64` stored as atomics; relaxed loads and stores
/// only, so concurrent writers may lose updates but never tear a value.
pub struct AtomicMatrix {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl AtomicMatrix {
    pub fn from_vec(values: &[f64], dim: usize) -> Self {
        AtomicMatrix {
            data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
        }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self::from_vec(&vec![0.0; rows * dim], dim)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|a| f64::from_bits(a.load(Ordering::Relaxed)))
            .collect()
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.data[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f64) {
        self.data[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

/// Row access used by the SGD kernel.
pub trait Rows {
    fn dim(&self) -> usize;
    fn read(&self, row: usize, out: &mut [f64]);
    fn dot(&self, row: usize, h: &[f64]) -> f64;
    /// `acc += scale * row`
    fn axpy_into(&self, row: usize, scale: f64, acc: &mut [f64]);
    /// `row += scale * src`; a no-op on frozen parameters.
    fn add(&self, row: usize, scale: f64, src: &[f64]);
}

impl Rows for AtomicMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self, row: usize, out: &mut [f64]) {
        let base = row * self.dim;
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.get(base + k);
        }
    }

    fn dot(&self, row: usize, h: &[f64]) -> f64 {
        let base = row * self.dim;
        h.iter().enumerate().map(|(k, x)| x * self.get(base + k)).sum()
    }

    fn axpy_into(&self, row: usize, scale: f64, acc: &mut [f64]) {
        let base = row * self.dim;
        for (k, a) in acc.iter_mut().enumerate() {
            *a += scale * self.get(base + k);
        }
    }

    fn add(&self, row: usize, scale: f64, src: &[f64]) {
        let base = row * self.dim;
        for (k, s) in src.iter().enumerate() {
            self.set(base + k, self.get(base + k) + scale * s);
        }
    }
}

/// Read-only view used during inference.
pub struct FrozenRows<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> FrozenRows<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        FrozenRows { data, dim }
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }
}

impl Rows for FrozenRows<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(row));
    }

    fn dot(&self, row: usize, h: &[f64]) -> f64 {
        self.row(row).iter().zip(h).map(|(a, b)| a * b).sum()
    }

    fn axpy_into(&self, row: usize, scale: f64, acc: &mut [f64]) {
        for (a, r) in acc.iter_mut().zip(self.row(row)) {
            *a += scale * r;
        }
    }

    fn add(&self, _row: usize, _scale: f64, _src: &[f64]) {}
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^-x)`, i.e. `-ln sigmoid(x)`, without overflow.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// One negative-sampling step for hidden vector `h`.
///
/// Each target is `(row, is_positive)`. The loss is
/// `-ln s(h.o_pos) - sum ln s(-h.o_neg)`. Output rows move by `-lr * dL/do`
/// immediately, while `-lr * dL/dh` is accumulated into `neu1e` for the
/// caller to distribute over the inputs. Returns the loss at the pre-step
/// parameters.
pub fn ns_update<R: Rows>(h: &[f64], targets: &[(usize, bool)], out: &R, lr: f64, neu1e: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for &(row, positive) in targets {
        let f = out.dot(row, h);
        let label = if positive { 1.0 } else { 0.0 };
        loss += if positive { neg_log_sigmoid(f) } else { neg_log_sigmoid(-f) };
        let g = (label - sigmoid(f)) * lr;
        out.axpy_into(row, g, neu1e);
        out.add(row, g, h);
    }
    loss
}

/// SplitMix64 finalizer over a few words; used to derive independent RNG
/// streams from one user seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        z ^= p;
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

const TAG_DOC_INIT: u64 = 1;
const TAG_IN_INIT: u64 = 2;
const TAG_EPOCH: u64 = 3;
const TAG_INFER: u64 = 4;

fn init_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-bound..bound)).collect()
}

/// A training or inference unit: an id and its token sequence (WL labels or
/// lemmas).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub doc_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub format_version: u32,
    pub mode: EmbedMode,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub vocab: Vocab,
    pub doc_ids: Vec<String>,
    /// `doc_ids.len() x dim`, row-major.
    pub doc_vectors: Vec<f64>,
    /// `vocab.len() x dim`
    pub out_matrix: Vec<f64>,
    /// DM only.
    pub in_matrix: Option<Vec<f64>>,
    /// Mean negative-sampling loss per positive example, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Context positions for DM: up to `window` on each side, clipped to the
/// sequence bounds, excluding the center.
pub fn context_positions(len: usize, center: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = center.saturating_sub(window);
    let hi = (center + window + 1).min(len);
    (lo..hi).filter(move |&j| j != center)
}

struct Kernel<'a, R: Rows> {
    hyper: &'a Hyperparams,
    noise: &'a NoiseTable,
    out: &'a R,
    input: Option<&'a R>,
}

impl<R: Rows> Kernel<'_, R> {
    fn targets(&self, pos: usize, rng: &mut ChaCha8Rng, buf: &mut Vec<(usize, bool)>) {
        buf.clear();
        buf.push((pos, true));
        for _ in 0..self.hyper.negative {
            let s = self.noise.sample(rng);
            if s != pos {
                buf.push((s, false));
            }
        }
    }

    /// One pass over a document. The document vector is read and written
    /// through `dv`. Returns (summed loss, examples).
    fn train_doc(&self, tokens: &[usize], dv: &mut [f64], lr: f64, rng: &mut ChaCha8Rng) -> (f64, usize) {
        let mut scratch = Scratch::new(self.hyper.dim);
        let mut targets = Vec::with_capacity(self.hyper.negative + 1);
        let mut ctx = Vec::with_capacity(2 * self.hyper.window);
        let mut loss = 0.0;

        for center in 0..tokens.len() {
            self.targets(tokens[center], rng, &mut targets);
            loss += match self.input {
                None => dbow_step(dv, &targets, self.out, lr, &mut scratch),
                Some(input) => {
                    ctx.clear();
                    ctx.extend(context_positions(tokens.len(), center, self.hyper.window).map(|j| tokens[j]));
                    dm_step(dv, &ctx, &targets, input, self.out, lr, &mut scratch)
                }
            };
        }
        (loss, tokens.len())
    }
}

/// Reusable buffers for the step functions.
pub struct Scratch {
    h: Vec<f64>,
    neu1e: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            h: vec![0.0; dim],
            neu1e: vec![0.0; dim],
        }
    }
}

/// PV-DBOW example: the document vector predicts one token against sampled
/// negatives. Applies a step of size `lr` to `doc` and the output rows.
pub fn dbow_step<R: Rows>(doc: &mut [f64], targets: &[(usize, bool)], out: &R, lr: f64, scratch: &mut Scratch) -> f64 {
    scratch.neu1e.iter_mut().for_each(|x| *x = 0.0);
    let loss = ns_update(doc, targets, out, lr, &mut scratch.neu1e);
    for (d, e) in doc.iter_mut().zip(&scratch.neu1e) {
        *d += e;
    }
    loss
}

/// PV-DM example: the mean of the document vector and the context input
/// rows predicts the center token. The hidden-layer gradient is shared
/// equally by every averaged input.
pub fn dm_step<R: Rows>(
    doc: &mut [f64],
    context: &[usize],
    targets: &[(usize, bool)],
    input: &R,
    out: &R,
    lr: f64,
    scratch: &mut Scratch,
) -> f64 {
    let count = (context.len() + 1) as f64;
    scratch.h.copy_from_slice(doc);
    for &c in context {
        input.axpy_into(c, 1.0, &mut scratch.h);
    }
    scratch.h.iter_mut().for_each(|x| *x /= count);

    scratch.neu1e.iter_mut().for_each(|x| *x = 0.0);
    let loss = ns_update(&scratch.h, targets, out, lr, &mut scratch.neu1e);

    let scale = 1.0 / count;
    for (d, e) in doc.iter_mut().zip(&scratch.neu1e) {
        *d += scale * e;
    }
    for &c in context {
        input.add(c, scale, &scratch.neu1e);
    }
    loss
}

fn check_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Trains document vectors for `corpus`. The vocabulary must be built from
/// this same corpus.
pub fn train(
    corpus: &[TrainDoc],
    vocab: Vocab,
    mode: EmbedMode,
    hyper: Hyperparams,
    seed: u64,
    training: Training,
    exec: Exec,
) -> Result<EmbeddingModel> {
    if corpus.is_empty() {
        return Err(Error::Training("empty training corpus".into()));
    }
    if hyper.dim == 0 || hyper.epochs == 0 {
        return Err(Error::Training("dim and epochs must be positive".into()));
    }
    let dim = hyper.dim;
    let noise = NoiseTable::new(&vocab, hyper.noise_exponent);
    let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(&d.tokens)).collect();

    let doc_init: Vec<f64> = corpus
        .iter()
        .flat_map(|d| init_vector(dim, derive_seed(&[seed, TAG_DOC_INIT, fnv1a64(d.id.as_bytes())])))
        .collect();
    let docs = AtomicMatrix::from_vec(&doc_init, dim);
    let out = AtomicMatrix::zeros(vocab.len(), dim);
    let input = mode.is_dm().then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, TAG_IN_INIT]));
        let bound = 0.5 / dim as f64;
        let init: Vec<f64> = (0..vocab.len() * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        AtomicMatrix::from_vec(&init, dim)
    });

    let kernel = Kernel {
        hyper: &hyper,
        noise: &noise,
        out: &out,
        input: input.as_ref(),
    };

    let n = corpus.len();
    let workers = match training {
        Training::Deterministic => 1,
        Training::Hogwild { workers } => workers.clamp(1, n),
    };
    let chunk = n.div_ceil(workers);
    let exec = if workers == 1 { Exec::Sequential } else { exec };

    let mut epoch_loss = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let parts = exec.map_range(workers, |w| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, TAG_EPOCH, epoch as u64, w as u64]));
            let mut dv = vec![0.0; dim];
            let (mut loss, mut examples) = (0.0, 0usize);
            for (i, doc) in encoded.iter().enumerate().take(((w + 1) * chunk).min(n)).skip(w * chunk) {
                let progress = (epoch as f64 + i as f64 / n as f64) / hyper.epochs as f64;
                let lr = hyper.lr_at(progress);
                docs.read(i, &mut dv);
                let (l, e) = kernel.train_doc(doc, &mut dv, lr, &mut rng);
                for (k, v) in dv.iter().enumerate() {
                    docs.set(i * dim + k, *v);
                }
                loss += l;
                examples += e;
            }
            (loss, examples)
        });
        let (loss, examples) = parts
            .into_iter()
            .fold((0.0, 0usize), |(l, e), (pl, pe)| (l + pl, e + pe));
        let mean = if examples == 0 { 0.0 } else { loss / examples as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                mode: format!("{mode:?}"),
                epoch,
                lr: hyper.lr_at(epoch as f64 / hyper.epochs as f64),
            });
        }
        epoch_loss.push(mean);
    }

    let doc_vectors = docs.to_vec();
    let out_matrix = out.to_vec();
    let in_matrix = input.map(|m| m.to_vec());
    if !check_finite(&doc_vectors) || !check_finite(&out_matrix) || !in_matrix.as_deref().is_none_or(check_finite) {
        return Err(Error::NonFinite {
            mode: format!("{mode:?}"),
            epoch: hyper.epochs,
            lr: hyper.min_lr,
        });
    }

    Ok(EmbeddingModel {
        format_version: MODEL_FORMAT_VERSION,
        mode,
        hyper,
        seed,
        vocab,
        doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
        doc_vectors,
        out_matrix,
        in_matrix,
        epoch_loss,
    })
}

pub fn train_dbow(corpus: &[TrainDoc], vocab: Vocab, hyper: Hyperparams, seed: u64) -> Result<EmbeddingModel> {
    train(corpus, vocab, EmbedMode::Dbow, hyper, seed, Training::Deterministic, Exec::Sequential)
}

pub fn train_dm(corpus: &[TrainDoc], vocab: Vocab, hyper: Hyperparams, seed: u64) -> Result<EmbeddingModel> {
    train(corpus, vocab, EmbedMode::Dm, hyper, seed, Training::Deterministic, Exec::Sequential)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inferred {
    pub vector: DocVector,
    /// Set when no token of the document is in the vocabulary; the vector is
    /// then all zeros.
    pub all_oov: bool,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn doc_vector(&self, id: &str) -> Option<DocVector> {
        let i = self.doc_ids.iter().position(|d| d == id)?;
        Some(DocVector {
            doc_id: id.to_string(),
            values: self.doc_vectors[i * self.dim()..(i + 1) * self.dim()].to_vec(),
        })
    }

    pub fn trained_vectors(&self) -> Vec<DocVector> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| DocVector {
                doc_id: id.clone(),
                values: self.doc_vectors[i * self.dim()..(i + 1) * self.dim()].to_vec(),
            })
            .collect()
    }

    /// Fits a fresh document vector against the frozen word and output
    /// matrices, using the training schedule. Seeded by the model seed and
    /// the document id, so the result does not depend on call order.
    pub fn infer_vector(&self, doc: &TrainDoc) -> Inferred {
        let dim = self.dim();
        let tokens = self.vocab.encode(&doc.tokens);
        if tokens.is_empty() {
            log::warn!("document {} has no in-vocabulary tokens; using a zero vector", doc.id);
            return Inferred {
                vector: DocVector {
                    doc_id: doc.id.clone(),
                    values: vec![0.0; dim],
                },
                all_oov: true,
            };
        }
        let noise = NoiseTable::new(&self.vocab, self.hyper.noise_exponent);
        let out = FrozenRows::new(&self.out_matrix, dim);
        let input = self.in_matrix.as_deref().map(|m| FrozenRows::new(m, dim));
        let kernel = Kernel {
            hyper: &self.hyper,
            noise: &noise,
            out: &out,
            input: input.as_ref(),
        };
        let id_hash = fnv1a64(doc.id.as_bytes());
        let mut dv = init_vector(dim, derive_seed(&[self.seed, TAG_INFER, id_hash]));
        for epoch in 0..self.hyper.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, TAG_INFER, id_hash, epoch as u64]));
            let lr = self.hyper.lr_at(epoch as f64 / self.hyper.epochs as f64);
            kernel.train_doc(&tokens, &mut dv, lr, &mut rng);
        }
        Inferred {
            vector: DocVector {
                doc_id: doc.id.clone(),
                values: dv,
            },
            all_oov: false,
        }
    }

    pub fn infer_many(&self, docs: &[TrainDoc], exec: Exec) -> Vec<Inferred> {
        exec.map(docs, |d| self.infer_vector(d))
    }

    /// SHA-256 over every trained parameter.
    pub fn parameter_hash(&self) -> String {
        let mut bytes = Vec::new();
        for m in [&self.doc_vectors, &self.out_matrix] {
            bytes.extend(m.iter().flat_map(|v| v.to_le_bytes()));
        }
        if let Some(m) = &self.in_matrix {
            bytes.extend(m.iter().flat_map(|v| v.to_le_bytes()));
        }
        crate::corpus::hex_digest(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut model: EmbeddingModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        model.vocab.reindex();
        Ok(model)
    }
}

/// Concatenates two embeddings of the same document.
pub fn concat_hybrid(a: &DocVector, b: &DocVector) -> Result<DocVector> {
    if a.doc_id != b.doc_id {
        return Err(Error::IdMismatch(a.doc_id.clone(), b.doc_id.clone()));
    }
    if a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    let mut values = a.values.clone();
    values.extend_from_slice(&b.values);
    Ok(DocVector {
        doc_id: a.doc_id.clone(),
        values,
    })
}

/// `doc_id,v1,...,vd` with a header row.
pub fn embeddings_csv(vectors: &[DocVector]) -> String {
    let dim = vectors.first().map_or(0, |v| v.values.len());
    let mut out = String::from("doc_id");
    for k in 1..=dim {
        out.push_str(&format!(",v{k}"));
    }
    out.push('\n');
    for v in vectors {
        out.push_str(&v.doc_id);
        for x in &v.values {
            out.push_str(&format!(",{x:?}"));
        }
        out.push('\n');
    }
    out
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<DocVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().unwrap_or_default().to_string();
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
        out.push(DocVector {
            doc_id: id,
            values: values.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?,
        });
    }
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn td(id: &str, toks: &str) -> TrainDoc {
        TrainDoc {
            id: id.into(),
            tokens: toks.split_whitespace().map(String::from).collect(),
        }
    }

    fn small(dim: usize, epochs: usize) -> Hyperparams {
        Hyperparams {
            dim,
            epochs,
            min_count: 1,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn vocab_threshold() {
        let docs = [td("1", "a a a b b c")];
        let v = build_vocab(docs.iter().map(|d| &d.tokens), 3).unwrap();
        assert_eq!(v.words(), &["a".to_string()]);
        assert!(v.get("b").is_none());
        let all = build_vocab(docs.iter().map(|d| &d.tokens), 1).unwrap();
        assert_eq!(all.len(), 3);
        assert!(build_vocab(docs.iter().map(|d| &d.tokens), 10).is_err());
    }

    #[test]
    fn noise_symmetry_and_exponent() {
        let docs = [td("1", "a a a a b b b b")];
        let v = build_vocab(docs.iter().map(|d| &d.tokens), 1).unwrap();
        let t = NoiseTable::new(&v, 0.75);
        assert!((t.probability(0) - t.probability(1)).abs() < 1e-15);

        let docs = [td("1", "a a a a a a a a a a a a a a a a b")];
        let v = build_vocab(docs.iter().map(|d| &d.tokens), 1).unwrap();
        let t = NoiseTable::new(&v, 0.75);
        // 16^0.75 = 8
        assert!((t.probability(v.get("a").unwrap()) - 8.0 / 9.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..9000).filter(|_| t.sample(&mut rng) == v.get("b").unwrap()).count();
        assert!((800..1200).contains(&hits), "{hits}");
    }

    #[test]
    fn context_window_clips_at_bounds() {
        assert_eq!(context_positions(5, 0, 10).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(context_positions(5, 4, 2).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(context_positions(1, 0, 10).count(), 0);
    }

    #[test]
    fn lr_schedule() {
        let h = Hyperparams::default();
        assert_eq!(h.lr_at(0.0), 0.05);
        assert!((h.lr_at(1.0) - 1e-4).abs() < 1e-15);
        assert!(h.lr_at(0.5) < 0.05 && h.lr_at(0.5) > 1e-4);
    }

    #[test]
    fn disjoint_vocabulary_docs_separate() {
        let corpus = [td("d1", "a a a a"), td("d1b", "a a a a"), td("d2", "b b b b")];
        for seed in 0..5 {
            let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
            let m = train_dbow(&corpus, vocab, small(16, 50), seed).unwrap();
            let v = m.trained_vectors();
            let same = cosine(&v[0].values, &v[1].values);
            let diff = cosine(&v[0].values, &v[2].values);
            assert!(diff < same, "seed {seed}: {diff} vs {same}");
        }
    }

    #[test]
    fn loss_decreases() {
        let corpus: Vec<_> = (0..20)
            .map(|i| td(&format!("d{i}"), if i % 2 == 0 { "x y z x y q" } else { "p q r p q x" }))
            .collect();
        for mode in [EmbedMode::Dbow, EmbedMode::Dm] {
            let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
            let m = train(&corpus, vocab, mode, small(16, 50), 3, Training::Deterministic, Exec::Sequential).unwrap();
            assert_eq!(m.epoch_loss.len(), 50);
            assert!(m.epoch_loss[49] < m.epoch_loss[0], "{mode:?}: {:?}", m.epoch_loss);
        }
    }

    #[test]
    fn deterministic_training_is_bit_identical() {
        let corpus: Vec<_> = (0..8).map(|i| td(&format!("d{i}"), "a b c a b d e a")).collect();
        let run = || {
            let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
            train_dm(&corpus, vocab, small(8, 5), 42).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.parameter_hash(), b.parameter_hash());
        assert_eq!(a.doc_vectors, b.doc_vectors);
    }

    #[test]
    fn hogwild_training_stays_finite() {
        let corpus: Vec<_> = (0..40).map(|i| td(&format!("d{i}"), "a b c a b d e a")).collect();
        let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
        let m = train(&corpus, vocab, EmbedMode::Dbow, small(8, 5), 1, Training::Hogwild { workers: 4 }, Exec::Parallel)
            .unwrap();
        assert!(m.doc_vectors.iter().all(|v| v.is_finite()));
        assert_eq!(m.doc_ids.len(), 40);
    }

    #[test]
    fn inference_contracts() {
        let corpus: Vec<_> = (0..6).map(|i| td(&format!("d{i}"), "a b c a b")).collect();
        let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
        let m = train_dbow(&corpus, vocab, small(8, 10), 9).unwrap();
        let before = m.parameter_hash();
        let oov = m.infer_vector(&td("new", "zzz yyy"));
        assert!(oov.all_oov);
        assert!(oov.vector.values.iter().all(|&v| v == 0.0));
        let a = m.infer_vector(&td("new", "a b zzz"));
        let b = m.infer_vector(&td("new", "a b zzz"));
        assert_eq!(a, b);
        assert!(!a.all_oov);
        assert_eq!(before, m.parameter_hash());
    }

    #[test]
    fn hybrid_concatenation() {
        let a = DocVector { doc_id: "x".into(), values: vec![1.0, 2.0] };
        let b = DocVector { doc_id: "x".into(), values: vec![3.0, 4.0] };
        assert_eq!(concat_hybrid(&a, &b).unwrap().values, vec![1.0, 2.0, 3.0, 4.0]);
        let c = DocVector { doc_id: "y".into(), values: vec![3.0, 4.0] };
        assert!(matches!(concat_hybrid(&a, &c), Err(Error::IdMismatch(..))));
        let d = DocVector { doc_id: "x".into(), values: vec![3.0] };
        assert!(matches!(concat_hybrid(&a, &d), Err(Error::DimensionMismatch { .. })));
        let big = DocVector { doc_id: "x".into(), values: vec![0.5; 128] };
        assert_eq!(concat_hybrid(&big, &big).unwrap().values.len(), 256);
    }

    #[test]
    fn model_file_round_trip() {
        let corpus: Vec<_> = (0..4).map(|i| td(&format!("d{i}"), "a b c a")).collect();
        let vocab = build_vocab(corpus.iter().map(|d| &d.tokens), 1).unwrap();
        let m = train_dm(&corpus, vocab, small(4, 3), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = EmbeddingModel::load(&p).unwrap();
        assert_eq!(back.parameter_hash(), m.parameter_hash());
        assert_eq!(back.vocab.get("a"), m.vocab.get("a"));
        let csv_path = dir.path().join("e.csv");
        fs::write(&csv_path, embeddings_csv(&m.trained_vectors())).unwrap();
        assert_eq!(read_embeddings_csv(&csv_path).unwrap(), m.trained_vectors());
    }
}
