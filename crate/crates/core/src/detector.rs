//! Supervised bias detection on top of document embeddings.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::BiasLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelScheme {
    /// All seven ratings.
    Full,
    /// Left / center / right.
    Lcr,
    /// Biased / unbiased; left-center and right-center count as unbiased.
    Binary,
}

const FULL_CLASSES: [&str; 7] = [
    "far-left",
    "left",
    "left-center",
    "center",
    "right-center",
    "right",
    "far-right",
];
const LCR_CLASSES: [&str; 3] = ["left", "center", "right"];
const BINARY_CLASSES: [&str; 2] = ["biased", "unbiased"];

impl LabelScheme {
    pub const ALL: [LabelScheme; 3] = [LabelScheme::Full, LabelScheme::Lcr, LabelScheme::Binary];

    /// Class names; a class index is a position in this list, and ties are
    /// broken toward lower indices.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            LabelScheme::Full => &FULL_CLASSES,
            LabelScheme::Lcr => &LCR_CLASSES,
            LabelScheme::Binary => &BINARY_CLASSES,
        }
    }

    pub fn class_name(self, idx: usize) -> &'static str {
        self.classes()[idx]
    }

    pub fn class_index(self, name: &str) -> Option<usize> {
        self.classes().iter().position(|c| c.eq_ignore_ascii_case(name))
    }

    pub fn map(self, label: BiasLabel) -> usize {
        use BiasLabel::*;
        match self {
            LabelScheme::Full => label.index(),
            LabelScheme::Lcr => match label {
                FarLeft | Left | LeftCenter => 0,
                Center => 1,
                RightCenter | Right | FarRight => 2,
            },
            LabelScheme::Binary => match label {
                LeftCenter | Center | RightCenter => 1,
                FarLeft | Left | Right | FarRight => 0,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Full => "full",
            LabelScheme::Lcr => "lcr",
            LabelScheme::Binary => "binary",
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LabelScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LabelScheme::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown label scheme {s:?}")))
    }
}

pub fn map_labels(labels: &[BiasLabel], scheme: LabelScheme) -> Vec<usize> {
    labels.iter().map(|&l| scheme.map(l)).collect()
}

/// Maps Full-scheme class predictions onto a coarser scheme.
pub fn regroup_predictions(preds_full: &[usize], target: LabelScheme) -> Vec<usize> {
    preds_full
        .iter()
        .map(|&p| target.map(BiasLabel::ALL[p]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Article-level model, no aggregation.
    None,
    /// Arithmetic mean of a domain's article embeddings.
    Mean,
    /// Mean of topic-centered article embeddings.
    TopicDiffAvg,
    /// Component-wise root sum of squares of topic-centered embeddings.
    TopicDiffNorm,
}

impl Aggregation {
    pub const ALL: [Aggregation; 4] = [
        Aggregation::None,
        Aggregation::Mean,
        Aggregation::TopicDiffAvg,
        Aggregation::TopicDiffNorm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::None => "none",
            Aggregation::Mean => "mean",
            Aggregation::TopicDiffAvg => "topic-diff-avg",
            Aggregation::TopicDiffNorm => "topic-diff-norm",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Aggregation::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown aggregation {s:?}")))
    }
}

/// An article embedding with the metadata aggregation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleVec {
    pub id: String,
    pub domain: String,
    pub topic: String,
    pub vector: Vec<f64>,
}

/// Mean embedding per topic.
pub fn topic_means(articles: &[ArticleVec]) -> BTreeMap<String, Vec<f64>> {
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for a in articles {
        let entry = sums
            .entry(a.topic.clone())
            .or_insert_with(|| (vec![0.0; a.vector.len()], 0));
        for (s, x) in entry.0.iter_mut().zip(&a.vector) {
            *s += x;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(t, (s, n))| (t, s.into_iter().map(|x| x / n as f64).collect()))
        .collect()
}

/// Domain embeddings with topic means computed over `articles` themselves.
pub fn aggregate_domain(articles: &[ArticleVec], method: Aggregation) -> Result<BTreeMap<String, Vec<f64>>> {
    aggregate_domain_with(articles, method, &topic_means(articles))
}

/// Domain embeddings using externally supplied topic means (for example,
/// means from the training split applied to test articles). A topic missing
/// from `means` falls back to its mean over `articles`.
pub fn aggregate_domain_with(
    articles: &[ArticleVec],
    method: Aggregation,
    means: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if method == Aggregation::None {
        return Err(Error::Invalid("aggregation method 'none' has no domain embedding".into()));
    }
    let local = topic_means(articles);
    let mut groups: BTreeMap<&str, Vec<&ArticleVec>> = BTreeMap::new();
    for a in articles {
        groups.entry(a.domain.as_str()).or_default().push(a);
    }
    let mut out = BTreeMap::new();
    for (domain, members) in groups {
        let dim = members[0].vector.len();
        let mut acc = vec![0.0; dim];
        for a in &members {
            if a.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.vector.len(),
                });
            }
            let centre = means.get(&a.topic).unwrap_or_else(|| &local[&a.topic]);
            for k in 0..dim {
                acc[k] += match method {
                    Aggregation::Mean => a.vector[k],
                    Aggregation::TopicDiffAvg => a.vector[k] - centre[k],
                    Aggregation::TopicDiffNorm => (a.vector[k] - centre[k]).powi(2),
                    Aggregation::None => unreachable!(),
                };
            }
        }
        let n = members.len() as f64;
        let value = match method {
            Aggregation::TopicDiffNorm => acc.into_iter().map(f64::sqrt).collect(),
            _ => acc.into_iter().map(|x| x / n).collect(),
        };
        out.insert(domain.to_string(), value);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            lambda: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

/// Multinomial logistic regression. Row `k` of `weights` scores
/// `classes[k]`; the last column is the unpenalized bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub classes: Vec<usize>,
    pub weights: Array2<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

fn with_bias(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(x);
    out
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Mean cross-entropy plus `lambda / 2` times the squared norm of the
/// non-bias weights. `xb` carries a trailing column of ones; `y` holds
/// positions into the weight rows.
pub fn softmax_objective(w: &Array2<f64>, xb: &Array2<f64>, y: &[usize], lambda: f64) -> f64 {
    let scores = xb.dot(&w.t());
    let n = y.len() as f64;
    let mut ce = 0.0;
    for (row, &yi) in scores.rows().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        ce += lse - row[yi];
    }
    let d = w.ncols() - 1;
    let reg: f64 = w.slice(ndarray::s![.., ..d]).iter().map(|v| v * v).sum();
    ce / n + 0.5 * lambda * reg
}

pub fn softmax_gradient(w: &Array2<f64>, xb: &Array2<f64>, y: &[usize], lambda: f64) -> Array2<f64> {
    let mut p = xb.dot(&w.t());
    softmax_rows(&mut p);
    for (mut row, &yi) in p.rows_mut().into_iter().zip(y) {
        row[yi] -= 1.0;
    }
    let mut g = p.t().dot(xb) / y.len() as f64;
    let d = w.ncols() - 1;
    g.slice_mut(ndarray::s![.., ..d])
        .scaled_add(lambda, &w.slice(ndarray::s![.., ..d]));
    g
}

/// Full-batch gradient descent with Armijo backtracking. Stops once the
/// gradient norm falls below `tol` or after `max_iter` steps; in the latter
/// case the best iterate is returned with `converged = false`.
pub fn train_softmax(x: &Array2<f64>, y: &[usize], cfg: &SoftmaxConfig) -> Result<SoftmaxModel> {
    if x.nrows() != y.len() {
        return Err(Error::Invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("feature matrix contains non-finite values".into()));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "softmax needs at least two classes in the training labels, found {}",
            classes.len()
        )));
    }
    let local: Vec<usize> = y
        .iter()
        .map(|c| classes.binary_search(c).expect("class present"))
        .collect();

    let xb = with_bias(x);
    let mut w = Array2::<f64>::zeros((classes.len(), xb.ncols()));
    let mut f = softmax_objective(&w, &xb, &local, cfg.lambda);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let g = softmax_gradient(&w, &xb, &local, cfg.lambda);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-20 {
            let candidate = &w - &(&g * step);
            let fc = softmax_objective(&candidate, &xb, &local, cfg.lambda);
            if fc <= f - 1e-4 * step * gnorm2 {
                w = candidate;
                f = fc;
                trace.push(f);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible at floating-point resolution
            converged = gnorm2.sqrt() < cfg.tol.sqrt();
            break;
        }
    }
    if !converged {
        log::warn!(
            "softmax did not reach gradient norm {} within {} iterations",
            cfg.tol,
            cfg.max_iter
        );
    }
    Ok(SoftmaxModel {
        classes,
        weights: w,
        lambda: cfg.lambda,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// A predicted scheme class and its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub prob: f64,
}

impl SoftmaxModel {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut p = with_bias(x).dot(&self.weights.t());
        softmax_rows(&mut p);
        p
    }

    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> Prediction {
        let row = x.to_owned().insert_axis(Axis(0));
        let p = self.predict_proba(&row);
        argmax(p.row(0), &self.classes)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<Prediction> {
        let p = self.predict_proba(x);
        p.rows().into_iter().map(|r| argmax(r, &self.classes)).collect()
    }
}

fn argmax(p: ArrayView1<'_, f64>, classes: &[usize]) -> Prediction {
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    Prediction {
        class: classes[best],
        prob: p[best],
    }
}

/// Stacks row vectors into a matrix.
pub fn to_matrix(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        m.row_mut(i).assign(&Array1::from(r.to_vec()));
    }
    Ok(m)
}

/// Majority-class baseline; ties go to the lowest class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroRule {
    pub class: usize,
}

pub fn zero_rule(train_y: &[usize]) -> Result<ZeroRule> {
    if train_y.is_empty() {
        return Err(Error::Training("zero rule needs at least one training label".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in train_y {
        *counts.entry(c).or_default() += 1;
    }
    let max = *counts.values().max().unwrap();
    let class = *counts.iter().find(|(_, &n)| n == max).unwrap().0;
    Ok(ZeroRule { class })
}

impl ZeroRule {
    pub fn predict(&self, n: usize) -> Vec<usize> {
        vec![self.class; n]
    }
}
