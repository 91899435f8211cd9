//! Scoring and the statistical tests used to compare configurations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro F1. The macro average runs over the classes present
/// in `truths`; predicted-only classes do not enter it.
pub fn score(preds: &[usize], truths: &[usize]) -> Result<MetricPair> {
    if preds.len() != truths.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Invalid("cannot score an empty prediction set".into()));
    }
    let correct = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    let classes: BTreeSet<usize> = truths.iter().copied().collect();
    let mut f1_sum = 0.0;
    for &c in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &t) in preds.iter().zip(truths) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(MetricPair {
        accuracy: correct as f64 / truths.len() as f64,
        macro_f1: f1_sum / classes.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Non-zero differences that entered the test.
    pub n: usize,
    pub exact: bool,
    /// All differences were zero; `p_value` is 1.
    pub degenerate: bool,
}

pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided Wilcoxon signed-rank test of `H1: median(diff) > 0`.
///
/// Zero differences are dropped before ranking. Up to
/// [`WILCOXON_EXACT_MAX_N`] remaining pairs the null distribution of the
/// positive rank sum is enumerated exactly (ties handled on doubled ranks);
/// beyond that a normal approximation with tie and continuity corrections
/// is used.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> WilcoxonResult {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            exact: true,
            degenerate: true,
        };
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX_N {
        // doubled ranks are integers even with ties
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (w_plus * 2.0).round() as usize;
        let tail: u64 = counts[observed..].iter().sum();
        return WilcoxonResult {
            statistic: w_plus,
            p_value: tail as f64 / (1u64 << n) as f64,
            n,
            exact: true,
            degenerate: false,
        };
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        var -= (t * t * t - t) / 48.0;
        i = j + 1;
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    WilcoxonResult {
        statistic: w_plus,
        p_value: 1.0 - normal.cdf(z),
        n,
        exact: false,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    /// Two-sided, from Student's t with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Product-moment correlation. `None` when either side has zero variance.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Option<PearsonResult>> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("pearson on {} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Invalid(format!("pearson needs at least 3 pairs, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Some(PearsonResult { r, p_value, n }))
}

/// `mean (std)` in the compact table style, e.g. `0.592 (.151)`. The
/// standard deviation is the sample one (n - 1).
pub fn format_mean_std(values: &[f64]) -> String {
    let (mean, std) = mean_std(values);
    let s = format!("{std:.3}");
    let s = s.strip_prefix('0').unwrap_or(&s);
    format!("{mean:.3} ({s})")
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn score_examples() {
        assert_eq!(score(&[0, 1, 2], &[0, 1, 2]).unwrap(), MetricPair { accuracy: 1.0, macro_f1: 1.0 });
        let truths: Vec<usize> = [vec![0; 6], vec![1; 4]].concat();
        let m = score(&[0; 10], &truths).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (0.6, 0.375));
        let m = score(&[0, 0, 0], &[0, 1, 2]).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 1.0 / 6.0).abs() < 1e-15);
        assert!(score(&[0], &[0, 1]).is_err());
        assert!(score(&[], &[]).is_err());
    }

    fn naive_score(preds: &[usize], truths: &[usize], k: usize) -> MetricPair {
        let mut cm = vec![vec![0usize; k]; k];
        for (&p, &t) in preds.iter().zip(truths) {
            cm[t][p] += 1;
        }
        let acc = (0..k).map(|i| cm[i][i]).sum::<usize>() as f64 / truths.len() as f64;
        let present: Vec<usize> = (0..k).filter(|&c| cm[c].iter().sum::<usize>() > 0).collect();
        let f1s: Vec<f64> = present
            .iter()
            .map(|&c| {
                let tp = cm[c][c] as f64;
                let pred_c: usize = (0..k).map(|t| cm[t][c]).sum();
                let true_c: usize = cm[c].iter().sum();
                let prec = if pred_c == 0 { 0.0 } else { tp / pred_c as f64 };
                let rec = tp / true_c as f64;
                if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) }
            })
            .collect();
        MetricPair { accuracy: acc, macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64 }
    }

    #[test]
    fn score_matches_confusion_matrix_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let k = rng.random_range(2..8);
            let n = rng.random_range(1..60);
            let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let a = score(&preds, &truths).unwrap();
            let b = naive_score(&preds, &truths, k);
            assert!((a.accuracy - b.accuracy).abs() < 1e-12);
            assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        }
    }

    #[test]
    fn wilcoxon_small_cases() {
        let r = wilcoxon_one_sided(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(r.p_value, 0.03125);
        assert!(r.exact);
        let r = wilcoxon_one_sided(&[-1.0, -2.0, -3.0, -4.0, -5.0]);
        assert!(r.p_value >= 0.96875);
        assert_eq!(wilcoxon_one_sided(&[0.3]).p_value, 0.5);
        let r = wilcoxon_one_sided(&[0.0, 0.0]);
        assert!(r.degenerate && r.p_value == 1.0);
        // zeros are dropped
        assert_eq!(wilcoxon_one_sided(&[0.0, 1.0, 2.0]).n, 2);
    }

    #[test]
    fn wilcoxon_normal_approximation_is_close_to_exact() {
        // n = 21 just past the exact limit; compare against the exact tail
        // computed by widening the limit locally
        let diffs: Vec<f64> = (1..=21).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let approx = wilcoxon_one_sided(&diffs);
        assert!(!approx.exact);
        let ranks: Vec<usize> = (1..=21).collect();
        let total: usize = ranks.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &ranks {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let obs = approx.statistic as usize;
        let exact = counts[obs..].iter().sum::<u64>() as f64 / (1u64 << 21) as f64;
        assert!((approx.p_value - exact).abs() < 0.01, "{} vs {exact}", approx.p_value);
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson_r(&x, &y).unwrap().unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap().unwrap().r + 1.0).abs() < 1e-12);
        assert!(pearson_r(&x, &[1.0; 10]).unwrap().is_none());
        assert!(pearson_r(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn pearson_p_value_reference() {
        // r = 0.5 at n = 10: t = 0.5 * sqrt(8 / 0.75) = 1.63299, two-sided
        // p from the t(8) distribution is 0.14111
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        // build y with exact correlation 0.5: y = 0.5 zx + sqrt(0.75) e, e orthogonal
        let mx = 5.5;
        let zx: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let e: Vec<f64> = [1.0, -1.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 1.0].to_vec();
        let dot: f64 = zx.iter().zip(&e).map(|(a, b)| a * b).sum();
        let ex: f64 = zx.iter().map(|a| a * a).sum();
        let e_orth: Vec<f64> = e.iter().zip(&zx).map(|(b, a)| b - dot / ex * a).collect();
        let ne = e_orth.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nx = ex.sqrt();
        let y: Vec<f64> = zx
            .iter()
            .zip(&e_orth)
            .map(|(a, b)| 0.5 * a / nx + 0.75f64.sqrt() * b / ne)
            .collect();
        let r = pearson_r(&x, &y).unwrap().unwrap();
        assert!((r.r - 0.5).abs() < 1e-12);
        assert!((r.p_value - 0.14111).abs() < 1e-4, "{}", r.p_value);
    }

    #[test]
    fn permuted_pairs_rarely_correlate() {
        use rand::seq::SliceRandom;
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let mut small = 0;
        for seed in 0..100 {
            let mut y = x.clone();
            y.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            if pearson_r(&x, &y).unwrap().unwrap().r.abs() < 0.3 {
                small += 1;
            }
        }
        assert!(small >= 95, "{small}");
    }

    #[test]
    fn table_formatting() {
        assert_eq!(format_mean_std(&[0.5, 0.7]), "0.600 (.141)");
        assert_eq!(format_mean_std(&[0.592]), "0.592 (.000)");
    }

    proptest! {
        #[test]
        fn ranks_sum_to_triangular(v in prop::collection::vec(0u8..5, 1..30)) {
            let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let n = vals.len() as f64;
            let s: f64 = average_ranks(&vals).iter().sum();
            prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }
    }
}
