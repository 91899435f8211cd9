//! Descriptive metrics of article graphs, and the metrics-only classifier
//! used as a reference point for the embedding models.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::detector::{train_softmax, SoftmaxConfig};
use crate::error::{Error, Result};
use crate::graph::DocGraph;
use crate::stats::{score, MetricPair};

pub const METRIC_NAMES: [&str; 10] = [
    "nodes",
    "edges",
    "density",
    "mean_degree",
    "max_degree",
    "mean_clustering",
    "transitivity",
    "components",
    "largest_component_fraction",
    "degree_assortativity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetricVector {
    pub nodes: usize,
    pub edges: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub max_degree: usize,
    pub mean_clustering: f64,
    pub transitivity: f64,
    pub components: usize,
    pub largest_component_fraction: f64,
    /// Undefined on edgeless or degree-regular graphs.
    pub degree_assortativity: Option<f64>,
    /// The graph had no nodes; every metric is zero.
    pub empty: bool,
}

impl GraphMetricVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "nodes" => self.nodes as f64,
            "edges" => self.edges as f64,
            "density" => self.density,
            "mean_degree" => self.mean_degree,
            "max_degree" => self.max_degree as f64,
            "mean_clustering" => self.mean_clustering,
            "transitivity" => self.transitivity,
            "components" => self.components as f64,
            "largest_component_fraction" => self.largest_component_fraction,
            // undefined assortativity is read as "no correlation"
            "degree_assortativity" => self.degree_assortativity.unwrap_or(0.0),
            _ => return None,
        })
    }
}

pub fn graph_metrics(g: &DocGraph) -> GraphMetricVector {
    let n = g.node_count();
    let m = g.edge_count();
    if n == 0 {
        return GraphMetricVector {
            nodes: 0,
            edges: 0,
            density: 0.0,
            mean_degree: 0.0,
            max_degree: 0,
            mean_clustering: 0.0,
            transitivity: 0.0,
            components: 0,
            largest_component_fraction: 0.0,
            degree_assortativity: None,
            empty: true,
        };
    }
    let adj = g.adjacency();
    let deg = g.degrees();
    let neighbor_sets: Vec<HashSet<usize>> = adj.iter().map(|a| a.iter().copied().collect()).collect();

    // triangles through each node
    let mut tri = vec![0usize; n];
    for v in 0..n {
        for (i, &a) in adj[v].iter().enumerate() {
            for &b in &adj[v][i + 1..] {
                if neighbor_sets[a].contains(&b) {
                    tri[v] += 1;
                }
            }
        }
    }
    let mean_clustering = (0..n)
        .map(|v| {
            let d = deg[v];
            if d < 2 {
                0.0
            } else {
                tri[v] as f64 / (d * (d - 1) / 2) as f64
            }
        })
        .sum::<f64>()
        / n as f64;
    let triads: usize = deg.iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    let transitivity = if triads == 0 {
        0.0
    } else {
        tri.iter().sum::<usize>() as f64 / triads as f64
    };

    let (components, largest) = component_sizes(&adj);

    GraphMetricVector {
        nodes: n,
        edges: m,
        density: if n < 2 { 0.0 } else { 2.0 * m as f64 / (n * (n - 1)) as f64 },
        mean_degree: 2.0 * m as f64 / n as f64,
        max_degree: deg.iter().copied().max().unwrap_or(0),
        mean_clustering,
        transitivity,
        components,
        largest_component_fraction: largest as f64 / n as f64,
        degree_assortativity: assortativity(g, &deg),
        empty: false,
    }
}

fn component_sizes(adj: &[Vec<usize>]) -> (usize, usize) {
    let mut seen = vec![false; adj.len()];
    let (mut count, mut largest) = (0, 0);
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut size = 0;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            size += 1;
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        largest = largest.max(size);
    }
    (count, largest)
}

/// Pearson correlation of the degrees at the two ends of each edge, with
/// every edge taken in both directions.
fn assortativity(g: &DocGraph, deg: &[usize]) -> Option<f64> {
    if g.edges.is_empty() {
        return None;
    }
    let mut xs = Vec::with_capacity(2 * g.edge_count());
    let mut ys = Vec::with_capacity(2 * g.edge_count());
    for e in &g.edges {
        let (a, b) = (deg[e.u] as f64, deg[e.v] as f64);
        xs.extend([a, b]);
        ys.extend([b, a]);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 1e-12 || syy <= 1e-12 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Result of the metrics-only classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBaseline {
    pub scores: MetricPair,
    pub used_columns: Vec<String>,
    pub dropped_columns: Vec<String>,
}

/// Softmax regression on z-scored graph metrics. Column statistics come from
/// the training rows only; columns that are constant there are dropped.
pub fn metrics_baseline(
    train: &[(GraphMetricVector, usize)],
    test: &[(GraphMetricVector, usize)],
    columns: &[&str],
    cfg: &SoftmaxConfig,
) -> Result<MetricsBaseline> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid("metrics baseline needs train and test rows".into()));
    }
    let raw = |rows: &[(GraphMetricVector, usize)], col: &str| -> Result<Vec<f64>> {
        rows.iter()
            .map(|(m, _)| m.get(col).ok_or_else(|| Error::Invalid(format!("unknown graph metric {col:?}"))))
            .collect()
    };

    let mut used = Vec::new();
    let mut dropped = Vec::new();
    let mut train_cols = Vec::new();
    let mut test_cols = Vec::new();
    for &col in columns {
        let tr = raw(train, col)?;
        let n = tr.len() as f64;
        let mean = tr.iter().sum::<f64>() / n;
        let std = (tr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std < 1e-12 {
            log::warn!("graph metric {col} is constant on the training split; dropped");
            dropped.push(col.to_string());
            continue;
        }
        used.push(col.to_string());
        train_cols.push(tr.iter().map(|v| (v - mean) / std).collect::<Vec<_>>());
        test_cols.push(raw(test, col)?.iter().map(|v| (v - mean) / std).collect::<Vec<_>>());
    }
    if used.is_empty() {
        return Err(Error::Training("every graph metric column is constant".into()));
    }
    let to_matrix = |cols: &[Vec<f64>], rows: usize| {
        Array2::from_shape_fn((rows, cols.len()), |(i, j)| cols[j][i])
    };
    let x_train = to_matrix(&train_cols, train.len());
    let x_test = to_matrix(&test_cols, test.len());
    let y_train: Vec<usize> = train.iter().map(|(_, y)| *y).collect();
    let y_test: Vec<usize> = test.iter().map(|(_, y)| *y).collect();

    let model = train_softmax(&x_train, &y_train, cfg)?;
    let preds: Vec<usize> = model.predict(&x_test).iter().map(|p| p.class).collect();
    Ok(MetricsBaseline {
        scores: score(&preds, &y_test)?,
        used_columns: used,
        dropped_columns: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, GraphVariant, Node, NodeAttr};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> DocGraph {
        DocGraph {
            doc_id: "g".into(),
            variant: GraphVariant::Base,
            nodes: (0..n)
                .map(|i| Node { lemma: format!("w{i}"), attr: NodeAttr::None })
                .collect(),
            edges: edges
                .iter()
                .map(|&(u, v)| Edge { u: u.min(v), v: u.max(v), weight: 1.0 })
                .collect(),
        }
    }

    #[test]
    fn triangle() {
        let m = graph_metrics(&graph(3, &[(0, 1), (1, 2), (0, 2)]));
        assert_eq!(m.density, 1.0);
        assert_eq!(m.mean_clustering, 1.0);
        assert_eq!(m.transitivity, 1.0);
        assert_eq!(m.components, 1);
        // 2-regular
        assert_eq!(m.degree_assortativity, None);
    }

    #[test]
    fn path_and_disjoint_edges() {
        let p3 = graph_metrics(&graph(3, &[(0, 1), (1, 2)]));
        assert_eq!(p3.transitivity, 0.0);
        assert_eq!(p3.max_degree, 2);
        let two = graph_metrics(&graph(4, &[(0, 1), (2, 3)]));
        assert_eq!(two.components, 2);
        assert_eq!(two.largest_component_fraction, 0.5);
    }

    #[test]
    fn star_is_disassortative() {
        let star = graph_metrics(&graph(4, &[(0, 1), (0, 2), (0, 3)]));
        assert!((star.degree_assortativity.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_flagged() {
        let m = graph_metrics(&graph(0, &[]));
        assert!(m.empty);
        assert_eq!(m.nodes, 0);
    }

    #[test]
    fn relabeling_invariance() {
        let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (5, 6)];
        let base = graph_metrics(&graph(7, &edges));
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let permuted: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let other = graph_metrics(&graph(7, &permuted));
        assert_eq!(base.edges, other.edges);
        assert!((base.mean_clustering - other.mean_clustering).abs() < 1e-12);
        assert!((base.transitivity - other.transitivity).abs() < 1e-12);
        assert!((base.degree_assortativity.unwrap() - other.degree_assortativity.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_columns_are_dropped() {
        let mk = |n: usize, y: usize| (graph_metrics(&graph(n, &[(0, 1)])), y);
        let train = vec![mk(2, 0), mk(3, 1), mk(2, 0), mk(4, 1)];
        let test = vec![mk(2, 0), mk(4, 1)];
        let out = metrics_baseline(&train, &test, &["nodes", "edges"], &SoftmaxConfig::default()).unwrap();
        assert_eq!(out.dropped_columns, vec!["edges"]);
        assert!(out.scores.accuracy.is_finite());
        assert!(metrics_baseline(&train, &test, &["bogus"], &SoftmaxConfig::default()).is_err());
    }
}
