//! Weisfeiler-Lehman subtree features: the "document" of labels that the
//! paragraph-vector trainer sees for each graph.

use serde::{Deserialize, Serialize};

use crate::graph::{DocGraph, GraphVariant, Node, NodeAttr};

pub const DEFAULT_WL_ITERATIONS: usize = 2;
pub const DEFAULT_QUANT_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub doc_id: String,
    /// Iteration-0 labels for every node, then iteration 1, ..., h.
    pub tokens: Vec<String>,
}

/// 64-bit FNV-1a. Seedless so labels agree across processes and platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn stable_hash(s: &str) -> String {
    format!("{:016x}", fnv1a64(s.as_bytes()))
}

/// Per-component `floor(v / step)`, rendered as `q:a,b,...`.
pub fn quantize(values: &[f64], step: f64) -> String {
    let parts: Vec<String> = values
        .iter()
        .map(|v| format!("{}", (v / step).floor() as i64))
        .collect();
    format!("q:{}", parts.join(","))
}

pub fn initial_label(node: &Node, degree: usize, variant: GraphVariant, quant_step: f64) -> String {
    match (variant, &node.attr) {
        (GraphVariant::Base, _) => degree.to_string(),
        (GraphVariant::WordNode, NodeAttr::Word(w)) => w.clone(),
        (GraphVariant::VectorNode, NodeAttr::Vector(v)) => quantize(v, quant_step),
        // graphs rebuilt from exports may lack attributes
        (GraphVariant::WordNode, _) => node.lemma.clone(),
        (GraphVariant::VectorNode, _) => quantize(&[], quant_step),
    }
}

/// One relabeling round: `H(label | sorted,neighbor,labels)`.
fn relabel(labels: &[String], adj: &[Vec<usize>]) -> Vec<String> {
    adj.iter()
        .enumerate()
        .map(|(v, nbrs)| {
            let mut neigh: Vec<&str> = nbrs.iter().map(|&u| labels[u].as_str()).collect();
            neigh.sort_unstable();
            stable_hash(&format!("{}|{}", labels[v], neigh.join(",")))
        })
        .collect()
}

/// Collects the node labels of iterations 0..=h. Nodes are visited in lemma
/// order; edge weights are ignored.
pub fn wl_relabel(graph: &DocGraph, iterations: usize, quant_step: f64) -> FeatureDoc {
    let adj = graph.adjacency();
    let degrees = graph.degrees();

    let mut order: Vec<usize> = (0..graph.node_count()).collect();
    order.sort_by(|&a, &b| graph.nodes[a].lemma.cmp(&graph.nodes[b].lemma));

    let mut labels: Vec<String> = graph
        .nodes
        .iter()
        .zip(&degrees)
        .map(|(n, &d)| initial_label(n, d, graph.variant, quant_step))
        .collect();

    let mut tokens = Vec::with_capacity((iterations + 1) * labels.len());
    tokens.extend(order.iter().map(|&v| labels[v].clone()));
    for _ in 0..iterations {
        labels = relabel(&labels, &adj);
        tokens.extend(order.iter().map(|&v| labels[v].clone()));
    }
    FeatureDoc {
        doc_id: graph.doc_id.clone(),
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    pub(crate) fn graph(variant: GraphVariant, lemmas: &[&str], edges: &[(usize, usize)]) -> DocGraph {
        DocGraph {
            doc_id: "g".into(),
            variant,
            nodes: lemmas
                .iter()
                .map(|l| Node {
                    lemma: l.to_string(),
                    attr: match variant {
                        GraphVariant::WordNode => NodeAttr::Word(l.to_string()),
                        _ => NodeAttr::None,
                    },
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(u, v)| Edge { u: u.min(v), v: u.max(v), weight: 1.0 })
                .collect(),
        }
    }

    fn sorted(mut v: Vec<String>) -> Vec<String> {
        v.sort();
        v
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn initial_labels() {
        let g = graph(GraphVariant::Base, &["a", "b", "c", "d"], &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(initial_label(&g.nodes[0], 3, GraphVariant::Base, 0.25), "3");
        let n = Node { lemma: "taliban".into(), attr: NodeAttr::Word("taliban".into()) };
        assert_eq!(initial_label(&n, 0, GraphVariant::WordNode, 0.25), "taliban");
        let n = Node { lemma: "x".into(), attr: NodeAttr::Vector(vec![0.123, -0.456]) };
        assert_eq!(initial_label(&n, 0, GraphVariant::VectorNode, 0.25), "q:0,-2");
    }

    #[test]
    fn path_labels_and_isomorphic_renaming() {
        let g = graph(GraphVariant::WordNode, &["a", "b", "c"], &[(0, 1), (1, 2)]);
        let f = wl_relabel(&g, 1, 0.25);
        assert_eq!(f.tokens.len(), 6);
        assert_ne!(f.tokens[3], f.tokens[4]);
        assert_ne!(f.tokens[5], f.tokens[4]);
        // same lemmas, node ids listed in a different order
        let h = graph(GraphVariant::WordNode, &["c", "b", "a"], &[(0, 1), (1, 2)]);
        assert_eq!(sorted(wl_relabel(&h, 1, 0.25).tokens), sorted(f.tokens));
    }

    #[test]
    fn isolated_node_recursion() {
        let g = graph(GraphVariant::WordNode, &["x"], &[]);
        let f = wl_relabel(&g, 2, 0.25);
        let h1 = stable_hash("x|");
        let h2 = stable_hash(&format!("{h1}|"));
        assert_eq!(f.tokens, vec!["x".to_string(), h1, h2]);
    }

    #[test]
    fn star_and_path_differ() {
        let star = graph(GraphVariant::Base, &["a", "b", "c", "d"], &[(0, 1), (0, 2), (0, 3)]);
        let path = graph(GraphVariant::Base, &["a", "b", "c", "d"], &[(0, 1), (1, 2), (2, 3)]);
        let s = wl_relabel(&star, 1, 0.25).tokens;
        let p = wl_relabel(&path, 1, 0.25).tokens;
        // iteration 0 already differs: star {3,1,1,1}, path {1,2,2,1}
        assert_eq!(sorted(s[..4].to_vec()), ["1", "1", "1", "3"]);
        assert_eq!(sorted(p[..4].to_vec()), ["1", "1", "2", "2"]);
        assert_ne!(sorted(s), sorted(p));
    }

    #[test]
    fn token_count_formula() {
        let g = graph(GraphVariant::Base, &["a", "b", "c", "d", "e"], &[(0, 1), (3, 4)]);
        for h in 0..4 {
            assert_eq!(wl_relabel(&g, h, 0.25).tokens.len(), (h + 1) * 5);
        }
    }
}
