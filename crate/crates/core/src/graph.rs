//! Per-document word co-occurrence graphs weighted by normalized PMI.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::escape::escape;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphVariant {
    /// Topology only; WL starts from node degrees.
    Base,
    /// Node attribute is the lemma itself.
    WordNode,
    /// Node attribute is an external word vector plus mean sentiment.
    VectorNode,
}

impl GraphVariant {
    pub const ALL: [GraphVariant; 3] = [GraphVariant::Base, GraphVariant::WordNode, GraphVariant::VectorNode];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphVariant::Base => "base",
            GraphVariant::WordNode => "word-node",
            GraphVariant::VectorNode => "vector-node",
        }
    }
}

impl std::str::FromStr for GraphVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GraphVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown graph variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum NodeAttr {
    None,
    Word(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub lemma: String,
    pub attr: NodeAttr,
}

/// Undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Nodes are sorted by lemma; edges are sorted by `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocGraph {
    pub doc_id: String,
    pub variant: GraphVariant,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl DocGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    /// Edge weights keyed by lemma pair (lexicographically ordered).
    pub fn weight_map(&self) -> BTreeMap<(String, String), f64> {
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (&self.nodes[e.u].lemma, &self.nodes[e.v].lemma);
                let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                (key, e.weight)
            })
            .collect()
    }
}

/// Unigram and sentence-level pair counts for a single document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CooccurrenceStats {
    pub unigrams: BTreeMap<String, u64>,
    pub total_unigrams: u64,
    /// Keys are ordered `(a, b)` with `a < b`.
    pub pairs: BTreeMap<(String, String), u64>,
    pub total_pairs: u64,
}

impl CooccurrenceStats {
    pub fn unigram(&self, w: &str) -> u64 {
        self.unigrams.get(w).copied().unwrap_or(0)
    }

    pub fn pair(&self, w1: &str, w2: &str) -> u64 {
        let key = ordered(w1, w2);
        self.pairs.get(&key).copied().unwrap_or(0)
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Every token occurrence counts as a unigram; each unordered pair of distinct
/// lemmas counts once per sentence that contains both.
pub fn count_cooccurrence(doc: &Document) -> CooccurrenceStats {
    let mut stats = CooccurrenceStats::default();
    for sentence in &doc.sentences {
        for tok in sentence {
            *stats.unigrams.entry(tok.clone()).or_default() += 1;
            stats.total_unigrams += 1;
        }
        let distinct: BTreeSet<&String> = sentence.iter().collect();
        let distinct: Vec<&String> = distinct.into_iter().collect();
        for (i, a) in distinct.iter().enumerate() {
            for b in &distinct[i + 1..] {
                *stats.pairs.entry(((*a).clone(), (*b).clone())).or_default() += 1;
                stats.total_pairs += 1;
            }
        }
    }
    stats
}

/// Normalized PMI of a co-occurring pair, or `None` when it is not positive.
///
/// Unigram probabilities use the unigram total and the pair probability uses
/// the pair total. A document whose only pair event is this pair has
/// `P(pair) = 1`, which zeroes the normalizer; that case is pinned to 1.0.
pub fn npmi_weight(stats: &CooccurrenceStats, w1: &str, w2: &str) -> Result<Option<f64>> {
    let c12 = stats.pair(w1, w2);
    if c12 == 0 {
        return Err(Error::Invalid(format!(
            "npmi requested for non-co-occurring pair ({w1}, {w2})"
        )));
    }
    let p12 = c12 as f64 / stats.total_pairs as f64;
    if c12 == stats.total_pairs {
        return Ok(Some(1.0));
    }
    let p1 = stats.unigram(w1) as f64 / stats.total_unigrams as f64;
    let p2 = stats.unigram(w2) as f64 / stats.total_unigrams as f64;
    let weight = (p12 / (p1 * p2)).log2() / -p12.log2();
    Ok((weight > 0.0).then_some(weight))
}

/// Dense word vectors keyed by lemma.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        WordVectors {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, lemma: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        self.vectors.insert(lemma.into(), v);
        Ok(())
    }

    /// Zero vector for unknown lemmas.
    pub fn get(&self, lemma: &str) -> Vec<f64> {
        self.vectors
            .get(lemma)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    /// Text format `lemma v1 v2 ... vd`; the first line fixes `d`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out: Option<WordVectors> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(lemma) = parts.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let values = values.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("bad vector component: {e}"),
            })?;
            let table = out.get_or_insert_with(|| WordVectors::new(values.len()));
            table.insert(lemma, values).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        out.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "empty vector file".into(),
        })
    }
}

/// Token valences in [-1, 1].
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon(HashMap<String, f64>);

impl SentimentLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, valence: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&valence) {
            return Err(Error::Invalid(format!("valence {valence} outside [-1, 1]")));
        }
        self.0.insert(token.into(), valence);
        Ok(())
    }

    pub fn valence(&self, token: &str) -> f64 {
        self.0.get(token).copied().unwrap_or(0.0)
    }

    /// `token<TAB>valence` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lex = SentimentLexicon::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (tok, val) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>valence".into()))?;
            let val: f64 = val.trim().parse().map_err(|e| err(format!("{e}")))?;
            lex.insert(tok.trim().to_lowercase(), val)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(lex)
    }
}

/// Shared read-only inputs for the vector-node variant.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeResources<'a> {
    pub vectors: Option<&'a WordVectors>,
    pub lexicon: Option<&'a SentimentLexicon>,
}

pub fn build_graph(doc: &Document, variant: GraphVariant, res: NodeResources<'_>) -> Result<DocGraph> {
    if doc.is_empty() {
        return Err(Error::EmptyDocument(doc.id.clone()));
    }
    let stats = count_cooccurrence(doc);

    let lemmas: Vec<&String> = stats.unigrams.keys().collect();
    let index: HashMap<&str, usize> = lemmas
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut edges = Vec::new();
    for (a, b) in stats.pairs.keys() {
        if let Some(weight) = npmi_weight(&stats, a, b)? {
            let (u, v) = (index[a.as_str()], index[b.as_str()]);
            edges.push(Edge {
                u: u.min(v),
                v: u.max(v),
                weight,
            });
        }
    }
    edges.sort_by_key(|e| (e.u, e.v));

    let nodes = match variant {
        GraphVariant::Base => lemmas
            .iter()
            .map(|l| Node {
                lemma: (*l).clone(),
                attr: NodeAttr::None,
            })
            .collect(),
        GraphVariant::WordNode => lemmas
            .iter()
            .map(|l| Node {
                lemma: (*l).clone(),
                attr: NodeAttr::Word((*l).clone()),
            })
            .collect(),
        GraphVariant::VectorNode => {
            let (Some(vectors), Some(lexicon)) = (res.vectors, res.lexicon) else {
                return Err(Error::Config(
                    "vector-node graphs need word vectors and a sentiment lexicon".into(),
                ));
            };
            // per-occurrence valence sums
            let mut valence: HashMap<&str, f64> = HashMap::new();
            for tok in doc.tokens() {
                *valence.entry(tok).or_default() += lexicon.valence(tok);
            }
            lemmas
                .iter()
                .map(|l| {
                    let mut v = vectors.get(l);
                    v.push(valence[l.as_str()] / stats.unigrams[*l] as f64);
                    Node {
                        lemma: (*l).clone(),
                        attr: NodeAttr::Vector(v),
                    }
                })
                .collect()
        }
    };

    Ok(DocGraph {
        doc_id: doc.id.clone(),
        variant,
        nodes,
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    GraphMl,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "graphml" => Ok(ExportFormat::GraphMl),
            "dot" => Ok(ExportFormat::Dot),
            _ => Err(Error::Invalid(format!("unknown export format {s:?}"))),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Dot => "dot",
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_weight(w: f64) -> String {
    format!("{w:?}")
}

fn join_vector(v: &[f64]) -> String {
    v.iter().map(|x| fmt_weight(*x)).collect::<Vec<_>>().join(" ")
}

pub fn to_graphml(g: &DocGraph) -> String {
    let labelled = g.variant != GraphVariant::Base;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    if labelled {
        out.push_str("  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
    }
    if g.variant == GraphVariant::VectorNode {
        out.push_str("  <key id=\"vec\" for=\"node\" attr.name=\"vec\" attr.type=\"string\"/>\n");
    }
    out.push_str("  <key id=\"w\" for=\"edge\" attr.name=\"w\" attr.type=\"double\"/>\n");
    let _ = writeln!(
        out,
        "  <graph id=\"{}\" edgedefault=\"undirected\">",
        escape(g.doc_id.as_str())
    );
    for (i, n) in g.nodes.iter().enumerate() {
        if !labelled {
            let _ = writeln!(out, "    <node id=\"n{i}\"/>");
            continue;
        }
        let _ = write!(out, "    <node id=\"n{i}\"><data key=\"label\">{}</data>", escape(n.lemma.as_str()));
        if let NodeAttr::Vector(v) = &n.attr {
            let _ = write!(out, "<data key=\"vec\">{}</data>", join_vector(v));
        }
        out.push_str("</node>\n");
    }
    for e in &g.edges {
        let _ = writeln!(
            out,
            "    <edge source=\"n{}\" target=\"n{}\"><data key=\"w\">{}</data></edge>",
            e.u,
            e.v,
            fmt_weight(e.weight)
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(g: &DocGraph) -> String {
    let mut out = format!("graph {} {{\n", dot_quote(&g.doc_id));
    for (i, n) in g.nodes.iter().enumerate() {
        match g.variant {
            GraphVariant::Base => {
                let _ = writeln!(out, "  n{i};");
            }
            _ => {
                let _ = writeln!(out, "  n{i} [label={}];", dot_quote(&n.lemma));
            }
        }
    }
    for e in &g.edges {
        let _ = writeln!(out, "  n{} -- n{} [weight={}];", e.u, e.v, fmt_weight(e.weight));
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(g: &DocGraph, format: ExportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ExportFormat::GraphMl => to_graphml(g),
        ExportFormat::Dot => to_dot(g),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses GraphML written by [`to_graphml`]. Unlabelled graphs come back as
/// [`GraphVariant::Base`] with node ids standing in for lemmas.
pub fn from_graphml(text: &str) -> Result<DocGraph> {
    let bad = |m: String| Error::Invalid(format!("graphml: {m}"));
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut doc_id = String::new();
    let mut ids: Vec<String> = Vec::new();
    let mut labels: HashMap<String, String> = HashMap::new();
    let mut vecs: HashMap<String, Vec<f64>> = HashMap::new();
    let mut raw_edges: Vec<(String, String, Option<f64>)> = Vec::new();

    let mut current_node: Option<String> = None;
    let mut in_edge = false;
    let mut data_key: Option<String> = None;
    let mut buf = String::new();

    let attr = |e: &quick_xml::events::BytesStart<'_>, name: &[u8]| -> Result<Option<String>> {
        for a in e.attributes() {
            let a = a.map_err(|e| bad(e.to_string()))?;
            if a.key.as_ref() == name {
                let v = a.unescape_value().map_err(|e| bad(e.to_string()))?;
                return Ok(Some(v.into_owned()));
            }
        }
        Ok(None)
    };

    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"graph" => {
                doc_id = attr(&e, b"id")?.unwrap_or_default();
            }
            Event::Start(e) if e.name().as_ref() == b"node" => {
                let id = attr(&e, b"id")?.ok_or_else(|| bad("node without id".into()))?;
                ids.push(id.clone());
                current_node = Some(id);
            }
            Event::Empty(e) if e.name().as_ref() == b"node" => {
                ids.push(attr(&e, b"id")?.ok_or_else(|| bad("node without id".into()))?);
            }
            Event::Start(e) if e.name().as_ref() == b"edge" => {
                let s = attr(&e, b"source")?.ok_or_else(|| bad("edge without source".into()))?;
                let t = attr(&e, b"target")?.ok_or_else(|| bad("edge without target".into()))?;
                raw_edges.push((s, t, None));
                in_edge = true;
            }
            Event::Empty(e) if e.name().as_ref() == b"edge" => {
                let s = attr(&e, b"source")?.ok_or_else(|| bad("edge without source".into()))?;
                let t = attr(&e, b"target")?.ok_or_else(|| bad("edge without target".into()))?;
                raw_edges.push((s, t, None));
            }
            Event::Start(e) if e.name().as_ref() == b"data" => {
                data_key = attr(&e, b"key")?;
                buf.clear();
            }
            Event::Text(t) if data_key.is_some() => {
                buf.push_str(&t.decode().map_err(|e| bad(e.to_string()))?);
            }
            Event::GeneralRef(r) if data_key.is_some() => {
                if let Some(c) = r.resolve_char_ref().map_err(|e| bad(e.to_string()))? {
                    buf.push(c);
                } else {
                    let name = r.decode().map_err(|e| bad(e.to_string()))?;
                    let c = quick_xml::escape::resolve_xml_entity(&name)
                        .ok_or_else(|| bad(format!("unknown entity &{name};")))?;
                    buf.push_str(c);
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"node" => current_node = None,
                b"edge" => in_edge = false,
                b"data" => {
                    let text = std::mem::take(&mut buf);
                    match (data_key.take().as_deref(), &current_node, in_edge) {
                        (Some("label"), Some(n), _) => {
                            labels.insert(n.clone(), text);
                        }
                        (Some("vec"), Some(n), _) => {
                            let v: std::result::Result<Vec<f64>, _> =
                                text.split_whitespace().map(str::parse).collect();
                            vecs.insert(n.clone(), v.map_err(|e| bad(format!("{e}")))?);
                        }
                        (Some("w"), None, true) => {
                            let w: f64 = text.trim().parse().map_err(|e| bad(format!("{e}")))?;
                            if let Some(last) = raw_edges.last_mut() {
                                last.2 = Some(w);
                            }
                        }
                        _ => {}
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }

    let variant = if !vecs.is_empty() {
        GraphVariant::VectorNode
    } else if !labels.is_empty() {
        GraphVariant::WordNode
    } else {
        GraphVariant::Base
    };
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let nodes = ids
        .iter()
        .map(|id| {
            let lemma = labels.get(id).cloned().unwrap_or_else(|| id.clone());
            let attr = match variant {
                GraphVariant::Base => NodeAttr::None,
                GraphVariant::WordNode => NodeAttr::Word(lemma.clone()),
                GraphVariant::VectorNode => NodeAttr::Vector(vecs.get(id).cloned().unwrap_or_default()),
            };
            Node { lemma, attr }
        })
        .collect();
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (s, t, w) in raw_edges {
        let (u, v) = (
            *pos.get(s.as_str()).ok_or_else(|| bad(format!("unknown node {s}")))?,
            *pos.get(t.as_str()).ok_or_else(|| bad(format!("unknown node {t}")))?,
        );
        edges.push(Edge {
            u: u.min(v),
            v: u.max(v),
            weight: w.ok_or_else(|| bad("edge without weight".into()))?,
        });
    }
    edges.sort_by_key(|e| (e.u, e.v));
    Ok(DocGraph {
        doc_id,
        variant,
        nodes,
        edges,
    })
}
