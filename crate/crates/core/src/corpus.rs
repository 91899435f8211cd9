//! Article ingestion: cleaning, sentence segmentation, table-driven
//! lemmatization, weak labels and train/test splits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::par::Exec;

/// Seven-point political bias rating, ordered far-left to far-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasLabel {
    FarLeft,
    Left,
    LeftCenter,
    Center,
    RightCenter,
    Right,
    FarRight,
}

impl BiasLabel {
    pub const ALL: [BiasLabel; 7] = [
        BiasLabel::FarLeft,
        BiasLabel::Left,
        BiasLabel::LeftCenter,
        BiasLabel::Center,
        BiasLabel::RightCenter,
        BiasLabel::Right,
        BiasLabel::FarRight,
    ];

    /// Symmetric ordinal encoding, -3 (far-left) ..= +3 (far-right).
    pub fn ordinal(self) -> i32 {
        self.index() as i32 - 3
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasLabel::FarLeft => "far-left",
            BiasLabel::Left => "left",
            BiasLabel::LeftCenter => "left-center",
            BiasLabel::Center => "center",
            BiasLabel::RightCenter => "right-center",
            BiasLabel::Right => "right",
            BiasLabel::FarRight => "far-right",
        }
    }
}

impl fmt::Display for BiasLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_lowercase().replace([' ', '_'], "-");
        BiasLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| Error::Invalid(format!("unknown bias label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    pub domain: String,
    #[serde(default)]
    pub topic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_label: Option<BiasLabel>,
}

/// A cleaned article: sentences of lowercase, punctuation-free lemmas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub domain: String,
    pub topic: String,
    /// Weak label inherited from the publishing domain.
    pub label: BiasLabel,
    /// Human article-level annotation, when the corpus carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_label: Option<BiasLabel>,
}

impl Document {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn token_stream(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.iter().all(Vec::is_empty)
    }
}

static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|ftp://|www\.)\S+").unwrap());
static CONTROL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{Cc}|\p{Cf}").unwrap());
static SPACE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static PUNCT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());

const ENTITIES: [(&str, &str); 6] = [
    ("&nbsp;", " "),
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", "\""),
    ("&#39;", "'"),
    ("&amp;", "&"),
];

/// Strips markup, URLs and control characters, applies NFKC and collapses
/// whitespace.
pub fn clean_text(raw: &str) -> String {
    let no_tags = TAG_RE.replace_all(raw, " ");
    let mut decoded = no_tags.into_owned();
    for (entity, repl) in ENTITIES {
        if decoded.contains(entity) {
            decoded = decoded.replace(entity, repl);
        }
    }
    let no_urls = URL_RE.replace_all(&decoded, " ");
    let normalized: String = no_urls.nfkc().collect();
    let no_ctrl = CONTROL_RE.replace_all(&normalized, " ");
    SPACE_RE.replace_all(&no_ctrl, " ").trim().to_string()
}

/// Byte-level entry point; rejects input that is not valid UTF-8.
pub fn clean_bytes(id: &str, raw: &[u8]) -> Result<String> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Ingest {
        id: id.to_string(),
        reason: format!("body is not valid UTF-8: {e}"),
    })?;
    Ok(clean_text(text))
}

/// Tokens that end in a period without closing a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "sen", "rep", "gov", "gen", "col", "lt",
    "sgt", "capt", "cmdr", "adm", "pres", "rev", "hon", "vs", "etc", "inc", "ltd", "co", "corp",
    "no", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "u.s", "u.k", "u.n", "e.g", "i.e", "a.m", "p.m", "d.c", "mt", "ft", "ave", "blvd",
];

#[derive(Debug, Clone, Default)]
pub struct LemmaTable(HashMap<String, String>);

impl LemmaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, lemma: impl Into<String>) {
        self.0.insert(token.into(), lemma.into());
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.0.get(token).map(String::as_str).unwrap_or(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads `token<TAB>lemma` lines; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = LemmaTable::new();
        for (line_no, line) in read_lines(path)? {
            let (tok, lemma) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: "expected token<TAB>lemma".into(),
            })?;
            table.insert(tok.trim().to_lowercase(), normalize_token(lemma.trim()));
        }
        Ok(table)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for LemmaTable {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        LemmaTable(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stoplist(HashSet<String>);

impl Stoplist {
    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    /// One token per line.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(read_lines(path)?
            .into_iter()
            .map(|(_, l)| l.trim().to_lowercase())
            .collect())
    }
}

impl<S: Into<String>> FromIterator<S> for Stoplist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stoplist(iter.into_iter().map(Into::into).collect())
    }
}

fn normalize_token(tok: &str) -> String {
    PUNCT_RE.replace_all(&tok.to_lowercase(), "").into_owned()
}

/// Splits on sentence-final `.`, `!` and `?`, guarding common abbreviations,
/// then lowercases, strips punctuation, drops stop words and maps tokens to
/// lemmas (identity when the table has no entry).
pub fn segment_and_lemmatize(
    text: &str,
    lemmas: &LemmaTable,
    stoplist: &Stoplist,
) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();

    for raw in text.split_whitespace() {
        let ends_sentence = ends_sentence(raw);
        let tok = normalize_token(raw);
        if !tok.is_empty() && !stoplist.contains(&tok) {
            let lemma = lemmas.lemma(&tok);
            if !lemma.is_empty() {
                current.push(lemma.to_string());
            }
        }
        if ends_sentence && !current.is_empty() {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

fn ends_sentence(raw: &str) -> bool {
    let trimmed = raw.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
    let Some(last) = trimmed.chars().last() else {
        return false;
    };
    match last {
        '!' | '?' => true,
        '.' => {
            let stem = trimmed.trim_end_matches('.').to_lowercase();
            let stem = stem.trim_start_matches(['"', '\'', '(', '[', '\u{201c}']);
            // single-letter initials ("J.") and known abbreviations
            !(stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic)
                || ABBREVIATIONS.contains(&stem))
        }
        _ => false,
    }
}

/// Exact-hostname map from publishing domain to bias rating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainTable(BTreeMap<String, BiasLabel>);

impl DomainTable {
    pub fn get(&self, domain: &str) -> Option<BiasLabel> {
        self.0.get(domain).copied()
    }

    pub fn insert(&mut self, domain: impl Into<String>, label: BiasLabel) {
        self.0.insert(domain.into(), label);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, BiasLabel)> {
        self.0.iter().map(|(d, l)| (d.as_str(), *l))
    }

    /// Reads `domain,label` rows. A `domain,label` header row is tolerated.
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = DomainTable::default();
        for (line_no, line) in read_lines(path)? {
            let (domain, label) = line.split_once(',').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: "expected domain,label".into(),
            })?;
            let (domain, label) = (domain.trim(), label.trim());
            if line_no == 1 && domain.eq_ignore_ascii_case("domain") {
                continue;
            }
            let label = label.parse().map_err(|e: Error| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
            table.insert(domain.to_lowercase(), label);
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("domain,label\n");
        for (d, l) in self.iter() {
            out.push_str(&format!("{d},{l}\n"));
        }
        out
    }
}

impl FromIterator<(String, BiasLabel)> for DomainTable {
    fn from_iter<I: IntoIterator<Item = (String, BiasLabel)>>(iter: I) -> Self {
        DomainTable(iter.into_iter().collect())
    }
}

/// Domain lookup on the exact hostname; `None` means the article is excluded.
pub fn assign_weak_label(article: &RawArticle, table: &DomainTable) -> Option<BiasLabel> {
    table.get(&article.domain)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Reads a JSON-lines corpus, reporting the offending line on failure.
pub fn load_corpus(path: &Path) -> Result<Vec<RawArticle>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let text = std::str::from_utf8(line).map_err(|e| parse_err(format!("invalid UTF-8: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        let article: RawArticle =
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if article.body.trim().is_empty() {
            return Err(parse_err(format!("article {} has an empty body", article.id)));
        }
        if !seen.insert(article.id.clone()) {
            return Err(parse_err(format!("duplicate article id {}", article.id)));
        }
        articles.push(article);
    }
    Ok(articles)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Prepend the title as the first sentence(s) of the document.
    pub include_title: bool,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    /// Sorted by id.
    pub documents: Vec<Document>,
    /// Ids dropped for an unknown domain or for having no tokens left.
    pub excluded: Vec<String>,
}

pub fn ingest(
    articles: &[RawArticle],
    domains: &DomainTable,
    lemmas: &LemmaTable,
    stoplist: &Stoplist,
    options: &IngestOptions,
    exec: Exec,
) -> IngestOutcome {
    let results = exec.map(articles, |article| {
        let Some(label) = assign_weak_label(article, domains) else {
            log::warn!(
                "article {} excluded: domain {:?} has no bias label",
                article.id,
                article.domain
            );
            return Err(article.id.clone());
        };
        let mut sentences = Vec::new();
        if options.include_title {
            sentences.extend(segment_and_lemmatize(
                &clean_text(&article.title),
                lemmas,
                stoplist,
            ));
        }
        sentences.extend(segment_and_lemmatize(
            &clean_text(&article.body),
            lemmas,
            stoplist,
        ));
        if sentences.is_empty() {
            log::warn!("article {} excluded: no tokens after cleaning", article.id);
            return Err(article.id.clone());
        }
        Ok(Document {
            id: article.id.clone(),
            sentences,
            domain: article.domain.clone(),
            topic: article.topic.clone(),
            label,
            article_label: article.article_label,
        })
    });

    let mut outcome = IngestOutcome::default();
    for r in results {
        match r {
            Ok(doc) => outcome.documents.push(doc),
            Err(id) => outcome.excluded.push(id),
        }
    }
    outcome.documents.sort_by(|a, b| a.id.cmp(&b.id));
    outcome.excluded.sort();
    outcome
}

/// A seeded train/test partition of document ids, shared by every
/// configuration in an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitSpec {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("split serializes");
        hex_digest(&json)
    }

    pub fn is_train(&self, id: &str) -> bool {
        self.train_ids.binary_search_by(|x| x.as_str().cmp(id)).is_ok()
    }

    pub fn is_test(&self, id: &str) -> bool {
        self.test_ids.binary_search_by(|x| x.as_str().cmp(id)).is_ok()
    }

    /// Partition items by split membership; items in neither set are dropped.
    pub fn partition<'a, T>(&self, items: &'a [T], id: impl Fn(&T) -> &str) -> (Vec<&'a T>, Vec<&'a T>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for item in items {
            if self.is_train(id(item)) {
                train.push(item);
            } else if self.is_test(id(item)) {
                test.push(item);
            }
        }
        (train, test)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Uniform random split of `documents` into train and test.
///
/// With `stratify`, each weak-label group is split separately.
pub fn make_split(documents: &[Document], seed: u64, fraction: f64, stratify: bool) -> Result<SplitSpec> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if documents.len() < 2 {
        return Err(Error::Config(format!(
            "a split needs at least 2 documents, got {}",
            documents.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();

    let groups: Vec<Vec<&str>> = if stratify {
        let mut by_label: BTreeMap<BiasLabel, Vec<&str>> = BTreeMap::new();
        for d in documents {
            by_label.entry(d.label).or_default().push(&d.id);
        }
        by_label.into_values().collect()
    } else {
        vec![documents.iter().map(|d| d.id.as_str()).collect()]
    };

    for mut ids in groups {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let k = if ids.len() < 2 {
            ids.len()
        } else {
            train_count(ids.len(), fraction)
        };
        train.extend(ids[..k].iter().map(|s| s.to_string()));
        test.extend(ids[k..].iter().map(|s| s.to_string()));
    }
    if test.is_empty() {
        // stratified split of singleton groups can leave test empty
        let last = train.pop_last().expect("at least two documents");
        test.insert(last);
    }

    Ok(SplitSpec {
        seed,
        train_ids: train.into_iter().collect(),
        test_ids: test.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, label: BiasLabel) -> Document {
        Document {
            id: id.into(),
            sentences: vec![vec!["x".into()]],
            domain: "d".into(),
            topic: "t".into(),
            label,
            article_label: None,
        }
    }

    #[test]
    fn clean_strips_tags_and_urls() {
        assert_eq!(clean_text("See <b>this</b> at https://x.co now"), "See this at now");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("a\u{00A0}b"), "a b");
        assert_eq!(clean_text("x\u{0007}y\n\tz"), "x y z");
        assert_eq!(clean_text("Tom &amp; Jerry"), "Tom & Jerry");
    }

    #[test]
    fn undecodable_bytes_carry_article_id() {
        let err = clean_bytes("a17", &[0x66, 0xff, 0xfe]).unwrap_err();
        assert!(matches!(err, Error::Ingest { ref id, .. } if id == "a17"));
    }

    #[test]
    fn segment_with_lemma_table() {
        let table: LemmaTable = [("cats", "cat"), ("ran", "run"), ("dogs", "dog")]
            .into_iter()
            .collect();
        let out = segment_and_lemmatize("Cats ran. Dogs ran!", &table, &Stoplist::default());
        assert_eq!(out, vec![vec!["cat", "run"], vec!["dog", "run"]]);
    }

    #[test]
    fn stoplist_can_empty_everything() {
        let stop: Stoplist = ["the", "a", "an"].into_iter().collect();
        assert!(segment_and_lemmatize("the a an", &LemmaTable::new(), &stop).is_empty());
    }

    // hand-segmented fixtures for the abbreviation guard
    #[test]
    fn abbreviation_guard_fixtures() {
        let none = (LemmaTable::new(), Stoplist::default());
        let cases: &[(&str, &[&[&str]])] = &[
            ("Dr. Smith left.", &[&["dr", "smith", "left"]]),
            (
                "Mr. and Mrs. Jones met Gen. Lee. They talked.",
                &[&["mr", "and", "mrs", "jones", "met", "gen", "lee"], &["they", "talked"]],
            ),
            (
                "The U.S. Senate voted. Was it close? Yes!",
                &[&["the", "us", "senate", "voted"], &["was", "it", "close"], &["yes"]],
            ),
            ("John F. Kennedy spoke.", &[&["john", "f", "kennedy", "spoke"]]),
            ("He said \"stop.\" Then left", &[&["he", "said", "stop"], &["then", "left"]]),
            ("no terminal punctuation", &[&["no", "terminal", "punctuation"]]),
        ];
        for (text, want) in cases {
            let got = segment_and_lemmatize(text, &none.0, &none.1);
            let want: Vec<Vec<String>> = want
                .iter()
                .map(|s| s.iter().map(|t| t.to_string()).collect())
                .collect();
            assert_eq!(got, want, "{text}");
        }
    }

    #[test]
    fn weak_labels_from_domain_table() {
        let table: DomainTable = [
            ("cnn.com".to_string(), BiasLabel::Left),
            ("reuters.com".to_string(), BiasLabel::Center),
        ]
        .into_iter()
        .collect();
        let mut a = RawArticle {
            id: "1".into(),
            title: String::new(),
            body: "x".into(),
            domain: "cnn.com".into(),
            topic: "AFG".into(),
            article_label: None,
        };
        assert_eq!(assign_weak_label(&a, &table), Some(BiasLabel::Left));
        a.domain = "reuters.com".into();
        assert_eq!(assign_weak_label(&a, &table), Some(BiasLabel::Center));
        a.domain = "unknown.example".into();
        assert_eq!(assign_weak_label(&a, &table), None);
    }

    #[test]
    fn ingest_excludes_unknown_domains_and_sorts() {
        let table: DomainTable = [("cnn.com".to_string(), BiasLabel::Left)].into_iter().collect();
        let mk = |id: &str, domain: &str| RawArticle {
            id: id.into(),
            title: "Big News".into(),
            body: "Some words here. More words.".into(),
            domain: domain.into(),
            topic: "VAX".into(),
            article_label: Some(BiasLabel::Center),
        };
        let arts = vec![mk("b", "cnn.com"), mk("a", "cnn.com"), mk("c", "nope.org")];
        let out = ingest(
            &arts,
            &table,
            &LemmaTable::new(),
            &Stoplist::default(),
            &IngestOptions { include_title: true },
            Exec::Parallel,
        );
        assert_eq!(out.excluded, vec!["c"]);
        let ids: Vec<_> = out.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(out.documents[0].sentences[0], vec!["big", "news"]);
        assert_eq!(out.documents[0].article_label, Some(BiasLabel::Center));
        // relabeling is pure
        let again = ingest(
            &arts,
            &table,
            &LemmaTable::new(),
            &Stoplist::default(),
            &IngestOptions { include_title: true },
            Exec::Sequential,
        );
        assert_eq!(again.documents, out.documents);
    }

    #[test]
    fn bias_label_parsing_and_ordinals() {
        assert_eq!("Far Right".parse::<BiasLabel>().unwrap(), BiasLabel::FarRight);
        assert_eq!("left-center".parse::<BiasLabel>().unwrap(), BiasLabel::LeftCenter);
        assert!("moderate".parse::<BiasLabel>().is_err());
        let ords: Vec<i32> = BiasLabel::ALL.iter().map(|l| l.ordinal()).collect();
        assert_eq!(ords, vec![-3, -2, -1, 0, 1, 2, 3]);
        assert_eq!(
            serde_json::to_string(&BiasLabel::RightCenter).unwrap(),
            "\"right-center\""
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let docs: Vec<_> = (0..10).map(|i| doc(&format!("d{i}"), BiasLabel::Left)).collect();
        let s = make_split(&docs, 7, 0.8, false).unwrap();
        assert_eq!((s.train_ids.len(), s.test_ids.len()), (8, 2));
        assert_eq!(s, make_split(&docs, 7, 0.8, false).unwrap());
        assert!(make_split(&docs, 7, 1.0, false).is_err());
        assert!(make_split(&docs, 7, 0.0, false).is_err());
        assert!(make_split(&docs[..1], 7, 0.5, false).is_err());
    }

    #[test]
    fn corpus_reports_bad_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("corpus.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"body\":\"x\",\"domain\":\"a.com\"}\n{not json}\n",
        )
        .unwrap();
        match load_corpus(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..60, seed in any::<u64>(), stratify in any::<bool>()) {
            let docs: Vec<_> = (0..n)
                .map(|i| doc(&format!("d{i:03}"), BiasLabel::ALL[i % 3]))
                .collect();
            let s = make_split(&docs, seed, 0.8, stratify).unwrap();
            let train: BTreeSet<_> = s.train_ids.iter().collect();
            let test: BTreeSet<_> = s.test_ids.iter().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert!(!test.is_empty() && !train.is_empty());
        }

        #[test]
        fn lemmas_are_lowercase_and_punctuation_free(text in "\\PC{0,200}") {
            let lemma_re = Regex::new(r"^[^\s\p{P}]+$").unwrap();
            for sent in segment_and_lemmatize(&clean_text(&text), &LemmaTable::new(), &Stoplist::default()) {
                prop_assert!(!sent.is_empty());
                for tok in sent {
                    prop_assert!(lemma_re.is_match(&tok), "{:?}", tok);
                    prop_assert_eq!(tok.to_lowercase(), tok.clone());
                }
            }
        }
    }
}
