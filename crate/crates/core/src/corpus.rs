//! Corpus loading and text normalization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stem::porter_stem;

pub const DEFAULT_STOPWORDS: &[&str] = &["the", "and", "a", "an", "of", "to"];

const DEFAULT_PATTERNS: &str = include_str!("patterns.toml");

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    /// Stemmed tokens; empty until the document has been preprocessed.
    #[serde(default)]
    pub tokens: Vec<String>,
    /// Unstemmed forms aligned with `tokens`, used for vocabulary display.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surface: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            raw_text: raw_text.into(),
            tokens: Vec::new(),
            surface: Vec::new(),
            tags: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// `.csv` means CSV, anything else is read as JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: serde_json::Value,
    text: String,
    #[serde(default)]
    tags: Option<Vec<String>>,
}

/// Reads one document per record, preserving file order. Tokens are left
/// empty.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    let docs = match format {
        CorpusFormat::Jsonl => load_jsonl(path)?,
        CorpusFormat::Csv => load_csv(path)?,
    };
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in &docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
    }
    Ok(docs)
}

fn load_jsonl(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    let malformed = |record: usize, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        record,
        message,
    };
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: JsonRecord =
            serde_json::from_str(line).map_err(|e| malformed(lineno + 1, e.to_string()))?;
        let id = match rec.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(malformed(lineno + 1, format!("id must be a string, got {other}"))),
        };
        if id.is_empty() {
            return Err(malformed(lineno + 1, "empty id".into()));
        }
        docs.push(Document {
            tags: rec.tags,
            ..Document::new(id, rec.text)
        });
    }
    Ok(docs)
}

fn load_csv(path: &Path) -> Result<Vec<Document>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut docs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if i == 0 && row.len() == 2 && &row[0] == "id" && &row[1] == "text" {
            continue;
        }
        if row.len() != 2 || row[0].is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                record: i + 1,
                message: format!("expected nonempty id and text, got {} fields", row.len()),
            });
        }
        docs.push(Document::new(&row[0], &row[1]));
    }
    Ok(docs)
}

/// Whole-word spelling corrections.
#[derive(Debug, Clone, Default)]
pub struct SpellingDictionary {
    entries: BTreeMap<String, String>,
    matcher: Option<Regex>,
}

impl SpellingDictionary {
    /// Builds a dictionary from `(wrong, right)` pairs. Entries are
    /// lowercased. Self-mappings and chains (a value that is also a key)
    /// are rejected.
    pub fn new<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut entries = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.as_ref().trim().to_lowercase();
            let v = v.as_ref().trim().to_lowercase();
            if k.is_empty() {
                return Err(Error::Dictionary("empty key".into()));
            }
            if k == v {
                return Err(Error::Dictionary(format!("{k} maps to itself")));
            }
            entries.insert(k, v);
        }
        if let Some(v) = entries.values().find(|v| entries.contains_key(v.as_str())) {
            return Err(Error::Dictionary(format!("chained entry: {v} is both a value and a key")));
        }
        let matcher = if entries.is_empty() {
            None
        } else {
            let mut keys: Vec<&String> = entries.keys().collect();
            keys.sort_by_key(|k| std::cmp::Reverse(k.len()));
            let alt = keys
                .iter()
                .map(|k| regex::escape(k))
                .collect::<Vec<_>>()
                .join("|");
            Some(Regex::new(&format!(r"\b(?:{alt})\b")).map_err(|e| Error::Dictionary(e.to_string()))?)
        };
        Ok(SpellingDictionary { entries, matcher })
    }

    /// Reads a `wrong,right` CSV. A literal `wrong,right` header row is skipped.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut pairs = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            if i == 0 && &row[0] == "wrong" && row.get(1) == Some("right") {
                continue;
            }
            if row.len() != 2 {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    record: i + 1,
                    message: "expected wrong,right".into(),
                });
            }
            pairs.push((row[0].to_string(), row[1].to_string()));
        }
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn apply(&self, text: &str) -> String {
        match &self.matcher {
            None => text.to_string(),
            Some(re) => re
                .replace_all(text, |caps: &regex::Captures| self.entries[&caps[0]].clone())
                .into_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceholderKind {
    Date,
    Dose,
    Time,
}

impl PlaceholderKind {
    pub fn word(self) -> &'static str {
        match self {
            PlaceholderKind::Date => "date",
            PlaceholderKind::Dose => "dose",
            PlaceholderKind::Time => "time",
        }
    }
}

#[derive(Deserialize)]
struct PatternFile {
    version: u32,
    #[serde(default)]
    pattern: Vec<PatternEntry>,
}

#[derive(Deserialize)]
struct PatternEntry {
    kind: PlaceholderKind,
    regex: String,
}

/// Date, dose and time surface patterns.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub version: u32,
    patterns: Vec<(PlaceholderKind, Regex)>,
}

impl PatternSet {
    pub fn parse(toml_text: &str) -> Result<Self> {
        let file: PatternFile =
            toml::from_str(toml_text).map_err(|e| Error::Patterns(e.to_string()))?;
        let patterns = file
            .pattern
            .into_iter()
            .map(|p| {
                Regex::new(&p.regex)
                    .map(|re| (p.kind, re))
                    .map_err(|e| Error::Patterns(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PatternSet {
            version: file.version,
            patterns,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn default_text() -> &'static str {
        DEFAULT_PATTERNS
    }

    /// Replaces every match with its placeholder word, scanning left to
    /// right and taking the longest match among those starting earliest.
    pub fn replace(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut pos = 0;
        while pos <= text.len() {
            let best = self
                .patterns
                .iter()
                .filter_map(|(kind, re)| re.find_at(text, pos).map(|m| (m.start(), m.end(), *kind)))
                .filter(|(s, e, _)| e > s)
                .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            match best {
                Some((start, end, kind)) => {
                    out.push_str(&text[pos..start]);
                    out.push_str(kind.word());
                    pos = end;
                }
                None => {
                    out.push_str(&text[pos..]);
                    break;
                }
            }
        }
        out
    }
}

impl Default for PatternSet {
    fn default() -> Self {
        Self::parse(DEFAULT_PATTERNS).expect("bundled pattern file is valid")
    }
}

/// Lowercase, correct spelling, collapse dates/doses/times to placeholder
/// words, drop digits, then keep only lowercase ASCII letters, periods and
/// single spaces.
pub fn normalize_text(raw: &str, dict: &SpellingDictionary) -> String {
    static PATTERNS: OnceLock<PatternSet> = OnceLock::new();
    normalize_with(raw, dict, PATTERNS.get_or_init(PatternSet::default))
}

pub fn normalize_with(raw: &str, dict: &SpellingDictionary, patterns: &PatternSet) -> String {
    let lowered = raw.to_lowercase();
    let corrected = dict.apply(&lowered);
    let replaced = patterns.replace(&corrected);
    let kept: String = replaced
        .chars()
        .filter(|c| !c.is_ascii_digit())
        .filter(|c| c.is_ascii_lowercase() || c.is_whitespace() || *c == '.')
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits normalized text into surface tokens. Periods act as separators,
/// so sentence-final periods vanish.
pub fn tokenize(normalized: &str, stopwords: &HashSet<String>) -> Vec<String> {
    normalized
        .split(|c: char| c.is_whitespace() || c == '.')
        .filter(|t| !t.is_empty())
        .filter(|t| t.chars().all(|c| c.is_ascii_lowercase()))
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

pub fn tokenize_and_stem(normalized: &str, stopwords: &HashSet<String>) -> Vec<String> {
    stem_tokens(tokenize(normalized, stopwords), stopwords)
        .into_iter()
        .map(|(stem, _)| stem)
        .collect()
}

/// Stems surface tokens, dropping any whose stem collapses onto a stopword
/// ("ands" -> "and"). Returns `(stem, surface)` pairs.
fn stem_tokens(surface: Vec<String>, stopwords: &HashSet<String>) -> Vec<(String, String)> {
    surface
        .into_iter()
        .map(|t| (porter_stem(&t), t))
        .filter(|(stem, _)| !stopwords.contains(stem))
        .collect()
}

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// One token per line; blank lines and `#` comments ignored.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Everything needed to turn raw text into stemmed tokens.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub dictionary: SpellingDictionary,
    pub patterns: PatternSet,
    pub stopwords: HashSet<String>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            dictionary: SpellingDictionary::default(),
            patterns: PatternSet::default(),
            stopwords: default_stopwords(),
        }
    }
}

impl Preprocessor {
    pub fn process(&self, doc: &mut Document) {
        let normalized = normalize_with(&doc.raw_text, &self.dictionary, &self.patterns);
        let pairs = stem_tokens(tokenize(&normalized, &self.stopwords), &self.stopwords);
        (doc.tokens, doc.surface) = pairs.into_iter().unzip();
    }

    pub fn process_all(&self, docs: &mut [Document]) {
        docs.par_iter_mut().for_each(|d| self.process(d));
    }
}

/// Maps each stem to the shortest surface form observed for it, ties
/// broken alphabetically.
pub fn display_forms(docs: &[Document]) -> HashMap<String, String> {
    let mut forms: HashMap<String, String> = HashMap::new();
    for doc in docs {
        for (stem, surface) in doc.tokens.iter().zip(&doc.surface) {
            forms
                .entry(stem.clone())
                .and_modify(|cur| {
                    if (surface.len(), surface.as_str()) < (cur.len(), cur.as_str()) {
                        *cur = surface.clone();
                    }
                })
                .or_insert_with(|| surface.clone());
        }
    }
    forms
}
