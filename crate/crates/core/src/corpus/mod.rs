//! Query/code pair ingestion: documentation stripping, query derivation,
//! tokenization and deterministic train/test splitting.

mod split;
mod strip;
mod tokenize;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Sha256Hex;

pub use split::split_queries;
pub use strip::{normalize_whitespace, strip_documentation, strip_documentation_checked, Stripped};
pub use tokenize::{
    tokenize_text, tokenize_words, Tokens, Vocabulary, BOS, EOS, MAX_VOCAB, PAD, RESERVED, UNK,
};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Go,
    Java,
    JavaScript,
    Php,
    Python,
    Ruby,
    Other,
}

impl Language {
    pub const ALL: [Language; 7] = [
        Language::Go,
        Language::Java,
        Language::JavaScript,
        Language::Php,
        Language::Python,
        Language::Ruby,
        Language::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Go => "go",
            Language::Java => "java",
            Language::JavaScript => "javascript",
            Language::Php => "php",
            Language::Python => "python",
            Language::Ruby => "ruby",
            Language::Other => "other",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    /// Unrecognised names map to `Other`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(Language::ALL
            .into_iter()
            .find(|l| l.as_str() == lower)
            .unwrap_or(Language::Other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSample {
    pub doc_index: usize,
    pub source_id: String,
    pub language: Language,
    pub raw_code: String,
    pub stripped_code: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_index: usize,
    pub text: String,
    pub target_doc: usize,
    pub split: Split,
}

/// Counts gathered while ingesting a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub malformed: usize,
    pub rejected_empty: usize,
    pub rejected_no_query: usize,
    pub rejected_duplicate: usize,
    /// 1-based line numbers whose block comment or docstring never closed.
    pub unterminated_comment_lines: Vec<usize>,
    /// 1-based line numbers counted as malformed.
    pub malformed_lines: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub samples: Vec<CodeSample>,
    pub queries: Vec<QueryRecord>,
    pub seed: u64,
}

/// One line of the input JSONL. `queries` is an optional list of extra
/// query texts (paraphrases) for the same sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub language: String,
    pub code: String,
    pub docstring: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<String>,
}

/// First sentence of a docstring, whitespace-normalized.
pub fn derive_query(docstring: &str) -> String {
    let text = docstring.split_whitespace().collect::<Vec<_>>().join(" ");
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1) == Some(&b' ') {
            return text[..=i].to_string();
        }
    }
    text
}

pub fn load_corpus(path: impl AsRef<Path>, limit: Option<usize>, seed: u64) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, limit, seed)
}

/// Same as [`load_corpus`] over in-memory JSONL.
pub fn parse_corpus(text: &str, limit: Option<usize>, seed: u64) -> Result<(Corpus, LoadReport)> {
    let mut report = LoadReport {
        seed,
        ..LoadReport::default()
    };
    let mut samples = Vec::new();
    let mut queries = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    let limit = limit.unwrap_or(usize::MAX);

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if samples.len() >= limit {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) => {
                report.malformed += 1;
                report.malformed_lines.push(lineno);
                continue;
            }
        };
        if record.code.trim().is_empty() && record.docstring.trim().is_empty() {
            return Err(Error::EmptySample { line: lineno });
        }
        if seen_ids.contains(&record.id) {
            report.rejected_duplicate += 1;
            continue;
        }
        let language: Language = record.language.parse().unwrap_or(Language::Other);
        let stripped = strip_documentation_checked(&record.code, language);
        if stripped.unterminated {
            report.unterminated_comment_lines.push(lineno);
        }
        if tokenize_words(&stripped.code).is_empty() {
            report.rejected_empty += 1;
            continue;
        }
        let texts: Vec<String> = std::iter::once(derive_query(&record.docstring))
            .chain(record.queries.iter().map(|q| normalize_query(q)))
            .filter(|q| !q.is_empty())
            .collect();
        if texts.is_empty() {
            report.rejected_no_query += 1;
            continue;
        }
        let doc_index = samples.len();
        for text in texts {
            queries.push(QueryRecord {
                query_index: queries.len(),
                text,
                target_doc: doc_index,
                split: Split::Train,
            });
        }
        seen_ids.insert(record.id.clone());
        samples.push(CodeSample {
            doc_index,
            source_id: record.id,
            language,
            raw_code: record.code,
            stripped_code: stripped.code,
        });
    }

    report.accepted = samples.len();
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((
        Corpus {
            samples,
            queries,
            seed,
        },
        report,
    ))
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn queries_in(&self, split: Split) -> impl Iterator<Item = &QueryRecord> {
        self.queries.iter().filter(move |q| q.split == split)
    }

    /// First `n` documents and the queries that target them.
    pub fn prefix(&self, n: usize) -> Corpus {
        let n = n.min(self.samples.len());
        let samples = self.samples[..n].to_vec();
        let queries = self
            .queries
            .iter()
            .filter(|q| q.target_doc < n)
            .enumerate()
            .map(|(i, q)| QueryRecord {
                query_index: i,
                ..q.clone()
            })
            .collect();
        Corpus {
            samples,
            queries,
            seed: self.seed,
        }
    }

    /// Input vocabulary over stripped code and training queries.
    pub fn build_vocabulary(&self, max_size: usize) -> Vocabulary {
        let texts = self
            .samples
            .iter()
            .map(|s| s.stripped_code.as_str())
            .chain(self.queries_in(Split::Train).map(|q| q.text.as_str()));
        Vocabulary::build(texts, max_size)
    }

    pub fn samples_jsonl(&self) -> String {
        to_jsonl(&self.samples)
    }

    pub fn queries_jsonl(&self) -> String {
        to_jsonl(&self.queries)
    }

    /// SHA-256 over the canonical snapshot bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256Hex::new();
        h.update(self.samples_jsonl().as_bytes());
        h.update(b"\0");
        h.update(self.queries_jsonl().as_bytes());
        h.update(&self.seed.to_le_bytes());
        h.finish()
    }

    pub fn write_snapshot(&self, dir: impl AsRef<Path>, report: &LoadReport) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(CORPUS_FILE), self.samples_jsonl().as_bytes())?;
        write_file(&dir.join(QUERIES_FILE), self.queries_jsonl().as_bytes())?;
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        write_file(&dir.join(REPORT_FILE), json.as_bytes())
    }

    pub fn read_snapshot(dir: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
        let dir = dir.as_ref();
        let report: LoadReport = read_json(&dir.join(REPORT_FILE), "load report")?;
        let samples: Vec<CodeSample> = read_jsonl(&dir.join(CORPUS_FILE), "corpus snapshot")?;
        let queries: Vec<QueryRecord> = read_jsonl(&dir.join(QUERIES_FILE), "query snapshot")?;
        for (i, s) in samples.iter().enumerate() {
            if s.doc_index != i {
                return Err(Error::format("corpus snapshot", format!("doc_index {} at row {i}", s.doc_index)));
            }
        }
        if let Some(q) = queries.iter().find(|q| q.target_doc >= samples.len()) {
            return Err(Error::format("query snapshot", format!("query {} targets missing doc {}", q.query_index, q.target_doc)));
        }
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let seed = report.seed;
        Ok((Corpus { samples, queries, seed }, report))
    }
}

pub(crate) fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(what, e))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(what, format!("line {}: {e}", i + 1))))
        .collect()
}
