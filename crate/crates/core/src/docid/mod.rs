//! Document identifiers: assignment strategies, int/char rendering and the
//! prefix trie used for constrained decoding.

mod clustered;
pub mod kmeans;
mod trie;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, to_jsonl, write_file};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

pub use clustered::{assign_clustered, assign_clustered_with, ClusterParams, LEAF_LIMIT};
pub use kmeans::{kmeans, KMeansFit, KMeansParams};
pub use trie::{DocIdTrie, NodeId};

pub const DOCIDS_FILE: &str = "docids.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Int,
    Char,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Clustered => "clustered",
        }
    }
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Int => "int",
            Structure::Char => "char",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "naive" => Ok(Strategy::Direct),
            "clustered" | "cluster" => Ok(Strategy::Clustered),
            _ => Err(Error::InvalidArgument(format!(
                "unknown strategy {s:?}; valid values: direct, clustered"
            ))),
        }
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "int" => Ok(Structure::Int),
            "char" => Ok(Structure::Char),
            _ => Err(Error::InvalidArgument(format!(
                "unknown structure {s:?}; valid values: int, char"
            ))),
        }
    }
}

/// A non-empty sequence of base-10 symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DocId {
    pub symbols: Vec<u8>,
    pub structure: Structure,
    pub strategy: Strategy,
}

impl DocId {
    pub fn parse(s: &str, structure: Structure, strategy: Strategy) -> Result<Self> {
        Ok(Self {
            symbols: parse_symbols(s, structure)?,
            structure,
            strategy,
        })
    }

    pub fn render(&self) -> String {
        render_symbols(&self.symbols, self.structure)
    }

    pub fn int_string(&self) -> String {
        render_symbols(&self.symbols, Structure::Int)
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Digits for `int`, letters `a`..`j` for `char`.
pub fn render_symbols(symbols: &[u8], structure: Structure) -> String {
    let base = match structure {
        Structure::Int => b'0',
        Structure::Char => b'a',
    };
    symbols.iter().map(|&s| (base + s) as char).collect()
}

pub fn render(docid: &DocId) -> String {
    docid.render()
}

pub fn parse_symbols(s: &str, structure: Structure) -> Result<Vec<u8>> {
    if s.is_empty() {
        return Err(Error::EmptyDocId);
    }
    let range = match structure {
        Structure::Int => '0'..='9',
        Structure::Char => 'a'..='j',
    };
    s.chars()
        .enumerate()
        .map(|(offset, ch)| {
            if range.contains(&ch) {
                Ok(ch as u8 - *range.start() as u8)
            } else {
                Err(Error::InvalidDocId { offset, ch })
            }
        })
        .collect()
}

/// One docid per document, indexed by `doc_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocIdAssignment {
    ids: Vec<Vec<u8>>,
    strategy: Strategy,
    structure: Structure,
    lookup: HashMap<Vec<u8>, usize>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentRow {
    doc_index: usize,
    docid: String,
    strategy: Strategy,
    structure: Structure,
}

impl DocIdAssignment {
    /// Fails on an empty symbol list, a symbol above 9, or a repeated id.
    pub fn new(ids: Vec<Vec<u8>>, strategy: Strategy, structure: Structure) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (doc, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::EmptyDocId);
            }
            if let Some(pos) = id.iter().position(|&s| s > 9) {
                return Err(Error::InvalidDocId {
                    offset: pos,
                    ch: char::from(b'0' + id[pos]),
                });
            }
            if lookup.insert(id.clone(), doc).is_some() {
                return Err(Error::DuplicateDocId(render_symbols(id, structure)));
            }
        }
        Ok(Self {
            ids,
            strategy,
            structure,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn symbols(&self, doc: usize) -> &[u8] {
        &self.ids[doc]
    }

    pub fn all_symbols(&self) -> &[Vec<u8>] {
        &self.ids
    }

    pub fn docid(&self, doc: usize) -> DocId {
        DocId {
            symbols: self.ids[doc].clone(),
            structure: self.structure,
            strategy: self.strategy,
        }
    }

    pub fn render(&self, doc: usize) -> String {
        render_symbols(&self.ids[doc], self.structure)
    }

    pub fn doc_of(&self, symbols: &[u8]) -> Option<usize> {
        self.lookup.get(symbols).copied()
    }

    /// Same symbols rendered under another structure.
    pub fn with_structure(&self, structure: Structure) -> Self {
        Self {
            structure,
            ..self.clone()
        }
    }

    pub fn to_jsonl(&self) -> String {
        let rows: Vec<AssignmentRow> = (0..self.len())
            .map(|doc| AssignmentRow {
                doc_index: doc,
                docid: self.render(doc),
                strategy: self.strategy,
                structure: self.structure,
            })
            .collect();
        to_jsonl(&rows)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let rows: Vec<AssignmentRow> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format("assignment file", format!("line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        Self::from_rows(rows)
    }

    fn from_rows(rows: Vec<AssignmentRow>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyCorpus)?;
        let (strategy, structure) = (first.strategy, first.structure);
        let mut ids = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.doc_index != i || row.strategy != strategy || row.structure != structure {
                return Err(Error::format("assignment file", format!("inconsistent row {i}")));
            }
            ids.push(parse_symbols(&row.docid, structure)?);
        }
        Self::new(ids, strategy, structure)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_jsonl().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_rows(read_jsonl(path.as_ref(), "assignment file")?)
    }
}

/// Sequential ids, zero-padded to the width of `n_docs - 1`.
pub fn assign_direct(n_docs: usize, structure: Structure) -> Result<DocIdAssignment> {
    if n_docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let width = (n_docs - 1).to_string().len();
    let ids = (0..n_docs)
        .map(|i| format!("{i:0width$}").bytes().map(|b| b - b'0').collect())
        .collect();
    DocIdAssignment::new(ids, Strategy::Direct, structure)
}

pub fn build_trie(assignment: &DocIdAssignment) -> Result<DocIdTrie> {
    DocIdTrie::from_sequences(
        assignment
            .all_symbols()
            .iter()
            .map(|s| s.iter().map(|&x| x as u32).collect::<Vec<u32>>())
            .enumerate(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rendered(a: &DocIdAssignment) -> Vec<String> {
        (0..a.len()).map(|d| a.render(d)).collect()
    }

    #[test]
    fn direct_small() {
        assert_eq!(rendered(&assign_direct(3, Structure::Int).unwrap()), ["0", "1", "2"]);
        assert_eq!(rendered(&assign_direct(1, Structure::Int).unwrap()), ["0"]);
    }

    #[test]
    fn direct_pads_to_common_width() {
        let a = assign_direct(12, Structure::Int).unwrap();
        assert_eq!(a.render(5), "05");
        assert_eq!(a.render(11), "11");
        let c = assign_direct(12, Structure::Char).unwrap();
        assert_eq!(c.render(11), "bb");
        assert_eq!(c.render(0), "aa");
    }

    #[test]
    fn render_and_parse() {
        let id = DocId {
            symbols: vec![3, 1, 0, 7],
            structure: Structure::Int,
            strategy: Strategy::Direct,
        };
        assert_eq!(id.render(), "3107");
        assert_eq!(render_symbols(&id.symbols, Structure::Char), "dbah");
        assert_eq!(parse_symbols("dbah", Structure::Char).unwrap(), [3, 1, 0, 7]);
        match parse_symbols("3x", Structure::Int) {
            Err(Error::InvalidDocId { offset: 1, ch: 'x' }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_symbols("d", Structure::Int).is_err());
        assert!(matches!(parse_symbols("", Structure::Char), Err(Error::EmptyDocId)));
    }

    #[test]
    fn duplicates_rejected() {
        let r = DocIdAssignment::new(vec![vec![1], vec![1]], Strategy::Direct, Structure::Int);
        assert!(matches!(r, Err(Error::DuplicateDocId(s)) if s == "1"));
    }

    #[test]
    fn jsonl_round_trip() {
        let a = assign_direct(15, Structure::Char).unwrap();
        let text = a.to_jsonl();
        assert!(text.starts_with("{\"doc_index\":0,\"docid\":\"aa\",\"strategy\":\"direct\",\"structure\":\"char\"}\n"));
        let back = DocIdAssignment::from_jsonl(&text).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn unknown_strategy_lists_values() {
        let e = "random".parse::<Strategy>().unwrap_err().to_string();
        assert!(e.contains("direct") && e.contains("clustered"));
    }
}
