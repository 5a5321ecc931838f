use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::docid::{render_symbols, DocId, DocIdAssignment, DocIdTrie, Structure};
use crate::error::{Error, Result};

pub const OUT_PAD: u32 = 0;
pub const OUT_BOS: u32 = 1;
pub const OUT_EOS: u32 = 2;
pub const OUT_SYM0: u32 = 3;
pub const OUT_END: u32 = 13;
/// Output ids shared by both target modes.
pub const BASE_OUTPUT_VOCAB: usize = 14;
/// Letters per merged token.
pub const MERGE_CHUNK: usize = 4;

/// How a docid is spelled on the decoder side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// One output token per symbol.
    PerSymbol,
    /// The char rendering cut into runs of up to four letters, one token per run.
    Merged,
}

impl TargetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::PerSymbol => "per_symbol",
            TargetMode::Merged => "merged",
        }
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_symbol" | "per-symbol" => Ok(TargetMode::PerSymbol),
            "merged" => Ok(TargetMode::Merged),
            _ => Err(Error::InvalidArgument(format!(
                "unknown target mode {s:?}; valid values: per_symbol, merged"
            ))),
        }
    }
}

/// Output-side vocabulary: reserved ids, the ten symbols, END, and in
/// merged mode one id per distinct letter run seen in the assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetCodec {
    mode: TargetMode,
    merged: Vec<String>,
}

impl TargetCodec {
    pub fn per_symbol() -> Self {
        Self {
            mode: TargetMode::PerSymbol,
            merged: Vec::new(),
        }
    }

    pub fn new(assignment: &DocIdAssignment, mode: TargetMode) -> Result<Self> {
        match mode {
            TargetMode::PerSymbol => Ok(Self::per_symbol()),
            TargetMode::Merged => {
                if assignment.structure() != Structure::Char {
                    return Err(Error::InvalidArgument(
                        "merged targets require char structure".into(),
                    ));
                }
                let runs: BTreeSet<String> = assignment
                    .all_symbols()
                    .iter()
                    .flat_map(|s| chunks(&render_symbols(s, Structure::Char)))
                    .collect();
                Ok(Self {
                    mode,
                    merged: runs.into_iter().collect(),
                })
            }
        }
    }

    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    pub fn vocab_size(&self) -> usize {
        BASE_OUTPUT_VOCAB + self.merged.len()
    }

    pub fn merged_tokens(&self) -> &[String] {
        &self.merged
    }

    pub fn symbol_id(symbol: u8) -> u32 {
        OUT_SYM0 + symbol as u32
    }

    /// Output ids for a symbol sequence, without the trailing END.
    pub fn encode_symbols(&self, symbols: &[u8]) -> Result<Vec<u32>> {
        match self.mode {
            TargetMode::PerSymbol => Ok(symbols.iter().map(|&s| Self::symbol_id(s)).collect()),
            TargetMode::Merged => chunks(&render_symbols(symbols, Structure::Char))
                .into_iter()
                .map(|run| {
                    self.merged
                        .binary_search(&run)
                        .map(|i| (BASE_OUTPUT_VOCAB + i) as u32)
                        .map_err(|_| Error::InvalidArgument(format!("letter run {run:?} not in codec")))
                })
                .collect(),
        }
    }

    /// Full decoder target for a docid, ending in END.
    pub fn target_ids(&self, docid: &DocId) -> Result<Vec<u32>> {
        if self.mode == TargetMode::Merged && docid.structure != Structure::Char {
            return Err(Error::InvalidArgument("merged targets require char structure".into()));
        }
        let mut ids = self.encode_symbols(&docid.symbols)?;
        ids.push(OUT_END);
        Ok(ids)
    }

    /// Trie over output-id spellings of every assigned docid.
    pub fn build_trie(&self, assignment: &DocIdAssignment) -> Result<DocIdTrie> {
        let seqs = assignment
            .all_symbols()
            .iter()
            .map(|s| self.encode_symbols(s))
            .collect::<Result<Vec<_>>>()?;
        DocIdTrie::from_sequences(seqs.into_iter().enumerate())
    }

    /// A printable name for an output id.
    pub fn describe(&self, id: u32) -> String {
        match id {
            OUT_PAD => "<pad>".into(),
            OUT_BOS => "<bos>".into(),
            OUT_EOS => "<eos>".into(),
            OUT_END => "<end>".into(),
            s if (OUT_SYM0..OUT_END).contains(&s) => (s - OUT_SYM0).to_string(),
            m => self
                .merged
                .get(m as usize - BASE_OUTPUT_VOCAB)
                .cloned()
                .unwrap_or_else(|| format!("<{m}>")),
        }
    }
}

fn chunks(letters: &str) -> Vec<String> {
    letters
        .as_bytes()
        .chunks(MERGE_CHUNK)
        .map(|c| String::from_utf8(c.to_vec()).expect("ascii letters"))
        .collect()
}

pub fn docid_target_ids(docid: &DocId, codec: &TargetCodec) -> Result<Vec<u32>> {
    codec.target_ids(docid)
}
