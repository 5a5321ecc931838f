use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::docid::{Strategy, Structure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Scored on test-split queries never seen in training.
    HeldOut,
    /// No test queries existed; scored on the training queries.
    Memorization,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::HeldOut => "held_out",
            EvalMode::Memorization => "memorization",
        })
    }
}

/// One matrix cell. `accuracy` and `hits_at_10` are absent when training
/// diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub strategy: Option<Strategy>,
    pub structure: Option<Structure>,
    pub corpus_size: usize,
    pub accuracy: Option<f64>,
    pub hits_at_10: Option<f64>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub eval_mode: EvalMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Rows with `wall_time_s` zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> ExperimentReport {
        ExperimentReport {
            rows: self
                .rows
                .iter()
                .map(|r| ReportRow {
                    wall_time_s: 0.0,
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn row(&self, method: &str, corpus_size: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.corpus_size == corpus_size)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::format("report csv", e))?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "method",
                "strategy",
                "structure",
                "corpus_size",
                "accuracy",
                "hits_at_10",
                "seed",
                "wall_time_s",
                "eval_mode",
            ])
            .map_err(|e| Error::format("report csv", e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("report csv", e))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ReportRow>, _>>()
            .map_err(|e| Error::format("report csv", e))?;
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.rows).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows = serde_json::from_str(text).map_err(|e| Error::format("report json", e))?;
        Ok(Self { rows })
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, self.to_json()).map_err(|e| Error::io(&json_path, e))
    }
}
