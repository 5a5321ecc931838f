use std::ops::ControlFlow;
use std::time::Instant;

use super::report::{EvalMode, ExperimentReport, ReportRow};
use super::{accuracy, hits_at_k};
use crate::baselines::{DualEncoder, TfidfIndex};
use crate::corpus::{Corpus, QueryRecord, Split};
use crate::docid::{assign_clustered, assign_direct, DocIdAssignment, Strategy, Structure};
use crate::embed::{embed_hashed_tfidf, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::model::{fit, TargetMode, TrainConfig};

const HITS_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixCell {
    Tfidf,
    DualEncoder,
    Dsi {
        strategy: Strategy,
        structure: Structure,
        target_mode: TargetMode,
    },
}

impl MatrixCell {
    pub fn method(&self) -> &'static str {
        match self {
            MatrixCell::Tfidf => "tfidf",
            MatrixCell::DualEncoder => "dual_encoder",
            MatrixCell::Dsi {
                target_mode: TargetMode::PerSymbol,
                ..
            } => "dsi",
            MatrixCell::Dsi {
                target_mode: TargetMode::Merged,
                ..
            } => "dsi_merged",
        }
    }

    pub fn dsi(strategy: Strategy, structure: Structure) -> Self {
        let target_mode = match structure {
            Structure::Int => TargetMode::PerSymbol,
            Structure::Char => TargetMode::Merged,
        };
        MatrixCell::Dsi {
            strategy,
            structure,
            target_mode,
        }
    }
}

/// Both baselines, then the four strategy/structure combinations with char
/// identifiers trained on merged targets.
pub fn default_cells() -> Vec<MatrixCell> {
    let mut cells = vec![MatrixCell::Tfidf, MatrixCell::DualEncoder];
    for strategy in [Strategy::Direct, Strategy::Clustered] {
        for structure in [Structure::Int, Structure::Char] {
            cells.push(MatrixCell::dsi(strategy, structure));
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOptions {
    /// Its `seed` is replaced by the matrix seed.
    pub train: TrainConfig,
    pub beam: usize,
    /// Hashed embedding width for clustering and the dual encoder.
    pub embed_dim: usize,
    /// Stop a training run once its epoch loss falls below this value.
    pub loss_target: Option<f64>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            beam: 10,
            embed_dim: DEFAULT_DIM,
            loss_target: None,
        }
    }
}

/// Which queries a corpus is scored on.
pub struct EvalQueries<'a> {
    pub mode: EvalMode,
    pub queries: Vec<&'a QueryRecord>,
}

impl<'a> EvalQueries<'a> {
    pub fn of(corpus: &'a Corpus) -> Self {
        let test: Vec<&QueryRecord> = corpus.queries_in(Split::Test).collect();
        if test.is_empty() {
            EvalQueries {
                mode: EvalMode::Memorization,
                queries: corpus.queries_in(Split::Train).collect(),
            }
        } else {
            EvalQueries {
                mode: EvalMode::HeldOut,
                queries: test,
            }
        }
    }

    fn gold(&self) -> Vec<usize> {
        self.queries.iter().map(|q| q.target_doc).collect()
    }
}

/// Runs every cell on the first `s` documents for each `s` in `sizes`.
pub fn run_matrix(
    corpus: &Corpus,
    sizes: &[usize],
    cells: &[MatrixCell],
    seed: u64,
    options: &MatrixOptions,
) -> Result<ExperimentReport> {
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > corpus.len()) {
        return Err(Error::InvalidArgument(format!(
            "corpus size {s} outside 1..={}",
            corpus.len()
        )));
    }
    if options.beam == 0 {
        return Err(Error::InvalidArgument("beam must be positive".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len() * cells.len());
    for &size in sizes {
        let sub = corpus.prefix(size);
        let eval = EvalQueries::of(&sub);
        if eval.queries.is_empty() {
            return Err(Error::InvalidArgument(format!("no queries for the first {size} documents")));
        }
        for cell in cells {
            let start = Instant::now();
            let scores = run_cell(&sub, &eval, cell, seed, options)?;
            let (strategy, structure) = match cell {
                MatrixCell::Dsi {
                    strategy, structure, ..
                } => (Some(*strategy), Some(*structure)),
                _ => (None, None),
            };
            rows.push(ReportRow {
                method: cell.method().to_string(),
                strategy,
                structure,
                corpus_size: size,
                accuracy: scores.map(|s| s.0),
                hits_at_10: scores.map(|s| s.1),
                seed,
                wall_time_s: start.elapsed().as_secs_f64(),
                eval_mode: eval.mode,
            });
        }
    }
    Ok(ExperimentReport { rows })
}

/// Accuracy and hits@10, or `None` when training diverged.
fn run_cell(
    corpus: &Corpus,
    eval: &EvalQueries,
    cell: &MatrixCell,
    seed: u64,
    options: &MatrixOptions,
) -> Result<Option<(f64, f64)>> {
    let k = HITS_K.min(corpus.len());
    let rankings: Vec<Vec<usize>> = match cell {
        MatrixCell::Tfidf => {
            let index = TfidfIndex::build(corpus);
            eval.queries
                .iter()
                .map(|q| index.retrieve(&q.text, k).map(|r| r.into_iter().map(|x| x.0).collect()))
                .collect::<Result<_>>()?
        }
        MatrixCell::DualEncoder => {
            let de = DualEncoder::<f64>::new(corpus, options.embed_dim)?;
            eval.queries
                .iter()
                .map(|q| match de.retrieve(&q.text, k) {
                    Ok(r) => Ok(r.into_iter().map(|x| x.0).collect()),
                    Err(Error::UnembeddableQuery) => Ok(Vec::new()),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?
        }
        MatrixCell::Dsi {
            strategy,
            structure,
            target_mode,
        } => {
            let assignment = build_assignment(corpus, *strategy, *structure, seed, options.embed_dim)?;
            let config = TrainConfig {
                seed,
                ..options.train.clone()
            };
            let target = options.loss_target;
            let fitted = match fit::<f64, _>(corpus, &assignment, *target_mode, &config, |_, loss, _| {
                match target {
                    Some(t) if loss < t => ControlFlow::Break(()),
                    _ => ControlFlow::Continue(()),
                }
            }) {
                Ok(f) => f,
                Err(e) if !e.is_validation() => return Ok(None),
                Err(e) => return Err(e),
            };
            let beam = options.beam.max(k);
            eval.queries
                .iter()
                .map(|q| match fitted.retriever.retrieve(&q.text, beam) {
                    Ok(r) => Ok(r.into_iter().map(|d| d.doc_index).collect()),
                    Err(Error::EmptyInput) => Ok(Vec::new()),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?
        }
    };
    let gold = eval.gold();
    let top1: Vec<usize> = rankings.iter().map(|r| r.first().copied().unwrap_or(usize::MAX)).collect();
    Ok(Some((accuracy(&top1, &gold)?, hits_at_k(&rankings, &gold, HITS_K)?)))
}

pub(crate) fn build_assignment(
    corpus: &Corpus,
    strategy: Strategy,
    structure: Structure,
    seed: u64,
    embed_dim: usize,
) -> Result<DocIdAssignment> {
    match strategy {
        Strategy::Direct => assign_direct(corpus.len(), structure),
        Strategy::Clustered => assign_clustered(&embed_hashed_tfidf::<f64>(corpus, embed_dim)?, seed, structure),
    }
}
