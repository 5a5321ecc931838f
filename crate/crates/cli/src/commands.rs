use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use dsi_core::baselines::{DualEncoder, TfidfIndex};
use dsi_core::corpus::{load_corpus, split_queries, Corpus};
use dsi_core::docid::{assign_clustered, assign_direct, DocIdAssignment, Strategy, Structure, DOCIDS_FILE};
use dsi_core::embed::{embed_hashed_tfidf, load_external_embeddings, EmbeddingMatrix, DEFAULT_DIM};
use dsi_core::eval::{run_matrix, MatrixCell, MatrixOptions};
use dsi_core::model::{
    fit, vocabulary_hash, Checkpoint, CheckpointHeader, Retriever, TargetCodec, TargetMode, CHECKPOINT_FILE,
    CHECKPOINT_FORMAT,
};

use crate::config::{CommonArgs, RunConfig, TrainArgs};
use crate::UsageError;

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_STEM: &str = "report";
const DEFAULT_TEST_FRACTION: f64 = 0.25;
const DEFAULT_BEAM: usize = 10;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse<T>(value: Option<String>, what: &str, default: T) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| usage(format!("invalid {what} {v:?}: {e}"))),
    }
}

fn read_corpus(out: &Path) -> Result<Corpus> {
    let (corpus, _) = Corpus::read_snapshot(out).with_context(|| format!("reading corpus snapshot in {}", out.display()))?;
    Ok(corpus)
}

fn read_assignment(out: &Path) -> Result<DocIdAssignment> {
    let path = out.join(DOCIDS_FILE);
    DocIdAssignment::read(&path).with_context(|| format!("reading docids from {}", path.display()))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(common: &CommonArgs, input: Option<PathBuf>, limit: Option<usize>, test_fraction: Option<f64>) -> Result<()> {
    let (cfg, out, seed) = common.resolve()?;
    let input = input
        .or(cfg.input.clone())
        .ok_or_else(|| usage("--input is required"))?;
    let limit = limit.or(cfg.limit);
    if limit == Some(0) {
        return Err(usage("empty corpus requested (--limit 0)"));
    }
    let fraction = test_fraction.or(cfg.test_fraction).unwrap_or(DEFAULT_TEST_FRACTION);
    if !(0.0..1.0).contains(&fraction) {
        return Err(usage(format!("test fraction must be in [0, 1), got {fraction}")));
    }
    if !input.is_file() {
        return Err(usage(format!("input file not found: {}", input.display())));
    }

    let (corpus, report) = load_corpus(&input, limit, seed)?;
    let corpus = split_queries(&corpus, fraction, seed);
    corpus.write_snapshot(&out, &report)?;

    let test = corpus.queries.iter().filter(|q| q.split == dsi_core::corpus::Split::Test).count();
    println!(
        "ingested {} documents, {} queries ({} test) into {}",
        corpus.len(),
        corpus.queries.len(),
        test,
        out.display()
    );
    println!(
        "malformed {}, rejected: empty {}, no query {}, duplicate {}",
        report.malformed, report.rejected_empty, report.rejected_no_query, report.rejected_duplicate
    );
    if !report.unterminated_comment_lines.is_empty() {
        eprintln!(
            "warning: unterminated comment on lines {:?}",
            report.unterminated_comment_lines
        );
    }
    Ok(())
}

fn embeddings(
    corpus: &Corpus,
    cfg: &RunConfig,
    embedder: Option<String>,
    external: Option<PathBuf>,
    dim: Option<usize>,
) -> Result<EmbeddingMatrix<f64>> {
    let embedder = embedder.or(cfg.embedder.clone()).unwrap_or_else(|| "hashed".into());
    match embedder.as_str() {
        "hashed" => Ok(embed_hashed_tfidf(corpus, dim.or(cfg.embedding_dim).unwrap_or(DEFAULT_DIM))?),
        "external" => {
            let path = external
                .or(cfg.embeddings.clone())
                .ok_or_else(|| usage("--embeddings is required with --embedder external"))?;
            Ok(load_external_embeddings(&path, corpus)?)
        }
        other => Err(usage(format!("unknown embedder {other:?} (expected hashed or external)"))),
    }
}

pub fn assign(
    common: &CommonArgs,
    strategy: Option<String>,
    structure: Option<String>,
    embedder: Option<String>,
    external: Option<PathBuf>,
    dim: Option<usize>,
) -> Result<()> {
    let (cfg, out, seed) = common.resolve()?;
    let strategy: Strategy = parse(strategy.or(cfg.strategy.clone()), "strategy", Strategy::Direct)?;
    let structure: Structure = parse(structure.or(cfg.structure.clone()), "structure", Structure::Int)?;
    let corpus = read_corpus(&out)?;

    let assignment = match strategy {
        Strategy::Direct => assign_direct(corpus.len(), structure)?,
        Strategy::Clustered => {
            let emb = embeddings(&corpus, &cfg, embedder, external, dim)?;
            emb.write_snapshot(out.join(EMBEDDINGS_FILE))?;
            assign_clustered(&emb, seed, structure)?
        }
    };
    assignment.write(out.join(DOCIDS_FILE))?;

    let longest = assignment.all_symbols().iter().map(Vec::len).max().unwrap_or(0);
    println!(
        "assigned {} {strategy} {structure} docids (max length {longest}) to {}",
        assignment.len(),
        out.join(DOCIDS_FILE).display()
    );
    Ok(())
}

pub fn train(common: &CommonArgs, args: &TrainArgs, target_mode: Option<String>) -> Result<()> {
    let (cfg, out, seed) = common.resolve()?;
    let config = args.resolve(&cfg, seed)?;
    let loss_target = args.loss_target(&cfg)?;
    let mode: TargetMode = parse(target_mode.or(cfg.target_mode.clone()), "target mode", TargetMode::PerSymbol)?;
    let corpus = read_corpus(&out)?;
    let assignment = read_assignment(&out)?;
    if assignment.len() != corpus.len() {
        return Err(usage(format!(
            "docids cover {} documents but the corpus has {}; rerun assign",
            assignment.len(),
            corpus.len()
        )));
    }

    let fitted = fit::<f64, _>(&corpus, &assignment, mode, &config, |epoch, loss, _| {
        if epoch % 10 == 0 || epoch + 1 == config.epochs {
            eprintln!("epoch {epoch:>4}  loss {loss:.6}");
        }
        match loss_target {
            Some(t) if loss < t => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    })?;

    let r = &fitted.retriever;
    let checkpoint = Checkpoint {
        header: CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            dims: r.params.dims,
            config: config.clone(),
            target_mode: mode,
            merged_tokens: r.codec.merged_tokens().to_vec(),
            input_vocab: r.vocab.tokens().to_vec(),
            corpus_hash: corpus.content_hash(),
            assignment_hash: assignment.content_hash(),
            vocab_hash: vocabulary_hash(&r.vocab),
            epochs_run: fitted.epoch_losses.len(),
            final_loss: fitted.epoch_losses.last().copied(),
            tensors: Vec::new(),
        },
        params: r.params.clone(),
    };
    checkpoint.write(out.join(CHECKPOINT_FILE))?;

    let mut csv = String::from("epoch,loss\n");
    for (i, l) in fitted.epoch_losses.iter().enumerate() {
        writeln!(csv, "{i},{l}").expect("string write");
    }
    write(out.join(LOSS_FILE), csv)?;

    println!(
        "trained on {} examples for {} epochs, final loss {:.6}; checkpoint {}",
        fitted.examples,
        fitted.epoch_losses.len(),
        fitted.epoch_losses.last().copied().unwrap_or(f64::NAN),
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn parse_cell(spec: &str) -> Result<MatrixCell> {
    let (s, t) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("cell {spec:?} must look like strategy:structure")))?;
    let strategy: Strategy = parse(Some(s.to_string()), "strategy", Strategy::Direct)?;
    let structure: Structure = parse(Some(t.to_string()), "structure", Structure::Int)?;
    Ok(MatrixCell::dsi(strategy, structure))
}

pub fn eval(
    common: &CommonArgs,
    args: &TrainArgs,
    sizes: Option<Vec<usize>>,
    strategies: Option<Vec<String>>,
    beam: Option<usize>,
    dim: Option<usize>,
) -> Result<()> {
    let (cfg, out, seed) = common.resolve()?;
    let config = args.resolve(&cfg, seed)?;
    let loss_target = args.loss_target(&cfg)?;
    let beam = beam.or(cfg.beam).unwrap_or(DEFAULT_BEAM);
    if beam == 0 {
        return Err(usage("beam must be positive"));
    }
    let mut cells = vec![MatrixCell::Tfidf, MatrixCell::DualEncoder];
    match strategies {
        Some(list) => {
            for s in list {
                cells.push(parse_cell(&s)?);
            }
        }
        None => cells.extend(dsi_core::eval::default_cells().into_iter().skip(2)),
    }
    let corpus = read_corpus(&out)?;
    let sizes = sizes.or(cfg.sizes.clone()).unwrap_or_else(|| vec![corpus.len()]);
    if let Some(s) = sizes.iter().find(|&&s| s == 0 || s > corpus.len()) {
        return Err(usage(format!("size {s} outside 1..={}", corpus.len())));
    }

    let options = MatrixOptions {
        train: config,
        beam,
        embed_dim: embedding_dim(dim, &cfg),
        loss_target,
    };
    let report = run_matrix(&corpus, &sizes, &cells, seed, &options)?;
    report.write(&out, REPORT_STEM)?;

    println!("{:<14} {:<10} {:<6} {:>6} {:>9} {:>8} {:>9}", "method", "strategy", "struct", "size", "accuracy", "hits@10", "time_s");
    for r in &report.rows {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<14} {:<10} {:<6} {:>6} {:>9} {:>8} {:>9.2}",
            r.method,
            r.strategy.map_or("-".to_string(), |s| s.to_string()),
            r.structure.map_or("-".to_string(), |s| s.to_string()),
            r.corpus_size,
            fmt(r.accuracy),
            fmt(r.hits_at_10),
            r.wall_time_s
        );
    }
    println!("eval mode: {}", report.rows.first().map_or("-".to_string(), |r| r.eval_mode.to_string()));
    Ok(())
}

fn embedding_dim(dim: Option<usize>, cfg: &RunConfig) -> usize {
    dim.or(cfg.embedding_dim).unwrap_or(DEFAULT_DIM)
}

pub fn query(
    common: &CommonArgs,
    method: &str,
    text: &str,
    k: usize,
    beam: Option<usize>,
    dim: Option<usize>,
) -> Result<()> {
    let (cfg, out, _) = common.resolve()?;
    if k == 0 {
        return Err(usage("k must be positive"));
    }
    let corpus = read_corpus(&out)?;
    let k = k.min(corpus.len());
    match method {
        "tfidf" | "de" => {
            let assignment = DocIdAssignment::read(out.join(DOCIDS_FILE)).ok();
            let ranking = if method == "tfidf" {
                TfidfIndex::build(&corpus).retrieve(text, k)?
            } else {
                DualEncoder::<f64>::new(&corpus, embedding_dim(dim, &cfg))?.retrieve(text, k)?
            };
            for (rank, (doc, score)) in ranking.into_iter().enumerate() {
                let docid = assignment.as_ref().map_or_else(|| doc.to_string(), |a| a.render(doc));
                println!("{} {} {} {:.6}", rank + 1, docid, corpus.samples[doc].source_id, score);
            }
        }
        "dsi" => {
            let assignment = read_assignment(&out)?;
            let path = out.join(CHECKPOINT_FILE);
            let ck = Checkpoint::<f64>::read(&path).with_context(|| format!("reading {}", path.display()))?;
            ck.verify(&corpus.content_hash(), &assignment.content_hash())?;
            let codec = TargetCodec::new(&assignment, ck.header.target_mode)?;
            if codec.merged_tokens() != ck.header.merged_tokens.as_slice() || codec.vocab_size() != ck.params.dims.vocab_out {
                return Err(usage("checkpoint output vocabulary does not match the docids"));
            }
            let vocab = ck.vocabulary();
            let beam = beam.or(cfg.beam).unwrap_or(DEFAULT_BEAM).max(k);
            let retriever = Retriever::new(ck.params, vocab, codec, assignment)?;
            for (rank, d) in retriever.retrieve(text, beam)?.into_iter().take(k).enumerate() {
                println!(
                    "{} {} {} {:.6}",
                    rank + 1,
                    d.docid.render(),
                    corpus.samples[d.doc_index].source_id,
                    d.log_prob
                );
            }
        }
        other => return Err(usage(format!("unknown method {other:?} (expected tfidf, de or dsi)"))),
    }
    Ok(())
}
