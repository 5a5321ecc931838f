use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::TargetCodec;
use super::config::TrainConfig;
use crate::corpus::{Corpus, Split, Vocabulary};
use crate::docid::DocIdAssignment;
use crate::error::{Error, Result};
use crate::hash::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Code to its own docid.
    Indexing,
    /// Query to the docid of its target.
    Retrieval,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub input_ids: Vec<u32>,
    /// Output ids ending in END.
    pub target_ids: Vec<u32>,
    pub task: Task,
    pub doc_index: usize,
}

/// Encodes a query the way training inputs are encoded.
pub fn encode_input(vocab: &Vocabulary, text: &str, max_len: usize) -> Vec<u32> {
    let mut ids = vocab.encode(text);
    ids.truncate(max_len);
    ids
}

/// Indexing inputs of one document: up to `chunks` consecutive windows of
/// its stripped code tokens.
pub fn indexing_inputs(vocab: &Vocabulary, code: &str, config: &TrainConfig) -> Vec<Vec<u32>> {
    let ids = vocab.encode(code);
    ids.chunks(config.max_input_len)
        .take(config.index_chunks)
        .map(<[u32]>::to_vec)
        .collect()
}

/// Indexing examples for every document and retrieval examples for every
/// training query, interleaved at `mix_ratio` indexing examples per
/// retrieval example.
pub fn build_training_set(
    corpus: &Corpus,
    assignment: &DocIdAssignment,
    vocab: &Vocabulary,
    codec: &TargetCodec,
    config: &TrainConfig,
) -> Result<Vec<TrainingExample>> {
    if assignment.len() != corpus.len() {
        return Err(Error::ArtifactMismatch(format!(
            "assignment covers {} docs, corpus has {}",
            assignment.len(),
            corpus.len()
        )));
    }
    let targets = (0..corpus.len())
        .map(|d| {
            let t = codec.target_ids(&assignment.docid(d))?;
            if t.len() > config.max_target_len {
                return Err(Error::InvalidArgument(format!(
                    "docid {} needs {} target positions, max_target_len is {}",
                    assignment.render(d),
                    t.len(),
                    config.max_target_len
                )));
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut indexing: Vec<TrainingExample> = corpus
        .samples
        .iter()
        .flat_map(|s| {
            indexing_inputs(vocab, &s.stripped_code, config)
                .into_iter()
                .filter(|ids| !ids.is_empty())
                .map(|ids| TrainingExample {
                    input_ids: ids,
                    target_ids: targets[s.doc_index].clone(),
                    task: Task::Indexing,
                    doc_index: s.doc_index,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut retrieval: Vec<TrainingExample> = corpus
        .queries_in(Split::Train)
        .map(|q| TrainingExample {
            input_ids: encode_input(vocab, &q.text, config.max_input_len),
            target_ids: targets[q.target_doc].clone(),
            task: Task::Retrieval,
            doc_index: q.target_doc,
        })
        .filter(|e| !e.input_ids.is_empty())
        .collect();

    let n_index = if retrieval.is_empty() {
        if config.mix_ratio > 0.0 { indexing.len() } else { 0 }
    } else {
        (config.mix_ratio * retrieval.len() as f64).round() as usize
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[0x1d]));
    retrieval.shuffle(&mut rng);
    indexing.shuffle(&mut rng);
    let indexing: Vec<TrainingExample> = if indexing.is_empty() {
        Vec::new()
    } else {
        indexing.iter().cycle().take(n_index).cloned().collect()
    };

    Ok(interleave(indexing, retrieval))
}

/// Merges two lists so each stays evenly spread over the result.
fn interleave<T>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
    let (na, nb) = (a.len(), b.len());
    let mut out = Vec::with_capacity(na + nb);
    let mut ia = a.into_iter().peekable();
    let mut ib = b.into_iter().peekable();
    let (mut ta, mut tb) = (0usize, 0usize);
    while ia.peek().is_some() || ib.peek().is_some() {
        // take from `a` while its progress ratio lags `b`'s
        let take_a = match (ia.peek().is_some(), ib.peek().is_some()) {
            (true, false) => true,
            (false, true) => false,
            _ => ta * nb <= tb * na,
        };
        if take_a {
            out.push(ia.next().unwrap());
            ta += 1;
        } else {
            out.push(ib.next().unwrap());
            tb += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_alternates() {
        assert_eq!(interleave(vec![1, 3, 5], vec![2, 4, 6]), [1, 2, 3, 4, 5, 6]);
        assert_eq!(interleave(vec![1, 2, 3, 4], vec![9, 8]), [1, 9, 2, 3, 8, 4]);
        assert_eq!(interleave(Vec::<i32>::new(), vec![7]), [7]);
    }
}
