use std::cmp::Ordering;

use super::codec::{OUT_BOS, OUT_END};
use super::network::ModelParams;
use crate::docid::{DocId, DocIdAssignment, DocIdTrie, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub doc_index: usize,
    pub docid: DocId,
    /// Sum of token log-probabilities including END.
    pub log_prob: T,
}

struct Hypothesis<T> {
    tokens: Vec<u32>,
    node: NodeId,
    log_prob: T,
}

/// Beam search restricted to paths of `trie`, whose labels are output ids.
/// END is only offered at terminal nodes. Returns up to `beam` docids by
/// descending log-probability, ties broken by the docid's digit string.
pub fn decode_constrained<T: Scalar>(
    params: &ModelParams<T>,
    input_ids: &[u32],
    trie: &DocIdTrie,
    assignment: &DocIdAssignment,
    beam: usize,
) -> Result<Vec<Decoded<T>>> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam must be positive".into()));
    }
    if trie.is_empty() {
        return Err(Error::InvalidArgument("trie has no docids".into()));
    }
    let enc = params.encode(input_ids)?;
    let max_steps = params.dims.max_target;

    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        node: DocIdTrie::ROOT,
        log_prob: T::zero(),
    }];
    let mut finished: Vec<(usize, T)> = Vec::new();
    let mut dec_in = Vec::with_capacity(max_steps);

    while !live.is_empty() {
        let mut candidates = Vec::new();
        for h in &live {
            if h.tokens.len() >= max_steps {
                continue;
            }
            dec_in.clear();
            dec_in.push(OUT_BOS);
            dec_in.extend_from_slice(&h.tokens);
            let lp = params.next_log_probs(&enc, &dec_in)?;
            if let Some(doc) = trie.terminal(h.node) {
                finished.push((doc, h.log_prob + lp[OUT_END as usize]));
            }
            if h.tokens.len() + 1 >= max_steps {
                continue;
            }
            for &(label, child) in trie.children(h.node) {
                let mut tokens = h.tokens.clone();
                tokens.push(label);
                candidates.push(Hypothesis {
                    tokens,
                    node: child,
                    log_prob: h.log_prob + lp[label as usize],
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(beam);
        if finished.len() >= beam {
            let mut scores: Vec<T> = finished.iter().map(|f| f.1).collect();
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
            let floor = scores[beam - 1];
            candidates.retain(|c| c.log_prob >= floor);
        }
        live = candidates;
    }

    let mut out: Vec<Decoded<T>> = finished
        .into_iter()
        .map(|(doc, log_prob)| Decoded {
            doc_index: doc,
            docid: assignment.docid(doc),
            log_prob,
        })
        .collect();
    out.sort_by(|a, b| {
        b.log_prob
            .partial_cmp(&a.log_prob)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.docid.int_string().cmp(&b.docid.int_string()))
    });
    out.truncate(beam);
    Ok(out)
}

/// Log-probability of one complete output sequence (END appended) from a
/// single teacher-forced pass.
pub fn sequence_log_prob<T: Scalar>(params: &ModelParams<T>, input_ids: &[u32], tokens: &[u32]) -> Result<T> {
    let enc = params.encode(input_ids)?;
    let mut target = tokens.to_vec();
    target.push(OUT_END);
    let dec_in = super::network::decoder_inputs(&target);
    let logits = params.logits(&enc, &dec_in)?;
    let mut total = T::zero();
    for (pos, &t) in target.iter().enumerate() {
        total += super::network::log_softmax(logits.row(pos))[t as usize];
    }
    Ok(total)
}
