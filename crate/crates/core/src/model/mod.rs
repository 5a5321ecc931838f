//! Sequence-to-sequence retriever: encoder-decoder network, training loop,
//! trie-constrained decoding and checkpoints.

mod checkpoint;
mod codec;
mod config;
mod decode;
mod examples;
mod network;
mod tensor;
mod train;

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Vocabulary};
use crate::docid::{DocIdAssignment, DocIdTrie};
use crate::error::Result;
use crate::hash::mix_seed;
use crate::scalar::Scalar;

pub use checkpoint::{vocabulary_hash, Checkpoint, CheckpointHeader, TensorInfo, CHECKPOINT_FILE, CHECKPOINT_FORMAT};
pub use codec::{
    docid_target_ids, TargetCodec, TargetMode, BASE_OUTPUT_VOCAB, MERGE_CHUNK, OUT_BOS, OUT_END, OUT_EOS, OUT_PAD,
    OUT_SYM0,
};
pub use config::TrainConfig;
pub use decode::{decode_constrained, sequence_log_prob, Decoded};
pub use examples::{build_training_set, encode_input, indexing_inputs, Task, TrainingExample};
pub use network::{
    decoder_inputs, log_softmax, softmax, Attention, Encoded, FeedForward, ModelDims, ModelParams, Norm,
};
pub use tensor::Mat;
pub use train::{batch_loss, loss_and_grad, train, train_with_monitor, Adam, BatchLoss, TrainOutcome};

/// Next-token distributions at every position of `[BOS] + prefix`.
pub fn forward<T: Scalar>(params: &ModelParams<T>, input_ids: &[u32], prefix: &[u32]) -> Result<Vec<Vec<T>>> {
    let enc = params.encode(input_ids)?;
    let dec: Vec<u32> = std::iter::once(OUT_BOS).chain(prefix.iter().copied()).collect();
    let logits = params.logits(&enc, &dec)?;
    Ok((0..logits.rows).map(|r| softmax(logits.row(r))).collect())
}

pub fn model_dims(config: &TrainConfig, vocab: &Vocabulary, codec: &TargetCodec) -> ModelDims {
    ModelDims {
        vocab_in: vocab.len(),
        vocab_out: codec.vocab_size(),
        embed: config.embed_dim,
        ffn: config.ffn_dim,
        max_input: config.max_input_len,
        max_target: config.max_target_len,
    }
}

/// Randomly initialised parameters from `config.seed`.
pub fn init_params<T: Scalar>(dims: ModelDims, seed: u64) -> ModelParams<T> {
    ModelParams::random(dims, &mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x1a])))
}

/// Everything needed to answer queries with a trained model.
#[derive(Debug, Clone)]
pub struct Retriever<T> {
    pub params: ModelParams<T>,
    pub vocab: Vocabulary,
    pub codec: TargetCodec,
    pub assignment: DocIdAssignment,
    pub trie: DocIdTrie,
}

impl<T: Scalar> Retriever<T> {
    pub fn new(params: ModelParams<T>, vocab: Vocabulary, codec: TargetCodec, assignment: DocIdAssignment) -> Result<Self> {
        let trie = codec.build_trie(&assignment)?;
        Ok(Self {
            params,
            vocab,
            codec,
            assignment,
            trie,
        })
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        encode_input(&self.vocab, text, self.params.dims.max_input)
    }

    pub fn retrieve(&self, query: &str, beam: usize) -> Result<Vec<Decoded<T>>> {
        self.retrieve_ids(&self.encode(query), beam)
    }

    pub fn retrieve_ids(&self, input_ids: &[u32], beam: usize) -> Result<Vec<Decoded<T>>> {
        decode_constrained(&self.params, input_ids, &self.trie, &self.assignment, beam)
    }
}

/// Training result with the retriever it produced.
#[derive(Debug, Clone)]
pub struct Fitted<T> {
    pub retriever: Retriever<T>,
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
}

/// Builds the vocabulary, codec and training set for `corpus`, then trains.
/// `monitor` may stop training early.
pub fn fit<T, F>(
    corpus: &Corpus,
    assignment: &DocIdAssignment,
    mode: TargetMode,
    config: &TrainConfig,
    monitor: F,
) -> Result<Fitted<T>>
where
    T: Scalar,
    F: FnMut(usize, f64, &ModelParams<T>) -> ControlFlow<()>,
{
    config.validate()?;
    let vocab = corpus.build_vocabulary(crate::corpus::MAX_VOCAB);
    let codec = TargetCodec::new(assignment, mode)?;
    let examples = build_training_set(corpus, assignment, &vocab, &codec, config)?;
    let params = init_params::<T>(model_dims(config, &vocab, &codec), config.seed);
    let outcome = train_with_monitor(params, &examples, config, monitor)?;
    Ok(Fitted {
        retriever: Retriever::new(outcome.params, vocab, codec, assignment.clone())?,
        epoch_losses: outcome.epoch_losses,
        examples: examples.len(),
    })
}
