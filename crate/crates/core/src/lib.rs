//! Generative code retrieval: a sequence-to-sequence model that maps code
//! and natural-language queries directly to document identifiers, plus the
//! corpus tooling, identifier schemes, baselines and evaluation around it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type to `f64`, which the trainer normally uses.

pub mod baselines;
pub mod corpus;
pub mod docid;
pub mod embed;
pub mod error;
pub mod eval;
pub mod hash;
pub mod model;
pub mod rank;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Embeddings = embed::EmbeddingMatrix<f64>;
pub type Embedder = embed::HashedTfidfEmbedder;
pub type Model = model::ModelParams<f64>;
pub type DsiRetriever = model::Retriever<f64>;
pub type ModelCheckpoint = model::Checkpoint<f64>;
pub type DualEncoderF64 = baselines::DualEncoder<f64>;
