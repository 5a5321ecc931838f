//! Classical retrievers used as reference points for the generative model.

mod dual;
mod tfidf;

pub use dual::{dual_encoder_retrieve, DualEncoder};
pub use tfidf::{build_tfidf_index, tfidf_retrieve, TfidfIndex};
