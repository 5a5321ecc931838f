use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Split};
use crate::hash::mix_seed;

/// Moves about `test_fraction` of each document's queries to the test
/// split. A document always keeps at least one training query.
pub fn split_queries(corpus: &Corpus, test_fraction: f64, seed: u64) -> Corpus {
    assert!(
        (0.0..1.0).contains(&test_fraction),
        "test_fraction must lie in [0, 1)"
    );
    let mut by_doc: Vec<Vec<usize>> = vec![Vec::new(); corpus.samples.len()];
    for (i, q) in corpus.queries.iter().enumerate() {
        by_doc[q.target_doc].push(i);
    }
    let mut queries = corpus.queries.clone();
    for q in &mut queries {
        q.split = Split::Train;
    }
    for (doc, idxs) in by_doc.iter().enumerate() {
        if idxs.len() < 2 {
            continue;
        }
        let n_test = ((test_fraction * idxs.len() as f64).round() as usize).min(idxs.len() - 1);
        if n_test == 0 {
            continue;
        }
        let mut order = idxs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[doc as u64]));
        order.shuffle(&mut rng);
        for &qi in &order[..n_test] {
            queries[qi].split = Split::Test;
        }
    }
    Corpus {
        samples: corpus.samples.clone(),
        queries,
        seed,
    }
}
