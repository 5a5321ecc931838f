#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsi_core::corpus::{CodeSample, Corpus, Language, QueryRecord, Split};
use dsi_core::model::{batch_loss, loss_and_grad, ModelDims, ModelParams, Task, TrainingExample, OUT_END, OUT_SYM0};

/// Corpus whose stripped code is exactly `codes`, one training query each.
pub fn corpus_of(codes: &[String]) -> Corpus {
    Corpus {
        samples: codes
            .iter()
            .enumerate()
            .map(|(i, c)| CodeSample {
                doc_index: i,
                source_id: format!("doc{i}"),
                language: Language::Other,
                raw_code: c.clone(),
                stripped_code: c.clone(),
            })
            .collect(),
        queries: (0..codes.len())
            .map(|i| QueryRecord {
                query_index: i,
                text: format!("query {i}"),
                target_doc: i,
                split: Split::Train,
            })
            .collect(),
        seed: 0,
    }
}

/// Brute-force TF-IDF ranking straight from the definitions:
/// tf = count / length, idf = ln(1 + N / df), score = sum over query words.
pub fn tfidf_oracle(docs: &[Vec<String>], query: &[String]) -> Vec<(usize, f64)> {
    let n = docs.len() as f64;
    let mut scored: Vec<(usize, f64)> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let mut score = 0.0;
            for term in query {
                let df = docs.iter().filter(|x| x.contains(term)).count();
                let idf = if df == 0 { 0.0 } else { (1.0 + n / df as f64).ln() };
                let count = doc.iter().filter(|w| *w == term).count();
                let tf = if doc.is_empty() { 0.0 } else { count as f64 / doc.len() as f64 };
                score += tf * idf;
            }
            (d, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

pub fn random_words<R: Rng>(rng: &mut R, vocab: &[&str], len: usize) -> Vec<String> {
    (0..len).map(|_| vocab.choose(rng).unwrap().to_string()).collect()
}

pub const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu", "nu", "xi",
    "omicron", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega",
];

pub fn small_dims(seed: u64) -> ModelDims {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelDims {
        vocab_in: 20,
        vocab_out: 14,
        embed: 8,
        ffn: 16,
        max_input: rng.gen_range(3..=5),
        max_target: rng.gen_range(3..=5),
    }
}

/// Two random examples that fit `dims`.
pub fn toy_batch(dims: ModelDims, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
    (0..2)
        .map(|i| {
            let n_in = rng.gen_range(1..=dims.max_input);
            let n_sym = rng.gen_range(0..dims.max_target);
            let mut target: Vec<u32> = (0..n_sym).map(|_| OUT_SYM0 + rng.gen_range(0..10)).collect();
            target.push(OUT_END);
            TrainingExample {
                input_ids: (0..n_in).map(|_| rng.gen_range(0..dims.vocab_in as u32)).collect(),
                target_ids: target,
                task: if i == 0 { Task::Indexing } else { Task::Retrieval },
                doc_index: i,
            }
        })
        .collect()
}

/// Largest per-tensor relative error `|a - n| / max(|a|, |n|)` between the
/// analytic gradient and central differences, with the offending tensor.
pub fn gradient_check(params: &ModelParams<f64>, batch: &[TrainingExample], h: f64) -> (f64, &'static str) {
    let refs: Vec<&TrainingExample> = batch.iter().collect();
    let analytic = loss_and_grad(params, &refs).unwrap().grads;
    let mut worst = (0.0, "");
    for (ti, (name, tensor)) in analytic.tensors().into_iter().enumerate() {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..tensor.data.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1.data[j] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1.data[j] -= h;
            let numeric = (batch_loss(&plus, &refs).unwrap() - batch_loss(&minus, &refs).unwrap()) / (2.0 * h);
            let a = tensor.data[j];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let scale = a2.sqrt().max(n2.sqrt());
        let rel = if scale < 1e-10 { diff2.sqrt() } else { diff2.sqrt() / scale };
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    worst
}
