mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{corpus_of, tfidf_oracle, WORDS};
use dsi_core::baselines::TfidfIndex;
use dsi_core::corpus::{
    split_queries, strip_documentation, tokenize_words, Corpus, Language, QueryRecord, Split, Vocabulary, UNK,
};
use dsi_core::docid::{assign_direct, build_trie, kmeans, render_symbols, KMeansParams, Structure};
use dsi_core::embed::{nearest_doc, EmbeddingMatrix};
use dsi_core::model::{ModelDims, ModelParams, Retriever, TargetCodec, TargetMode};
use dsi_core::Error;

fn language() -> impl Strategy<Value = Language> {
    prop::sample::select(Language::ALL.to_vec())
}

fn code_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[a-zA-Z_][a-zA-Z0-9_]{0,8}",
            Just("#".to_string()),
            Just("//".to_string()),
            Just("/*".to_string()),
            Just("*/".to_string()),
            Just("\"\"\"".to_string()),
            Just("'''".to_string()),
            Just("\"".to_string()),
            Just("=begin".to_string()),
            Just("=end".to_string()),
            Just("\n".to_string()),
            Just("    ".to_string()),
            Just("(){};".to_string()),
        ],
        0..40,
    )
    .prop_map(|parts| parts.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stripping_is_idempotent(code in code_text(), lang in language()) {
        let once = strip_documentation(&code, lang);
        prop_assert_eq!(strip_documentation(&once, lang), once);
    }

    #[test]
    fn tokenizer_is_total_and_lowercase(text in "\\PC{0,80}") {
        for tok in tokenize_words(&text) {
            prop_assert!(!tok.is_empty());
            prop_assert!(!tok.chars().any(char::is_whitespace));
            prop_assert_eq!(tok.to_lowercase(), tok.clone());
        }
    }

    #[test]
    fn vocabulary_round_trips_known_tokens(docs in prop::collection::vec("[a-z ]{0,40}", 1..8), cap in 1usize..30) {
        let vocab = Vocabulary::build(docs.iter(), cap);
        prop_assert!(vocab.len() <= cap + 4);
        for doc in &docs {
            for tok in tokenize_words(doc) {
                let id = vocab.id(&tok);
                if id != UNK {
                    prop_assert_eq!(vocab.token(id), Some(tok.as_str()));
                }
            }
        }
        let again = Vocabulary::from_tokens(vocab.tokens().to_vec());
        prop_assert_eq!(again, vocab);
    }

    #[test]
    fn direct_assignment_is_a_bijection(n in 1usize..2000, char_ids in any::<bool>()) {
        let structure = if char_ids { Structure::Char } else { Structure::Int };
        let a = assign_direct(n, structure).unwrap();
        let width = (n - 1).to_string().len();
        let rendered: HashSet<String> = (0..n).map(|d| a.render(d)).collect();
        prop_assert_eq!(rendered.len(), n);
        let trie = build_trie(&a).unwrap();
        prop_assert_eq!(trie.terminal_count(), n);
        for d in [0, n / 2, n - 1] {
            let syms = a.symbols(d);
            prop_assert_eq!(syms.len(), width);
            prop_assert_eq!(a.docid(d).int_string(), format!("{d:0width$}"));
            prop_assert_eq!(a.doc_of(syms), Some(d));
            let labels: Vec<u32> = syms.iter().map(|&s| s as u32).collect();
            prop_assert_eq!(trie.lookup(&labels), Some(d));
            prop_assert_eq!(render_symbols(syms, structure), a.render(d));
        }
    }

    #[test]
    fn nearest_doc_matches_brute_force(
        rows in prop::collection::vec(prop::collection::vec(-4i32..=4, 3), 1..30),
        q in prop::collection::vec(-4i32..=4, 3),
        k_frac in 0.0f64..1.0,
        scale in 1u32..8,
    ) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| x as f64 / 4.0).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&x| x as f64 / 4.0).collect();
        let n = rows.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let emb = EmbeddingMatrix::from_rows(rows.clone(), "t").unwrap();
        let got = nearest_doc(&q, &emb, k).unwrap();
        let mut oracle: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        oracle.truncate(k);
        prop_assert_eq!(&got, &oracle);

        let c = scale as f64;
        let scaled_q: Vec<f64> = q.iter().map(|x| x * c).collect();
        let ids = |r: &[(usize, f64)]| r.iter().map(|x| x.0).collect::<Vec<_>>();
        prop_assert_eq!(ids(&nearest_doc(&scaled_q, &emb, k).unwrap()), ids(&got));
        prop_assert_eq!(ids(&nearest_doc(&q, &emb.scaled(c), k).unwrap()), ids(&got));
    }

    #[test]
    fn nearest_doc_follows_row_permutation(
        rows in prop::collection::vec(prop::collection::vec(-8i32..=8, 2), 2..20),
        q in prop::collection::vec(-8i32..=8, 2),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let base = nearest_doc(&q, &EmbeddingMatrix::from_rows(rows, "t").unwrap(), n).unwrap();
        let moved = nearest_doc(&q, &EmbeddingMatrix::from_rows(permuted, "t").unwrap(), n).unwrap();
        let base_scores: Vec<f64> = base.iter().map(|x| x.1).collect();
        let moved_scores: Vec<f64> = moved.iter().map(|x| x.1).collect();
        prop_assert_eq!(base_scores, moved_scores);
        for (new_idx, score) in &moved {
            prop_assert_eq!(base.iter().find(|b| b.0 == perm[*new_idx]).unwrap().1, *score);
        }
    }

    #[test]
    fn kmeans_sse_never_increases(
        pts in prop::collection::vec(prop::collection::vec(-50i32..50, 2), 1..60),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let pts: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&x| x as f64 / 5.0).collect()).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let fit = kmeans(&refs, &KMeansParams::new(k, seed)).unwrap();
        prop_assert!(fit.k() <= k);
        prop_assert!(fit.labels.iter().all(|&l| l < fit.k()));
        for w in fit.sse_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.sse_history);
        }
    }

    #[test]
    fn tfidf_matches_definition(
        docs in prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 0..20), 1..30),
        query in prop::collection::vec(prop::sample::select(WORDS), 1..10),
    ) {
        let docs: Vec<Vec<String>> = docs.iter().map(|d| d.iter().map(|w| w.to_string()).collect()).collect();
        let query: Vec<String> = query.iter().map(|w| w.to_string()).collect();
        let index = TfidfIndex::from_documents(docs.clone());
        let got = index.retrieve(&query.join(" "), docs.len()).unwrap();
        prop_assert_eq!(got, tfidf_oracle(&docs, &query));
    }

    #[test]
    fn split_keeps_a_training_query_per_doc(
        per_doc in prop::collection::vec(1usize..6, 1..20),
        fraction in 0.0f64..0.99,
        seed in any::<u64>(),
    ) {
        let codes: Vec<String> = (0..per_doc.len()).map(|i| format!("code {i}")).collect();
        let mut corpus: Corpus = corpus_of(&codes);
        corpus.queries = per_doc
            .iter()
            .enumerate()
            .flat_map(|(d, &m)| (0..m).map(move |j| (d, j)))
            .enumerate()
            .map(|(i, (d, j))| QueryRecord { query_index: i, text: format!("q {d} {j}"), target_doc: d, split: Split::Train })
            .collect();
        let split = split_queries(&corpus, fraction, seed);
        prop_assert_eq!(split.queries.len(), corpus.queries.len());
        prop_assert_eq!(&split, &split_queries(&corpus, fraction, seed));
        for (d, &m) in per_doc.iter().enumerate() {
            let train = split.queries.iter().filter(|q| q.target_doc == d && q.split == Split::Train).count();
            prop_assert!(train >= 1);
            let expected_test = if m < 2 { 0 } else { ((fraction * m as f64).round() as usize).min(m - 1) };
            prop_assert_eq!(m - train, expected_test);
        }
        for (a, b) in split.queries.iter().zip(&corpus.queries) {
            prop_assert_eq!(&a.text, &b.text);
            prop_assert_eq!(a.target_doc, b.target_doc);
        }
    }
}

fn random_retriever(n_docs: usize, mode: TargetMode, structure: Structure, seed: u64) -> Retriever<f64> {
    let assignment = assign_direct(n_docs, structure).unwrap();
    let codec = match mode {
        TargetMode::PerSymbol => TargetCodec::per_symbol(),
        TargetMode::Merged => TargetCodec::new(&assignment, mode).unwrap(),
    };
    let vocab = Vocabulary::build(WORDS.iter(), 64);
    let dims = ModelDims {
        vocab_in: vocab.len(),
        vocab_out: codec.vocab_size(),
        embed: 8,
        ffn: 8,
        max_input: 6,
        max_target: assignment.symbols(0).len() + 1,
    };
    let params = ModelParams::random(dims, &mut ChaCha8Rng::seed_from_u64(seed));
    Retriever::new(params, vocab, codec, assignment).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoder_only_returns_assigned_docids(
        n_docs in 1usize..150,
        merged in any::<bool>(),
        char_ids in any::<bool>(),
        seed in any::<u64>(),
        queries in prop::collection::vec("\\PC{0,30}", 1..6),
        beam in 1usize..12,
    ) {
        let mode = if merged { TargetMode::Merged } else { TargetMode::PerSymbol };
        let structure = if char_ids || merged { Structure::Char } else { Structure::Int };
        let r = random_retriever(n_docs, mode, structure, seed);
        let valid: HashSet<String> = (0..n_docs).map(|d| r.assignment.render(d)).collect();
        for q in &queries {
            match r.retrieve(q, beam) {
                Ok(out) => {
                    prop_assert_eq!(out.len(), beam.min(n_docs));
                    let mut seen = HashSet::new();
                    for d in &out {
                        prop_assert!(valid.contains(&d.docid.render()));
                        prop_assert_eq!(r.assignment.render(d.doc_index), d.docid.render());
                        prop_assert!(seen.insert(d.doc_index));
                        prop_assert!(d.log_prob <= 0.0 && d.log_prob.is_finite());
                    }
                    prop_assert!(out.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
                }
                Err(Error::EmptyInput) => prop_assert!(tokenize_words(q).is_empty()),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
