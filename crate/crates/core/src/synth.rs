//! Seeded synthetic fixtures: a paraphrase code-search corpus and
//! well-separated embedding blobs.
//!
//! In the paraphrase corpus every document owns a small set of signature
//! words. Queries combine two of them with a shared domain noun and filler.
//! The code only carries vowel-stripped aliases of the signature words, and
//! the docstring holding the first query sits inside a comment, so once
//! documentation is stripped a lexical matcher sees little more than the
//! domain noun.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::RawRecord;
use crate::embed::EmbeddingMatrix;
use crate::error::Result;
use crate::hash::mix_seed;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const DOMAIN_NOUNS: &[&str] = &[
    "items", "buffer", "node", "matrix", "records", "tokens", "queue", "graph", "cache", "rows", "bytes", "path",
    "entries", "labels", "words", "pixels", "events", "keys", "tasks", "users",
];
const FILLER: &[&str] = &["how", "to", "the", "a", "of", "for", "with", "from", "given", "each"];
const LANGUAGES: &[&str] = &["python", "java", "go", "javascript"];

/// Pairs of signature-word slots used by successive queries. Dropping any
/// one pair leaves every slot covered by the rest.
const QUERY_PAIRS: [(usize, usize); 4] = [(0, 1), (2, 3), (0, 2), (1, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParaphraseParams {
    pub n_docs: usize,
    /// Between 1 and 4.
    pub queries_per_doc: usize,
    pub seed: u64,
}

impl Default for ParaphraseParams {
    fn default() -> Self {
        Self {
            n_docs: 200,
            queries_per_doc: 4,
            seed: 0,
        }
    }
}

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut w = String::with_capacity(2 * syllables + 1);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    w
}

/// `word` without vowels: the identifier spelling used in code.
pub fn alias(word: &str) -> String {
    word.chars().filter(|c| !"aeiou".contains(*c)).collect()
}

fn query_text<R: Rng>(rng: &mut R, words: &[&str]) -> String {
    let mut parts: Vec<&str> = words.to_vec();
    let n_filler = rng.gen_range(1..=3);
    parts.extend(FILLER.choose_multiple(rng, n_filler));
    parts.shuffle(rng);
    parts.join(" ")
}

fn render_code(lang: &str, name: &str, arg: &str, helper: &str, docstring: &str, k: u32) -> String {
    match lang {
        "python" => format!(
            "def {name}({arg}):\n    \"\"\"{docstring}\"\"\"\n    out = []\n    for x in {arg}:\n        if {helper}(x) > {k}:\n            out.append(x)\n    return out\n"
        ),
        "java" => format!(
            "/** {docstring} */\npublic List<Integer> {name}(List<Integer> {arg}) {{\n    List<Integer> out = new ArrayList<>();\n    for (int x : {arg}) {{\n        if ({helper}(x) > {k}) out.add(x);\n    }}\n    return out;\n}}\n"
        ),
        "go" => format!(
            "// {docstring}\nfunc {name}({arg} []int) []int {{\n\tout := []int{{}}\n\tfor _, x := range {arg} {{\n\t\tif {helper}(x) > {k} {{\n\t\t\tout = append(out, x)\n\t\t}}\n\t}}\n\treturn out\n}}\n"
        ),
        _ => format!(
            "// {docstring}\nfunction {name}({arg}) {{\n  return {arg}.filter((x) => {helper}(x) > {k});\n}}\n"
        ),
    }
}

fn camel(parts: &[String]) -> String {
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        let mut cs = p.chars();
        if let Some(c) = cs.next() {
            out.push(c.to_ascii_uppercase());
            out.extend(cs);
        }
    }
    out
}

/// Records of a paraphrase corpus, ready to serialize as input JSONL.
pub fn paraphrase_records(params: &ParaphraseParams) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[0x5e]));
    let mut used = HashSet::new();
    let q = params.queries_per_doc.clamp(1, QUERY_PAIRS.len());
    (0..params.n_docs)
        .map(|d| {
            let sig: Vec<String> = (0..4)
                .map(|_| loop {
                    let w = pseudo_word(&mut rng, 2);
                    if !FILLER.contains(&w.as_str()) && used.insert(alias(&w)) {
                        break w;
                    }
                })
                .collect();
            let noun = DOMAIN_NOUNS[rng.gen_range(0..DOMAIN_NOUNS.len())];
            let texts: Vec<String> = QUERY_PAIRS[..q]
                .iter()
                .map(|&(a, b)| query_text(&mut rng, &[&sig[a], &sig[b], noun]))
                .collect();
            let lang = LANGUAGES[d % LANGUAGES.len()];
            let aliases: Vec<String> = sig.iter().map(|w| alias(w)).collect();
            let name = if lang == "python" {
                format!("{}_{}", aliases[0], aliases[1])
            } else {
                camel(&aliases[..2])
            };
            let helper = if lang == "python" {
                format!("{}_{}", aliases[2], aliases[3])
            } else {
                camel(&aliases[2..])
            };
            let docstring = format!("{}. Returns the filtered {noun}.", texts[0]);
            let code = render_code(lang, &name, noun, &helper, &docstring, rng.gen_range(0..100));
            RawRecord {
                id: format!("synth-{d:05}"),
                language: lang.to_string(),
                code,
                docstring,
                queries: texts[1..].to_vec(),
            }
        })
        .collect()
}

pub fn paraphrase_jsonl(params: &ParaphraseParams) -> String {
    paraphrase_records(params)
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub blobs: usize,
    pub per_blob: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation inside a blob.
    pub sigma: f64,
    /// Minimum distance between blob centres, in multiples of `sigma`.
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            blobs: 10,
            per_blob: 50,
            dim: 2,
            sigma: 1.0,
            separation: 20.0,
            seed: 0,
        }
    }
}

/// Gaussian blobs with centres on a circle in the first two coordinates.
/// Rows are shuffled; the second value holds each row's blob.
pub fn blob_embeddings(params: &BlobParams) -> Result<(EmbeddingMatrix<f64>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, &[0xb1]));
    let dim = params.dim.max(2);
    let b = params.blobs.max(1);
    let chord = if b > 1 {
        2.0 * (std::f64::consts::PI / b as f64).sin()
    } else {
        1.0
    };
    let radius = params.separation * params.sigma / chord;
    let centres: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / b as f64;
            let mut c = vec![0.0; dim];
            c[0] = radius * t.cos();
            c[1] = radius * t.sin();
            c
        })
        .collect();
    let mut labels: Vec<usize> = (0..b).flat_map(|i| std::iter::repeat_n(i, params.per_blob)).collect();
    labels.shuffle(&mut rng);
    let rows = labels
        .iter()
        .map(|&l| {
            centres[l]
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + params.sigma * z
                })
                .collect()
        })
        .collect();
    Ok((EmbeddingMatrix::from_rows(rows, "blobs")?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, tokenize_words};

    #[test]
    fn corpus_parses_and_strips_queries_out_of_code() {
        let params = ParaphraseParams {
            n_docs: 40,
            ..Default::default()
        };
        let (corpus, report) = parse_corpus(&paraphrase_jsonl(&params), None, 1).unwrap();
        assert_eq!(report.accepted, 40);
        assert_eq!(corpus.queries.len(), 160);
        for q in &corpus.queries {
            let code: HashSet<String> = tokenize_words(&corpus.samples[q.target_doc].stripped_code).into_iter().collect();
            let sig: Vec<String> = tokenize_words(&q.text)
                .into_iter()
                .filter(|w| w.chars().all(|c| c.is_ascii_alphabetic()))
                .filter(|w| !FILLER.contains(&w.as_str()) && !DOMAIN_NOUNS.contains(&w.as_str()))
                .collect();
            assert_eq!(sig.len(), 2, "{}", q.text);
            assert!(sig.iter().all(|w| !code.contains(w)));
        }
        assert_eq!(paraphrase_jsonl(&params), paraphrase_jsonl(&params));
    }

    #[test]
    fn blobs_are_separated() {
        let p = BlobParams::default();
        let (emb, labels) = blob_embeddings(&p).unwrap();
        assert_eq!(emb.doc_count(), 500);
        for l in 0..10 {
            assert_eq!(labels.iter().filter(|&&x| x == l).count(), 50);
        }
        let chord = 2.0 * (std::f64::consts::PI / 10.0).sin();
        let r = p.separation * p.sigma / chord;
        assert!((chord * r - 20.0).abs() < 1e-9);
    }
}
