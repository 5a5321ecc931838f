use crate::corpus::Corpus;
use crate::embed::{nearest_doc, EmbeddingMatrix, HashedTfidfEmbedder};
use crate::error::Result;
use crate::rank::Ranking;
use crate::scalar::Scalar;

/// Embeds queries and code into the same hashed tf-idf space and ranks by
/// inner product. A lexical stand-in for a trained neural dual encoder.
#[derive(Debug, Clone)]
pub struct DualEncoder<T> {
    embedder: HashedTfidfEmbedder,
    docs: EmbeddingMatrix<T>,
}

impl<T: Scalar> DualEncoder<T> {
    pub fn new(corpus: &Corpus, dim: usize) -> Result<Self> {
        let embedder = HashedTfidfEmbedder::new(corpus, dim)?;
        let docs = embedder.embed_corpus(corpus)?;
        Ok(Self { embedder, docs })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix<T> {
        &self.docs
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<Ranking<T>> {
        let q = self.embedder.embed_query(query)?;
        nearest_doc(&q, &self.docs, k)
    }
}

pub fn dual_encoder_retrieve<T: Scalar>(de: &DualEncoder<T>, query: &str, k: usize) -> Result<Ranking<T>> {
    de.retrieve(query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize_words;
    use crate::embed::hash_bucket;
    use crate::error::Error;
    use crate::embed::tests_support::corpus_of;

    #[test]
    fn identical_text_ranks_first() {
        let c = corpus_of(&["fn rev list node", "fn sum matrix rows", "parse json str"]);
        let de = DualEncoder::<f64>::new(&c, 64).unwrap();
        assert_eq!(de.retrieve("fn sum matrix rows", 1).unwrap()[0].0, 1);
        let all = de.retrieve("list", 3).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn unembeddable_query() {
        let c = corpus_of(&["a b", "c d"]);
        let de = DualEncoder::<f64>::new(&c, 16).unwrap();
        assert!(matches!(de.retrieve("zzz", 1), Err(Error::UnembeddableQuery)));
        assert!(matches!(de.retrieve("", 1), Err(Error::UnembeddableQuery)));
    }

    #[test]
    fn four_doc_brute_force() {
        let docs = ["open file read", "read lines file", "sort keys", "merge sort halves"];
        let c = corpus_of(&docs);
        let dim = 32;
        let de = DualEncoder::<f64>::new(&c, dim).unwrap();
        let n = docs.len() as f64;
        let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize_words(d)).collect();
        let df = |t: &str| toks.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64;
        let vec_of = |tokens: &[String]| {
            let mut v = vec![0.0; dim];
            let mut seen: Vec<&String> = Vec::new();
            for t in tokens {
                if seen.contains(&t) {
                    continue;
                }
                seen.push(t);
                let count = tokens.iter().filter(|x| *x == t).count() as f64;
                let idf = if df(t) == 0.0 { 0.0 } else { (1.0 + n / df(t)).ln() };
                let (b, s) = hash_bucket(t, dim);
                v[b] += s * count / tokens.len() as f64 * idf;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect::<Vec<f64>>()
        };
        let q = tokenize_words("read sort file");
        let qv = vec_of(&q);
        let mut brute: Vec<(usize, f64)> = toks
            .iter()
            .enumerate()
            .map(|(i, d)| (i, vec_of(d).iter().zip(&qv).map(|(a, b)| a * b).sum()))
            .collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got = de.retrieve("read sort file", 4).unwrap();
        for (g, b) in got.iter().zip(&brute) {
            assert_eq!(g.0, b.0);
            assert!((g.1 - b.1).abs() < 1e-12);
        }
    }
}
