use std::collections::HashMap;

use crate::corpus::{tokenize_words, Corpus};
use crate::error::Result;
use crate::rank::{top_k, Ranking};

/// Bag-of-words statistics over the stripped code of every document.
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    doc_term_freq: Vec<HashMap<String, usize>>,
    doc_lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
}

impl TfidfIndex {
    pub fn build(corpus: &Corpus) -> Self {
        Self::from_documents(corpus.samples.iter().map(|s| tokenize_words(&s.stripped_code)))
    }

    pub fn from_documents<I>(documents: I) -> Self
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut doc_term_freq = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for tokens in documents {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for t in &tokens {
                *counts.entry(t.clone()).or_default() += 1;
            }
            for t in counts.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            doc_lengths.push(tokens.len());
            doc_term_freq.push(counts);
        }
        Self {
            doc_term_freq,
            doc_lengths,
            doc_freq,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_length(&self, doc: usize) -> usize {
        self.doc_lengths[doc]
    }

    pub fn term_count(&self, term: &str, doc: usize) -> usize {
        self.doc_term_freq[doc].get(term).copied().unwrap_or(0)
    }

    pub fn doc_terms(&self, doc: usize) -> &HashMap<String, usize> {
        &self.doc_term_freq[doc]
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// Occurrences of `term` in `doc` over the document's token count.
    pub fn tf(&self, term: &str, doc: usize) -> f64 {
        let len = self.doc_lengths[doc];
        if len == 0 {
            return 0.0;
        }
        self.term_count(term, doc) as f64 / len as f64
    }

    /// `ln(1 + N / df)`; zero for terms no document contains.
    pub fn idf(&self, term: &str) -> f64 {
        match self.doc_freq(term) {
            0 => 0.0,
            df => (1.0 + self.n_docs() as f64 / df as f64).ln(),
        }
    }

    /// Scores each document by the sum of `tf * idf` over the query's
    /// tokens, counting repeated tokens once per occurrence.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms = tokenize_words(query);
        let idfs: Vec<f64> = terms.iter().map(|t| self.idf(t)).collect();
        (0..self.n_docs())
            .map(|d| {
                terms
                    .iter()
                    .zip(&idfs)
                    .fold(0.0, |acc, (t, idf)| acc + self.tf(t, d) * idf)
            })
            .collect()
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<Ranking> {
        top_k(&self.scores(query), k)
    }
}

pub fn build_tfidf_index(corpus: &Corpus) -> TfidfIndex {
    TfidfIndex::build(corpus)
}

pub fn tfidf_retrieve(index: &TfidfIndex, query: &str, k: usize) -> Result<Ranking> {
    index.retrieve(query, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(docs: &[&str]) -> TfidfIndex {
        TfidfIndex::from_documents(docs.iter().map(|d| tokenize_words(d)))
    }

    #[test]
    fn counting() {
        let ix = index(&["a b a"]);
        assert_eq!(ix.term_count("a", 0), 2);
        assert_eq!(ix.term_count("b", 0), 1);
        assert_eq!(ix.doc_length(0), 3);
        assert_eq!(ix.doc_freq("a"), 1);
        assert_eq!(ix.doc_freq("b"), 1);

        let twin = index(&["x y", "x y"]);
        assert_eq!(twin.doc_freq("x"), 2);
        assert_eq!(twin.doc_freq("y"), 2);
    }

    #[test]
    fn term_frequency() {
        let ix = index(&["even numbers even", "solo"]);
        assert!((ix.tf("even", 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ix.tf("odd", 0), 0.0);
        assert_eq!(ix.tf("solo", 1), 1.0);
    }

    #[test]
    fn inverse_document_frequency() {
        let ix = index(&["t u", "t", "v", "v w"]);
        assert!((ix.idf("t") - 3f64.ln()).abs() < 1e-15);
        assert!((ix.idf("t") - 1.0986).abs() < 1e-4);
        let all = index(&["k", "k k", "k z"]);
        assert!((all.idf("k") - 2f64.ln()).abs() < 1e-15);
        assert_eq!(all.idf("missing"), 0.0);
    }

    #[test]
    fn even_beats_odd() {
        // d0: tf(even)=2/3, idf(even)=ln(1+2/1)=ln 3; d1 scores 0.
        let ix = index(&["even numbers even", "odd numbers"]);
        let ranked = ix.retrieve("even", 2).unwrap();
        assert_eq!(ranked[0].0, 0);
        assert!((ranked[0].1 - 2.0 / 3.0 * 3f64.ln()).abs() < 1e-15);
        assert_eq!(ranked[1], (1, 0.0));
    }

    #[test]
    fn out_of_corpus_query_scores_zero() {
        let ix = index(&["a b", "c d", "e"]);
        let ranked = ix.retrieve("zzz qqq", 2).unwrap();
        assert_eq!(ranked, vec![(0, 0.0), (1, 0.0)]);
    }

    #[test]
    fn five_doc_hand_table() {
        // N = 5. df: sort=3 (d0,d2,d3) list=2 (d0,d4) key=1 (d2).
        // idf: sort ln(8/3), list ln(3.5), key ln 6.
        // query "sort list by key":
        //   d0 "sort list"          1/2*ln(8/3) + 1/2*ln(3.5)      = 1.1168
        //   d1 "merge tree"         0
        //   d2 "sort by key key"    1/4*ln(8/3) + 2/4*ln(6) [+by]  = see below
        //   d3 "sort sort sort x"   3/4*ln(8/3)                    = 0.7356
        //   d4 "list"               ln(3.5)                        = 1.2528
        // "by" occurs only in d2: df=1, idf ln 6; d2 = 1/4 ln(8/3) + 1/4 ln 6 + 2/4 ln 6
        //   = 0.2452 + 1.3438 = 1.5890
        let ix = index(&["sort list", "merge tree", "sort by key key", "sort sort sort x", "list"]);
        let expect = [
            0.5 * (8.0f64 / 3.0).ln() + 0.5 * 3.5f64.ln(),
            0.0,
            0.25 * (8.0f64 / 3.0).ln() + 0.75 * 6f64.ln(),
            0.75 * (8.0f64 / 3.0).ln(),
            3.5f64.ln(),
        ];
        let scores = ix.scores("sort list by key");
        for (s, e) in scores.iter().zip(expect) {
            assert!((s - e).abs() < 1e-12, "{s} vs {e}");
        }
        let order: Vec<usize> = ix.retrieve("sort list by key", 5).unwrap().iter().map(|r| r.0).collect();
        assert_eq!(order, [2, 4, 0, 3, 1]);
    }
}
