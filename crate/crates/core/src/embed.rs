//! Dense per-document vectors for clustering and the dual-encoder baseline.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::baselines::TfidfIndex;
use crate::corpus::{tokenize_words, Corpus};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::rank::{top_k, Ranking};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_DIM: usize = 256;
pub const SNAPSHOT_MAGIC: [u8; 8] = *b"DSIEMB01";
pub const HASHED_TAG: &str = "hashed-tfidf";
pub const EXTERNAL_TAG: &str = "external";

/// Row-major `doc_count x dim` matrix; row `i` belongs to document `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    vectors: Vec<T>,
    dim: usize,
    doc_count: usize,
    provider_tag: String,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>, provider_tag: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
            vectors.extend_from_slice(row);
        }
        Ok(Self {
            vectors,
            dim,
            doc_count: rows.len(),
            provider_tag: provider_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.vectors.chunks_exact(self.dim.max(1)).take(self.doc_count)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.vectors
    }

    /// Matrix with every entry multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| *v * c).collect(),
            ..self.clone()
        }
    }

    /// Inner-product scores against every row.
    pub fn scores(&self, query: &[T]) -> Result<Vec<T>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(self.rows().map(|r| dot(r, query)).collect())
    }

    /// Binary snapshot: magic, `u32` rows, `u32` columns, then row-major
    /// little-endian `f32` values.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.vectors.len());
        out.extend_from_slice(&SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.doc_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            let f = v.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8], provider_tag: impl Into<String>) -> Result<Self> {
        if bytes.len() < 16 || bytes[..8] != SNAPSHOT_MAGIC {
            return Err(Error::format("embedding snapshot", "bad magic"));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != n * d * 4 {
            return Err(Error::format(
                "embedding snapshot",
                format!("expected {} value bytes, found {}", n * d * 4, body.len()),
            ));
        }
        let vectors: Vec<T> = body
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self {
            vectors,
            dim: d,
            doc_count: n,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_snapshot_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_snapshot(path: impl AsRef<Path>, provider_tag: &str) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_bytes(&bytes, provider_tag)
    }
}

/// Signed feature hashing of tf-idf weighted tokens.
#[derive(Debug, Clone)]
pub struct HashedTfidfEmbedder {
    index: TfidfIndex,
    dim: usize,
}

/// Bucket and sign for a token: FNV-1a 64 modulo `dim`, negative when
/// bit 63 is set.
pub fn hash_bucket(token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    ((h % dim as u64) as usize, sign)
}

impl HashedTfidfEmbedder {
    pub fn new(corpus: &Corpus, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("embedding dim must be >= 2, got {dim}")));
        }
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            index: TfidfIndex::build(corpus),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self) -> &TfidfIndex {
        &self.index
    }

    /// Unnormalized hashed vector of a token list. Term frequency is taken
    /// over `tokens`; idf comes from the code-side index.
    fn accumulate(&self, tokens: &[String]) -> Vec<f64> {
        let mut counts: Vec<(&str, usize)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            match pos.get(t.as_str()) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    pos.insert(t, counts.len());
                    counts.push((t, 1));
                }
            }
        }
        let mut v = vec![0.0; self.dim];
        let len = tokens.len() as f64;
        for (t, c) in counts {
            let (bucket, sign) = hash_bucket(t, self.dim);
            v[bucket] += sign * (c as f64 / len) * self.index.idf(t);
        }
        v
    }

    fn normalized<T: Scalar>(v: Vec<f64>) -> Option<Vec<T>> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(v.into_iter().map(|x| T::from_f64_lossy(x / norm)).collect())
    }

    pub fn embed_corpus<T: Scalar>(&self, corpus: &Corpus) -> Result<EmbeddingMatrix<T>> {
        let mut rows = Vec::with_capacity(corpus.len());
        for s in &corpus.samples {
            let tokens = tokenize_words(&s.stripped_code);
            if tokens.is_empty() {
                return Err(Error::EmptyDocument { doc_index: s.doc_index });
            }
            let row = Self::normalized(self.accumulate(&tokens))
                .ok_or(Error::EmptyDocument { doc_index: s.doc_index })?;
            rows.push(row);
        }
        EmbeddingMatrix::from_rows(rows, HASHED_TAG)
    }

    pub fn embed_query<T: Scalar>(&self, query: &str) -> Result<Vec<T>> {
        let tokens = tokenize_words(query);
        if tokens.is_empty() {
            return Err(Error::UnembeddableQuery);
        }
        Self::normalized(self.accumulate(&tokens)).ok_or(Error::UnembeddableQuery)
    }
}

pub fn embed_hashed_tfidf<T: Scalar>(corpus: &Corpus, dim: usize) -> Result<EmbeddingMatrix<T>> {
    HashedTfidfEmbedder::new(corpus, dim)?.embed_corpus(corpus)
}

#[derive(Deserialize)]
struct ExternalRow {
    id: String,
    vector: Vec<serde_json::Value>,
}

pub fn load_external_embeddings<T: Scalar>(path: impl AsRef<Path>, corpus: &Corpus) -> Result<EmbeddingMatrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_embeddings(&text, corpus)
}

/// Parses `{id, vector}` JSONL. Components may be JSON numbers or strings
/// such as `"NaN"`; non-finite values are rejected with their location.
pub fn parse_external_embeddings<T: Scalar>(text: &str, corpus: &Corpus) -> Result<EmbeddingMatrix<T>> {
    let row_of: HashMap<&str, usize> = corpus
        .samples
        .iter()
        .map(|s| (s.source_id.as_str(), s.doc_index))
        .collect();
    let mut rows: Vec<Option<Vec<T>>> = vec![None; corpus.len()];
    let mut seen = HashSet::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExternalRow = serde_json::from_str(line)
            .map_err(|e| Error::format("embedding file", format!("line {}: {e}", lineno + 1)))?;
        let row = *row_of
            .get(rec.id.as_str())
            .ok_or_else(|| Error::UnknownEmbedding(rec.id.clone()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateEmbedding(rec.id));
        }
        let expected = *dim.get_or_insert(rec.vector.len());
        if rec.vector.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: rec.vector.len(),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (col, v) in rec.vector.iter().enumerate() {
            let x = match v {
                serde_json::Value::Number(n) => n.as_f64(),
                serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            }
            .ok_or_else(|| Error::format("embedding file", format!("line {}: component {col} is not a number", lineno + 1)))?;
            if !x.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(T::from_f64_lossy(x));
        }
        rows[row] = Some(values);
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::MissingEmbedding(corpus.samples[i].source_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::from_rows(rows, EXTERNAL_TAG)
}

/// Exhaustive maximum inner product search.
pub fn nearest_doc<T: Scalar>(query: &[T], emb: &EmbeddingMatrix<T>, k: usize) -> Result<Ranking<T>> {
    top_k(&emb.scores(query)?, k)
}


#[cfg(test)]
mod tests {
    use super::tests_support::corpus_of;
    use super::*;

    #[test]
    fn identical_docs_identical_rows() {
        let c = corpus_of(&["sort list fast", "sort list fast", "other words"]);
        let e: EmbeddingMatrix<f64> = embed_hashed_tfidf(&c, 64).unwrap();
        assert_eq!(e.row(0), e.row(1));
        for r in e.rows() {
            let n: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_token_docs_are_signed_one_hot() {
        // Buckets reproduced independently of `hash_bucket`.
        fn fnv(s: &str) -> u64 {
            let mut h: u64 = 14695981039346656037;
            for b in s.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211);
            }
            h
        }
        let words = ["alpha", "beta", "gamma"];
        let c = corpus_of(&words);
        let e: EmbeddingMatrix<f64> = embed_hashed_tfidf(&c, 8).unwrap();
        for (i, w) in words.iter().enumerate() {
            let h = fnv(w);
            let bucket = (h % 8) as usize;
            let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
            let mut expect = [0.0; 8];
            expect[bucket] = sign;
            assert_eq!(e.row(i), &expect, "{w}");
        }
    }

    #[test]
    fn dim_below_two_rejected() {
        let c = corpus_of(&["a"]);
        assert!(embed_hashed_tfidf::<f64>(&c, 1).is_err());
    }

    #[test]
    fn external_load_and_errors() {
        let c = corpus_of(&["a", "b", "c"]);
        let good = "{\"id\":\"id2\",\"vector\":[1,2,3,4]}\n{\"id\":\"id0\",\"vector\":[0,0,0,1]}\n{\"id\":\"id1\",\"vector\":[0.5,0,0,0]}\n";
        let e: EmbeddingMatrix<f64> = parse_external_embeddings(good, &c).unwrap();
        assert_eq!((e.doc_count(), e.dim()), (3, 4));
        assert_eq!(e.row(2), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.provider_tag(), EXTERNAL_TAG);

        let missing = "{\"id\":\"id0\",\"vector\":[1]}\n{\"id\":\"id1\",\"vector\":[1]}\n";
        match parse_external_embeddings::<f64>(missing, &c) {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "id2"),
            other => panic!("{other:?}"),
        }

        let nan = "{\"id\":\"id0\",\"vector\":[1,2]}\n{\"id\":\"id1\",\"vector\":[1,\"NaN\"]}\n{\"id\":\"id2\",\"vector\":[1,2]}\n";
        assert!(matches!(
            parse_external_embeddings::<f64>(nan, &c),
            Err(Error::NonFinite { row: 1, col: 1 })
        ));

        let dup = "{\"id\":\"id0\",\"vector\":[1]}\n{\"id\":\"id0\",\"vector\":[1]}\n";
        assert!(matches!(parse_external_embeddings::<f64>(dup, &c), Err(Error::DuplicateEmbedding(_))));

        let ragged = "{\"id\":\"id0\",\"vector\":[1]}\n{\"id\":\"id1\",\"vector\":[1,2]}\n";
        assert!(matches!(
            parse_external_embeddings::<f64>(ragged, &c),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn nearest_on_orthonormal_rows() {
        let rows = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let e = EmbeddingMatrix::<f64>::from_rows(rows, "t").unwrap();
        assert_eq!(nearest_doc(e.row(2), &e, 1).unwrap(), vec![(2, 1.0)]);
        let mut all: Vec<usize> = nearest_doc(e.row(0), &e, 4).unwrap().iter().map(|r| r.0).collect();
        all.sort();
        assert_eq!(all, [0, 1, 2, 3]);
        assert!(nearest_doc(&[1.0, 0.0], &e, 1).is_err());
    }

    #[test]
    fn nearest_two_d_fixture() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![-1.0, 0.2]];
        let e = EmbeddingMatrix::<f64>::from_rows(rows.clone(), "t").unwrap();
        let q = [0.2, 0.9];
        // dots: 0.2, 0.9, 0.84, -0.02
        let got = nearest_doc(&q, &e, 2).unwrap();
        assert_eq!(got.iter().map(|r| r.0).collect::<Vec<_>>(), [1, 2]);
        let brute: Vec<f64> = rows.iter().map(|r| r[0] * q[0] + r[1] * q[1]).collect();
        assert_eq!(got[0].1, brute[1]);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let rows = vec![vec![1.5f32, -0.0, f32::MIN_POSITIVE], vec![3.25e-7, 1e30, -2.0]];
        let e = EmbeddingMatrix::from_rows(rows, "t").unwrap();
        let bytes = e.to_snapshot_bytes();
        assert_eq!(&bytes[..8], b"DSIEMB01");
        assert_eq!(bytes.len(), 16 + 6 * 4);
        let back = EmbeddingMatrix::<f32>::from_snapshot_bytes(&bytes, "t").unwrap();
        assert_eq!(back.to_snapshot_bytes(), bytes);
        for (a, b) in back.as_slice().iter().zip(e.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
