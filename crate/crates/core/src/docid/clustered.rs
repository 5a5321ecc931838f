use super::kmeans::{kmeans, KMeansParams};
use super::{DocIdAssignment, Strategy, Structure};
use crate::embed::EmbeddingMatrix;
use crate::error::Result;
use crate::hash::mix_seed;
use crate::scalar::Scalar;

/// Sets smaller than this get a two-digit rank instead of a cluster symbol.
pub const LEAF_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub seed: u64,
    pub branching: usize,
    pub leaf_limit: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl ClusterParams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            branching: 10,
            leaf_limit: LEAF_LIMIT,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

pub fn assign_clustered<T: Scalar>(emb: &EmbeddingMatrix<T>, seed: u64, structure: Structure) -> Result<DocIdAssignment> {
    assign_clustered_with(emb, &ClusterParams::new(seed), structure)
}

/// Recursive k-means over document embeddings. Each level appends the
/// member's cluster index; sets below the leaf limit append the member's
/// zero-padded rank (by doc index) and stop.
pub fn assign_clustered_with<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    params: &ClusterParams,
    structure: Structure,
) -> Result<DocIdAssignment> {
    assert!(params.branching >= 2 && params.branching <= 10);
    assert!(params.leaf_limit >= 1 && params.leaf_limit <= 100);
    let mut ids = vec![Vec::new(); emb.doc_count()];
    let members: Vec<usize> = (0..emb.doc_count()).collect();
    let mut path = Vec::new();
    cluster(emb, params, &members, &mut path, &mut ids)?;
    DocIdAssignment::new(ids, Strategy::Clustered, structure)
}

fn cluster<T: Scalar>(
    emb: &EmbeddingMatrix<T>,
    params: &ClusterParams,
    members: &[usize],
    path: &mut Vec<u8>,
    ids: &mut [Vec<u8>],
) -> Result<()> {
    if members.len() < params.leaf_limit {
        for (rank, &doc) in members.iter().enumerate() {
            ids[doc].extend([(rank / 10) as u8, (rank % 10) as u8]);
        }
        return Ok(());
    }

    let points: Vec<&[T]> = members.iter().map(|&d| emb.row(d)).collect();
    let path_key: Vec<u64> = path.iter().map(|&s| s as u64).collect();
    let km = KMeansParams {
        max_iters: params.max_iters,
        tol: params.tol,
        ..KMeansParams::new(params.branching, mix_seed(params.seed, &path_key))
    };
    let fit = kmeans(&points, &km)?;
    let mut labels = fit.labels;
    let mut k = fit.centroids.len();
    if k == 1 {
        // every point identical: split by rank so recursion terminates
        k = params.branching;
        let n = members.len();
        labels = (0..n).map(|r| r * k / n).collect();
    }

    let mut groups = vec![Vec::new(); k];
    for (&doc, &label) in members.iter().zip(&labels) {
        ids[doc].push(label as u8);
        groups[label].push(doc);
    }
    for (label, group) in groups.iter().enumerate() {
        path.push(label as u8);
        cluster(emb, params, group, path, ids)?;
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(rows, "test").unwrap()
    }

    #[test]
    fn small_corpus_is_pure_rank() {
        let e = matrix((0..50).map(|i| vec![i as f64, (i * i) as f64]).collect());
        let a = assign_clustered(&e, 3, Structure::Int).unwrap();
        for d in 0..50 {
            assert_eq!(a.render(d), format!("{d:02}"));
        }
    }

    #[test]
    fn identical_rows_get_distinct_ids() {
        let e = matrix(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let a = assign_clustered(&e, 0, Structure::Char).unwrap();
        assert_eq!(a.render(0), "aa");
        assert_eq!(a.render(1), "ab");
    }

    #[test]
    fn many_identical_rows_terminate() {
        let e = matrix(vec![vec![0.5; 3]; 250]);
        let a = assign_clustered(&e, 1, Structure::Int).unwrap();
        assert_eq!(a.len(), 250);
        assert!(a.all_symbols().iter().all(|s| s.len() == 3));
    }
}
