//! Lloyd's k-means with greedy k-means++ seeding.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (L2).
    pub tol: f64,
    /// Candidates drawn per greedy k-means++ step; `None` uses `2 + ln k`.
    pub local_trials: Option<usize>,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
            local_trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    /// Compacted cluster index per point, in `0..centroids.len()`.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    pub iterations: usize,
    /// Within-cluster SSE after each Lloyd update.
    pub sse_history: Vec<f64>,
}

impl<T: Scalar> KMeansFit<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

pub fn sse<T: Scalar>(points: &[&[T]], labels: &[usize], centroids: &[Vec<T>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]).to_f64_lossless())
        .sum()
}

pub fn kmeans<T: Scalar>(points: &[&[T]], params: &KMeansParams) -> Result<KMeansFit<T>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("k-means needs at least one point".into()));
    }
    if params.k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let dim = points[0].len();
    for (r, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if let Some(c) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }

    let distinct: HashSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_f64_lossless().to_bits()).collect())
        .collect();
    let k = params.k.min(distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_plus_plus(points, k, params.local_trials, &mut rng);

    let mut labels = vec![0; points.len()];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest_centroid(p, &centroids);
        }
        reseed_empty(points, &mut labels, &mut centroids);
        let updated = means(points, &labels, &centroids);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).to_f64_lossless().sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        sse_history.push(sse(points, &labels, &centroids));
        if shift < params.tol {
            break;
        }
    }

    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest_centroid(p, &centroids);
    }
    let (labels, centroids) = compact(labels, centroids);
    Ok(KMeansFit {
        labels,
        centroids,
        iterations,
        sse_history,
    })
}

fn seed_plus_plus<T: Scalar>(
    points: &[&[T]],
    k: usize,
    local_trials: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<T>> {
    let trials = local_trials.unwrap_or(2 + (k as f64).ln().floor() as usize).max(1);
    let first = rng.gen_range(0..points.len());
    let mut centroids = vec![points[first].to_vec()];
    let mut closest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[first]).to_f64_lossless())
        .collect();

    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = sample_weighted(&closest, total, rng);
            let next: Vec<f64> = points
                .iter()
                .zip(&closest)
                .map(|(p, &c)| c.min(squared_distance(p, points[cand]).to_f64_lossless()))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, cand, next));
            }
        }
        let (_, cand, next) = best.expect("at least one trial");
        centroids.push(points[cand].to_vec());
        closest = next;
    }
    centroids
}

/// Draws an index with probability proportional to `weights`.
fn sample_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if acc > target {
            return i;
        }
    }
    last_positive
}

/// Gives each empty cluster the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn reseed_empty<T: Scalar>(points: &[&[T]], labels: &mut [usize], centroids: &mut [Vec<T>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { return };
        sizes[labels[i]] -= 1;
        labels[i] = c;
        sizes[c] = 1;
        centroids[c] = points[i].to_vec();
    }
}

fn means<T: Scalar>(points: &[&[T]], labels: &[usize], previous: &[Vec<T>]) -> Vec<Vec<T>> {
    let dim = points[0].len();
    let k = previous.len();
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.iter()) {
            *s += *v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((mut s, n), prev)| {
            if n == 0 {
                return prev.clone();
            }
            let n = T::from_usize_lossy(n);
            for v in &mut s {
                *v /= n;
            }
            s
        })
        .collect()
}

fn compact<T>(labels: Vec<usize>, centroids: Vec<Vec<T>>) -> (Vec<usize>, Vec<Vec<T>>) {
    let mut used = vec![false; centroids.len()];
    for &l in &labels {
        used[l] = true;
    }
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut kept = Vec::new();
    for (c, centroid) in centroids.into_iter().enumerate() {
        if used[c] {
            remap[c] = kept.len();
            kept.push(centroid);
        }
    }
    (labels.into_iter().map(|l| remap[l]).collect(), kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(points: &[Vec<f64>], k: usize, seed: u64) -> KMeansFit<f64> {
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        kmeans(&refs, &KMeansParams::new(k, seed)).unwrap()
    }

    /// Minimum within-cluster SSE over every 2-partition.
    fn best_two_partition(points: &[Vec<f64>]) -> (f64, Vec<usize>) {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut total = 0.0;
            for c in 0..2 {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                let dim = points[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                    .collect();
                total += members.iter().map(|p| squared_distance(p, &mean)).sum::<f64>();
            }
            if total < best.0 {
                best = (total, labels);
            }
        }
        best
    }

    #[test]
    fn two_obvious_groups() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
        let (_, oracle) = best_two_partition(&pts);
        let same = |l: &[usize], i: usize, j: usize| l[i] == l[j];
        assert!(same(&oracle, 0, 1) && same(&oracle, 2, 3) && !same(&oracle, 0, 2));
        for seed in 0..20 {
            let f = fit(&pts, 2, seed);
            assert_eq!(f.k(), 2);
            for (i, j) in [(0, 1), (2, 3), (0, 2)] {
                assert_eq!(same(&f.labels, i, j), same(&oracle, i, j), "seed {seed}");
            }
        }
    }

    #[test]
    fn singleton() {
        let f = fit(&[vec![3.0, -1.0]], 1, 0);
        assert_eq!(f.labels, [0]);
        assert_eq!(f.centroids, vec![vec![3.0, -1.0]]);
    }

    #[test]
    fn fewer_distinct_points_than_k() {
        let pts = vec![vec![0.0], vec![5.0], vec![9.0]];
        let f = fit(&pts, 5, 1);
        assert_eq!(f.k(), 3);
        let mut l = f.labels.clone();
        l.sort();
        assert_eq!(l, [0, 1, 2]);

        let dup = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let f = fit(&dup, 4, 0);
        assert_eq!(f.k(), 2);
        assert_eq!(f.labels[0], f.labels[1]);
        assert_ne!(f.labels[0], f.labels[2]);
    }

    #[test]
    fn non_finite_rejected() {
        let p = [1.0, f64::NAN];
        let refs: Vec<&[f64]> = vec![&p];
        assert!(matches!(
            kmeans(&refs, &KMeansParams::new(1, 0)),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn reseed_fills_empty_cluster() {
        let pts = [vec![0.0], vec![1.0], vec![10.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let mut labels = vec![0, 0, 0];
        let mut centroids = vec![vec![0.5], vec![100.0]];
        reseed_empty(&refs, &mut labels, &mut centroids);
        assert_eq!(labels, [0, 0, 1]);
        assert_eq!(centroids[1], vec![10.0]);
    }

    #[test]
    fn works_in_f32() {
        let pts: Vec<Vec<f32>> = vec![vec![0.0], vec![0.1], vec![7.0], vec![7.2]];
        let refs: Vec<&[f32]> = pts.iter().map(Vec::as_slice).collect();
        let f = kmeans(&refs, &KMeansParams::new(2, 3)).unwrap();
        assert_eq!(f.labels[0], f.labels[1]);
        assert_ne!(f.labels[1], f.labels[2]);
    }
}
