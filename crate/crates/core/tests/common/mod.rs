//! Seeded fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use desceval::store::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dims: usize) -> Vec<Vec<f32>> {
    (0..rows)
        .map(|_| (0..dims).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
        .collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, dims: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(&gaussian_rows(rng, rows, dims)).unwrap()
}

pub fn unit_gaussian(rng: &mut ChaCha8Rng, rows: usize, dims: usize) -> EmbeddingMatrix {
    gaussian(rng, rows, dims).l2_normalize_rows().unwrap()
}

/// Random orthogonal matrix (rows orthonormal) by Gram-Schmidt on Gaussian
/// vectors, in f64.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, dims: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dims);
    while basis.len() < dims {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Applies `q` to every row: `row · qᵀ`.
pub fn rotate(m: &EmbeddingMatrix, q: &[Vec<f64>]) -> EmbeddingMatrix {
    let rows: Vec<Vec<f32>> = m
        .iter_rows()
        .map(|r| {
            q.iter()
                .map(|qrow| qrow.iter().zip(r).map(|(a, &b)| a * b as f64).sum::<f64>() as f32)
                .collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

pub fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    (naive_dot(a, b) / (naive_dot(a, a).sqrt() * naive_dot(b, b).sqrt())).clamp(-1.0, 1.0)
}

/// All `(index, score)` pairs sorted by descending score, then index.
pub fn ranked(scores: Vec<f64>) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Score of a unit query against a corpus row: the plain dot product for
/// rows already normalized, otherwise the dot product over the row norm.
pub fn naive_score(q: &[f32], row: &[f32], row_is_unit: bool) -> f64 {
    let d = if row_is_unit {
        naive_dot(q, row)
    } else {
        naive_dot(q, row) / naive_dot(row, row).sqrt()
    };
    d.clamp(-1.0, 1.0)
}

/// Full-sort top-k; `queries` must be normalized, `corpus` may be raw.
pub fn naive_top_k(queries: &EmbeddingMatrix, corpus: &EmbeddingMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    let unit = corpus.is_normalized();
    queries
        .iter_rows()
        .map(|q| {
            let mut r = ranked(corpus.iter_rows().map(|c| naive_score(q, c, unit)).collect());
            r.truncate(k);
            r
        })
        .collect()
}

/// Full-sort kNN sets of a normalized matrix with self excluded, as sorted
/// index lists.
pub fn naive_knn_sets(m: &EmbeddingMatrix, k: usize) -> Vec<Vec<usize>> {
    (0..m.rows())
        .map(|i| {
            let scores = (0..m.rows()).map(|j| naive_score(m.row(i), m.row(j), true)).collect();
            let mut set: Vec<usize> = ranked(scores)
                .into_iter()
                .map(|(j, _)| j)
                .filter(|&j| j != i)
                .take(k)
                .collect();
            set.sort_unstable();
            set
        })
        .collect()
}

/// Quadratic mutual-kNN alignment: mean shared-neighbor fraction.
pub fn naive_mknn(a: &EmbeddingMatrix, b: &EmbeddingMatrix, k: usize) -> f64 {
    let sa = naive_knn_sets(a, k);
    let sb = naive_knn_sets(b, k);
    let mut shared = 0usize;
    for (x, y) in sa.iter().zip(&sb) {
        for i in x {
            if y.contains(i) {
                shared += 1;
            }
        }
    }
    shared as f64 / (a.rows() * k) as f64
}

/// Smallest gap, over all rows, between the k-th and (k+1)-th largest
/// cosine to the other rows. Instances with a tiny gap have near-ties at
/// the neighborhood boundary, which rounding can legitimately flip.
pub fn knn_boundary_gap(m: &EmbeddingMatrix, k: usize) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..m.rows() {
        let mut s: Vec<f64> = (0..m.rows())
            .filter(|&j| j != i)
            .map(|j| naive_cosine(m.row(i), m.row(j)))
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        if k < s.len() {
            gap = gap.min(s[k - 1] - s[k]);
        }
    }
    gap
}

pub fn permute_rows(m: &EmbeddingMatrix, perm: &[usize]) -> EmbeddingMatrix {
    let rows: Vec<&[f32]> = perm.iter().map(|&i| m.row(i)).collect();
    let out = EmbeddingMatrix::from_rows(&rows).unwrap();
    if m.is_normalized() {
        out.assume_normalized().unwrap()
    } else {
        out
    }
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}
