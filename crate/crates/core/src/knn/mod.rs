//! Exact cosine top-k retrieval and k-nearest-neighbor sets.
//!
//! Scans are data-parallel over corpus chunks. Each worker keeps a bounded
//! heap per query and heaps are merged at the end. Candidates are ranked by
//! descending score with ties going to the lower corpus index; since that
//! order is total and every score is computed by the same fixed-order
//! kernel, results do not depend on chunk size or thread count.

mod kernel;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{EmbeddingMatrix, RowBlock, RowSource};

pub use kernel::dot_f64;

/// Default number of corpus rows per parallel work item.
pub const DEFAULT_CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
}

/// Neighbors of one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query_index: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    pub chunk_rows: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            chunk_rows: DEFAULT_CHUNK_ROWS,
        }
    }
}

/// Cosine similarity of two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = dot_f64(u, u).sqrt();
    let nv = dot_f64(v, v).sqrt();
    if nu < crate::store::ZERO_NORM_CUTOFF {
        return Err(Error::ZeroNormRow { row: 0 });
    }
    if nv < crate::store::ZERO_NORM_CUTOFF {
        return Err(Error::ZeroNormRow { row: 1 });
    }
    Ok((dot_f64(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Exact top-`k` corpus rows for every query by cosine similarity.
pub fn top_k(
    queries: &EmbeddingMatrix,
    corpus: &dyn RowSource,
    k: usize,
) -> Result<Vec<NeighborList>> {
    top_k_with(queries, corpus, k, &ScanOptions::default())
}

pub fn top_k_with(
    queries: &EmbeddingMatrix,
    corpus: &dyn RowSource,
    k: usize,
    opts: &ScanOptions,
) -> Result<Vec<NeighborList>> {
    check_cosine_inputs(queries, corpus)?;
    check_k(k, corpus.rows())?;
    let spec = ScanSpec {
        k,
        exclude_self: false,
        threshold: None,
        cosine: true,
    };
    Ok(finish(scan(queries, corpus, &spec, opts)?))
}

/// Like [`top_k_with`] but only rows scoring strictly above `threshold`
/// are kept, so lists may be shorter than `k`. Memory stays proportional to
/// the number of qualifying rows, capped at `k` per query.
pub fn top_k_above(
    queries: &EmbeddingMatrix,
    corpus: &dyn RowSource,
    k: usize,
    threshold: f64,
    opts: &ScanOptions,
) -> Result<Vec<NeighborList>> {
    check_cosine_inputs(queries, corpus)?;
    check_k(k, corpus.rows())?;
    let spec = ScanSpec {
        k,
        exclude_self: false,
        threshold: Some(threshold),
        cosine: true,
    };
    Ok(finish(scan(queries, corpus, &spec, opts)?))
}

/// For each row, the ascending indices of its `k` most cosine-similar other
/// rows. The row itself is never included.
pub fn knn_sets(matrix: &EmbeddingMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    knn_sets_with(matrix, k, &ScanOptions::default())
}

pub fn knn_sets_with(
    matrix: &EmbeddingMatrix,
    k: usize,
    opts: &ScanOptions,
) -> Result<Vec<Vec<usize>>> {
    if !matrix.is_normalized() {
        return Err(Error::NotNormalized { what: "matrix" });
    }
    self_sets(matrix, k, true, opts)
}

/// k-nearest-neighbor sets under the raw inner product, for matrices whose
/// row scale is meaningful.
pub fn knn_sets_inner_product(
    matrix: &EmbeddingMatrix,
    k: usize,
    opts: &ScanOptions,
) -> Result<Vec<Vec<usize>>> {
    self_sets(matrix, k, false, opts)
}

fn self_sets(
    matrix: &EmbeddingMatrix,
    k: usize,
    cosine: bool,
    opts: &ScanOptions,
) -> Result<Vec<Vec<usize>>> {
    check_k(k, matrix.rows() - 1)?;
    let spec = ScanSpec {
        k,
        exclude_self: true,
        threshold: None,
        cosine,
    };
    Ok(scan(matrix, matrix, &spec, opts)?
        .into_iter()
        .map(|t| {
            let mut idx: Vec<usize> = t.heap.into_iter().map(|c| c.0.index).collect();
            idx.sort_unstable();
            idx
        })
        .collect())
}

fn check_cosine_inputs(queries: &EmbeddingMatrix, corpus: &dyn RowSource) -> Result<()> {
    if !queries.is_normalized() {
        return Err(Error::NotNormalized { what: "queries" });
    }
    if !corpus.is_unit() {
        return Err(Error::NotNormalized { what: "corpus" });
    }
    if queries.dims() != corpus.dims() {
        return Err(Error::DimMismatch {
            left: queries.dims(),
            right: corpus.dims(),
        });
    }
    Ok(())
}

fn check_k(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::InvalidK { k, max });
    }
    Ok(())
}

fn finish(heaps: Vec<TopK>) -> Vec<NeighborList> {
    heaps
        .into_iter()
        .enumerate()
        .map(|(query_index, t)| NeighborList {
            query_index,
            neighbors: t.into_sorted(),
        })
        .collect()
}

/// Heap entry ordered so that the *worst* candidate is the maximum.
#[derive(Debug, Clone, Copy)]
struct Candidate(Neighbor);

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.index.cmp(&other.0.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Bounded selection of the best `k` candidates.
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
    /// Score of the worst kept candidate once the heap is full.
    floor: f64,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::new(),
            floor: f64::NEG_INFINITY,
        }
    }

    #[inline]
    fn offer(&mut self, index: usize, score: f64) {
        if score < self.floor {
            return;
        }
        let cand = Candidate(Neighbor { index, score });
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
        if self.heap.len() == self.k {
            self.floor = self.heap.peek().map_or(f64::NEG_INFINITY, |c| c.0.score);
        }
    }

    fn merge(&mut self, other: TopK) {
        for c in other.heap {
            self.offer(c.0.index, c.0.score);
        }
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| c.0)
            .collect()
    }
}

struct ScanSpec {
    k: usize,
    exclude_self: bool,
    threshold: Option<f64>,
    cosine: bool,
}

fn scan(
    queries: &EmbeddingMatrix,
    corpus: &dyn RowSource,
    spec: &ScanSpec,
    opts: &ScanOptions,
) -> Result<Vec<TopK>> {
    let dims = queries.dims();
    let m = queries.rows();
    let chunk_rows = opts.chunk_rows.max(1);
    let wide: Vec<f64> = queries.data().iter().map(|&v| v as f64).collect();
    let empty = || (0..m).map(|_| TopK::new(spec.k)).collect::<Vec<_>>();
    let mut acc = empty();

    corpus.for_each_block(&mut |block: RowBlock<'_>| {
        let partial = block
            .data
            .par_chunks(chunk_rows * dims)
            .enumerate()
            .fold(
                || (empty(), Vec::new()),
                |(mut heaps, mut scratch), (ci, chunk)| {
                    let offset = ci * chunk_rows;
                    let n = chunk.len() / dims;
                    let chunk = Chunk {
                        data: chunk,
                        first_row: block.first_row + offset,
                        inv_norms: block.inv_norms.map(|v| &v[offset..offset + n]),
                    };
                    scan_chunk(&wide, dims, &chunk, spec, &mut heaps, &mut scratch);
                    (heaps, scratch)
                },
            )
            .map(|(heaps, _)| heaps)
            .reduce(empty, merge_all);
        acc = merge_all(std::mem::take(&mut acc), partial);
        Ok(())
    })?;
    Ok(acc)
}

fn merge_all(mut a: Vec<TopK>, b: Vec<TopK>) -> Vec<TopK> {
    for (x, y) in a.iter_mut().zip(b) {
        if x.heap.len() < y.heap.len() {
            let small = std::mem::replace(x, y);
            x.merge(small);
        } else {
            x.merge(y);
        }
    }
    a
}

struct Chunk<'a> {
    data: &'a [f32],
    first_row: usize,
    inv_norms: Option<&'a [f64]>,
}

fn scan_chunk(
    queries: &[f64],
    dims: usize,
    chunk: &Chunk<'_>,
    spec: &ScanSpec,
    heaps: &mut [TopK],
    scratch: &mut Vec<f64>,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") {
            // SAFETY: the CPU supports AVX-512F, checked just above.
            unsafe { scan_chunk_avx512(queries, dims, chunk, spec, heaps, scratch) };
            return;
        }
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { scan_chunk_avx2(queries, dims, chunk, spec, heaps, scratch) };
            return;
        }
    }
    scan_chunk_generic(queries, dims, chunk, spec, heaps, scratch, kernel::dot_2x4);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn scan_chunk_avx512(
    queries: &[f64],
    dims: usize,
    chunk: &Chunk<'_>,
    spec: &ScanSpec,
    heaps: &mut [TopK],
    scratch: &mut Vec<f64>,
) {
    // SAFETY: this function only runs on CPUs with AVX-512F.
    let k = |a: &[f64], b: &[f64], r: [&[f64]; 4]| unsafe { kernel::dot_2x4_avx512(a, b, r) };
    scan_chunk_generic(queries, dims, chunk, spec, heaps, scratch, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn scan_chunk_avx2(
    queries: &[f64],
    dims: usize,
    chunk: &Chunk<'_>,
    spec: &ScanSpec,
    heaps: &mut [TopK],
    scratch: &mut Vec<f64>,
) {
    // SAFETY: this function only runs on CPUs with AVX2.
    let k = |a: &[f64], b: &[f64], r: [&[f64]; 4]| unsafe {
        [kernel::dot_1x4_avx2(a, r), kernel::dot_1x4_avx2(b, r)]
    };
    scan_chunk_generic(queries, dims, chunk, spec, heaps, scratch, k)
}

#[inline(always)]
fn scan_chunk_generic(
    queries: &[f64],
    dims: usize,
    chunk: &Chunk<'_>,
    spec: &ScanSpec,
    heaps: &mut [TopK],
    scratch: &mut Vec<f64>,
    dot_2x4: impl Fn(&[f64], &[f64], [&[f64]; 4]) -> [[f64; 4]; 2],
) {
    const TILE: usize = 4;
    // rows widened at a time; small enough to stay in cache while every
    // query passes over them
    const BLOCK: usize = 32;
    let rows = chunk.data.len() / dims;
    let m = heaps.len();
    let offer = |heap: &mut TopK, q: usize, local: usize, dot: f64| {
        let row = chunk.first_row + local;
        if spec.exclude_self && row == q {
            return;
        }
        let mut score = match chunk.inv_norms {
            Some(inv) => dot * inv[local],
            None => dot,
        };
        if spec.cosine {
            score = score.clamp(-1.0, 1.0);
        }
        // fold -0.0 into 0.0 so equal scores compare equal
        score += 0.0;
        if let Some(t) = spec.threshold {
            if score <= t {
                return;
            }
        }
        heap.offer(row, score);
    };

    let mut start = 0;
    while start < rows {
        let n = BLOCK.min(rows - start);
        scratch.clear();
        scratch.extend(chunk.data[start * dims..(start + n) * dims].iter().map(|&v| v as f64));
        let tiles = n - n % TILE;
        let row = |i: usize| &scratch[i * dims..(i + 1) * dims];
        let mut q0 = 0;
        while q0 < m {
            // an odd final query is paired with itself and offered once
            let q1 = (q0 + 1).min(m - 1);
            let (a, b) = (&queries[q0 * dims..(q0 + 1) * dims], &queries[q1 * dims..(q1 + 1) * dims]);
            let mut t = 0;
            while t < tiles {
                let d = dot_2x4(a, b, [row(t), row(t + 1), row(t + 2), row(t + 3)]);
                for (i, (&d0, &d1)) in d[0].iter().zip(&d[1]).enumerate() {
                    offer(&mut heaps[q0], q0, start + t + i, d0);
                    if q1 != q0 {
                        offer(&mut heaps[q1], q1, start + t + i, d1);
                    }
                }
                t += TILE;
            }
            for i in tiles..n {
                offer(&mut heaps[q0], q0, start + i, kernel::dot_1x1(a, row(i)));
                if q1 != q0 {
                    offer(&mut heaps[q1], q1, start + i, kernel::dot_1x1(b, row(i)));
                }
            }
            q0 += 2;
        }
        start += n;
    }
}
