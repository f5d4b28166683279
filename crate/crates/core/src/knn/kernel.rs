//! Dot-product kernels with a fixed summation order.
//!
//! Every kernel accumulates element `j` into lane `j % 8`, reduces the lanes
//! as `((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7))` and then adds the tail
//! sequentially. Products of two `f32` values are exact in `f64`, and no
//! path uses fused multiply-add, so every kernel returns the bit-identical
//! result regardless of the instruction set it was compiled for.

const LANES: usize = 8;

#[inline(always)]
fn reduce(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

/// `f64` dot product of two `f32` slices of equal length.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut s = reduce(&acc);
    for (x, y) in ta.iter().zip(tb) {
        s += *x as f64 * *y as f64;
    }
    s
}

/// Same order as [`dot_f64`] on already widened inputs.
#[inline(always)]
pub(crate) fn dot_1x1(q: &[f64], r: &[f64]) -> f64 {
    let mut acc = [0f64; LANES];
    let cq = q.chunks_exact(LANES);
    let cr = r.chunks_exact(LANES);
    let (tq, tr) = (cq.remainder(), cr.remainder());
    for (x, y) in cq.zip(cr) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = reduce(&acc);
    for (x, y) in tq.iter().zip(tr) {
        s += x * y;
    }
    s
}

/// One query against four rows; each result equals [`dot_1x1`].
#[inline(always)]
pub(crate) fn dot_1x4(q: &[f64], r: [&[f64]; 4]) -> [f64; 4] {
    let n = q.len();
    let body = n - n % LANES;
    let mut acc = [[0f64; LANES]; 4];
    let mut j = 0;
    while j < body {
        let x: &[f64; LANES] = q[j..j + LANES].try_into().unwrap();
        for t in 0..4 {
            let y: &[f64; LANES] = r[t][j..j + LANES].try_into().unwrap();
            for l in 0..LANES {
                acc[t][l] += x[l] * y[l];
            }
        }
        j += LANES;
    }
    let mut out = [0f64; 4];
    for t in 0..4 {
        let mut s = reduce(&acc[t]);
        for i in body..n {
            s += q[i] * r[t][i];
        }
        out[t] = s;
    }
    out
}

/// [`dot_1x4`] with explicit AVX2 vectors: lanes 0-3 and 4-7 live in two
/// registers per row, so the per-lane sums and the reduction are unchanged.
///
/// # Safety
/// The CPU must support AVX2.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
pub(crate) unsafe fn dot_1x4_avx2(q: &[f64], r: [&[f64]; 4]) -> [f64; 4] {
    use std::arch::x86_64::*;
    let n = q.len();
    assert!(r.iter().all(|row| row.len() == n));
    let body = n - n % LANES;
    let mut lo = [_mm256_setzero_pd(); 4];
    let mut hi = [_mm256_setzero_pd(); 4];
    let qp = q.as_ptr();
    let mut j = 0;
    while j < body {
        // SAFETY: j + LANES <= body <= n, the length of q and of every row.
        unsafe {
            let ql = _mm256_loadu_pd(qp.add(j));
            let qh = _mm256_loadu_pd(qp.add(j + 4));
            for t in 0..4 {
                let p = r[t].as_ptr().add(j);
                lo[t] = _mm256_add_pd(lo[t], _mm256_mul_pd(ql, _mm256_loadu_pd(p)));
                hi[t] = _mm256_add_pd(hi[t], _mm256_mul_pd(qh, _mm256_loadu_pd(p.add(4))));
            }
        }
        j += LANES;
    }
    let mut out = [0f64; 4];
    for t in 0..4 {
        let mut acc = [0f64; LANES];
        // SAFETY: acc holds exactly two 4-lane vectors.
        unsafe {
            _mm256_storeu_pd(acc.as_mut_ptr(), lo[t]);
            _mm256_storeu_pd(acc.as_mut_ptr().add(4), hi[t]);
        }
        let mut s = reduce(&acc);
        for i in body..n {
            s += q[i] * r[t][i];
        }
        out[t] = s;
    }
    out
}

/// Two queries against four rows; each result equals [`dot_1x1`].
#[inline(always)]
pub(crate) fn dot_2x4(q0: &[f64], q1: &[f64], r: [&[f64]; 4]) -> [[f64; 4]; 2] {
    [dot_1x4(q0, r), dot_1x4(q1, r)]
}

/// [`dot_2x4`] with one AVX-512 register per query-row pair holding the
/// eight lanes, so the per-lane sums and the reduction are unchanged.
///
/// # Safety
/// The CPU must support AVX-512F.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
pub(crate) unsafe fn dot_2x4_avx512(q0: &[f64], q1: &[f64], r: [&[f64]; 4]) -> [[f64; 4]; 2] {
    use std::arch::x86_64::*;
    let n = q0.len();
    assert!(q1.len() == n && r.iter().all(|row| row.len() == n));
    let body = n - n % LANES;
    let mut a0 = [_mm512_setzero_pd(); 4];
    let mut a1 = [_mm512_setzero_pd(); 4];
    let mut j = 0;
    while j < body {
        // SAFETY: j + LANES <= body <= n, the length of both queries and every row.
        unsafe {
            let x0 = _mm512_loadu_pd(q0.as_ptr().add(j));
            let x1 = _mm512_loadu_pd(q1.as_ptr().add(j));
            for t in 0..4 {
                let y = _mm512_loadu_pd(r[t].as_ptr().add(j));
                a0[t] = _mm512_add_pd(a0[t], _mm512_mul_pd(x0, y));
                a1[t] = _mm512_add_pd(a1[t], _mm512_mul_pd(x1, y));
            }
        }
        j += LANES;
    }
    let mut out = [[0f64; 4]; 2];
    for t in 0..4 {
        for (o, (acc, q)) in out.iter_mut().zip([(a0[t], q0), (a1[t], q1)]) {
            let mut lanes = [0f64; LANES];
            // SAFETY: lanes holds exactly one 8-lane vector.
            unsafe { _mm512_storeu_pd(lanes.as_mut_ptr(), acc) };
            let mut s = reduce(&lanes);
            for i in body..n {
                s += q[i] * r[t][i];
            }
            o[t] = s;
        }
    }
    out
}
