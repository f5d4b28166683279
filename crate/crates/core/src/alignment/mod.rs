//! Mutual k-nearest-neighbor alignment between the space induced by a
//! descriptor set and a reference image embedding space.
//!
//! Images are projected onto descriptor embeddings (`S = X Yᵀ`, one column
//! per pooled descriptor). Each image's k nearest neighbors under `S` are
//! compared with its k nearest neighbors in the reference space `Z`; the
//! score is the mean fraction of shared neighbors.

mod strip;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::knn::{self, dot_f64, ScanOptions};
use crate::store::{DescriptorSet, EmbeddingMatrix, LabelVector};

pub use strip::{strip_class_name, strip_class_names};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AlignmentConfig {
    pub k: usize,
    /// Remove each class's name from its descriptors before pooling.
    pub strip_class_names: bool,
    /// Drop exact duplicate strings from the global pool.
    pub dedup_global: bool,
    /// L2-normalize projection rows so neighbors are found by cosine. When
    /// off, the raw inner product of projection rows is used.
    pub normalize_projection_rows: bool,
}

impl AlignmentConfig {
    pub fn new(k: usize) -> Self {
        AlignmentConfig {
            k,
            strip_class_names: true,
            dedup_global: true,
            normalize_projection_rows: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidK { k: 0, max: 0 });
        }
        Ok(())
    }
}

/// Descriptors of all classes flattened into one list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorPool {
    pub texts: Vec<String>,
    /// `(class index, position within class)` of each pooled entry.
    pub origins: Vec<(usize, usize)>,
    /// Position of each pooled entry in the un-deduplicated flattening.
    pub flat_rows: Vec<usize>,
}

impl DescriptorPool {
    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// Class index of every pooled column.
    pub fn column_classes(&self) -> Vec<usize> {
        self.origins.iter().map(|&(c, _)| c).collect()
    }
}

/// Concatenates descriptors in class order, then descriptor order. With
/// `dedup`, later exact duplicates are dropped.
pub fn global_pool(set: &DescriptorSet, dedup: bool) -> DescriptorPool {
    let mut seen = std::collections::HashSet::new();
    let mut pool = DescriptorPool {
        texts: Vec::with_capacity(set.len()),
        origins: Vec::with_capacity(set.len()),
        flat_rows: Vec::with_capacity(set.len()),
    };
    let mut flat = 0;
    for (class, (_, list)) in set.iter().enumerate() {
        for (pos, text) in list.iter().enumerate() {
            if !dedup || seen.insert(text.as_str()) {
                pool.texts.push(text.clone());
                pool.origins.push((class, pos));
                pool.flat_rows.push(flat);
            }
            flat += 1;
        }
    }
    pool
}

/// Strips class names (if configured) and pools the result.
pub fn prepare_pool(set: &DescriptorSet, strip: bool, dedup: bool) -> Result<DescriptorPool> {
    if strip {
        Ok(global_pool(&strip_class_names(set)?, dedup))
    } else {
        Ok(global_pool(set, dedup))
    }
}

/// Image-by-concept cosine matrix `S = X Yᵀ`.
pub fn semantic_projection(images: &EmbeddingMatrix, concepts: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if !images.is_normalized() {
        return Err(Error::NotNormalized { what: "image embeddings" });
    }
    if !concepts.is_normalized() {
        return Err(Error::NotNormalized { what: "concept embeddings" });
    }
    project(images, concepts)
}

/// `X Yᵀ` without normalization requirements.
pub(crate) fn project(images: &EmbeddingMatrix, concepts: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if images.dims() != concepts.dims() {
        return Err(Error::DimMismatch {
            left: images.dims(),
            right: concepts.dims(),
        });
    }
    let cols = concepts.rows();
    let mut data = vec![0f32; images.rows() * cols];
    data.par_chunks_mut(cols)
        .zip(images.data().par_chunks(images.dims()))
        .for_each(|(out, x)| {
            for (o, y) in out.iter_mut().zip(concepts.iter_rows()) {
                *o = dot_f64(x, y) as f32;
            }
        });
    EmbeddingMatrix::new(images.rows(), cols, data)
}

/// Mean overlap of two families of neighbor sets, each of size `k`.
pub fn neighbor_overlap(a: &[Vec<usize>], b: &[Vec<usize>], k: usize) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let shared: usize = a
        .iter()
        .zip(b)
        .map(|(x, y)| sorted_intersection(x, y))
        .sum();
    shared as f64 / (a.len() * k) as f64
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Mutual k-NN alignment of two normalized representations of the same
/// items (row `i` of `a` and `b` describe the same item).
pub fn mutual_knn_alignment(a: &EmbeddingMatrix, b: &EmbeddingMatrix, k: usize) -> Result<f64> {
    mutual_knn_alignment_with(a, b, k, &ScanOptions::default())
}

pub fn mutual_knn_alignment_with(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    k: usize,
    opts: &ScanOptions,
) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::RowMismatch {
            left: a.rows(),
            right: b.rows(),
        });
    }
    let sa = knn::knn_sets_with(a, k, opts)?;
    let sb = knn::knn_sets_with(b, k, opts)?;
    Ok(neighbor_overlap(&sa, &sb, k))
}

/// Alignment between a raw projection matrix and a reference space.
/// With `normalize_rows`, projection rows are compared by cosine; otherwise
/// by raw inner product.
pub fn align_projection(
    projection: EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    k: usize,
    normalize_rows: bool,
    opts: &ScanOptions,
) -> Result<f64> {
    if projection.rows() != reference.rows() {
        return Err(Error::RowMismatch {
            left: projection.rows(),
            right: reference.rows(),
        });
    }
    let sa = if normalize_rows {
        knn::knn_sets_with(&projection.l2_normalize_rows()?, k, opts)?
    } else {
        knn::knn_sets_inner_product(&projection, k, opts)?
    };
    let sb = knn::knn_sets_with(&*normalized(reference)?, k, opts)?;
    Ok(neighbor_overlap(&sa, &sb, k))
}

/// `k` as the average number of images per class, rounded half up and
/// clamped to `[1, rows - 1]`.
pub fn choose_k(labels: &LabelVector) -> usize {
    let n = labels.len();
    let c = labels.num_classes().max(1);
    let k = (2 * n + c) / (2 * c);
    k.clamp(1, n.saturating_sub(1).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentOutcome {
    pub score: f64,
    pub k: usize,
    pub items: usize,
    pub pool_size: usize,
    pub strip_class_names: bool,
    pub dedup_global: bool,
    pub normalize_projection_rows: bool,
}

/// Alignment of the descriptor-induced space with a reference space.
///
/// `images` and `reference` hold the same items row by row; `concepts` holds
/// one embedding per pooled descriptor (already stripped and deduplicated
/// according to `cfg`). Unnormalized inputs are normalized here.
pub fn dino_align(
    images: &EmbeddingMatrix,
    concepts: &EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    cfg: &AlignmentConfig,
) -> Result<AlignmentOutcome> {
    dino_align_with(images, concepts, reference, cfg, &ScanOptions::default())
}

pub fn dino_align_with(
    images: &EmbeddingMatrix,
    concepts: &EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    cfg: &AlignmentConfig,
    opts: &ScanOptions,
) -> Result<AlignmentOutcome> {
    cfg.validate()?;
    if images.rows() != reference.rows() {
        return Err(Error::RowMismatch {
            left: images.rows(),
            right: reference.rows(),
        });
    }
    let s = semantic_projection(&*normalized(images)?, &*normalized(concepts)?)?;
    let score = align_projection(s, reference, cfg.k, cfg.normalize_projection_rows, opts)?;
    Ok(AlignmentOutcome {
        score,
        k: cfg.k,
        items: images.rows(),
        pool_size: concepts.rows(),
        strip_class_names: cfg.strip_class_names,
        dedup_global: cfg.dedup_global,
        normalize_projection_rows: cfg.normalize_projection_rows,
    })
}

pub(crate) fn normalized(m: &EmbeddingMatrix) -> Result<Cow<'_, EmbeddingMatrix>> {
    if m.is_normalized() {
        Ok(Cow::Borrowed(m))
    } else {
        Ok(Cow::Owned(m.clone().l2_normalize_rows()?))
    }
}
