use std::path::Path;

use crate::error::{Error, Result};
use crate::store::matrix::row_norm;
use crate::store::{EmbeddingMatrix, MappedMatrix, Mapping, RowBlock, RowSource};

/// Rows held in memory or mapped from a file. Unnormalized rows are kept as
/// stored and scaled by their inverse norms during scans, the same way for
/// both backings.
#[derive(Debug)]
pub enum MatrixStore {
    Memory(MemoryRows),
    Mapped(MappedMatrix),
}

#[derive(Debug)]
pub struct MemoryRows {
    matrix: EmbeddingMatrix,
    /// `None` when the matrix is already normalized.
    inv_norms: Option<Vec<f64>>,
}

impl MatrixStore {
    pub fn from_matrix(matrix: EmbeddingMatrix) -> Result<Self> {
        let inv_norms = if matrix.is_normalized() {
            None
        } else {
            let inv = matrix
                .iter_rows()
                .enumerate()
                .map(|(i, row)| row_norm(row, i).map(|n| 1.0 / n))
                .collect::<Result<Vec<f64>>>()?;
            Some(inv)
        };
        Ok(MatrixStore::Memory(MemoryRows { matrix, inv_norms }))
    }

    pub fn open(path: impl AsRef<Path>, mapping: Mapping) -> Result<Self> {
        let mut m = MappedMatrix::open(path, mapping)?;
        m.compute_norms()?;
        Ok(MatrixStore::Mapped(m))
    }

    fn inner(&self) -> &dyn RowSource {
        match self {
            MatrixStore::Memory(m) => m,
            MatrixStore::Mapped(m) => m,
        }
    }
}

impl RowSource for MemoryRows {
    fn rows(&self) -> usize {
        self.matrix.rows()
    }

    fn dims(&self) -> usize {
        self.matrix.dims()
    }

    fn is_unit(&self) -> bool {
        true
    }

    fn for_each_block(&self, f: &mut dyn FnMut(RowBlock<'_>) -> Result<()>) -> Result<()> {
        f(RowBlock {
            first_row: 0,
            data: self.matrix.data(),
            inv_norms: self.inv_norms.as_deref(),
        })
    }

    fn read_row(&self, i: usize, out: &mut Vec<f32>) -> Result<()> {
        self.matrix.read_row(i, out)
    }

    fn inv_norm(&self, i: usize) -> f64 {
        self.inv_norms.as_ref().map_or(1.0, |v| v[i])
    }
}

impl RowSource for MatrixStore {
    fn rows(&self) -> usize {
        self.inner().rows()
    }

    fn dims(&self) -> usize {
        self.inner().dims()
    }

    fn is_unit(&self) -> bool {
        self.inner().is_unit()
    }

    fn for_each_block(&self, f: &mut dyn FnMut(RowBlock<'_>) -> Result<()>) -> Result<()> {
        self.inner().for_each_block(f)
    }

    fn read_row(&self, i: usize, out: &mut Vec<f32>) -> Result<()> {
        self.inner().read_row(i, out)
    }

    fn inv_norm(&self, i: usize) -> f64 {
        self.inner().inv_norm(i)
    }
}

/// Paired caption and image embeddings sampled from a pre-training set.
/// Row `i` of `captions` is the caption of image row `i`.
#[derive(Debug)]
pub struct CaptionCorpus {
    captions: MatrixStore,
    images: MatrixStore,
    texts: Option<Vec<String>>,
}

impl CaptionCorpus {
    /// Opens a corpus from two EMB1 files and an optional newline-separated
    /// caption text file. Rows are normalized lazily; neither file is read
    /// into memory.
    pub fn open(
        captions: impl AsRef<Path>,
        images: impl AsRef<Path>,
        texts: Option<&Path>,
        mapping: Mapping,
    ) -> Result<Self> {
        let captions = MatrixStore::open(captions, mapping)?;
        let images = MatrixStore::open(images, mapping)?;
        let texts = match texts {
            Some(p) => Some(read_lines(p)?),
            None => None,
        };
        Self::from_stores(captions, images, texts)
    }

    pub fn from_matrices(captions: EmbeddingMatrix, images: EmbeddingMatrix) -> Result<Self> {
        Self::from_stores(
            MatrixStore::from_matrix(captions)?,
            MatrixStore::from_matrix(images)?,
            None,
        )
    }

    fn from_stores(
        captions: MatrixStore,
        images: MatrixStore,
        texts: Option<Vec<String>>,
    ) -> Result<Self> {
        if captions.dims() != images.dims() {
            return Err(Error::DimMismatch {
                left: captions.dims(),
                right: images.dims(),
            });
        }
        if captions.rows() != images.rows() {
            return Err(Error::RowMismatch {
                left: captions.rows(),
                right: images.rows(),
            });
        }
        if let Some(t) = &texts {
            if t.len() != captions.rows() {
                return Err(Error::TextCount {
                    texts: t.len(),
                    rows: captions.rows(),
                });
            }
        }
        Ok(CaptionCorpus {
            captions,
            images,
            texts,
        })
    }

    pub fn len(&self) -> usize {
        self.captions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.captions.dims()
    }

    pub fn captions(&self) -> &MatrixStore {
        &self.captions
    }

    pub fn images(&self) -> &MatrixStore {
        &self.images
    }

    pub fn text(&self, i: usize) -> Option<&str> {
        self.texts.as_ref().map(|t| t[i].as_str())
    }

    /// Cosine between caption `i` and its paired image.
    pub fn pair_cosine(&self, i: usize) -> Result<f64> {
        let mut c = Vec::with_capacity(self.dims());
        let mut m = Vec::with_capacity(self.dims());
        self.captions.read_row(i, &mut c)?;
        self.images.read_row(i, &mut m)?;
        let dot = crate::knn::dot_f64(&c, &m);
        let cos = dot * self.captions.inv_norm(i) * self.images.inv_norm(i);
        Ok(cos.clamp(-1.0, 1.0))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}
