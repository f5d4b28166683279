use crate::error::{Error, Result};

/// Norm below which a row is treated as all zeros.
pub const ZERO_NORM_CUTOFF: f64 = 1e-12;

/// Allowed deviation from unit norm for rows of a normalized matrix.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Dense row-major `f32` matrix holding one embedding per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(Error::EmptyShape { rows, dims });
        }
        if rows.checked_mul(dims) != Some(data.len()) {
            return Err(Error::DataLength {
                len: data.len(),
                rows,
                dims,
            });
        }
        Ok(EmbeddingMatrix {
            rows,
            dims,
            data,
            normalized: false,
        })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dims {
                return Err(Error::DimMismatch {
                    left: dims,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dims, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dims)
    }

    /// Returns a copy keeping only the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(indices.len(), self.dims, data)?;
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Divides every row by its Euclidean norm.
    ///
    /// Fails on the first row whose norm is below [`ZERO_NORM_CUTOFF`] or
    /// which holds a NaN or infinity.
    pub fn l2_normalize_rows(mut self) -> Result<Self> {
        for (i, row) in self.data.chunks_exact_mut(self.dims).enumerate() {
            let norm = row_norm(row, i)?;
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Marks the matrix as normalized after checking every row is within
    /// [`UNIT_NORM_TOLERANCE`] of unit length.
    pub fn assume_normalized(mut self) -> Result<Self> {
        for (i, row) in self.iter_rows().enumerate() {
            let norm = row_norm(row, i)?;
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotNormalized { what: "matrix" });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Normalizes unless the matrix already carries the normalized flag.
    pub fn ensure_normalized(self) -> Result<Self> {
        if self.normalized {
            Ok(self)
        } else {
            self.l2_normalize_rows()
        }
    }

    /// Applies `f` to every element, clearing the normalized flag.
    pub fn map(mut self, f: impl Fn(f32) -> f32) -> Self {
        for v in &mut self.data {
            *v = f(*v);
        }
        self.normalized = false;
        self
    }
}

/// Free-function form of [`EmbeddingMatrix::l2_normalize_rows`].
pub fn l2_normalize_rows(matrix: EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    matrix.l2_normalize_rows()
}

/// Euclidean norm of a row in `f64`, rejecting zero and non-finite rows.
pub(crate) fn row_norm(row: &[f32], index: usize) -> Result<f64> {
    let mut sq = 0.0f64;
    for &v in row {
        if !v.is_finite() {
            return Err(Error::NonFiniteRow { row: index });
        }
        sq += v as f64 * v as f64;
    }
    let norm = sq.sqrt();
    if norm < ZERO_NORM_CUTOFF {
        return Err(Error::ZeroNormRow { row: index });
    }
    Ok(norm)
}
