use crate::error::Result;
use crate::store::EmbeddingMatrix;

/// A contiguous run of rows handed to a scan.
#[derive(Debug, Clone, Copy)]
pub struct RowBlock<'a> {
    pub first_row: usize,
    pub data: &'a [f32],
    /// Per-row inverse norms for sources that normalize lazily. `None` means
    /// the rows are used as stored.
    pub inv_norms: Option<&'a [f64]>,
}

/// Read access to a row-major matrix that may be too large to hold in
/// memory. Sources hand out rows block by block, in ascending row order.
pub trait RowSource: Sync {
    fn rows(&self) -> usize;

    fn dims(&self) -> usize;

    /// True when similarities computed against this source are cosines,
    /// either because rows are unit-norm or because blocks carry inverse
    /// norms.
    fn is_unit(&self) -> bool;

    fn for_each_block(&self, f: &mut dyn FnMut(RowBlock<'_>) -> Result<()>) -> Result<()>;

    /// Copies the stored (unscaled) row `i` into `out`.
    fn read_row(&self, i: usize, out: &mut Vec<f32>) -> Result<()>;

    /// Factor that turns a dot product with row `i` into a cosine.
    fn inv_norm(&self, i: usize) -> f64;
}

impl RowSource for EmbeddingMatrix {
    fn rows(&self) -> usize {
        EmbeddingMatrix::rows(self)
    }

    fn dims(&self) -> usize {
        EmbeddingMatrix::dims(self)
    }

    fn is_unit(&self) -> bool {
        self.is_normalized()
    }

    fn for_each_block(&self, f: &mut dyn FnMut(RowBlock<'_>) -> Result<()>) -> Result<()> {
        f(RowBlock {
            first_row: 0,
            data: self.data(),
            inv_norms: None,
        })
    }

    fn read_row(&self, i: usize, out: &mut Vec<f32>) -> Result<()> {
        out.clear();
        out.extend_from_slice(self.row(i));
        Ok(())
    }

    fn inv_norm(&self, _i: usize) -> f64 {
        1.0
    }
}
