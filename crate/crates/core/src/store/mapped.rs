use std::fs::File;
use std::path::{Path, PathBuf};

use memmap2::{Mmap, MmapOptions};

use crate::error::{Error, Result};
use crate::store::emb1::{Emb1Header, HEADER_LEN};
use crate::store::matrix::row_norm;
use crate::store::{RowBlock, RowSource};

/// How a [`MappedMatrix`] maps its payload into the address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mapping {
    /// One read-only mapping of the whole file. Pages are faulted in on
    /// demand, so this does not require the file to fit in RAM.
    #[default]
    Full,
    /// Map at most `max_bytes` of payload at a time; each block handed to a
    /// scan is its own short-lived mapping.
    Windowed { max_bytes: usize },
}

/// An EMB1 file accessed through memory mapping.
///
/// After [`MappedMatrix::compute_norms`] the matrix behaves as normalized:
/// blocks carry inverse row norms and the file itself is never modified.
pub struct MappedMatrix {
    path: PathBuf,
    file: File,
    header: Emb1Header,
    mapping: Mapping,
    full: Option<Mmap>,
    inv_norms: Option<Vec<f64>>,
}

impl std::fmt::Debug for MappedMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MappedMatrix")
            .field("path", &self.path)
            .field("rows", &self.header.rows)
            .field("dims", &self.header.dims)
            .field("mapping", &self.mapping)
            .finish()
    }
}

impl MappedMatrix {
    pub fn open(path: impl AsRef<Path>, mapping: Mapping) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let mut head = [0u8; HEADER_LEN];
        let got = {
            use std::io::Read;
            let mut f = &file;
            let mut filled = 0;
            while filled < HEADER_LEN {
                match f.read(&mut head[filled..]).map_err(|e| Error::io(&path, e))? {
                    0 => break,
                    n => filled += n,
                }
            }
            filled
        };
        let header = Emb1Header::parse(&head[..got])?;
        let expected = header.file_len();
        if len < expected {
            return Err(Error::Truncated {
                expected,
                found: len,
            });
        }
        if len > expected {
            return Err(Error::TrailingBytes(len - expected));
        }
        let row_bytes = header.dims * 4;
        let full = match mapping {
            Mapping::Full => Some(map_range(&file, &path, HEADER_LEN, header.payload_len())?),
            Mapping::Windowed { max_bytes } => {
                if max_bytes < row_bytes {
                    return Err(Error::Config(format!(
                        "mapping budget of {max_bytes} bytes is smaller than one {row_bytes}-byte row"
                    )));
                }
                None
            }
        };
        Ok(MappedMatrix {
            path,
            file,
            header,
            mapping,
            full,
            inv_norms: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn mapping(&self) -> Mapping {
        self.mapping
    }

    /// Rows per block handed out by [`RowSource::for_each_block`].
    pub fn block_rows(&self) -> usize {
        match self.mapping {
            Mapping::Full => self.header.rows,
            Mapping::Windowed { max_bytes } => {
                (max_bytes / (self.header.dims * 4)).clamp(1, self.header.rows)
            }
        }
    }

    /// One sequential pass computing inverse row norms. Fails on the first
    /// zero or non-finite row.
    pub fn compute_norms(&mut self) -> Result<()> {
        let mut inv = Vec::with_capacity(self.header.rows);
        let dims = self.header.dims;
        self.raw_blocks(&mut |first, data| {
            for (offset, row) in data.chunks_exact(dims).enumerate() {
                inv.push(1.0 / row_norm(row, first + offset)?);
            }
            Ok(())
        })?;
        self.inv_norms = Some(inv);
        Ok(())
    }

    fn raw_blocks(&self, f: &mut dyn FnMut(usize, &[f32]) -> Result<()>) -> Result<()> {
        if let Some(map) = &self.full {
            return f(0, bytemuck::cast_slice(&map[..]));
        }
        let dims = self.header.dims;
        let step = self.block_rows();
        let mut first = 0;
        while first < self.header.rows {
            let n = step.min(self.header.rows - first);
            let map = map_range(&self.file, &self.path, HEADER_LEN + first * dims * 4, n * dims * 4)?;
            f(first, bytemuck::cast_slice(&map[..]))?;
            first += n;
        }
        Ok(())
    }
}

fn map_range(file: &File, path: &Path, offset: usize, len: usize) -> Result<Mmap> {
    // SAFETY: the file is opened read-only and the mapping never outlives
    // the `MappedMatrix`. Truncating the file from another process while it
    // is mapped is not supported.
    unsafe {
        MmapOptions::new()
            .offset(offset as u64)
            .len(len)
            .map(file)
            .map_err(|e| Error::io(path, e))
    }
}

impl RowSource for MappedMatrix {
    fn rows(&self) -> usize {
        self.header.rows
    }

    fn dims(&self) -> usize {
        self.header.dims
    }

    fn is_unit(&self) -> bool {
        self.inv_norms.is_some()
    }

    fn for_each_block(&self, f: &mut dyn FnMut(RowBlock<'_>) -> Result<()>) -> Result<()> {
        let inv = self.inv_norms.as_deref();
        self.raw_blocks(&mut |first, data| {
            let n = data.len() / self.header.dims;
            f(RowBlock {
                first_row: first,
                data,
                inv_norms: inv.map(|v| &v[first..first + n]),
            })
        })
    }

    fn read_row(&self, i: usize, out: &mut Vec<f32>) -> Result<()> {
        let dims = self.header.dims;
        out.clear();
        match &self.full {
            Some(map) => {
                let all: &[f32] = bytemuck::cast_slice(&map[..]);
                out.extend_from_slice(&all[i * dims..(i + 1) * dims]);
            }
            None => {
                let map = map_range(&self.file, &self.path, HEADER_LEN + i * dims * 4, dims * 4)?;
                out.extend_from_slice(bytemuck::cast_slice(&map[..]));
            }
        }
        Ok(())
    }

    fn inv_norm(&self, i: usize) -> f64 {
        self.inv_norms.as_ref().map_or(1.0, |v| v[i])
    }
}
