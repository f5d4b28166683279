//! EMB1 binary matrix format.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `b"EMB1"`           |
//! | 4      | 4    | `u32` dtype code (0 = f32)|
//! | 8      | 8    | `u64` rows                |
//! | 16     | 8    | `u64` cols                |
//! | 24     | ...  | row-major payload         |
//!
//! The 24-byte header keeps the payload 4-byte aligned inside any
//! page-aligned mapping, so mapped payloads can be viewed as `&[f32]`
//! without copying.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::EmbeddingMatrix;

#[cfg(target_endian = "big")]
compile_error!("EMB1 payloads are viewed in place and require a little-endian target");

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const HEADER_LEN: usize = 24;
pub const DTYPE_F32: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emb1Header {
    pub rows: usize,
    pub dims: usize,
}

impl Emb1Header {
    /// Parses and validates the fixed header.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let dtype = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dims = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let overflow = Error::ShapeOverflow { rows, dims };
        let payload = rows
            .checked_mul(dims)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN as u64))
            .ok_or(overflow)?;
        let (Ok(rows_us), Ok(dims_us), Ok(_)) = (
            usize::try_from(rows),
            usize::try_from(dims),
            usize::try_from(payload),
        ) else {
            return Err(Error::ShapeOverflow { rows, dims });
        };
        if rows == 0 || dims == 0 {
            return Err(Error::EmptyShape {
                rows: rows_us,
                dims: dims_us,
            });
        }
        Ok(Emb1Header {
            rows: rows_us,
            dims: dims_us,
        })
    }

    pub fn payload_len(&self) -> usize {
        self.rows * self.dims * 4
    }

    pub fn file_len(&self) -> u64 {
        (HEADER_LEN + self.payload_len()) as u64
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&DTYPE_F32.to_le_bytes());
        out[8..16].copy_from_slice(&(self.rows as u64).to_le_bytes());
        out[16..24].copy_from_slice(&(self.dims as u64).to_le_bytes());
        out
    }
}

fn check_length(header: &Emb1Header, found: u64) -> Result<()> {
    let expected = header.file_len();
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes(found - expected));
    }
    Ok(())
}

/// Decodes a complete EMB1 image held in memory.
pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let header = Emb1Header::parse(bytes)?;
    check_length(&header, bytes.len() as u64)?;
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(header.rows, header.dims, data)
}

/// Encodes a matrix as a complete EMB1 image.
pub fn encode_emb1(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let header = Emb1Header {
        rows: matrix.rows(),
        dims: matrix.dims(),
    };
    let mut out = Vec::with_capacity(header.file_len() as usize);
    out.extend_from_slice(&header.to_bytes());
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads an EMB1 file into memory. Values are bit-identical to the file and
/// the result is not flagged as normalized.
pub fn read_embedding_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let found = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut head = [0u8; HEADER_LEN];
    let got = read_up_to(&mut file, &mut head).map_err(|e| Error::io(path, e))?;
    let header = Emb1Header::parse(&head[..got])?;
    check_length(&header, found)?;
    let mut data = vec![0f32; header.rows * header.dims];
    file.read_exact(bytemuck::cast_slice_mut(&mut data))
        .map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::new(header.rows, header.dims, data)
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn write_embedding_matrix(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Emb1Header {
        rows: matrix.rows(),
        dims: matrix.dims(),
    };
    w.write_all(&header.to_bytes())
        .and_then(|_| w.write_all(bytemuck::cast_slice(matrix.data())))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
