//! Embedding matrices, descriptor sets, labels and caption corpora, with
//! their on-disk formats.

mod corpus;
mod descriptors;
pub mod emb1;
mod labels;
mod mapped;
mod matrix;
mod source;

pub use corpus::{CaptionCorpus, MatrixStore, MemoryRows};
pub use descriptors::{load_descriptor_set, save_descriptor_set, DescriptorSet, META_KEY};
pub use emb1::{decode_emb1, encode_emb1, read_embedding_matrix, write_embedding_matrix};
pub use labels::{parse_labels, read_labels, LabelVector};
pub use mapped::{MappedMatrix, Mapping};
pub use matrix::{l2_normalize_rows, EmbeddingMatrix, UNIT_NORM_TOLERANCE, ZERO_NORM_CUTOFF};
pub use source::{RowBlock, RowSource};
