//! Quality metrics for text-based visual descriptor sets.
//!
//! The crate evaluates a descriptor set against precomputed embeddings:
//!
//! * [`alignment`]: mutual k-nearest-neighbor agreement between the space
//!   induced by projecting images onto descriptors and a reference image
//!   embedding space.
//! * [`pretrain_sim`]: how well descriptors match a sample of pre-training
//!   captions, and how visually grounded those captions are.
//! * [`classify`]: zero-shot classification by description.
//! * [`descriptors`]: class-name prompt and randomized baselines.
//!
//! Embeddings come from EMB1 files (see [`store::emb1`]); no model
//! inference happens here.

pub mod alignment;
pub mod classify;
pub mod descriptors;
pub mod error;
pub mod knn;
pub mod pretrain_sim;
pub mod report;
pub mod store;

pub use error::{Error, ErrorClass, Result};
