//! Deterministic forward-pass engine for the MedViT-lite v1 classifier:
//! convolutional stem, residual blocks, two pre-norm transformer blocks,
//! global average pooling and a dense softmax head.

mod model;
pub mod ops;
pub mod rng;
pub mod schema;
mod tensor;
mod weights;

use thiserror::Error;

pub use self::model::{ForwardTrace, Model};
pub use self::tensor::Tensor;
pub use self::weights::{
    decode_weights, encode_weights, gen_fixture_weights, load_weights, save_weights, WeightTable,
};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights missing: {0}")]
    WeightsMissing(String),
    #[error("bad magic: not a PDCM weight file")]
    BadMagic,
    #[error("unsupported PDCM version {0}")]
    BadVersion(u32),
    #[error("tensor {0:?} does not match the model schema")]
    SchemaMismatch(String),
    #[error("weight file truncated")]
    TruncatedFile,
    #[error("{0} trailing bytes after last tensor")]
    TrailingData(usize),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnetError> = std::result::Result<T, E>;
