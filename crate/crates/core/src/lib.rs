//! Mixed-supervision binary segmentation: one network trained jointly on
//! pixel masks, bounding boxes and scribbles.

pub mod checkpoint;
pub mod data;
pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod segnet;
pub mod tensor;
pub mod trainer;
pub mod viz;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
