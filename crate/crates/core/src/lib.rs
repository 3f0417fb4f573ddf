//! Variable-rate selective latent codec.
//!
//! A quality level `q` picks per-channel quantization steps, inverse
//! quantization scales and importance adjustment exponents. The importance
//! map, decoded from the hyper latent, is adjusted and rounded into a 3D
//! binary mask; only masked-in latent elements are entropy coded, and the
//! decoder regenerates the same mask before decoding them.

pub mod analysis;
pub mod container;
pub mod entropy;
pub mod error;
pub mod image;
pub mod mask;
pub mod net;
pub mod pipeline;
pub mod range_coder;
pub mod rate;
pub mod reference;
pub mod tensor;
pub mod weights;
mod wire;

pub use container::{ScrBitstream, ScrHeader};
pub use error::{Result, ScrError};
pub use image::{psnr, Image};
pub use mask::{ImportanceMap, MaskMode};
pub use pipeline::{decode_image, encode_continuous, encode_image, EncodeOptions, RateReport};
pub use rate::{ChannelVector, QualityLevel, RateVectorTable};
pub use tensor::{BinaryMask, LatentTensor, SelectedElements, Shape};
pub use weights::{ModelId, WeightContainer};
