//! Offline reconstruction of secrets from leaked fragments.

pub mod aes;
pub mod image;
pub mod kaslr;
pub mod rsa;
pub mod weights;

pub use aes::{aes_locate, AesKeyCandidate, DEFAULT_AES_THRESHOLD};
pub use image::{image_reconstruct, Distance, Image, PixelCandidate};
pub use kaslr::{find_static_locations, SlotCriterion, StaticSearch};
pub use rsa::{rsa_reconstruct, ChunkPool, RsaReconError};
pub use weights::{weight_filter, WeightCandidate, WeightFilter};
