//! Minimal cryptographic primitives used by the victims and by the offline
//! key search. Correctness matters, speed and side-channel hygiene do not.

pub mod aes;
pub mod rsa;

pub use aes::KeySize;
pub use rsa::RsaKey;
