//! Leveled approximate homomorphic encryption over the RNS ring.

mod ciphertext;
mod encoding;
mod keys;
mod params;
mod serialize;

pub use ciphertext::Ciphertext;
pub use encoding::{decode, decode_coeffs, encode, encode_coeffs, Packing};
pub use keys::{EvalKey, SecretKey};
pub use params::{HeParams, ParamReport, PRESET_NAMES};
