//! Privacy-preserving robust federated learning over multi-key RLWE
//! homomorphic encryption.

mod codec;
pub mod agg;
pub mod error;
pub mod prf;
pub mod he;
pub mod multikey;
pub mod ring;
pub mod sim;

pub use error::{Error, Result, Stage};
