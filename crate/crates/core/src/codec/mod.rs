//! Keyed hashing and block error-correcting codes used by the
//! consistency-check and control exchanges.

pub mod block;
pub mod gf2n;
pub mod hash;
pub mod rs;

pub use block::{BlockCode, CodeReport};
pub use hash::{Digest, HashFamily, HashKey, HashParams};
