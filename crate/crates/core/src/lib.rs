pub mod bits;
pub mod calibrate;
pub mod channel;
pub mod chunk;
pub mod codec;
pub mod compiler;
pub mod error;
pub mod harness;
pub mod prf;
pub mod progress;
pub mod params;
pub mod pebble;
pub mod protocol;
pub mod spec_file;
pub mod trace;
pub mod tree_code;

pub use bits::BitString;
pub use error::{Error, Result};
