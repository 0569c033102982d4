//! CTC-CRF acoustic modelling at desk scale.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation over
//! in-memory values. File formats, the trainer loop and the command-line tools live
//! in the companion `catdesk` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod am;
pub mod data;
pub mod decode;
mod error;
pub mod fst;
pub mod lm;
pub mod loss;
pub mod math;
mod matrix;
pub mod streaming;
pub mod topology;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Per-frame acoustic scores, one column per emission symbol (blank first).
pub type FrameLogits = Matrix;
