#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod body_model;
pub mod camera;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod render;
pub mod rotation;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
