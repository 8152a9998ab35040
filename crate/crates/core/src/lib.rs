//! Split learning with homomorphically encrypted server layers.

#![allow(clippy::needless_range_loop)]

pub mod backend;
pub mod ckks;
pub mod config;
pub mod data;
pub mod error;
pub mod estimator;
pub mod matrix;
pub mod nn;
pub mod packing;
pub mod protocol;
pub mod runlog;

pub use error::{Error, Result};
