#![no_std]
extern crate alloc;

pub mod agnostic;
pub mod config;
pub mod cost;
pub mod error;
pub mod hard_mask;
pub mod heatmap;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod real;
pub mod semantic;
pub mod synth;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Tensor;
pub use real::Real;
