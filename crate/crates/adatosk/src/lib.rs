//! File formats, parallel training, ablations and the command line for
//! [`adatosk_core`].

pub mod ablation;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod dump;
pub mod parallel;
pub mod render;
pub mod run;

pub use adatosk_core as core;
