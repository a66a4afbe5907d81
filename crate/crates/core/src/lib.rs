//! Differentially private running histograms under continual observation.

pub mod accounting;
pub mod cli;
pub mod error;
pub mod histogram;
pub mod known;
pub mod lab;
pub mod meta;
pub mod noise;
pub mod topk_continual;
pub mod tree;
pub mod unknown_continual;
pub mod unknown_oneshot;
pub mod verify;

pub use error::{Error, Result};
