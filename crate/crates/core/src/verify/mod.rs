//! Proof-device oracles and the brute-force and Monte Carlo checks built on
//! them.

pub mod checks;
pub mod neighbors;
pub mod oracles;
pub mod stats;

pub use checks::{run_check, Check, CheckReport};
