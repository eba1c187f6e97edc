//! Recurrent soft decision tree policies learned from demonstration
//! trajectories, grown incrementally and simplified into per-timestep
//! axis-aligned trees for inspection.

pub mod analysis;
pub mod data;
pub mod error;
pub mod growth;
pub mod io;
pub mod math;
pub mod pipeline;
pub mod simplify;
pub mod synth;
pub mod training;
pub mod tree;

pub use error::{Error, Result};
