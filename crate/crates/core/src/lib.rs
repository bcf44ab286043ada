//! Compressed sensing in abstract CS spaces: decomposable norms, convex
//! decoders, robust width estimation and the experiments built on them.

pub mod cs_space;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod grassmann;
pub mod linalg;
pub mod rng;
pub mod solvers;
pub mod width_rwp;

pub use cs_space::{CsSpace, Decomposition, Model};
pub use error::{Error, Result};
