//! Proximal maps of the sharp norms and the constrained decoder.

mod decode;
mod operator;
mod prox;

pub use decode::{decode, DecodeProblem, DecodeResult, SolverConfig};
pub use operator::{OperatorKind, OperatorMetadata, SensingOperator};
pub use prox::{project_l2_ball, prox_sharp, ProxWorkspace};

pub(crate) use prox::prox_sharp_with;
