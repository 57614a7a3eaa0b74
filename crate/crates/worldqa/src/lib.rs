//! worldqa: an action-conditioned question-answering world model over a toy
//! 2D block-pushing table, with sampling-based (MPPI) and gradient-based
//! planners, multistep subgoal execution, and an evaluation harness.
//!
//! The model answers yes/no questions about what will be true *after* a
//! proposed action sequence is executed, and planning maximizes the weighted
//! likelihood of desired answers. See the `examples/` directory for one
//! runnable program per capability.

pub mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod plan;
pub mod rng;
pub mod saqa;
pub mod value;
pub mod bc;
pub mod blockworld;
pub mod tensor;

pub use error::{Error, Result};
