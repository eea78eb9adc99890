//! Small dense-array reverse-mode autodiff: a per-pass tape, MLP layers,
//! Adam, a flat checkpoint format and a finite-difference gradient check.
//!
//! Graphs are single use. Build one per forward pass, call
//! [`Graph::backward`] once, then push the result into the parameter sets
//! with [`Gradients::accumulate_into`]. Gradient buffers are never cleared
//! implicitly; call [`ParamSet::zero_grad`] before each backward.

mod adam;
mod array;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod params;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use array::DenseArray;
pub use gradcheck::{grad_check, grad_check_steps, grad_check_with, relative_error, Coverage};
pub use graph::{log_sum_exp, sigmoid, softmax, softplus, Activation, Gradients, Graph, Var};
pub use layers::{Linear, Mlp};
pub use params::{Param, ParamSet};

#[derive(Debug, Error)]
pub enum NdError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("graph was already differentiated; build a new one")]
    GraphConsumed,
    #[error("contract violation: {0}")]
    Contract(&'static str),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
