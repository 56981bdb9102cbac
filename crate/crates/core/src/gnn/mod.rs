//! Node classifiers over embedded node documents.
//!
//! A two-layer graph convolution `Ã · drop(ReLU(Ã X W1 + b1)) W2 + b2` with
//! `Ã = D^{-1/2}(A + I)D^{-1/2}`, or the same network with `Ã = I` (an MLP),
//! trained full-batch with Adam and early stopping on validation accuracy.
//! Everything runs single-threaded in `f64` with fixed summation order, so a
//! seed pins the result bit for bit.

mod matrix;
mod model;
mod protocol;
mod train;

use thiserror::Error;

pub use matrix::{normalize_adjacency, CsrMatrix, DenseMatrix};
pub use model::{
    argmax_rows, dropout_mask, forward_propagated, gcn_forward, loss_and_grad, mlp_forward, softmax_rows,
    ForwardCache, GcnParams, ModelKind, Propagation,
};
pub use protocol::{render_table, run_protocol, ExperimentReport};
pub use train::{evaluate, predict, train, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("loss became non-finite at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}
