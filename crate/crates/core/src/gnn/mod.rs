//! Filter-bank GNNs `x_l^p = sigma(sum_q h_l^{pq}(L) x_{l-1}^q)` with manual
//! backpropagation, training and convergence diagnostics.

mod convergence;
mod model;
mod train;

pub use convergence::{gnn_convergence_error, gnn_convergence_error_with, GnnConvergence};
pub use model::{
    gnn_backward, gnn_forward, gnn_forward_with, ForwardCache, GnnArch, Gradients, Nonlinearity, Penalty, Pooling,
    Readout,
};
pub use train::{
    dataset_loss, readout_retrain, train, Dataset, Loss, Optimizer, Sample, Target, TrainConfig, TrainReport,
};
