//! Geometric graphs built from points sampled on analytic manifolds.
//!
//! The crate pairs every graph-side object with its manifold-side
//! counterpart so that approximation errors can be measured directly:
//!
//! * [`manifold`]: circle, sphere and flat torus with closed-form
//!   Laplace-Beltrami eigenpairs, quadrature, manifold filters and MNNs.
//! * [`geograph`]: dense Gaussian and compactly supported kernels,
//!   graph Laplacians, sampling and interpolation operators.
//! * [`spectral`]: eigensolvers, heat semigroup, eigenpair alignment,
//!   frequency partitions and filter decompositions.
//! * [`filterbank`]: diffusion filters `sum_k h_k exp(-k T L)`.
//! * [`gnn`]: filter-bank GNNs with manual backpropagation and training.
//! * [`experiments`]: convergence sweeps, transferability, synthetic
//!   point-cloud classification and OFF ingestion.
//! * [`cli`]: the `geognn` command-line front end.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod filterbank;
pub mod geograph;
pub mod gnn;
pub mod linalg;
pub mod manifold;
pub mod spectral;

pub use error::{Error, Result};
