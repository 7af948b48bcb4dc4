//! Discretized least-squares inference for multivariate spatio-temporal
//! Hawkes processes with finite-support parametric kernels.
//!
//! Pipeline: a [`Catalog`] is binned on a [`GridSpec`], sufficient statistics
//! are computed once by [`precompute`], and [`fit`] minimizes the discrete
//! loss by projected gradient descent. Each iteration costs a handful of FFTs
//! over the kernel lag box, independent of the number of events.

pub mod catalog;
pub mod error;
pub mod experiments;
mod fft;
pub mod grid;
pub mod kernels;
mod neighbors;
pub mod params;
pub mod precompute;
pub mod simulator;
pub mod solver;

pub use catalog::{Catalog, Event, Window};
pub use error::{Error, Result};
pub use grid::{bin_events, make_grid, BinnedCatalog, ConvolutionMethod, GridSpec};
pub use kernels::{KernelModel, SpatialFamily, Support, TemporalFamily};
pub use params::ModelParams;
pub use precompute::{precompute, PrecomputeOptions, Precomputed, PsiMethod};
pub use simulator::{simulate, GroundTruth};
pub use solver::{fit, FitOptions, FitResult, Objective, Quadratic, StepRule};
