//! Branch and bound optimization of deterministic black-box functions.
//!
//! The objective is modelled as a sample from a zero-mean Gaussian process
//! with known kernel hyperparameters. Because observations are exact, the
//! posterior standard deviation collapses quadratically in the sampling
//! resolution, and the search can discard every part of the domain whose
//! upper confidence bound falls below the best lower confidence bound.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernels`] | squared-exponential and Matérn 5/2 covariances |
//! | [`gp`] | exact posterior with incremental Cholesky updates |
//! | [`lattice`] | dyadic lattice, δ-covers, relevant-region balls |
//! | [`bnb`] | the branch and bound loop |
//! | [`bench`] | test objectives, baselines, regret metrics, experiments |
//! | [`cli`] | the `bnbopt` command line |

pub mod bench;
pub mod bnb;
pub mod cli;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod lattice;

pub use bnb::{run, RunConfig, RunTrace};
pub use error::{Error, Result};
pub use gp::{GpPosterior, ObservationSet, Prediction};
pub use kernels::{KernelFamily, KernelSpec};
pub use lattice::{DyadicGrid, RegionBall};
