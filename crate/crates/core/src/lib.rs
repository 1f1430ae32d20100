//! CPU implementation of 3D Gaussian splatting with an evaluation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: scene and camera types shared by everything else.
//! - [`math`]: differentiable per-Gaussian kernels (rotation, covariance,
//!   projection, spherical harmonics, 2D Gaussian) with analytic backward passes.
//! - [`raster`]: the tile-based forward renderer and its exact backward pass.
//! - [`metrics`]: MSE, PSNR and SSIM (with gradient).
//! - [`train`]: loss, Adam, densification and the optimisation loop.
//! - [`geometry`]: nearest-neighbour index, ICP and point-cloud distances.
//! - [`io`]: COLMAP text models, PLY, PPM/PNG and flat config files.
//!
//! Data-parallel inner loops (tiles, Gaussians, nearest-neighbour batches) run on
//! rayon when the `parallel` feature is enabled; see [`exec::Execution`].

// `!(a < b)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod synthetic;
pub mod train;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{Camera, GaussianModel, ImageBuffer, PointCloud, Quat};
