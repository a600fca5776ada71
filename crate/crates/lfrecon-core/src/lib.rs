//! Light field surface reconstruction toolkit.
//!
//! The crate covers the full pipeline from synthetic data to scored
//! reconstructions:
//!
//! * [`lightfield`] — the 4D radiance container `L[v][u][y][x]`, the camera
//!   rig model, EPI extraction, and slope/disparity/depth conversions.
//! * [`synth`] — procedural heightfield scenes rendered through a sheared
//!   pinhole camera grid, with analytic ground truth.
//! * [`oracle`] — brute-force variance-minimizing line search over EPIs; the
//!   analytic baseline depth estimator.
//! * [`net`] — a from-scratch dense-block convolutional regressor mapping an
//!   EPI to a depth curve, with exact backpropagation and an SGD trainer.
//! * [`fusion`] — depth maps → pointclouds → a single regularized
//!   least-squares surface fit `z(x,y)` on a regular grid.
//! * [`metrics`] — RMSE, normalized mean error, ICP rigid alignment, face
//!   cropping, and summary error statistics.
//! * [`io`] — PFM / PLY / PNG-container / weights / manifest formats.
//!
//! Heavy loops are data-parallel when the `parallel` feature (default) is
//! enabled and plain sequential otherwise; both produce identical bits (see
//! [`exec`]).

pub mod error;
pub mod exec;
pub mod fusion;
pub mod io;
pub mod lightfield;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

/// Crate version, recorded into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
