//! Multi-band radiomap reconstruction from sparse single-band observations.
//!
//! The pipeline:
//!
//! 1. [`scenario`] describes the urban grid, transmitters and block partition.
//! 2. [`propagation`] holds the path-loss model, a synthetic ground-truth
//!    generator and radio depth maps.
//! 3. [`graph`] turns a block at one frequency into a radio graph using one
//!    of four edge-encoding strategies.
//! 4. [`nn`] is a small reverse-mode autodiff engine with a graph attention
//!    layer and Adam.
//! 5. [`train`] trains the three-layer attention network with node-level
//!    masking and predicts unobserved bands.
//! 6. [`baselines`] provides 3D inverse-distance weighting, HaLRTC tensor
//!    completion and spatial-frequency kriging.
//! 7. [`eval`] computes block/area RMSE, renders maps and runs sweeps.

pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod propagation;
pub mod scenario;
pub mod train;

pub use error::{Error, Result};
