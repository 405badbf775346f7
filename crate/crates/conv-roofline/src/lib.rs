//! Analytical performance planner for fast convolution methods, paired with
//! reference implementations of the methods themselves.
//!
//! The planner predicts per-stage running times of Winograd, regular-FFT and
//! Gauss-FFT convolution layers under a Roofline model: each stage is either
//! compute-bound (FLOPs / peak FLOPS) or memory-bound (bytes moved / memory
//! bandwidth), decided by comparing the stage's arithmetic intensity with the
//! machine's compute-to-memory ratio. Per-tile transform costs come from
//! embedded lookup tables; element-wise stage data movement is derived from a
//! cache-blocking optimization over channel blocks.
//!
//! The numerics half ([`winograd`], [`fft`], [`layer`]) runs the same three
//! methods at desk scale against a direct double-precision oracle, so the
//! accuracy behaviour that motivates the planner's tile-size limits can be
//! reproduced and tested rather than taken on faith.

pub mod cli;
pub mod error;
pub mod fft;
pub mod layer;
pub mod mat;
pub mod model;
pub mod planner;
pub mod tables;
pub mod winograd;

pub use error::{Error, Result};
pub use model::{LayerShape, MachineSpec, Method, TilePlan};
