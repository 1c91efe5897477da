//! Satellite stereo reconstruction.
//!
//! RPC-modeled satellite images are turned into georeferenced height maps by
//! approximating each RPC locally with a pinhole camera in an East-North-Up
//! frame, bundle adjusting the principal points, and running a plane-sweep
//! stereo over ground-parallel planes with a plane-plus-parallax depth so the
//! dense stage stays accurate in single precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geodesy;
pub mod mvs;
pub mod pinhole;
pub mod pipeline;
pub mod raster;
pub mod rpc;
pub mod sfm;
pub mod synth;
pub mod tonemap;

pub use error::{Error, Result};
