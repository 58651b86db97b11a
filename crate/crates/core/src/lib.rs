//! Synthetic speckle imagery, subset-based digital image correlation and
//! full-field displacement metrology.
//!
//! The crate is organised the way the pipeline runs:
//!
//! - [`speckle`] renders reference speckle frames as a Boolean model of
//!   random opaque disks.
//! - [`field_gen`] builds ground-truth displacement fields (random piecewise
//!   fields and the Star field).
//! - [`warp`] deforms images, either by resampling or by exact re-rendering of
//!   the disks, and injects heteroscedastic sensor noise.
//! - [`dataset`] orchestrates whole dataset builds and owns the `.flo`
//!   interchange format.
//! - [`dic`] is the subset-based IC-GN baseline.
//! - [`metrology`] scores any estimator against ground truth.

pub mod dataset;
pub mod dic;
mod error;
pub mod field;
pub mod field_gen;
pub mod image;
pub mod interp;
pub mod metrology;
pub mod seed;
pub mod speckle;
pub mod warp;

pub use error::{Error, Result};
pub use field::DisplacementField;
pub use image::GrayImage;
