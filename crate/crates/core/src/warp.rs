//! Deformed images: resampling warps, exact Boolean re-rendering,
//! heteroscedastic sensor noise and quantization.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{DisplacementField, FieldSampler};
use crate::image::{BitDepth, GrayImage};
use crate::interp::{self, Interp};
use crate::seed::{self, stream};
use crate::speckle::{EDGE_REACH, render_with, DiskIndex, DiskSet, SpeckleParams, DEFAULT_BACKGROUND};
use crate::{Error, Result};

/// Deforms `reference` so that `deformed(x) = reference(x - u(x))`.
///
/// The displacement is read on the deformed grid. Samples whose source
/// position leaves the frame take the default background level.
pub fn warp(reference: &GrayImage, field: &DisplacementField, interp: Interp) -> Result<GrayImage> {
    warp_with_fill(reference, field, interp, DEFAULT_BACKGROUND)
}

pub fn warp_with_fill(
    reference: &GrayImage,
    field: &DisplacementField,
    interp: Interp,
    fill: f64,
) -> Result<GrayImage> {
    reference.ensure_same_dims(field.dims())?;
    let (w, h) = reference.dims();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let (u, v) = field.get(x, y);
            let sx = x as f64 - u;
            let sy = y as f64 - v;
            *o = if sx < 0.0 || sy < 0.0 || sx > xmax || sy > ymax {
                fill
            } else {
                interp::sample(reference, sx, sy, interp)
            };
        }
    });
    GrayImage::from_vec(w, h, out)
}

/// Fixed-point controls for the inverse mapping of the exact renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMapping {
    pub tolerance: f64,
    pub max_iters: usize,
    /// Largest tolerated fraction of non-converged samples.
    pub max_failure_fraction: f64,
}

impl Default for InverseMapping {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 50,
            max_failure_fraction: 1e-4,
        }
    }
}

/// Solves `q = p - u(q)` by fixed-point iteration.
#[inline]
pub fn invert_displacement<F: FieldSampler + ?Sized>(
    field: &F,
    px: f64,
    py: f64,
    ctl: &InverseMapping,
) -> Option<(f64, f64)> {
    let (mut qx, mut qy) = (px, py);
    for _ in 0..ctl.max_iters {
        let (u, v) = field.displacement(qx, qy);
        let (nx, ny) = (px - u, py - v);
        let step = (nx - qx).abs().max((ny - qy).abs());
        qx = nx;
        qy = ny;
        if step <= ctl.tolerance {
            return Some((qx, qy));
        }
    }
    None
}

/// Renders the deformed frame of a disk set without resampling any image.
///
/// Every supersample `p` of the deformed frame is pulled back to the
/// reference position `q` with `p = q + u(q)`, and disk coverage is
/// evaluated there. A zero field reproduces [`render_speckle`] bit for bit.
///
/// [`render_speckle`]: crate::speckle::render_speckle
pub fn render_deformed_speckle<F: FieldSampler + ?Sized>(
    disks: &DiskSet,
    field: &F,
    params: &SpeckleParams,
) -> Result<GrayImage> {
    render_deformed_speckle_with(disks, field, params, &InverseMapping::default())
}

pub fn render_deformed_speckle_with<F: FieldSampler + ?Sized>(
    disks: &DiskSet,
    field: &F,
    params: &SpeckleParams,
    ctl: &InverseMapping,
) -> Result<GrayImage> {
    params.validate()?;
    let h = 1.0 / params.supersampling as f64;
    let index = DiskIndex::new(disks, params.width, params.height, field.max_displacement(), EDGE_REACH * h);
    let (img, failures) = render_with(&index, params, |px, py| invert_displacement(field, px, py, ctl));
    let failed: usize = failures.iter().map(|&f| f as usize).sum();
    let total = params.width * params.height * params.supersampling * params.supersampling;
    if failed as f64 > ctl.max_failure_fraction * total as f64 {
        return Err(Error::InverseMapping {
            failed,
            total,
            diagnostic: failures,
        });
    }
    Ok(img)
}

/// Sensor noise whose variance is affine in the brightness: `a·s + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub a: f64,
    pub b: f64,
}

impl Default for NoiseModel {
    /// Coefficients matching the DIC Challenge 2.0 noisy images.
    fn default() -> Self {
        Self { a: 0.0342, b: 0.2679 }
    }
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel { a: 0.0, b: 0.0 };

    pub fn variance(&self, brightness: f64) -> f64 {
        (self.a * brightness.max(0.0) + self.b).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::param("noise coefficients must be >= 0"));
        }
        Ok(())
    }
}

/// Adds independent zero-mean Gaussian noise of variance `a·s + b` to every
/// pixel, `s` being its clean brightness. Each row draws from its own stream
/// derived from `(seed, row)`.
pub fn add_noise(img: &GrayImage, model: &NoiseModel, seed: u64) -> Result<GrayImage> {
    model.validate()?;
    let (w, h) = img.dims();
    if model.a == 0.0 && model.b == 0.0 {
        return Ok(img.clone());
    }
    let mut out = img.as_slice().to_vec();
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut rng = seed::rng(seed, &[stream::NOISE, y as u64]);
        for s in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += model.variance(*s).sqrt() * z;
        }
    });
    GrayImage::from_vec(w, h, out)
}

/// Round-half-up to an integer level, clipped to the depth's range.
#[inline]
pub fn quantize_level(value: f64, depth: BitDepth) -> f64 {
    (value + 0.5).floor().clamp(0.0, depth.max_level())
}

/// Quantizes gray levels already expressed on the scale of `depth`.
pub fn quantize(img: &GrayImage, depth: BitDepth) -> GrayImage {
    img.map(|v| quantize_level(v, depth))
}
