//! Strain maps by Gaussian-derivative filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::DisplacementField;
use crate::interp::mirror_index;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrainComponent {
    Exx,
    Eyy,
    Exy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl StrainMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Gaussian and derivative-of-Gaussian taps on `[-r, r]`, `r = ceil(4σ)`.
///
/// The smoothing taps sum to one; the derivative taps `-i·g(i) / Σ j²g(j)`
/// return exactly 1 on a unit ramp.
fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (4.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = g.iter().sum();
    let second: f64 = (-r..=r).zip(&g).map(|(i, gi)| (i * i) as f64 * gi).sum();
    let smooth = g.iter().map(|v| v / sum).collect();
    let deriv = (-r..=r).zip(&g).map(|(i, gi)| -(i as f64) * gi / second).collect();
    (smooth, deriv)
}

fn convolve_rows(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src = &data[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[mirror_index(x as isize + r - k as isize, w)])
                .sum();
        }
    });
    out
}

fn convolve_cols(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * data[mirror_index(y as isize + r - k as isize, h) * w + x])
                .sum();
        }
    });
    out
}

/// `∂c/∂x` (or `∂c/∂y`) smoothed along the other axis, in one separable pass.
fn derivative(c: &[f64], w: usize, h: usize, along_x: bool, smooth: &[f64], deriv: &[f64]) -> Vec<f64> {
    if along_x {
        convolve_cols(&convolve_rows(c, w, h, deriv), w, h, smooth)
    } else {
        convolve_rows(&convolve_cols(c, w, h, deriv), w, h, smooth)
    }
}

/// Strain component of a displacement field: convolution with a normalized
/// Gaussian-derivative kernel of standard deviation `sigma` (truncated at
/// 4σ, mirror boundaries). `Exy` is `(∂u/∂y + ∂v/∂x) / 2`.
pub fn strain(field: &DisplacementField, sigma: f64, component: StrainComponent) -> Result<StrainMap> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("strain sigma {sigma} must be > 0")));
    }
    let (w, h) = field.dims();
    let u: Vec<f64> = field.u().iter().map(|&x| x as f64).collect();
    let v: Vec<f64> = field.v().iter().map(|&x| x as f64).collect();
    let (smooth, deriv) = kernels(sigma);
    let data = match component {
        StrainComponent::Exx => derivative(&u, w, h, true, &smooth, &deriv),
        StrainComponent::Eyy => derivative(&v, w, h, false, &smooth, &deriv),
        StrainComponent::Exy => {
            let uy = derivative(&u, w, h, false, &smooth, &deriv);
            let vx = derivative(&v, w, h, true, &smooth, &deriv);
            uy.iter().zip(&vx).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    };
    Ok(StrainMap { width: w, height: h, data })
}
