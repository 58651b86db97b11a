//! Ground-truth displacement fields.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::{DisplacementField, FieldSampler};
use crate::interp::{keys_weights, Interp};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Random piecewise field: uniform node values on a square lattice,
/// interpolated in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGenSpec {
    /// Node spacing in pixels.
    pub region_size: usize,
    /// Node values are uniform on `[-amplitude, amplitude]`.
    pub amplitude: f64,
    pub interp: Interp,
    /// Pixels closer than this to any edge are forced to zero.
    pub boundary_zero_width: usize,
}

impl FieldGenSpec {
    /// 8-px regions, ±1 px, bilinear, one region of zeroed border.
    pub fn dataset_v1() -> Self {
        Self {
            region_size: 8,
            amplitude: 1.0,
            interp: Interp::Bilinear,
            boundary_zero_width: 8,
        }
    }

    pub fn dataset_v2(region_size: usize) -> Self {
        Self {
            region_size,
            amplitude: 1.0,
            interp: Interp::Bicubic,
            boundary_zero_width: region_size.min(8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_size < 2 {
            return Err(Error::param(format!("region size {} must be >= 2", self.region_size)));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::param("amplitude must be > 0"));
        }
        Ok(())
    }
}

/// Node values of a random field. Nodes sit at multiples of the region size,
/// the last one at or beyond the far edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLattice {
    pub spacing: usize,
    pub cols: usize,
    pub rows: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl NodeLattice {
    /// Number of nodes needed along an axis of `n` pixels.
    pub fn nodes_along(n: usize, spacing: usize) -> usize {
        (n - 1).div_ceil(spacing) + 1
    }

    pub fn random(spec: &FieldGenSpec, width: usize, height: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let cols = Self::nodes_along(width, spec.region_size);
        let rows = Self::nodes_along(height, spec.region_size);
        let mut rng = seed::rng(seed, &[stream::FIELD]);
        let a = spec.amplitude;
        let mut draw = |n| (0..n).map(|_| rng.gen_range(-a..=a)).collect::<Vec<f64>>();
        let u = draw(cols * rows);
        let v = draw(cols * rows);
        Ok(Self {
            spacing: spec.region_size,
            cols,
            rows,
            u,
            v,
        })
    }

    fn node(&self, c: &[f64], i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.cols as isize - 1) as usize;
        let j = j.clamp(0, self.rows as isize - 1) as usize;
        c[j * self.cols + i]
    }

    /// Interpolates both components at pixel `(x, y)`.
    pub fn eval(&self, x: usize, y: usize, interp: Interp) -> (f64, f64) {
        let s = self.spacing;
        let (i, j) = ((x / s) as isize, (y / s) as isize);
        let tx = (x % s) as f64 / s as f64;
        let ty = (y % s) as f64 / s as f64;
        match interp {
            Interp::Bilinear => {
                let lerp = |c: &[f64]| {
                    let top = self.node(c, i, j) * (1.0 - tx) + self.node(c, i + 1, j) * tx;
                    let bot = self.node(c, i, j + 1) * (1.0 - tx) + self.node(c, i + 1, j + 1) * tx;
                    top * (1.0 - ty) + bot * ty
                };
                (lerp(&self.u), lerp(&self.v))
            }
            Interp::Bicubic => {
                let (wx, wy) = (keys_weights(tx), keys_weights(ty));
                let cubic = |c: &[f64]| {
                    let mut acc = 0.0;
                    for (b, wyb) in wy.iter().enumerate() {
                        let mut r = 0.0;
                        for (a, wxa) in wx.iter().enumerate() {
                            r += wxa * self.node(c, i + a as isize - 1, j + b as isize - 1);
                        }
                        acc += wyb * r;
                    }
                    acc
                };
                (cubic(&self.u), cubic(&self.v))
            }
        }
    }

    pub fn rasterize(&self, width: usize, height: usize, interp: Interp, zero_width: usize) -> DisplacementField {
        DisplacementField::from_fn(width, height, |x, y| {
            let edge = x < zero_width || y < zero_width || x + zero_width >= width || y + zero_width >= height;
            if edge {
                (0.0, 0.0)
            } else {
                self.eval(x, y, interp)
            }
        })
    }
}

/// Random dataset field. Deterministic in `seed`; the border ring of width
/// `boundary_zero_width` is exactly zero.
pub fn random_field(spec: &FieldGenSpec, width: usize, height: usize, seed: u64) -> Result<DisplacementField> {
    let lattice = NodeLattice::random(spec, width, height, seed)?;
    let field = lattice.rasterize(width, height, spec.interp, spec.boundary_zero_width);
    let peak = field.max_abs();
    if peak > spec.amplitude {
        log::debug!("bicubic node interpolation overshoots: {peak:.4} > {}", spec.amplitude);
    }
    Ok(field)
}

/// Vertical cosine displacement whose period grows linearly from left to right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarSpec {
    pub width: usize,
    pub height: usize,
    pub amplitude: f64,
    pub period_left: f64,
    pub period_right: f64,
    /// Row of the symmetry axis, where `v = amplitude`.
    pub center_row: f64,
}

impl Default for StarSpec {
    fn default() -> Self {
        Self {
            width: 2000,
            height: 501,
            amplitude: 0.5,
            period_left: 10.0,
            period_right: 300.0,
            center_row: 250.0,
        }
    }
}

impl StarSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.period_left > 0.0 && self.period_left < self.period_right) {
            return Err(Error::param("star periods must satisfy 0 < left < right"));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::param("star amplitude must be > 0"));
        }
        if self.width < 2 || !(self.center_row >= 0.0 && self.center_row <= (self.height - 1) as f64) {
            return Err(Error::param("star symmetry row must lie inside the frame"));
        }
        Ok(())
    }

    /// Local period at abscissa `x`.
    pub fn period(&self, x: f64) -> f64 {
        self.period_left + (self.period_right - self.period_left) * x / (self.width - 1) as f64
    }

    /// Abscissa where the local period equals `period`.
    pub fn column_of_period(&self, period: f64) -> f64 {
        (period - self.period_left) / (self.period_right - self.period_left) * (self.width - 1) as f64
    }

    pub fn v(&self, x: f64, y: f64) -> f64 {
        let phase = std::f64::consts::TAU * (y - self.center_row) / self.period(x);
        self.amplitude * phase.cos()
    }

    /// The symmetry row as a pixel index.
    pub fn axis_row(&self) -> usize {
        self.center_row.round() as usize
    }
}

impl FieldSampler for StarSpec {
    fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        (0.0, self.v(x, y))
    }

    fn max_displacement(&self) -> f64 {
        self.amplitude
    }
}

/// Star field sampled at pixel centres.
pub fn star_field(spec: &StarSpec) -> Result<DisplacementField> {
    spec.validate()?;
    Ok(DisplacementField::from_fn(spec.width, spec.height, |x, y| {
        (0.0, spec.v(x as f64, y as f64))
    }))
}

/// Down-samples by point sampling on a `factor` lattice, then up-samples back
/// bilinearly. Pixels past the last lattice node copy that node.
pub fn resample_diagnostic(field: &DisplacementField, factor: usize) -> Result<DisplacementField> {
    let (w, h) = field.dims();
    if factor < 2 {
        return Err(Error::param("resampling factor must be >= 2"));
    }
    if factor > w.min(h) {
        return Err(Error::param(format!(
            "resampling factor {factor} exceeds the smaller dimension {}",
            w.min(h)
        )));
    }
    let cols = (w - 1) / factor + 1;
    let rows = (h - 1) / factor + 1;
    let node = |i: usize, j: usize| field.get((i * factor).min(w - 1), (j * factor).min(h - 1));
    Ok(DisplacementField::from_fn(w, h, |x, y| {
        let i = (x / factor).min(cols - 1);
        let j = (y / factor).min(rows - 1);
        let (i1, j1) = ((i + 1).min(cols - 1), (j + 1).min(rows - 1));
        let tx = if i1 == i { 0.0 } else { (x - i * factor) as f64 / factor as f64 };
        let ty = if j1 == j { 0.0 } else { (y - j * factor) as f64 / factor as f64 };
        let (a, b, c, d) = (node(i, j), node(i1, j), node(i, j1), node(i1, j1));
        let lerp = |p: f64, q: f64, r: f64, s: f64| {
            let top = p * (1.0 - tx) + q * tx;
            let bot = r * (1.0 - tx) + s * tx;
            top * (1.0 - ty) + bot * ty
        };
        (lerp(a.0, b.0, c.0, d.0), lerp(a.1, b.1, c.1, d.1))
    }))
}
