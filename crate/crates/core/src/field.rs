//! Per-pixel displacement fields.

use crate::{Error, Result};

/// Per-pixel `(u, v)` displacement in pixels, `u` horizontal and `v` vertical.
///
/// Components are stored as `f32`, matching the `.flo` interchange format
/// bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl DisplacementField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_components(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::param(format!(
                "component lengths {}/{} for a {width}x{height} field",
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a as f32);
                v.push(b as f32);
            }
        }
        Self {
            width,
            height,
            u,
            v,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i] as f64, self.v[i] as f64)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        let i = y * self.width + x;
        self.u[i] = u as f32;
        self.v[i] = v as f32;
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn u_mut(&mut self) -> &mut [f32] {
        &mut self.u
    }

    pub fn v_mut(&mut self) -> &mut [f32] {
        &mut self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, &c| m.max((c as f64).abs()))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: dims,
            });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            let (u, v) = self.get(x, y);
            f(u, v)
        })
    }

    pub fn negated(&self) -> Self {
        self.map(|u, v| (-u, -v))
    }

    pub fn zip_with(
        &self,
        other: &Self,
        mut f: impl FnMut((f64, f64), (f64, f64)) -> (f64, f64),
    ) -> Result<Self> {
        self.ensure_dims(other.dims())?;
        Ok(Self::from_fn(self.width, self.height, |x, y| {
            f(self.get(x, y), other.get(x, y))
        }))
    }

    /// Bilinear evaluation at a continuous position, clamped to the frame.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> (f64, f64) {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (xc.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (yc.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let lerp = |c: &[f32]| {
            let a = c[y0 * self.width + x0] as f64;
            let b = c[y0 * self.width + x1] as f64;
            let cc = c[y1 * self.width + x0] as f64;
            let d = c[y1 * self.width + x1] as f64;
            let top = a + (b - a) * fx;
            let bottom = cc + (d - cc) * fx;
            top + (bottom - top) * fy
        };
        (lerp(&self.u), lerp(&self.v))
    }
}

/// A displacement defined at every continuous position of the frame.
///
/// The exact renderer inverts `p = q + u(q)` through this trait, so analytic
/// fields (such as the Star field) can be rendered without ever being
/// rasterised.
pub trait FieldSampler: Sync {
    fn displacement(&self, x: f64, y: f64) -> (f64, f64);

    /// Upper bound on `|u|` and `|v|`, used to size disk look-ups.
    fn max_displacement(&self) -> f64;
}

impl FieldSampler for DisplacementField {
    fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        self.sample_bilinear(x, y)
    }

    fn max_displacement(&self) -> f64 {
        self.max_abs()
    }
}
