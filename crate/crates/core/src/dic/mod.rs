//! Subset-based local digital image correlation.
//!
//! Each point of interest is registered independently by inverse-compositional
//! Gauss-Newton on the zero-normalized sum of squared differences (ZNSSD),
//! with first- or second-order subset shape functions and cubic B-spline
//! interpolation of the deformed image.

mod dense;
mod icgn;
mod linalg;
mod preshift;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dense::{dic_dense, dic_rows, DicField, PointFlag};
pub use icgn::{icgn_subset, icgn_subset_traced, Correlator, SubsetReference};
pub use preshift::{band_ranges, compose_preshift, integer_preshift, realign_bands, BandShift, Preshift};

/// Polynomial order of the subset shape function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeOrder {
    First,
    Second,
}

impl ShapeOrder {
    pub fn from_int(order: u8) -> Result<Self> {
        match order {
            1 => Ok(ShapeOrder::First),
            2 => Ok(ShapeOrder::Second),
            other => Err(Error::param(format!("shape-function order {other} (expected 1 or 2)"))),
        }
    }

    /// Number of warp parameters.
    pub fn n_params(self) -> usize {
        match self {
            ShapeOrder::First => 6,
            ShapeOrder::Second => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicConfig {
    /// Subset half-size; the window is `2M + 1` pixels wide.
    pub half_size: usize,
    pub order: ShapeOrder,
    /// Spacing between points of interest.
    pub step: usize,
    pub max_iters: usize,
    /// Convergence threshold on the update norm, in pixels.
    pub conv_tol: f64,
}

impl Default for DicConfig {
    fn default() -> Self {
        Self {
            half_size: 5,
            order: ShapeOrder::First,
            step: 1,
            max_iters: 50,
            conv_tol: 1e-4,
        }
    }
}

impl DicConfig {
    pub fn with_window(window: usize, order: ShapeOrder) -> Result<Self> {
        if window % 2 == 0 {
            return Err(Error::param(format!("subset window {window} must be odd")));
        }
        let cfg = Self {
            half_size: window / 2,
            order,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window(&self) -> usize {
        2 * self.half_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_size < 3 {
            return Err(Error::param(format!("subset half-size {} must be >= 3", self.half_size)));
        }
        if self.step < 1 {
            return Err(Error::param("step must be >= 1"));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::param("convergence tolerance must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be >= 1"));
        }
        Ok(())
    }
}

/// Warp parameters.
///
/// Layout: `[u, ux, uy, v, vx, vy]` for first order, and
/// `[u, ux, uy, uxx, uxy, uyy, v, vx, vy, vxx, vxy, vyy]` for second order,
/// where the displacement of subset offset `(dx, dy)` is
/// `u + ux·dx + uy·dy + ½uxx·dx² + uxy·dx·dy + ½uyy·dy²` (same for `v`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub order: ShapeOrder,
    pub values: Vec<f64>,
}

impl ShapeParams {
    pub fn zero(order: ShapeOrder) -> Self {
        Self {
            order,
            values: vec![0.0; order.n_params()],
        }
    }

    pub fn translation(order: ShapeOrder, u: f64, v: f64) -> Self {
        let mut p = Self::zero(order);
        p.set_translation(u, v);
        p
    }

    fn v_offset(&self) -> usize {
        self.order.n_params() / 2
    }

    pub fn u(&self) -> f64 {
        self.values[0]
    }

    pub fn v(&self) -> f64 {
        self.values[self.v_offset()]
    }

    pub fn set_translation(&mut self, u: f64, v: f64) {
        let k = self.v_offset();
        self.values[0] = u;
        self.values[k] = v;
    }

    /// Displacement of subset offset `(dx, dy)`.
    #[inline]
    pub fn displacement(&self, dx: f64, dy: f64) -> (f64, f64) {
        let p = &self.values;
        match self.order {
            ShapeOrder::First => (p[0] + p[1] * dx + p[2] * dy, p[3] + p[4] * dx + p[5] * dy),
            ShapeOrder::Second => {
                let (hx, hxy, hy) = (0.5 * dx * dx, dx * dy, 0.5 * dy * dy);
                (
                    p[0] + p[1] * dx + p[2] * dy + p[3] * hx + p[4] * hxy + p[5] * hy,
                    p[6] + p[7] * dx + p[8] * dy + p[9] * hx + p[10] * hxy + p[11] * hy,
                )
            }
        }
    }

    /// Converts to another order, dropping or zero-filling second-order terms.
    pub fn with_order(&self, order: ShapeOrder) -> Self {
        if order == self.order {
            return self.clone();
        }
        let mut out = Self::zero(order);
        let (src, dst) = (self.v_offset(), out.v_offset());
        for k in 0..3 {
            out.values[k] = self.values[k];
            out.values[dst + k] = self.values[src + k];
        }
        out
    }
}

/// Outcome of one subset registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub params: ShapeParams,
    /// Final ZNSSD value.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last accepted update, in pixels.
    pub last_update: f64,
}

impl SubsetResult {
    pub fn initial(order: ShapeOrder) -> Self {
        Self::from_params(ShapeParams::zero(order))
    }

    pub fn from_params(params: ShapeParams) -> Self {
        Self {
            params,
            residual: f64::NAN,
            iterations: 0,
            converged: false,
            last_update: f64::INFINITY,
        }
    }

    pub fn u(&self) -> f64 {
        self.params.u()
    }

    pub fn v(&self) -> f64 {
        self.params.v()
    }
}
