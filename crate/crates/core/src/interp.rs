//! Image interpolation kernels.
//!
//! Two cubic families are used in the crate:
//!
//! - the Keys cubic convolution kernel (`a = -0.5`, a.k.a. Catmull-Rom),
//!   which interpolates samples directly and reproduces quadratics. It drives
//!   image warping and bicubic node interpolation of random fields.
//! - the cubic B-spline, which needs a recursive prefilter but is `C²` and
//!   gives consistent gradients. The DIC solver samples images through it.

use crate::image::GrayImage;

/// Interpolation kernel used for image and node resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Bilinear,
    Bicubic,
}

/// Keys cubic convolution weights for the four taps `floor(x) - 1 ..= floor(x) + 2`.
#[inline]
pub fn keys_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let far = |d: f64| ((A * d - 5.0 * A) * d + 8.0 * A) * d - 4.0 * A;
    let near = |d: f64| ((A + 2.0) * d - (A + 3.0)) * d * d + 1.0;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Whole-sample mirror extension: `-1 → 1`, `n → n - 2`.
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Bilinear sample with edge-clamped neighbours.
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = img.dims();
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let p = |dx: isize, dy: isize| img.get(clamp_index(xi + dx, w), clamp_index(yi + dy, h));
    let top = p(0, 0) * (1.0 - fx) + p(1, 0) * fx;
    let bottom = p(0, 1) * (1.0 - fx) + p(1, 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Keys bicubic sample with edge-clamped neighbours.
pub fn sample_bicubic(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = img.dims();
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = keys_weights(x - x0);
    let wy = keys_weights(y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    for (j, wyj) in wy.iter().enumerate() {
        let row = img.row(clamp_index(yi + j as isize - 1, h));
        let mut r = 0.0;
        for (i, wxi) in wx.iter().enumerate() {
            r += wxi * row[clamp_index(xi + i as isize - 1, w)];
        }
        acc += wyj * r;
    }
    acc
}

pub fn sample(img: &GrayImage, x: f64, y: f64, interp: Interp) -> f64 {
    match interp {
        Interp::Bilinear => sample_bilinear(img, x, y),
        Interp::Bicubic => sample_bicubic(img, x, y),
    }
}

/// Cubic B-spline interpolant of an image (mirror boundary conditions).
#[derive(Debug, Clone)]
pub struct BSplineImage {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
}

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

fn prefilter_line(line: &mut [f64]) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for c in line.iter_mut() {
        *c *= gain;
    }
    // causal initialisation, truncated where z^k drops below 1e-16
    let horizon = ((-16.0f64 * 10f64.ln()) / z.abs().ln()).ceil() as usize;
    let init = if horizon < n {
        let mut zn = z;
        let mut sum = line[0];
        for c in line.iter().take(horizon).skip(1) {
            sum += zn * c;
            zn *= z;
        }
        sum
    } else {
        let mut zn = z;
        let iz = 1.0 / z;
        let mut z2n = z.powi(n as i32 - 1);
        let mut sum = line[0] + z2n * line[n - 1];
        z2n *= z2n * iz;
        for c in line.iter().take(n - 1).skip(1) {
            sum += (zn + z2n) * c;
            zn *= z;
            z2n *= iz;
        }
        sum / (1.0 - zn * zn)
    };
    line[0] = init;
    for k in 1..n {
        line[k] += z * line[k - 1];
    }
    line[n - 1] = (z / (z * z - 1.0)) * (line[n - 1] + z * line[n - 2]);
    for k in (0..n - 1).rev() {
        line[k] = z * (line[k + 1] - line[k]);
    }
}

#[inline]
fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

#[inline]
fn bspline_dweights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let s = 1.0 - t;
    [
        -0.5 * s * s,
        1.5 * t2 - 2.0 * t,
        -1.5 * t2 + t + 0.5,
        0.5 * t2,
    ]
}

impl BSplineImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = img.dims();
        let mut coeffs = img.as_slice().to_vec();
        for row in coeffs.chunks_mut(w) {
            prefilter_line(row);
        }
        let mut col = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                col[y] = coeffs[y * w + x];
            }
            prefilter_line(&mut col);
            for y in 0..h {
                coeffs[y * w + x] = col[y];
            }
        }
        Self {
            width: w,
            height: h,
            coeffs,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn gather(&self, x: f64, y: f64, wx: &[f64; 4], wy: &[f64; 4]) -> f64 {
        let xi = x.floor() as isize - 1;
        let yi = y.floor() as isize - 1;
        let (w, h) = (self.width, self.height);
        let interior = xi >= 0 && yi >= 0 && xi + 3 < w as isize && yi + 3 < h as isize;
        let mut acc = 0.0;
        if interior {
            let base = yi as usize * w + xi as usize;
            for (j, wyj) in wy.iter().enumerate() {
                let r = &self.coeffs[base + j * w..base + j * w + 4];
                acc += wyj * (wx[0] * r[0] + wx[1] * r[1] + wx[2] * r[2] + wx[3] * r[3]);
            }
        } else {
            for (j, wyj) in wy.iter().enumerate() {
                let row = mirror_index(yi + j as isize, h) * w;
                let mut r = 0.0;
                for (i, wxi) in wx.iter().enumerate() {
                    r += wxi * self.coeffs[row + mirror_index(xi + i as isize, w)];
                }
                acc += wyj * r;
            }
        }
        acc
    }

    /// Interpolated intensity at a continuous position.
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let wx = bspline_weights(x - x.floor());
        let wy = bspline_weights(y - y.floor());
        self.gather(x, y, &wx, &wy)
    }

    /// Intensity and its `(∂/∂x, ∂/∂y)` at a continuous position.
    pub fn value_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let tx = x - x.floor();
        let ty = y - y.floor();
        let (wx, wy) = (bspline_weights(tx), bspline_weights(ty));
        let (dx, dy) = (bspline_dweights(tx), bspline_dweights(ty));
        (
            self.gather(x, y, &wx, &wy),
            self.gather(x, y, &dx, &wy),
            self.gather(x, y, &wx, &dy),
        )
    }
}
