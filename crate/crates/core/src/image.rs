//! Scalar-intensity rasters and their PNG persistence.

use std::path::Path;

use crate::{Error, Result};

/// Single-channel image with continuous gray levels, stored row-major.
///
/// Pixel `(x, y)` has its centre at coordinates `(x, y)` and covers the
/// square `[x - 0.5, x + 0.5] × [y - 0.5, y + 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// On-disk sample depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_level(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::param(format!("unsupported bit depth {other}"))),
        }
    }
}

/// Ratio between the 16-bit and 8-bit full scales.
pub const SIXTEEN_PER_EIGHT: f64 = 65535.0 / 255.0;

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::param(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
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
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Population standard deviation of the gray levels.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / self.data.len().max(1) as f64;
        var.sqrt()
    }

    /// Copy of the rectangle `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::param("crop rectangle leaves the frame"));
        }
        Ok(Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub fn ensure_same_dims(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() != other {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other,
            });
        }
        Ok(())
    }

    /// Writes the image as a grayscale PNG.
    ///
    /// Values are interpreted on the 8-bit scale. At 16 bits they are
    /// rescaled by 65535/255 before rounding, so the same image can be saved
    /// at either depth. Out-of-range values are clipped.
    pub fn save_png(&self, path: &Path, depth: BitDepth) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        match depth {
            BitDepth::Eight => {
                let buf: Vec<u8> = self
                    .data
                    .iter()
                    .map(|&v| crate::warp::quantize_level(v, depth) as u8)
                    .collect();
                ::image::GrayImage::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions")
                    .save(path)?;
            }
            BitDepth::Sixteen => {
                let buf: Vec<u16> = self
                    .data
                    .iter()
                    .map(|&v| crate::warp::quantize_level(v * SIXTEEN_PER_EIGHT, depth) as u16)
                    .collect();
                ::image::ImageBuffer::<::image::Luma<u16>, Vec<u16>>::from_raw(w, h, buf)
                    .expect("buffer length matches dimensions")
                    .save(path)?;
            }
        }
        Ok(())
    }

    /// Loads a grayscale PNG; 16-bit files are mapped back to the 8-bit scale.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = ::image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = match img {
            ::image::DynamicImage::ImageLuma16(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / SIXTEEN_PER_EIGHT)
                .collect(),
            other => other
                .into_luma8()
                .into_raw()
                .into_iter()
                .map(f64::from)
                .collect(),
        };
        Self::from_vec(w, h, data)
    }
}
