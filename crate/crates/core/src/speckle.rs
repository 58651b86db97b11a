//! Boolean-model speckle rendering.
//!
//! A speckle is a union of opaque disks dropped at random on a bright
//! background. Disk counts follow a Poisson law, radii follow one of three
//! laws, and centres are uniform over the frame extended by twice the mean
//! radius on each side.
//!
//! Coverage is integrated by stratified supersampling. Each of the `S × S`
//! samples of a pixel is area-weighted by a linear ramp across the disk
//! edge (the signed distance measured in units of the sample spacing), which
//! makes the estimate converge in `S` instead of jumping by `1 / S²` whenever
//! a tiny disk gains or loses a sample.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::seed::{self, stream};
use crate::{Error, Result};

pub const DEFAULT_BACKGROUND: f64 = 200.0;
pub const DEFAULT_FOREGROUND: f64 = 0.0;
pub const DEFAULT_SUPERSAMPLING: usize = 8;

/// Law of the disk radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusDist {
    /// Uniform on `[0, 2·mean]`.
    Uniform,
    Exponential,
    /// Poisson law with the given mean, zero draws rejected.
    Poisson,
}

impl RadiusDist {
    pub const ALL: [RadiusDist; 3] = [RadiusDist::Uniform, RadiusDist::Exponential, RadiusDist::Poisson];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeckleParams {
    pub radius_dist: RadiusDist,
    pub mean_radius: f64,
    pub disk_count_mean: f64,
    pub contrast: f64,
    pub width: usize,
    pub height: usize,
    pub background_level: f64,
    pub foreground_level: f64,
    /// Samples per pixel along each axis.
    pub supersampling: usize,
}

impl Default for SpeckleParams {
    fn default() -> Self {
        Self::dataset_nominal()
    }
}

impl SpeckleParams {
    /// Dataset reference frames: 256×256, 36,000 disks on average.
    pub fn dataset_nominal() -> Self {
        Self {
            radius_dist: RadiusDist::Exponential,
            mean_radius: 0.6,
            disk_count_mean: 36_000.0,
            contrast: 0.75,
            width: 256,
            height: 256,
            background_level: DEFAULT_BACKGROUND,
            foreground_level: DEFAULT_FOREGROUND,
            supersampling: DEFAULT_SUPERSAMPLING,
        }
    }

    /// Star images: 2000×501, exponential radii of mean 0.5, contrast 0.6.
    pub fn star_nominal() -> Self {
        Self {
            radius_dist: RadiusDist::Exponential,
            mean_radius: 0.5,
            disk_count_mean: 556_667.0,
            contrast: 0.6,
            width: 2000,
            height: 501,
            ..Self::dataset_nominal()
        }
    }

    /// Draws one of the dataset settings: radius law, mean radius on
    /// `0.45..=0.8` by 0.025 and contrast on `0.5..=1` by 0.05.
    pub fn dataset_mixture(seed: u64, index: u64) -> Self {
        let mut rng = seed::rng(seed, &[stream::PARAMS, index]);
        let dist = RadiusDist::ALL[rng.gen_range(0..3)];
        let radius_step = rng.gen_range(0..=14);
        let contrast_step = rng.gen_range(0..=10);
        Self {
            radius_dist: dist,
            mean_radius: 0.45 + 0.025 * radius_step as f64,
            contrast: 0.5 + 0.05 * contrast_step as f64,
            ..Self::dataset_nominal()
        }
    }

    pub fn disks_per_pixel(&self) -> f64 {
        self.disk_count_mean / (self.width * self.height) as f64
    }

    /// Gray level of a fully covered pixel.
    pub fn covered_level(&self) -> f64 {
        self.background_level - self.contrast * (self.background_level - self.foreground_level)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_radius > 0.0) {
            return Err(Error::param(format!("mean radius {} must be > 0", self.mean_radius)));
        }
        if !(self.disk_count_mean >= 0.0) || !self.disk_count_mean.is_finite() {
            return Err(Error::param("disk count mean must be finite and >= 0"));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::param(format!("contrast {} outside (0, 1]", self.contrast)));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::param("frame must be at least 8x8"));
        }
        if self.supersampling < 4 {
            return Err(Error::param("supersampling must be >= 4 per axis"));
        }
        if self.foreground_level > self.background_level {
            return Err(Error::param("foreground must not be brighter than background"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiskSet {
    pub disks: Vec<Disk>,
}

impl DiskSet {
    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            disks: self
                .disks
                .iter()
                .map(|d| Disk {
                    x: d.x + dx,
                    y: d.y + dy,
                    r: d.r,
                })
                .collect(),
        }
    }
}

/// JSON sidecar persisted next to a rendered reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSidecar {
    pub seed: u64,
    pub params: SpeckleParams,
    pub disks: Vec<Disk>,
}

impl DiskSidecar {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Draws a disk set. Deterministic in `(params, seed)`.
pub fn sample_disks(params: &SpeckleParams, seed: u64) -> Result<DiskSet> {
    params.validate()?;
    if params.disk_count_mean == 0.0 {
        return Ok(DiskSet::default());
    }
    let mut rng = seed::rng(seed, &[stream::DISKS]);
    let count = Poisson::new(params.disk_count_mean)
        .map_err(|e| Error::param(format!("disk count law: {e}")))?
        .sample(&mut rng) as usize;
    let margin = 2.0 * params.mean_radius;
    let (w, h) = (params.width as f64, params.height as f64);
    let mut radius = radius_sampler(params.radius_dist, params.mean_radius)?;
    let disks = (0..count)
        .map(|_| {
            let x = rng.gen_range(-0.5 - margin..w - 0.5 + margin);
            let y = rng.gen_range(-0.5 - margin..h - 0.5 + margin);
            let r = radius(&mut rng);
            Disk { x, y, r }
        })
        .collect();
    Ok(DiskSet { disks })
}

type RadiusFn = Box<dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> f64>;

fn radius_sampler(dist: RadiusDist, mean: f64) -> Result<RadiusFn> {
    if !(mean > 0.0) {
        return Err(Error::param(format!("radius mean {mean} must be > 0")));
    }
    Ok(match dist {
        RadiusDist::Uniform => Box::new(move |rng| {
            // open at zero so that every radius is strictly positive
            2.0 * mean * (1.0 - rng.gen::<f64>())
        }),
        RadiusDist::Exponential => {
            let law = Exp::new(1.0 / mean).map_err(|e| Error::param(e.to_string()))?;
            Box::new(move |rng| loop {
                let r = law.sample(rng);
                if r > 0.0 {
                    break r;
                }
            })
        }
        RadiusDist::Poisson => {
            let law = Poisson::new(mean).map_err(|e| Error::param(e.to_string()))?;
            Box::new(move |rng| loop {
                let r: f64 = law.sample(rng);
                if r > 0.0 {
                    break r;
                }
            })
        }
    })
}

/// Uniform grid of disk lists with one-pixel cells centred on pixel centres.
///
/// A disk is listed in every cell its influence square reaches, so the
/// coverage of any point in the grid only needs the list of the cell
/// containing it.
pub(crate) struct DiskIndex<'a> {
    disks: &'a [Disk],
    x0: isize,
    y0: isize,
    cols: usize,
    rows: usize,
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl<'a> DiskIndex<'a> {
    /// Indexes disks for queries anywhere in the frame grown by `pad` pixels.
    /// `reach` widens every disk by the extent of the edge profile.
    pub(crate) fn new(set: &'a DiskSet, width: usize, height: usize, pad: f64, reach: f64) -> Self {
        let pad = pad.ceil() as isize + 1;
        let (x0, y0) = (-pad, -pad);
        let cols = (width as isize + 2 * pad) as usize;
        let rows = (height as isize + 2 * pad) as usize;
        let cell_range = |c: f64, r: f64, origin: isize, n: usize| {
            let lo = ((c - r).round() as isize - origin).max(0);
            let hi = ((c + r).round() as isize - origin).min(n as isize - 1);
            (lo, hi)
        };
        let mut counts = vec![0u32; cols * rows + 1];
        for d in &set.disks {
            let r = d.r + reach;
            let (cx0, cx1) = cell_range(d.x, r, x0, cols);
            let (cy0, cy1) = cell_range(d.y, r, y0, rows);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    counts[cy as usize * cols + cx as usize + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut items = vec![0u32; *offsets.last().unwrap() as usize];
        for (k, d) in set.disks.iter().enumerate() {
            let r = d.r + reach;
            let (cx0, cx1) = cell_range(d.x, r, x0, cols);
            let (cy0, cy1) = cell_range(d.y, r, y0, rows);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    let cell = cy as usize * cols + cx as usize;
                    items[cursor[cell] as usize] = k as u32;
                    cursor[cell] += 1;
                }
            }
        }
        Self {
            disks: &set.disks,
            x0,
            y0,
            cols,
            rows,
            offsets,
            items,
        }
    }

    /// Area-weighted coverage of a sample cell of side `h` centred at `(x, y)`.
    ///
    /// A single edge crossing the cell is handled by a linear ramp across the
    /// edge. Cells crossed by several edges are split 4×4 (twice at most),
    /// since the max of two partial ramps underestimates their union.
    #[inline]
    pub(crate) fn coverage(&self, x: f64, y: f64, h: f64) -> f64 {
        self.coverage_at_depth(x, y, h, 2)
    }

    fn coverage_at_depth(&self, x: f64, y: f64, h: f64, depth: u32) -> f64 {
        let cx = x.round() as isize - self.x0;
        let cy = y.round() as isize - self.y0;
        if cx < 0 || cy < 0 || cx >= self.cols as isize || cy >= self.rows as isize {
            return 0.0;
        }
        let cell = cy as usize * self.cols + cx as usize;
        let (a, b) = (self.offsets[cell] as usize, self.offsets[cell + 1] as usize);
        let mut best = 0.0f64;
        let mut partial = 0;
        let mut curved = false;
        for &k in &self.items[a..b] {
            let d = &self.disks[k as usize];
            let dx = x - d.x;
            let dy = y - d.y;
            let reach = d.r + EDGE_REACH * h;
            let d2 = dx * dx + dy * dy;
            if d2 >= reach * reach {
                continue;
            }
            let dist = d2.sqrt();
            let c = if dist > 0.0 {
                edge_fraction(d.r, dist, dx / dist, dy / dist, h)
            } else {
                edge_fraction(d.r, 0.0, 1.0, 0.0, h)
            };
            if c >= 1.0 {
                return 1.0;
            }
            partial += 1;
            curved |= d.r < 2.0 * h;
            best = best.max(c);
        }
        if (partial < 2 && !curved) || partial == 0 || depth == 0 {
            return best;
        }
        let sub = h / 4.0;
        let mut sum = 0.0;
        for j in 0..4 {
            for i in 0..4 {
                let sx = x + (i as f64 - 1.5) * sub;
                let sy = y + (j as f64 - 1.5) * sub;
                sum += self.coverage_at_depth(sx, sy, sub, depth - 1);
            }
        }
        sum / 16.0
    }
}

/// How far past a disk edge, in sample cells, the edge profile is non-zero.
pub(crate) const EDGE_REACH: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Fraction of a square sample cell of side `h` lying inside a disk of radius
/// `r`, with the disk edge treated as straight across the cell. `(nx, ny)` is
/// the unit direction from the disk centre to the cell centre.
///
/// The radius is reduced so that the profile integrates to the disk area;
/// disks smaller than the cell become a cone of the same volume.
#[inline]
fn edge_fraction(r: f64, dist: f64, nx: f64, ny: f64, h: f64) -> f64 {
    if r < 0.5 * h {
        let outer = r + 0.5 * h;
        return (3.0 * r * r / (outer * outer) * (1.0 - dist / outer)).max(0.0);
    }
    let z = (r * r - h * h / 12.0).sqrt() - dist;
    let (a, b) = {
        let (p, q) = (h * nx.abs(), h * ny.abs());
        if p >= q { (p, q) } else { (q, p) }
    };
    if b < 1e-6 * h {
        return (z / a + 0.5).clamp(0.0, 1.0);
    }
    // CDF of the sum of two centred uniforms of widths a and b
    let g = |t: f64| if t > 0.0 { t * t } else { 0.0 };
    let (s, d) = (0.5 * (a + b), 0.5 * (a - b));
    if z >= s {
        return 1.0;
    }
    if z <= -s {
        return 0.0;
    }
    ((g(z + s) - g(z + d) - g(z - d) + g(z - s)) / (2.0 * a * b)).clamp(0.0, 1.0)
}

/// Renders every pixel from the coverage of `S × S` sample points, each
/// first mapped through `to_reference` (the identity for reference frames).
///
/// `to_reference` returns `None` when the mapping failed; such samples are
/// counted and treated as uncovered.
pub(crate) fn render_with<F>(
    index: &DiskIndex<'_>,
    params: &SpeckleParams,
    to_reference: F,
) -> (GrayImage, Vec<u32>)
where
    F: Fn(f64, f64) -> Option<(f64, f64)> + Sync,
{
    let (w, h) = (params.width, params.height);
    let s = params.supersampling;
    let step = 1.0 / s as f64;
    let norm = 1.0 / (s * s) as f64;
    let scale = params.contrast * (params.background_level - params.foreground_level);
    let mut data = vec![0.0; w * h];
    let mut failures = vec![0u32; w * h];
    data.par_chunks_mut(w)
        .zip(failures.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, fail))| {
            for x in 0..w {
                let mut sum = 0.0;
                let mut failed = 0;
                for j in 0..s {
                    let py = y as f64 - 0.5 + (j as f64 + 0.5) * step;
                    for i in 0..s {
                        let px = x as f64 - 0.5 + (i as f64 + 0.5) * step;
                        match to_reference(px, py) {
                            Some((qx, qy)) => sum += index.coverage(qx, qy, step),
                            None => failed += 1,
                        }
                    }
                }
                row[x] = params.background_level - scale * (sum * norm);
                fail[x] = failed;
            }
        });
    (GrayImage::from_vec(w, h, data).expect("sized"), failures)
}

/// Renders the reference frame of a disk set.
pub fn render_speckle(disks: &DiskSet, params: &SpeckleParams) -> Result<GrayImage> {
    params.validate()?;
    let h = 1.0 / params.supersampling as f64;
    let index = DiskIndex::new(disks, params.width, params.height, 0.0, EDGE_REACH * h);
    Ok(render_with(&index, params, |x, y| Some((x, y))).0)
}

/// Thresholds of the automatic reference-frame screening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningThresholds {
    /// Minimum of `std / mean` over the frame.
    pub min_rms_contrast: f64,
    /// Gradient magnitude (gray levels per pixel) below which a pixel is flat.
    pub flat_gradient: f64,
    /// Largest allowed 4-connected area of flat pixels.
    pub max_flat_area: usize,
}

impl Default for ScreeningThresholds {
    fn default() -> Self {
        Self {
            min_rms_contrast: 0.12,
            flat_gradient: 2.0,
            max_flat_area: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub rms_contrast: f64,
    pub largest_flat_area: usize,
    pub accepted: bool,
}

/// Smooth random texture: a sum of Gaussian blobs of 1/e radius `radius`,
/// about 0.6 blobs per `radius²`.
///
/// Its spectrum is negligible near Nyquist, so resampling kernels shift it
/// almost exactly. Used to check registration independently of the
/// interpolation bias of hard-edged speckle.
pub fn gaussian_texture(width: usize, height: usize, radius: f64, seed: u64) -> Result<GrayImage> {
    if !(radius > 0.0) {
        return Err(Error::param(format!("blob radius {radius} must be > 0")));
    }
    let mut rng = seed::rng(seed, &[stream::DISKS]);
    let pad = 3.0 * radius;
    let (wf, hf) = (width as f64 + 2.0 * pad, height as f64 + 2.0 * pad);
    let n = (0.6 * wf * hf / (radius * radius)).round() as usize;
    let blobs: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen::<f64>() * wf - pad, rng.gen::<f64>() * hf - pad))
        .collect();
    let inv = 1.0 / (radius * radius);
    Ok(GrayImage::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let sum: f64 = blobs
            .iter()
            .filter(|b| (b.0 - x).abs() < pad && (b.1 - y).abs() < pad)
            .map(|b| (-((b.0 - x).powi(2) + (b.1 - y).powi(2)) * inv).exp())
            .sum();
        30.0 + 90.0 * sum
    }))
}

/// Measures the two screening statistics of a reference frame.
pub fn screening_report(img: &GrayImage, t: &ScreeningThresholds) -> ScreeningReport {
    let mean = img.mean();
    let rms_contrast = if mean > 0.0 { img.std_dev() / mean } else { 0.0 };
    let largest_flat_area = largest_flat_blob(img, t.flat_gradient);
    ScreeningReport {
        rms_contrast,
        largest_flat_area,
        accepted: rms_contrast >= t.min_rms_contrast && largest_flat_area <= t.max_flat_area,
    }
}

/// Accepts a frame with enough contrast and no large texture-free spot.
pub fn screen_reference(img: &GrayImage, t: &ScreeningThresholds) -> bool {
    screening_report(img, t).accepted
}

fn largest_flat_blob(img: &GrayImage, threshold: f64) -> usize {
    let (w, h) = img.dims();
    let at = |x: isize, y: isize| img.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut flat = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            flat[y as usize * w + x as usize] = gx.hypot(gy) < threshold;
        }
    }
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut largest = 0;
    for start in 0..w * h {
        if !flat[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if flat[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        largest = largest.max(area);
    }
    largest
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(count: f64) -> SpeckleParams {
        SpeckleParams {
            width: 64,
            height: 48,
            disk_count_mean: count,
            ..SpeckleParams::dataset_nominal()
        }
    }

    #[test]
    fn table_density() {
        let p = SpeckleParams::dataset_nominal();
        assert!((p.disks_per_pixel() - 0.549).abs() < 5e-4);
        let s = SpeckleParams::star_nominal();
        assert!((s.disks_per_pixel() - 0.556).abs() < 5e-4);
    }

    #[test]
    fn zero_mean_count_gives_empty_set() {
        let set = sample_disks(&small(0.0), 1).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = small(10.0);
        p.mean_radius = 0.0;
        assert!(sample_disks(&p, 1).is_err());
        let mut p = small(10.0);
        p.contrast = 1.5;
        assert!(p.validate().is_err());
        let mut p = small(10.0);
        p.supersampling = 2;
        assert!(p.validate().is_err());
        assert!(radius_sampler(RadiusDist::Poisson, -1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = small(500.0);
        assert_eq!(sample_disks(&p, 9).unwrap(), sample_disks(&p, 9).unwrap());
        assert_ne!(sample_disks(&p, 9).unwrap(), sample_disks(&p, 10).unwrap());
    }

    #[test]
    fn exponential_radius_mean_converges() {
        let mut rng = seed::rng(3, &[]);
        let mut draw = radius_sampler(RadiusDist::Exponential, 0.5).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| draw(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn uniform_and_poisson_radii_positive() {
        let mut rng = seed::rng(4, &[]);
        for dist in [RadiusDist::Uniform, RadiusDist::Poisson] {
            let mut draw = radius_sampler(dist, 0.6).unwrap();
            assert!((0..10_000).all(|_| draw(&mut rng) > 0.0));
        }
    }

    #[test]
    fn empty_set_renders_background() {
        let p = small(0.0);
        let img = render_speckle(&DiskSet::default(), &p).unwrap();
        assert!(img.as_slice().iter().all(|&v| v == p.background_level));
    }

    #[test]
    fn large_disk_covers_centre_pixel() {
        let p = small(0.0);
        let set = DiskSet {
            disks: vec![Disk { x: 30.0, y: 20.0, r: 10.0 }],
        };
        let img = render_speckle(&set, &p).unwrap();
        assert_eq!(img.get(30, 20), p.covered_level());
        assert_eq!(img.get(2, 2), p.background_level);
    }

    #[test]
    fn intensities_stay_between_levels() {
        let p = small(1500.0);
        let img = render_speckle(&sample_disks(&p, 5).unwrap(), &p).unwrap();
        let lo = p.covered_level();
        assert!(img.as_slice().iter().all(|&v| v >= lo - 1e-12 && v <= p.background_level));
    }

    #[test]
    fn supersampling_converges() {
        let mut p = SpeckleParams::dataset_nominal();
        p.contrast = 1.0;
        p.mean_radius = 0.45;
        let set = sample_disks(&p, 11).unwrap();
        let coarse = render_speckle(&set, &p).unwrap();
        p.supersampling = 16;
        let fine = render_speckle(&set, &p).unwrap();
        let max = coarse
            .as_slice()
            .iter()
            .zip(fine.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1.0, "max diff {max}");
    }

    #[test]
    fn higher_contrast_darkens_covered_pixels() {
        let mut p = small(800.0);
        let set = sample_disks(&p, 2).unwrap();
        let a = render_speckle(&set, &p).unwrap();
        p.contrast = 0.9;
        let b = render_speckle(&set, &p).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            if *x < p.background_level {
                assert!(y < x);
            } else {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn screening_rejects_uniform_and_giant_spot() {
        let t = ScreeningThresholds::default();
        assert!(!screen_reference(&GrayImage::new(256, 256, 200.0), &t));
        let mut p = SpeckleParams::dataset_nominal();
        p.disk_count_mean = 0.0;
        let set = DiskSet {
            disks: vec![Disk { x: 128.0, y: 128.0, r: 100.0 }],
        };
        let img = render_speckle(&set, &p).unwrap();
        assert!(!screen_reference(&img, &t));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = small(50.0);
        let sidecar = DiskSidecar {
            seed: 4,
            params: p.clone(),
            disks: sample_disks(&p, 4).unwrap().disks,
        };
        let path = dir.path().join("disks.json");
        sidecar.save(&path).unwrap();
        assert_eq!(DiskSidecar::load(&path).unwrap(), sidecar);
    }
}
