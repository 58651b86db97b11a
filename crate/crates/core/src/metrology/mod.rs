//! Scoring of displacement estimates against ground truth.

mod pib;
mod strain;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::DisplacementField;
use crate::field_gen::StarSpec;
use crate::{Error, Result};

pub use pib::{pib_experiment, ripple_rms, PibMode, PibOutcome, PibSetup};
pub use strain::{strain, StrainComponent, StrainMap};

/// Default half-width of the bias smoothing window is `smooth_width / 2`.
pub const DEFAULT_SMOOTH_WIDTH: usize = 30;
pub const DEFAULT_THRESHOLD: f64 = 0.10;

/// Rectangular zone of evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationROI {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl EvaluationROI {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width,
            height,
        }
    }

    /// Default zone for a star frame: 20 px off the top, bottom and left
    /// borders, ending at three quarters of the width so that the high
    /// frequencies weigh more. On 2000×501 this is `[20, 1500) × [20, 481)`.
    pub fn star_default(star: &StarSpec) -> Self {
        let margin = 20.min(star.width / 4).min(star.height / 4);
        let right = (star.width * 3 / 4).max(margin + 1);
        Self {
            x0: margin,
            y0: margin,
            width: right - margin,
            height: star.height - 2 * margin,
        }
    }

    pub fn x_end(&self) -> usize {
        self.x0 + self.width
    }

    pub fn y_end(&self) -> usize {
        self.y0 + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.x_end() > dims.0 || self.y_end() > dims.1 {
            return Err(Error::param(format!(
                "ROI {}x{} at ({}, {}) does not fit a {}x{} field",
                self.width, self.height, self.x0, self.y0, dims.0, dims.1
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.y0..self.y_end()
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.x0..self.x_end()
    }
}

fn check_pair(est: &DisplacementField, gt: &DisplacementField, roi: &EvaluationROI) -> Result<()> {
    est.ensure_dims(gt.dims())?;
    roi.validate(est.dims())
}

/// Average endpoint error over the ROI.
pub fn aee(est: &DisplacementField, gt: &DisplacementField, roi: &EvaluationROI) -> Result<f64> {
    check_pair(est, gt, roi)?;
    let mut sum = 0.0;
    for y in roi.rows() {
        for x in roi.cols() {
            let (ue, ve) = est.get(x, y);
            let (ug, vg) = gt.get(x, y);
            sum += (ue - ug).hypot(ve - vg);
        }
    }
    Ok(sum / roi.area() as f64)
}

/// Mean absolute error of the vertical component over the ROI.
pub fn mae_v(est: &DisplacementField, gt: &DisplacementField, roi: &EvaluationROI) -> Result<f64> {
    check_pair(est, gt, roi)?;
    let mut sum = 0.0;
    for y in roi.rows() {
        for x in roi.cols() {
            sum += (est.get(x, y).1 - gt.get(x, y).1).abs();
        }
    }
    Ok(sum / roi.area() as f64)
}

/// Values of a curve along the star axis, starting at column `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisProfile {
    pub x0: usize,
    pub values: Vec<f64>,
}

impl AxisProfile {
    /// `v` along the symmetry row, over the columns of `roi`.
    pub fn along_axis(field: &DisplacementField, star: &StarSpec, roi: &EvaluationROI) -> Result<Self> {
        roi.validate(field.dims())?;
        let y = star.axis_row();
        if y >= field.height() {
            return Err(Error::param("star axis lies outside the field"));
        }
        Ok(Self {
            x0: roi.x0,
            values: roi.cols().map(|x| field.get(x, y).1).collect(),
        })
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.x0..self.x0 + self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarCurves {
    /// Estimated `v` along the axis.
    pub profile: AxisProfile,
    /// Column means of `|v_e - v_g|` over the ROI rows.
    pub column_mae: AxisProfile,
}

pub fn attenuation_and_columns(est: &DisplacementField, star: &StarSpec, roi: &EvaluationROI) -> Result<StarCurves> {
    star.validate()?;
    est.ensure_dims((star.width, star.height))?;
    let profile = AxisProfile::along_axis(est, star, roi)?;
    let column_mae = roi
        .cols()
        .map(|x| {
            roi.rows()
                .map(|y| (est.get(x, y).1 - star.v(x as f64, y as f64)).abs())
                .sum::<f64>()
                / roi.height as f64
        })
        .collect();
    Ok(StarCurves {
        profile,
        column_mae: AxisProfile {
            x0: roi.x0,
            values: column_mae,
        },
    })
}

/// Centred moving average over `2·(width/2) + 1` samples, shrunk at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = vec![0.0; values.len() + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Relative bias `(A - p) / A` of an axis profile.
pub fn relative_bias(profile: &AxisProfile, star: &StarSpec) -> AxisProfile {
    AxisProfile {
        x0: profile.x0,
        values: profile.values.iter().map(|p| (star.amplitude - p) / star.amplitude).collect(),
    }
}

/// Smallest period whose smoothed relative bias is at most `threshold`,
/// scanning from the high-frequency (left) end.
///
/// The crossing column is interpolated linearly between the bracketing
/// columns and mapped to a period through the star law.
pub fn spatial_resolution(profile: &AxisProfile, star: &StarSpec, threshold: f64, smooth_width: usize) -> Result<f64> {
    star.validate()?;
    if profile.values.is_empty() || profile.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("profile is empty or not finite"));
    }
    let smoothed = moving_average(&relative_bias(profile, star).values, smooth_width);
    let x0 = profile.x0 as f64;
    if smoothed[0] <= threshold {
        return Ok(star.period(x0));
    }
    match smoothed.iter().position(|&b| b <= threshold) {
        Some(i) => {
            let (before, after) = (smoothed[i - 1], smoothed[i]);
            let frac = (before - threshold) / (before - after);
            Ok(star.period(x0 + (i - 1) as f64 + frac))
        }
        None => Err(Error::OutOfRange { threshold, curve: smoothed }),
    }
}

/// Standard deviation over the ROI of the `v` difference between an
/// estimate on noisy frames and one on noiseless frames.
pub fn displacement_resolution(noisy: &DisplacementField, clean: &DisplacementField, roi: &EvaluationROI) -> Result<f64> {
    check_pair(noisy, clean, roi)?;
    let n = roi.area() as f64;
    let diffs = || roi.rows().flat_map(move |y| roi.cols().map(move |x| noisy.get(x, y).1 - clean.get(x, y).1));
    let mean = diffs().sum::<f64>() / n;
    let var = diffs().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

pub fn alpha_indicator(d: f64, sigma_u: f64) -> f64 {
    d * sigma_u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetrologySettings {
    pub roi: EvaluationROI,
    pub threshold: f64,
    pub smooth_width: usize,
}

impl MetrologySettings {
    pub fn for_star(star: &StarSpec) -> Self {
        Self {
            roi: EvaluationROI::star_default(star),
            threshold: DEFAULT_THRESHOLD,
            smooth_width: DEFAULT_SMOOTH_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetrologyReport {
    pub settings: MetrologySettings,
    pub aee: f64,
    pub mae: f64,
    pub per_column_mae: AxisProfile,
    pub attenuation_profile: AxisProfile,
    /// Spatial resolution, pixels.
    pub d: f64,
    /// Displacement resolution, pixels.
    pub sigma_u: f64,
    /// `d · sigma_u`, pixels².
    pub alpha: f64,
}

impl MetrologyReport {
    /// Scores a star estimate; `noisy` is the estimate on the noisy pair, if
    /// any (otherwise `sigma_u = 0`).
    pub fn star(
        clean: &DisplacementField,
        noisy: Option<&DisplacementField>,
        star: &StarSpec,
        settings: &MetrologySettings,
    ) -> Result<Self> {
        let gt = crate::field_gen::star_field(star)?;
        let roi = &settings.roi;
        let curves = attenuation_and_columns(clean, star, roi)?;
        let d = spatial_resolution(&curves.profile, star, settings.threshold, settings.smooth_width)?;
        let sigma_u = match noisy {
            Some(n) => displacement_resolution(n, clean, roi)?,
            None => 0.0,
        };
        Ok(Self {
            settings: *settings,
            aee: aee(clean, &gt, roi)?,
            mae: mae_v(clean, &gt, roi)?,
            per_column_mae: curves.column_mae,
            attenuation_profile: curves.profile,
            d,
            sigma_u,
            alpha: alpha_indicator(d, sigma_u),
        })
    }

    /// Curves as CSV: `column,period,profile,bias,smoothed_bias,column_mae`.
    pub fn write_curves_csv(&self, star: &StarSpec, path: &Path) -> Result<()> {
        let bias = relative_bias(&self.attenuation_profile, star);
        let smoothed = moving_average(&bias.values, self.settings.smooth_width);
        let mut out = String::from("column,period,profile,bias,smoothed_bias,column_mae\n");
        for (i, x) in self.attenuation_profile.columns().enumerate() {
            out.push_str(&format!(
                "{x},{},{},{},{},{}\n",
                star.period(x as f64),
                self.attenuation_profile.values[i],
                bias.values[i],
                smoothed[i],
                self.per_column_mae.values[i]
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Signed `v` error map, row-major.
pub fn v_error_map(est: &DisplacementField, gt: &DisplacementField) -> Result<Vec<f64>> {
    est.ensure_dims(gt.dims())?;
    Ok(est.v().iter().zip(gt.v()).map(|(e, g)| (e - g) as f64).collect())
}

/// Writes a diverging heat map: `-scale` is pure blue, 0 white, `+scale`
/// pure red, linear in between and saturated outside.
pub fn save_heat_map(values: &[f64], width: usize, height: usize, scale: f64, path: &Path) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: (width, height),
            got: (values.len(), 1),
        });
    }
    if !(scale > 0.0) {
        return Err(Error::param("heat map scale must be > 0"));
    }
    let mut img = image::RgbImage::new(width as u32, height as u32);
    for (i, v) in values.iter().enumerate() {
        let t = (v / scale).clamp(-1.0, 1.0);
        let fade = (255.0 * (1.0 - t.abs())).round() as u8;
        let px = if t >= 0.0 { [255, fade, fade] } else { [fade, fade, 255] };
        img.put_pixel((i % width) as u32, (i / width) as u32, image::Rgb(px));
    }
    img.save(path).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn random_field(w: usize, h: usize, seed: u64) -> DisplacementField {
        let mut rng = crate::seed::rng(seed, &[]);
        DisplacementField::from_fn(w, h, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn aee_and_mae_trivial_cases() {
        let gt = DisplacementField::constant(6, 4, 0.3, 0.4);
        let roi = EvaluationROI::full(6, 4);
        assert_eq!(aee(&gt, &gt, &roi).unwrap(), 0.0);
        let zero = DisplacementField::zeros(6, 4);
        assert!((aee(&zero, &gt, &roi).unwrap() - 0.5).abs() < 1e-7);
        let shifted = gt.map(|u, v| (u, v + 0.1));
        assert!((mae_v(&shifted, &gt, &roi).unwrap() - 0.1).abs() < 1e-7);
        let u_broken = gt.map(|u, v| (u + 3.0, v));
        assert_eq!(mae_v(&u_broken, &gt, &roi).unwrap(), 0.0);
        assert!(aee(&u_broken, &gt, &roi).unwrap() > 2.9);
        assert!(aee(&zero, &DisplacementField::zeros(5, 4), &roi).is_err());
    }

    #[test]
    fn metrics_match_double_loop() {
        for seed in 0..100 {
            let (est, gt) = (random_field(5, 5, seed), random_field(5, 5, seed + 1000));
            let roi = EvaluationROI::full(5, 5);
            let (mut a, mut m) = (0.0, 0.0);
            for y in 0..5 {
                for x in 0..5 {
                    let i = y * 5 + x;
                    let du = est.u()[i] as f64 - gt.u()[i] as f64;
                    let dv = est.v()[i] as f64 - gt.v()[i] as f64;
                    a += (du * du + dv * dv).sqrt();
                    m += dv.abs();
                }
            }
            let (a, m) = (a / 25.0, m / 25.0);
            assert!((aee(&est, &gt, &roi).unwrap() - a).abs() <= 1e-12 * a);
            assert!((mae_v(&est, &gt, &roi).unwrap() - m).abs() <= 1e-12 * m);
        }
    }

    #[test]
    fn roi_restricts_the_mean() {
        let gt = DisplacementField::zeros(8, 8);
        let mut est = gt.clone();
        est.set(0, 0, 0.0, 5.0);
        let inner = EvaluationROI {
            x0: 1,
            y0: 1,
            width: 6,
            height: 6,
        };
        assert_eq!(mae_v(&est, &gt, &inner).unwrap(), 0.0);
        assert!(EvaluationROI { x0: 4, ..inner }.validate((8, 8)).is_err());
    }

    #[test]
    fn star_default_roi() {
        let roi = EvaluationROI::star_default(&StarSpec::default());
        assert_eq!((roi.x0, roi.x_end(), roi.y0, roi.y_end()), (20, 1500, 20, 481));
    }

    fn small_star() -> StarSpec {
        StarSpec {
            width: 400,
            height: 41,
            center_row: 20.0,
            ..StarSpec::default()
        }
    }

    #[test]
    fn curves_of_exact_and_damped_estimates() {
        let star = small_star();
        let gt = crate::field_gen::star_field(&star).unwrap();
        let roi = EvaluationROI::star_default(&star);
        let c = attenuation_and_columns(&gt, &star, &roi).unwrap();
        assert!(c.profile.values.iter().all(|&p| (p - 0.5).abs() < 1e-7));
        assert!(c.column_mae.values.iter().all(|&m| m < 1e-7));
        let damped = gt.map(|u, v| (u, 0.9 * v));
        let c = attenuation_and_columns(&damped, &star, &roi).unwrap();
        assert!(c.profile.values.iter().all(|&p| (p - 0.45).abs() < 1e-6));
    }

    #[test]
    fn folded_normal_column_mae() {
        let star = StarSpec {
            width: 200,
            height: 4001,
            center_row: 2000.0,
            ..StarSpec::default()
        };
        let gt = crate::field_gen::star_field(&star).unwrap();
        let mut rng = crate::seed::rng(5, &[]);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let noisy = gt.map(|u, v| (u, v + normal.sample(&mut rng)));
        let roi = EvaluationROI::star_default(&star);
        let c = attenuation_and_columns(&noisy, &star, &roi).unwrap();
        let expected = 0.02 * (2.0 / std::f64::consts::PI).sqrt();
        for m in &c.column_mae.values {
            assert!((m - expected).abs() < 0.1 * expected, "{m}");
        }
    }

    #[test]
    fn moving_average_shrinks_at_ends() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.0, 3.0, 3.5]);
        assert_eq!(moving_average(&[2.0; 5], 30), vec![2.0; 5]);
    }

    fn profile_from_bias(star: &StarSpec, bias: impl Fn(f64) -> f64) -> AxisProfile {
        AxisProfile {
            x0: 0,
            values: (0..star.width)
                .map(|x| star.amplitude * (1.0 - bias(star.period(x as f64))))
                .collect(),
        }
    }

    #[test]
    fn resolution_of_synthetic_bias() {
        let star = StarSpec {
            period_left: 2.0,
            ..StarSpec::default()
        };
        let flat = profile_from_bias(&star, |_| 0.0);
        assert_eq!(spatial_resolution(&flat, &star, 0.1, 30).unwrap(), star.period_left);
        let p = profile_from_bias(&star, |p| 1.0 / (p + 1.0));
        let d = spatial_resolution(&p, &star, 0.1, 30).unwrap();
        let period_per_column = star.period(1.0) - star.period(0.0);
        assert!((d - 9.0).abs() <= 15.0 * period_per_column, "{d}");
        // unsmoothed crossing is exact up to linear interpolation
        let d1 = spatial_resolution(&p, &star, 0.1, 1).unwrap();
        assert!((d1 - 9.0).abs() < 0.01, "{d1}");
        // 10 % attenuation of A = 0.5 is an amplitude of 0.45
        assert!((star.amplitude * (1.0 - 1.0 / (d1 + 1.0)) - 0.45).abs() < 1e-3);
    }

    #[test]
    fn resolution_never_crossing_is_an_error() {
        let star = StarSpec::default();
        let p = profile_from_bias(&star, |_| 0.5);
        assert!(matches!(
            spatial_resolution(&p, &star, 0.1, 30),
            Err(Error::OutOfRange { ref curve, .. }) if curve.len() == star.width
        ));
    }

    #[test]
    fn displacement_resolution_cases() {
        let clean = random_field(40, 30, 3);
        let roi = EvaluationROI::full(40, 30);
        assert_eq!(displacement_resolution(&clean, &clean, &roi).unwrap(), 0.0);
        let offset = clean.map(|u, v| (u, v + 0.1));
        assert!(displacement_resolution(&offset, &clean, &roi).unwrap() < 1e-6);
        let big = DisplacementField::zeros(400, 300);
        let mut rng = crate::seed::rng(4, &[]);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let noisy = big.map(|u, _| (u, normal.sample(&mut rng)));
        let s = displacement_resolution(&noisy, &big, &EvaluationROI::full(400, 300)).unwrap();
        assert!((s - 0.02).abs() < 0.02 * 0.02, "{s}");
    }

    #[test]
    fn alpha_is_the_product() {
        assert!((alpha_indicator(10.0, 0.02) - 0.2).abs() < 1e-15);
        assert_eq!(alpha_indicator(10.0, 0.0), 0.0);
    }

    #[test]
    fn report_on_exact_star() {
        let star = StarSpec {
            width: 400,
            height: 41,
            center_row: 20.0,
            ..StarSpec::default()
        };
        let gt = crate::field_gen::star_field(&star).unwrap();
        let settings = MetrologySettings::for_star(&star);
        let r = MetrologyReport::star(&gt, Some(&gt), &star, &settings).unwrap();
        assert!(r.aee < 1e-7 && r.mae < 1e-7);
        assert_eq!(r.d, star.period(settings.roi.x0 as f64));
        assert_eq!(r.alpha, r.d * r.sigma_u);
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("curves.csv");
        r.write_curves_csv(&star, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("column,period,profile,bias,smoothed_bias,column_mae\n"));
        assert_eq!(text.lines().count(), settings.roi.width + 1);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MetrologyReport>(&json).unwrap(), r);
    }

    #[test]
    fn heat_map_writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("err.png");
        save_heat_map(&[-1.0, 0.0, 0.5, 2.0], 2, 2, 1.0, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(0, 0).0, [0, 0, 255]);
        assert_eq!(img.get_pixel(1, 0).0, [255, 255, 255]);
        assert_eq!(img.get_pixel(1, 1).0, [255, 0, 0]);
        assert!(save_heat_map(&[0.0; 3], 2, 2, 1.0, &path).is_err());
    }

    proptest! {
        #[test]
        fn aee_is_symmetric_and_bounds_mean_error(seed in 0u64..1000) {
            let (a, b) = (random_field(7, 6, seed), random_field(7, 6, seed + 1));
            let roi = EvaluationROI::full(7, 6);
            let ab = aee(&a, &b, &roi).unwrap();
            prop_assert!((ab - aee(&b, &a, &roi).unwrap()).abs() < 1e-12);
            let n = 42.0;
            let mu: f64 = a.u().iter().zip(b.u()).map(|(x, y)| (x - y) as f64).sum::<f64>() / n;
            let mv: f64 = a.v().iter().zip(b.v()).map(|(x, y)| (x - y) as f64).sum::<f64>() / n;
            prop_assert!(ab + 1e-12 >= mu.hypot(mv));
        }

        #[test]
        fn mae_ignores_u(seed in 0u64..1000, shift in -5.0f64..5.0) {
            let (a, b) = (random_field(5, 5, seed), random_field(5, 5, seed + 7));
            let roi = EvaluationROI::full(5, 5);
            let corrupted = a.map(|u, v| (u + shift, v));
            prop_assert_eq!(mae_v(&a, &b, &roi).unwrap(), mae_v(&corrupted, &b, &roi).unwrap());
        }

        #[test]
        fn resolution_is_monotone_in_threshold(t1 in 0.02f64..0.3, dt in 0.0f64..0.3, k in 0.5f64..3.0) {
            let star = StarSpec { period_left: 2.0, ..StarSpec::default() };
            let p = profile_from_bias(&star, |p| k / (p + 1.0));
            let lo = spatial_resolution(&p, &star, t1, 30);
            let hi = spatial_resolution(&p, &star, t1 + dt, 30);
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                prop_assert!(hi <= lo + 1e-9);
            }
        }

        #[test]
        fn report_alpha_is_bitwise_product(noise in 0.0f64..0.05, seed in 0u64..50) {
            let star = StarSpec { width: 200, height: 41, center_row: 20.0, ..StarSpec::default() };
            let gt = crate::field_gen::star_field(&star).unwrap();
            let mut rng = crate::seed::rng(seed, &[]);
            let noisy = gt.map(|u, v| (u, v + noise * rng.gen_range(-1.0..1.0)));
            let r = MetrologyReport::star(&gt, Some(&noisy), &star, &MetrologySettings::for_star(&star)).unwrap();
            prop_assert_eq!(r.alpha, r.d * r.sigma_u);
        }
    }
}
