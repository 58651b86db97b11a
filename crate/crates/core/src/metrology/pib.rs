//! Pattern-induced bias: repeated star measurements with a fixed or a
//! renewed speckle pattern.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::DisplacementField;
use crate::field_gen::StarSpec;
use crate::image::{BitDepth, GrayImage};
use crate::seed::{self, stream};
use crate::speckle::{render_speckle, sample_disks, SpeckleParams};
use crate::warp::{add_noise, quantize, render_deformed_speckle, NoiseModel};
use crate::{Error, Result};

use super::moving_average;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PibMode {
    /// One speckle pair, a new noise realization per trial.
    FixedPattern,
    /// A new speckle pattern per trial, each deformed by the same field.
    VariedPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PibSetup {
    pub star: StarSpec,
    pub speckle: SpeckleParams,
    pub noise: NoiseModel,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PibOutcome {
    pub mode: PibMode,
    /// Mean over successful trials of `v` along the star axis, all columns.
    pub mean_profile: Vec<f64>,
    /// Per-trial profiles; `None` for failed trials.
    pub profiles: Vec<Option<Vec<f64>>>,
    /// `(trial, message)` for every failed trial.
    pub failed: Vec<(usize, String)>,
}

impl PibOutcome {
    pub fn successful(&self) -> usize {
        self.profiles.iter().flatten().count()
    }
}

fn noisy_8bit(img: &GrayImage, noise: &NoiseModel, seed: u64) -> Result<GrayImage> {
    Ok(quantize(&add_noise(img, noise, seed)?, BitDepth::Eight))
}

/// Runs `n` star measurements with `estimator` and collects the `v` profile
/// along the symmetry row.
///
/// Frames are rendered exactly (no resampling), noised and quantized to
/// 8 bits. A failing trial is recorded and left out of the mean.
pub fn pib_experiment<E>(mode: PibMode, setup: &PibSetup, estimator: E) -> Result<PibOutcome>
where
    E: Fn(&GrayImage, &GrayImage) -> Result<DisplacementField> + Sync,
{
    let star = &setup.star;
    star.validate()?;
    setup.noise.validate()?;
    if setup.n == 0 {
        return Err(Error::param("PIB needs at least one trial"));
    }
    if (setup.speckle.width, setup.speckle.height) != (star.width, star.height) {
        return Err(Error::DimensionMismatch {
            expected: (star.width, star.height),
            got: (setup.speckle.width, setup.speckle.height),
        });
    }
    let render_pair = |disk_seed: u64| -> Result<(GrayImage, GrayImage)> {
        let disks = sample_disks(&setup.speckle, disk_seed)?;
        Ok((
            render_speckle(&disks, &setup.speckle)?,
            render_deformed_speckle(&disks, star, &setup.speckle)?,
        ))
    };
    let fixed = match mode {
        PibMode::FixedPattern => Some(render_pair(seed::derive(setup.seed, &[stream::DISKS]))?),
        PibMode::VariedPattern => None,
    };
    let row = star.axis_row();
    let trial = |t: usize| -> Result<Vec<f64>> {
        let owned;
        let (r, d) = match &fixed {
            Some(pair) => (&pair.0, &pair.1),
            None => {
                owned = render_pair(seed::derive(setup.seed, &[stream::TRIAL, t as u64, stream::DISKS]))?;
                (&owned.0, &owned.1)
            }
        };
        let noise_seed = |k| seed::derive(setup.seed, &[stream::TRIAL, t as u64, stream::NOISE, k]);
        let r = noisy_8bit(r, &setup.noise, noise_seed(0))?;
        let d = noisy_8bit(d, &setup.noise, noise_seed(1))?;
        let est = estimator(&r, &d)?;
        est.ensure_dims((star.width, star.height))?;
        let profile: Vec<f64> = (0..star.width).map(|x| est.get(x, row).1).collect();
        if profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("estimator returned non-finite values on the axis"));
        }
        Ok(profile)
    };
    let results: Vec<Result<Vec<f64>>> = (0..setup.n).into_par_iter().map(trial).collect();
    let mut failed = Vec::new();
    let mut profiles = Vec::with_capacity(setup.n);
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => profiles.push(Some(p)),
            Err(e) => {
                log::warn!("PIB trial {t} failed: {e}");
                failed.push((t, e.to_string()));
                profiles.push(None);
            }
        }
    }
    let ok: Vec<&Vec<f64>> = profiles.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::param(format!("all {} PIB trials failed", setup.n)));
    }
    let mean_profile = (0..star.width)
        .map(|x| ok.iter().map(|p| p[x]).sum::<f64>() / ok.len() as f64)
        .collect();
    Ok(PibOutcome {
        mode,
        mean_profile,
        profiles,
        failed,
    })
}

/// RMS of a profile minus its moving average over `window` samples, on
/// `columns`.
pub fn ripple_rms(profile: &[f64], window: usize, columns: std::ops::Range<usize>) -> f64 {
    let trend = moving_average(profile, window);
    let n = columns.len().max(1) as f64;
    (columns.map(|x| (profile[x] - trend[x]).powi(2)).sum::<f64>() / n).sqrt()
}
