//! Integer pre-shift for displacements larger than a pixel.
//!
//! The frame is cut into horizontal bands of near-equal height. Each band
//! gets the integer translation maximizing normalized cross-correlation; the
//! deformed frame is then re-aligned band by band so that only a subpixel
//! residual is left for the subset solver.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::field::DisplacementField;
use crate::image::GrayImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandShift {
    pub dx: i32,
    pub dy: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preshift {
    pub bands: Vec<Range<usize>>,
    pub shifts: Vec<BandShift>,
}

impl Preshift {
    /// Piecewise-constant integer displacement field.
    pub fn to_field(&self, width: usize) -> DisplacementField {
        let height = self.bands.last().map_or(0, |b| b.end);
        DisplacementField::from_fn(width, height, |_, y| {
            let b = self.band_of(y);
            (self.shifts[b].dx as f64, self.shifts[b].dy as f64)
        })
    }

    pub fn band_of(&self, y: usize) -> usize {
        self.bands.iter().position(|b| b.contains(&y)).expect("row inside the frame")
    }
}

/// Splits `height` rows into `n` contiguous bands whose heights differ by at
/// most one row (the first `height % n` bands get the extra row).
pub fn band_ranges(height: usize, n: usize) -> Result<Vec<Range<usize>>> {
    if n == 0 || n > height {
        return Err(Error::param(format!("cannot cut {height} rows into {n} bands")));
    }
    let (base, extra) = (height / n, height % n);
    let mut start = 0;
    Ok((0..n)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

fn ncc(reference: &GrayImage, deformed: &GrayImage, rows: &Range<usize>, dx: i32, dy: i32, range: i32) -> Option<f64> {
    let (w, h) = reference.dims();
    let r = range as usize;
    let (mut sf, mut sg, mut sff, mut sgg, mut sfg, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for y in rows.clone() {
        let yd = y as i64 + dy as i64;
        if yd < 0 || yd >= h as i64 {
            continue;
        }
        let (fr, gr) = (reference.row(y), deformed.row(yd as usize));
        for x in r..w - r {
            let f = fr[x];
            let g = gr[(x as i64 + dx as i64) as usize];
            sf += f;
            sg += g;
            sff += f * f;
            sgg += g * g;
            sfg += f * g;
            n += 1.0;
        }
    }
    if n < 1.0 {
        return None;
    }
    let cov = sfg - sf * sg / n;
    let vf = sff - sf * sf / n;
    let vg = sgg - sg * sg / n;
    (vf > 0.0 && vg > 0.0).then(|| cov / (vf * vg).sqrt())
}

/// Integer displacement of every band, searched over `[-range, range]²`.
///
/// A maximum on the border of the search window means the true shift may lie
/// outside it and is reported as an error.
pub fn integer_preshift(reference: &GrayImage, deformed: &GrayImage, n_bands: usize, range: i32) -> Result<Preshift> {
    reference.ensure_same_dims(deformed.dims())?;
    let (w, h) = reference.dims();
    if range < 1 || 2 * range as usize >= w {
        return Err(Error::param(format!("search range {range} does not fit a {w}-px frame")));
    }
    let bands = band_ranges(h, n_bands)?;
    let mut shifts = Vec::with_capacity(n_bands);
    for (b, rows) in bands.iter().enumerate() {
        let mut best: Option<(f64, i32, i32)> = None;
        for dy in -range..=range {
            for dx in -range..=range {
                if let Some(c) = ncc(reference, deformed, rows, dx, dy, range) {
                    if best.map_or(true, |(bc, _, _)| c > bc) {
                        best = Some((c, dx, dy));
                    }
                }
            }
        }
        let (_, dx, dy) = best.ok_or_else(|| Error::param(format!("band {b} has no texture")))?;
        if dx.abs() == range || dy.abs() == range {
            return Err(Error::SearchRange { band: b, range });
        }
        shifts.push(BandShift { dx, dy });
    }
    Ok(Preshift { bands, shifts })
}

/// Moves every band of `deformed` back by its integer shift, so that
/// `realigned(x, y) = deformed(x + dx, y + dy)` (edge-clamped).
pub fn realign_bands(deformed: &GrayImage, pre: &Preshift) -> Result<GrayImage> {
    let (w, h) = deformed.dims();
    if pre.bands.last().map(|b| b.end) != Some(h) {
        return Err(Error::param("band partition does not match the frame height"));
    }
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let s = pre.shifts[pre.band_of(y)];
        let xs = (x as i64 + s.dx as i64).clamp(0, w as i64 - 1) as usize;
        let ys = (y as i64 + s.dy as i64).clamp(0, h as i64 - 1) as usize;
        deformed.get(xs, ys)
    }))
}

/// Total displacement: band integer shift plus the subpixel residual.
pub fn compose_preshift(subpixel: &DisplacementField, pre: &Preshift) -> Result<DisplacementField> {
    let integer = pre.to_field(subpixel.width());
    subpixel.zip_with(&integer, |(u, v), (iu, iv)| (u + iu, v + iv))
}
