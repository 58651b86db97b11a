use std::collections::VecDeque;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::DisplacementField;
use crate::image::GrayImage;
use crate::Result;

use super::icgn::Correlator;
use super::{DicConfig, ShapeParams};

/// Lattice rows registered by one task. Fixed so that results do not depend
/// on the thread count.
const BAND_ROWS: usize = 8;

/// Share of non-converged points above which a warning is attached.
pub const NON_CONVERGED_WARNING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFlag {
    /// Registered and converged.
    Converged,
    /// Registered without converging; value copied from the nearest
    /// converged point.
    Filled,
    /// Inside the margin of width `M`; extrapolated from the nearest point.
    Margin,
    /// Between lattice points (`step > 1`); copied from the nearest one.
    Interpolated,
    /// Row not requested.
    Skipped,
}

/// Dense DIC output.
#[derive(Debug, Clone)]
pub struct DicField {
    pub field: DisplacementField,
    /// Per-pixel provenance, row-major.
    pub flags: Vec<PointFlag>,
    /// Points of interest registered.
    pub computed: usize,
    pub non_converged: usize,
    pub warning: Option<String>,
}

impl DicField {
    pub fn non_converged_fraction(&self) -> f64 {
        if self.computed == 0 {
            0.0
        } else {
            self.non_converged as f64 / self.computed as f64
        }
    }

    pub fn flag(&self, x: usize, y: usize) -> PointFlag {
        self.flags[y * self.field.width() + x]
    }

    /// 8-bit mask: 255 for converged points, 0 otherwise.
    pub fn convergence_mask(&self) -> GrayImage {
        let (w, h) = self.field.dims();
        GrayImage::from_fn(w, h, |x, y| if self.flag(x, y) == PointFlag::Converged { 255.0 } else { 0.0 })
    }
}

#[derive(Clone, Copy)]
struct Node {
    u: f64,
    v: f64,
    converged: bool,
}

fn lattice(lo: usize, hi_inclusive: usize, step: usize) -> Vec<usize> {
    if hi_inclusive < lo {
        return Vec::new();
    }
    (lo..=hi_inclusive).step_by(step).collect()
}

/// Registers every point of the step lattice whose subset fits the frame.
pub fn dic_dense(reference: &GrayImage, deformed: &GrayImage, cfg: &DicConfig) -> Result<DicField> {
    dic_rows(reference, deformed, cfg, 0..reference.height())
}

/// As [`dic_dense`], restricted to lattice rows inside `rows`.
///
/// Initial guesses propagate in raster order inside each band of rows: from
/// the left neighbour, or from the point above at the start of a row, the
/// first point of a band starting at zero.
pub fn dic_rows(
    reference: &GrayImage,
    deformed: &GrayImage,
    cfg: &DicConfig,
    rows: Range<usize>,
) -> Result<DicField> {
    let corr = Correlator::new(reference, deformed, cfg)?;
    let (w, h) = reference.dims();
    let m = cfg.half_size;
    if w < 2 * m + 1 || h < 2 * m + 1 {
        return Err(crate::Error::param("frame smaller than one subset"));
    }
    let xs = lattice(m, w - 1 - m, cfg.step);
    let all_ys = lattice(m, h - 1 - m, cfg.step);
    let ys: Vec<usize> = all_ys.iter().copied().filter(|y| rows.contains(y)).collect();
    let nx = xs.len();

    let bands: Vec<Vec<Node>> = ys
        .par_chunks(BAND_ROWS)
        .map(|band| -> Result<Vec<Node>> {
            let mut out = Vec::with_capacity(band.len() * nx);
            let mut seed = ShapeParams::zero(cfg.order);
            for (r, &y) in band.iter().enumerate() {
                if r > 0 {
                    let above: &Node = &out[(r - 1) * nx];
                    if above.converged {
                        seed = ShapeParams::translation(cfg.order, above.u, above.v);
                    }
                }
                for &x in &xs {
                    let sref = corr.subset_reference(x, y)?;
                    let node = match corr.register(&sref, &seed, None) {
                        Ok(res) => {
                            if res.converged {
                                seed = res.params.clone();
                            }
                            Node {
                                u: res.u(),
                                v: res.v(),
                                converged: res.converged,
                            }
                        }
                        Err(crate::Error::Placement { .. }) => Node {
                            u: 0.0,
                            v: 0.0,
                            converged: false,
                        },
                        Err(e) => return Err(e),
                    };
                    out.push(node);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut nodes: Vec<Node> = bands.into_iter().flatten().collect();
    let ny = ys.len();
    let computed = nodes.len();
    let non_converged = nodes.iter().filter(|n| !n.converged).count();
    fill_from_nearest_converged(&mut nodes, nx, ny);

    let mut field = DisplacementField::zeros(w, h);
    let mut flags = vec![PointFlag::Skipped; w * h];
    if ny > 0 && nx > 0 {
        let nearest = |coords: &[usize], c: usize| match coords.binary_search(&c) {
            Ok(i) => (i, true),
            Err(i) => {
                if i == 0 {
                    (0, false)
                } else if i >= coords.len() {
                    (coords.len() - 1, false)
                } else if c - coords[i - 1] <= coords[i] - c {
                    (i - 1, false)
                } else {
                    (i, false)
                }
            }
        };
        for y in 0..h {
            let in_margin_rows = y < m || y > h - 1 - m;
            let attached = rows.contains(&y)
                || (y < m && rows.start <= m)
                || (y > h - 1 - m && rows.end > h - 1 - m);
            if !attached {
                continue;
            }
            let (j, on_row) = nearest(&ys, y);
            for x in 0..w {
                let (i, on_col) = nearest(&xs, x);
                let node = nodes[j * nx + i];
                field.set(x, y, node.u, node.v);
                let in_margin = in_margin_rows || x < m || x > w - 1 - m;
                flags[y * w + x] = if in_margin {
                    PointFlag::Margin
                } else if !(on_row && on_col) {
                    PointFlag::Interpolated
                } else if node.converged {
                    PointFlag::Converged
                } else {
                    PointFlag::Filled
                };
            }
        }
    }
    let mut out = DicField {
        field,
        flags,
        computed,
        non_converged,
        warning: None,
    };
    if out.non_converged_fraction() > NON_CONVERGED_WARNING {
        out.warning = Some(format!(
            "{:.1}% of points did not converge",
            100.0 * out.non_converged_fraction()
        ));
    }
    Ok(out)
}

/// Replaces non-converged nodes by their nearest converged neighbour on the
/// lattice (breadth-first, 4-connected). Converged flags are left untouched.
fn fill_from_nearest_converged(nodes: &mut [Node], nx: usize, ny: usize) {
    if nodes.iter().all(|n| n.converged) || nodes.iter().all(|n| !n.converged) {
        return;
    }
    let mut source: Vec<Option<usize>> = nodes
        .iter()
        .enumerate()
        .map(|(k, n)| n.converged.then_some(k))
        .collect();
    let mut queue: VecDeque<usize> = (0..nodes.len()).filter(|&k| nodes[k].converged).collect();
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k % nx, k / nx);
        let mut push = |n: usize| {
            if source[n].is_none() {
                source[n] = source[k];
                queue.push_back(n);
            }
        };
        if i > 0 {
            push(k - 1);
        }
        if i + 1 < nx {
            push(k + 1);
        }
        if j > 0 {
            push(k - nx);
        }
        if j + 1 < ny {
            push(k + nx);
        }
    }
    for k in 0..nodes.len() {
        if !nodes[k].converged {
            if let Some(s) = source[k] {
                nodes[k].u = nodes[s].u;
                nodes[k].v = nodes[s].v;
            }
        }
    }
}
