use crate::image::GrayImage;
use crate::interp::BSplineImage;
use crate::{Error, Result};

use super::linalg::{cholesky, cholesky_solve};
use super::{DicConfig, ShapeOrder, ShapeParams, SubsetResult};

/// Reference intensities and spline gradients at integer pixels.
#[derive(Debug, Clone)]
struct GradientImage {
    width: usize,
    height: usize,
    value: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientImage {
    fn new(img: &GrayImage) -> Self {
        let spline = BSplineImage::new(img);
        let (w, h) = img.dims();
        let mut gx = Vec::with_capacity(w * h);
        let mut gy = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (_, dx, dy) = spline.value_and_gradient(x as f64, y as f64);
                gx.push(dx);
                gy.push(dy);
            }
        }
        Self {
            width: w,
            height: h,
            value: img.as_slice().to_vec(),
            gx,
            gy,
        }
    }
}

/// Everything IC-GN precomputes on the reference subset: zero-mean
/// intensities, steepest-descent images and the factored Hessian.
#[derive(Debug, Clone)]
pub struct SubsetReference {
    pub center: (usize, usize),
    f_zero_mean: Vec<f64>,
    f_norm: f64,
    jacobian: Vec<f64>,
    hessian_factor: Vec<f64>,
    singular: bool,
}

impl SubsetReference {
    /// True when the subset carries no usable gradient information.
    pub fn is_singular(&self) -> bool {
        self.singular
    }
}

/// A reference/deformed pair prepared for repeated subset registration.
pub struct Correlator {
    cfg: DicConfig,
    reference: GradientImage,
    deformed: BSplineImage,
    offsets: Vec<(f64, f64)>,
    /// Least-squares projector onto quadratic displacements (6 × N), used to
    /// compose second-order warps.
    quadratic_fit: Option<Vec<f64>>,
}

fn quadratic_basis(dx: f64, dy: f64) -> [f64; 6] {
    [1.0, dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy]
}

fn quadratic_projector(offsets: &[(f64, f64)]) -> Vec<f64> {
    let n = offsets.len();
    let mut gram = vec![0.0; 36];
    for &(dx, dy) in offsets {
        let b = quadratic_basis(dx, dy);
        for i in 0..6 {
            for j in 0..6 {
                gram[i * 6 + j] += b[i] * b[j];
            }
        }
    }
    assert!(cholesky(&mut gram, 6), "quadratic basis is full rank on a >= 7x7 subset");
    let mut proj = vec![0.0; 6 * n];
    for (k, &(dx, dy)) in offsets.iter().enumerate() {
        let mut col = quadratic_basis(dx, dy);
        cholesky_solve(&gram, 6, &mut col);
        for i in 0..6 {
            proj[i * n + k] = col[i];
        }
    }
    proj
}

impl Correlator {
    pub fn new(reference: &GrayImage, deformed: &GrayImage, cfg: &DicConfig) -> Result<Self> {
        cfg.validate()?;
        reference.ensure_same_dims(deformed.dims())?;
        let m = cfg.half_size as isize;
        let offsets: Vec<(f64, f64)> = (-m..=m)
            .flat_map(|dy| (-m..=m).map(move |dx| (dx as f64, dy as f64)))
            .collect();
        let quadratic_fit = (cfg.order == ShapeOrder::Second).then(|| quadratic_projector(&offsets));
        Ok(Self {
            cfg: *cfg,
            reference: GradientImage::new(reference),
            deformed: BSplineImage::new(deformed),
            offsets,
            quadratic_fit,
        })
    }

    pub fn config(&self) -> &DicConfig {
        &self.cfg
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.reference.width, self.reference.height)
    }

    /// Precomputes the reference side of the subset centred at `(cx, cy)`.
    pub fn subset_reference(&self, cx: usize, cy: usize) -> Result<SubsetReference> {
        let m = self.cfg.half_size;
        let (w, h) = self.dims();
        if cx < m || cy < m || cx + m >= w || cy + m >= h {
            return Err(Error::Placement {
                x: cx as f64,
                y: cy as f64,
            });
        }
        let n = self.offsets.len();
        let np = self.cfg.order.n_params();
        let half = np / 2;
        let mut f = Vec::with_capacity(n);
        let mut jacobian = Vec::with_capacity(n * np);
        for &(dx, dy) in &self.offsets {
            let idx = (cy as isize + dy as isize) as usize * w + (cx as isize + dx as isize) as usize;
            f.push(self.reference.value[idx]);
            let (fx, fy) = (self.reference.gx[idx], self.reference.gy[idx]);
            let basis = quadratic_basis(dx, dy);
            for g in [fx, fy] {
                for b in &basis[..half] {
                    jacobian.push(g * b);
                }
            }
        }
        let mean = f.iter().sum::<f64>() / n as f64;
        for v in f.iter_mut() {
            *v -= mean;
        }
        let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        // ZNSSD ignores offset and scale of the warped subset, so the
        // steepest-descent images are centred and made orthogonal to f.
        if f_norm > 0.0 {
            let mut mean_j = vec![0.0; np];
            for row in jacobian.chunks_exact(np) {
                for (m, j) in mean_j.iter_mut().zip(row) {
                    *m += j / n as f64;
                }
            }
            let mut along_f = vec![0.0; np];
            for (row, fk) in jacobian.chunks_exact_mut(np).zip(&f) {
                for ((j, m), a) in row.iter_mut().zip(&mean_j).zip(along_f.iter_mut()) {
                    *j -= m;
                    *a += *j * fk / f_norm;
                }
            }
            for (row, fk) in jacobian.chunks_exact_mut(np).zip(&f) {
                for (j, a) in row.iter_mut().zip(&along_f) {
                    *j -= a * fk / f_norm;
                }
            }
        }
        let mut hessian = vec![0.0; np * np];
        for row in jacobian.chunks_exact(np) {
            for i in 0..np {
                for j in 0..=i {
                    hessian[i * np + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..np {
            for j in 0..i {
                hessian[j * np + i] = hessian[i * np + j];
            }
        }
        let singular = !(f_norm > 1e-6 * (n as f64).sqrt()) || !cholesky(&mut hessian, np);
        Ok(SubsetReference {
            center: (cx, cy),
            f_zero_mean: f,
            f_norm,
            jacobian,
            hessian_factor: hessian,
            singular,
        })
    }

    fn check_placement(&self, center: (usize, usize), p: &ShapeParams) -> Result<()> {
        let m = self.cfg.half_size as f64;
        let (w, h) = self.dims();
        let (cx, cy) = (center.0 as f64, center.1 as f64);
        for (dx, dy) in [(-m, -m), (m, -m), (-m, m), (m, m), (0.0, 0.0)] {
            let (u, v) = p.displacement(dx, dy);
            let (x, y) = (cx + dx + u, cy + dy + v);
            if !(x >= -1.0 && y >= -1.0 && x <= w as f64 && y <= h as f64) {
                return Err(Error::Placement { x: cx + u, y: cy + v });
            }
        }
        Ok(())
    }

    fn update_norm(&self, dp: &[f64]) -> f64 {
        let m = self.cfg.half_size as f64;
        let half = dp.len() / 2;
        let mut s = 0.0;
        for c in [0, half] {
            s += dp[c] * dp[c];
            s += m * m * (dp[c + 1] * dp[c + 1] + dp[c + 2] * dp[c + 2]);
            if half == 6 {
                let q = 0.5 * m * m;
                s += q * q * (dp[c + 3] * dp[c + 3] + dp[c + 4] * dp[c + 4] + dp[c + 5] * dp[c + 5]);
            }
        }
        s.sqrt()
    }

    /// `W(p) ∘ W(dp)⁻¹`.
    fn compose_inverse(&self, p: &ShapeParams, dp: &[f64]) -> ShapeParams {
        match p.order {
            ShapeOrder::First => {
                let q = &p.values;
                // A(dp) = [[1+a, b, t], [c, 1+d, s]]
                let (a, b, t, c, d, s) = (1.0 + dp[1], dp[2], dp[0], dp[4], 1.0 + dp[5], dp[3]);
                let det = a * d - b * c;
                let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
                let it = -(ia * t + ib * s);
                let is = -(ic * t + id * s);
                let (pa, pb, pt, pc, pd, ps) = (1.0 + q[1], q[2], q[0], q[4], 1.0 + q[5], q[3]);
                let na = pa * ia + pb * ic;
                let nb = pa * ib + pb * id;
                let nt = pa * it + pb * is + pt;
                let nc = pc * ia + pd * ic;
                let nd = pc * ib + pd * id;
                let ns = pc * it + pd * is + ps;
                ShapeParams {
                    order: ShapeOrder::First,
                    values: vec![nt, na - 1.0, nb, ns, nc, nd - 1.0],
                }
            }
            ShapeOrder::Second => {
                let proj = self.quadratic_fit.as_ref().expect("second-order projector");
                let step = ShapeParams {
                    order: ShapeOrder::Second,
                    values: dp.to_vec(),
                };
                let n = self.offsets.len();
                let mut out = vec![0.0; 12];
                for (k, &(x, y)) in self.offsets.iter().enumerate() {
                    let (du, dv) = step.displacement(x, y);
                    let (mut ex, mut ey) = (x - du, y - dv);
                    for _ in 0..4 {
                        let (du, dv) = step.displacement(ex, ey);
                        ex = x - du;
                        ey = y - dv;
                    }
                    let (u, v) = p.displacement(ex, ey);
                    let (tx, ty) = (ex + u - x, ey + v - y);
                    for i in 0..6 {
                        let w = proj[i * n + k];
                        out[i] += w * tx;
                        out[6 + i] += w * ty;
                    }
                }
                ShapeParams {
                    order: ShapeOrder::Second,
                    values: out,
                }
            }
        }
    }

    /// Registers one subset starting from `init`.
    ///
    /// Returns `converged = false` (with the last iterate) when the subset is
    /// textureless, the deformed subset is flat, or `max_iters` is reached.
    /// When `trace` is given, the ZNSSD of every iterate is appended to it.
    pub fn register(
        &self,
        sref: &SubsetReference,
        init: &ShapeParams,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<SubsetResult> {
        let mut p = init.with_order(self.cfg.order);
        self.check_placement(sref.center, &p)?;
        let mut result = SubsetResult::from_params(p.clone());
        if sref.singular {
            return Ok(result);
        }
        let n = self.offsets.len();
        let np = self.cfg.order.n_params();
        let (cx, cy) = (sref.center.0 as f64, sref.center.1 as f64);
        let mut g = vec![0.0; n];
        let mut rhs = vec![0.0; np];
        for iter in 1..=self.cfg.max_iters {
            for (gk, &(dx, dy)) in g.iter_mut().zip(&self.offsets) {
                let (u, v) = p.displacement(dx, dy);
                *gk = self.deformed.value(cx + dx + u, cy + dy + v);
            }
            let mean = g.iter().sum::<f64>() / n as f64;
            let g_norm = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
            if !(g_norm > 1e-9) {
                result.iterations = iter;
                return Ok(result);
            }
            let ratio = sref.f_norm / g_norm;
            let mut residual = 0.0;
            rhs.iter_mut().for_each(|r| *r = 0.0);
            for (k, (fk, gk)) in sref.f_zero_mean.iter().zip(&g).enumerate() {
                let e = fk - ratio * (gk - mean);
                residual += e * e;
                let row = &sref.jacobian[k * np..(k + 1) * np];
                for (r, j) in rhs.iter_mut().zip(row) {
                    *r += j * e;
                }
            }
            residual /= sref.f_norm * sref.f_norm;
            if let Some(t) = trace.as_deref_mut() {
                t.push(residual);
            }
            result.residual = residual;
            cholesky_solve(&sref.hessian_factor, np, &mut rhs);
            rhs.iter_mut().for_each(|r| *r = -*r);
            let norm = self.update_norm(&rhs);
            let next = self.compose_inverse(&p, &rhs);
            if next.values.iter().any(|v| !v.is_finite()) || self.check_placement(sref.center, &next).is_err() {
                result.iterations = iter;
                return Ok(result);
            }
            p = next;
            result.params = p.clone();
            result.iterations = iter;
            result.last_update = norm;
            if norm <= self.cfg.conv_tol {
                // A solution more than half a subset away from the guess has
                // locked onto a different speckle.
                let jump = (p.u() - init.u()).hypot(p.v() - init.v());
                result.converged = jump <= self.cfg.half_size as f64;
                return Ok(result);
            }
        }
        Ok(result)
    }
}

/// Registers the subset centred at `center` between two frames.
///
/// Builds the interpolants from scratch; use [`Correlator`] to register many
/// subsets of the same pair.
pub fn icgn_subset(
    reference: &GrayImage,
    deformed: &GrayImage,
    center: (usize, usize),
    init: &SubsetResult,
    cfg: &DicConfig,
) -> Result<SubsetResult> {
    let c = Correlator::new(reference, deformed, cfg)?;
    let sref = c.subset_reference(center.0, center.1)?;
    c.register(&sref, &init.params, None)
}

/// As [`icgn_subset`], also returning the ZNSSD of every iterate.
pub fn icgn_subset_traced(
    reference: &GrayImage,
    deformed: &GrayImage,
    center: (usize, usize),
    init: &SubsetResult,
    cfg: &DicConfig,
) -> Result<(SubsetResult, Vec<f64>)> {
    let c = Correlator::new(reference, deformed, cfg)?;
    let sref = c.subset_reference(center.0, center.1)?;
    let mut trace = Vec::new();
    let r = c.register(&sref, &init.params, Some(&mut trace))?;
    Ok((r, trace))
}
