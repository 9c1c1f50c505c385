//! Signed distance level set, regularised step functions and curve evolution.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, RegionMask};
use crate::region::ErrorField;

pub const DEFAULT_EPS: f64 = 1.5;
/// Floor on |grad phi| inside the curvature.
pub const GRAD_FLOOR: f64 = 1e-8;
const CFL: f64 = 0.45;

/// Level-set function (positive inside region 1) plus evolution settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: ImageGrid,
    pub eps: f64,
    pub nu: f64,
    /// Step used by the most recent update (0 before any step).
    pub dt: f64,
}

impl LevelSetState {
    pub fn new(phi: ImageGrid, eps: f64, nu: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("nu must be nonnegative, got {nu}")));
        }
        Ok(Self {
            phi,
            eps,
            nu,
            dt: 0.0,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.phi.dims()
    }

    /// Pixels with `phi > 0`.
    pub fn mask(&self) -> RegionMask {
        RegionMask::threshold(&self.phi, 0.0)
    }

    pub fn heaviside(&self) -> ImageGrid {
        self.phi.map(|p| heaviside(p, self.eps))
    }

    pub fn dirac(&self) -> ImageGrid {
        self.phi.map(|p| dirac(p, self.eps))
    }

    pub fn curvature(&self) -> ImageGrid {
        curvature(&self.phi)
    }

    /// CFL-limited step for the given forcing pair.
    pub fn cfl_time_step(&self, e1: &ErrorField, e2: &ErrorField) -> Result<f64> {
        e1.ensure_same_dims(self.dims())?;
        e2.ensure_same_dims(self.dims())?;
        let max_force = e1
            .as_slice()
            .iter()
            .zip(e2.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let max_delta = self
            .phi
            .as_slice()
            .iter()
            .map(|&p| dirac(p, self.eps))
            .fold(0.0, f64::max);
        Ok(CFL / (max_force * max_delta + 4.0 * self.nu * max_delta + 1e-12))
    }

    /// One explicit step with the CFL-limited time step.
    pub fn evolve_step(&self, e1: &ErrorField, e2: &ErrorField) -> Result<Self> {
        let dt = self.cfl_time_step(e1, e2)?;
        self.evolve_step_with(e1, e2, dt)
    }

    pub fn evolve_step_with(&self, e1: &ErrorField, e2: &ErrorField, dt: f64) -> Result<Self> {
        e1.ensure_same_dims(self.dims())?;
        e2.ensure_same_dims(self.dims())?;
        let kappa = if self.nu > 0.0 {
            Some(self.curvature())
        } else {
            None
        };
        let mut phi = self.phi.clone().into_vec();
        for (i, p) in phi.iter_mut().enumerate() {
            let d = dirac(*p, self.eps);
            let force = -(e1.as_slice()[i] - e2.as_slice()[i]) * d;
            let length = kappa
                .as_ref()
                .map_or(0.0, |k| self.nu * d * k.as_slice()[i]);
            *p += dt * (force + length);
        }
        let (w, h) = self.dims();
        Ok(Self {
            phi: ImageGrid::new(w, h, phi)?,
            eps: self.eps,
            nu: self.nu,
            dt,
        })
    }

    /// Replaces `phi` by the signed distance of its own sign pattern.
    /// A level set without any zero crossing is returned unchanged.
    pub fn reinitialize(&self) -> Self {
        let mask = self.mask();
        match signed_distance(&mask) {
            Ok(phi) => Self {
                phi,
                ..self.clone()
            },
            Err(_) => self.clone(),
        }
    }
}

/// Level set from a mask with default `eps` and no length penalty.
pub fn init_from_mask(mask: &RegionMask) -> Result<LevelSetState> {
    LevelSetState::new(signed_distance(mask)?, DEFAULT_EPS, 0.0)
}

pub fn heaviside(phi: f64, eps: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (phi / eps).atan())
}

pub fn dirac(phi: f64, eps: f64) -> f64 {
    eps / (PI * (eps * eps + phi * phi))
}

/// Signed Euclidean distance, positive inside: inside pixels get their distance
/// to the nearest outside pixel minus one half, outside pixels the negated
/// distance to the nearest inside pixel minus one half.
pub fn signed_distance(mask: &RegionMask) -> Result<ImageGrid> {
    if mask.is_uniform() {
        return Err(Error::invalid("mask must contain both labels"));
    }
    let (w, h) = mask.dims();
    let to_outside = distance_transform(w, h, |i| !mask.as_slice()[i]);
    let to_inside = distance_transform(w, h, |i| mask.as_slice()[i]);
    let data = (0..w * h)
        .map(|i| {
            if mask.as_slice()[i] {
                to_outside[i].sqrt() - 0.5
            } else {
                0.5 - to_inside[i].sqrt()
            }
        })
        .collect();
    ImageGrid::new(w, h, data)
}

/// Exact squared Euclidean distance to the nearest pixel with `feature(i)`.
fn distance_transform(w: usize, h: usize, feature: impl Fn(usize) -> bool) -> Vec<f64> {
    let big = ((w * w + h * h) as f64) * 4.0 + 1.0;
    let mut d: Vec<f64> = (0..w * h)
        .map(|i| if feature(i) { 0.0 } else { big })
        .collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = d[y * w + x];
        }
        lower_envelope(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        lower_envelope(&f[..w], &mut out[..w], &mut v, &mut z);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
fn lower_envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

fn clamp_index(i: isize, n: usize) -> usize {
    // mirror without repeating the edge, so derivatives vanish across the border
    if n == 1 {
        0
    } else if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * (n - 1) - i as usize
    } else {
        i as usize
    }
}

/// `div(grad phi / max(|grad phi|, floor))` with central differences.
pub fn curvature(phi: &ImageGrid) -> ImageGrid {
    let (w, h) = phi.dims();
    let at = |x: isize, y: isize| phi.get(clamp_index(x, w), clamp_index(y, h));
    let mut nx = vec![0.0; w * h];
    let mut ny = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let norm = (gx * gx + gy * gy).sqrt().max(GRAD_FLOOR);
            let i = y as usize * w + x as usize;
            nx[i] = gx / norm;
            ny[i] = gy / norm;
        }
    }
    ImageGrid::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let xp = clamp_index(xi + 1, w);
        let xm = clamp_index(xi - 1, w);
        let yp = clamp_index(yi + 1, h);
        let ym = clamp_index(yi - 1, h);
        0.5 * (nx[y * w + xp] - nx[y * w + xm]) + 0.5 * (ny[yp * w + x] - ny[ym * w + x])
    })
}

/// Upwind (Godunov) gradient norm, the discretisation under which an exact
/// distance function has unit slope on its ridges too. One-sided at the border.
pub fn upwind_gradient_norm(phi: &ImageGrid) -> ImageGrid {
    let (w, h) = phi.dims();
    ImageGrid::from_fn(w, h, |x, y| {
        let p = phi.get(x, y);
        let back_x = (x > 0).then(|| p - phi.get(x - 1, y));
        let fwd_x = (x + 1 < w).then(|| phi.get(x + 1, y) - p);
        let back_y = (y > 0).then(|| p - phi.get(x, y - 1));
        let fwd_y = (y + 1 < h).then(|| phi.get(x, y + 1) - p);
        let axis = |back: Option<f64>, fwd: Option<f64>| -> f64 {
            let (b, f) = (back.unwrap_or(0.0), fwd.unwrap_or(0.0));
            if p >= 0.0 {
                b.max(0.0).powi(2).max(f.min(0.0).powi(2))
            } else {
                b.min(0.0).powi(2).max(f.max(0.0).powi(2))
            }
        };
        (axis(back_x, fwd_x) + axis(back_y, fwd_y)).sqrt()
    })
}

/// Distance-function diagnostics of a level set and of a reinitialisation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReinitReport {
    /// Share of pixels farther than `band` from the zero set with `| |grad| - 1 | <= tol`.
    pub unit_slope_fraction: f64,
    /// Largest shift of a zero crossing along a grid edge, in pixels.
    pub max_zero_shift: f64,
    /// Share of pixels whose sign is unchanged.
    pub mask_agreement: f64,
}

pub const HYGIENE_BAND: f64 = 2.0;
pub const HYGIENE_TOL: f64 = 0.2;

/// Share of pixels with `|phi| > band` whose upwind slope is within `tol` of one.
pub fn unit_slope_fraction(phi: &ImageGrid, band: f64, tol: f64) -> f64 {
    let grad = upwind_gradient_norm(phi);
    let (mut far, mut ok) = (0usize, 0usize);
    for (p, g) in phi.as_slice().iter().zip(grad.as_slice()) {
        if p.abs() > band {
            far += 1;
            if (g - 1.0).abs() <= tol {
                ok += 1;
            }
        }
    }
    if far == 0 {
        1.0
    } else {
        ok as f64 / far as f64
    }
}

/// Compares zero crossings before and after a reinitialisation.
pub fn reinit_report(before: &ImageGrid, after: &ImageGrid) -> Result<ReinitReport> {
    before.ensure_same_dims(after.dims())?;
    let (w, h) = before.dims();
    let mut shift: f64 = 0.0;
    let mut agree = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (b, a) = (before.get(x, y), after.get(x, y));
            if (b > 0.0) == (a > 0.0) {
                agree += 1;
            }
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let (b2, a2) = (before.get(nx, ny), after.get(nx, ny));
                let crossing = |p: f64, q: f64| ((p > 0.0) != (q > 0.0)).then(|| p / (p - q));
                match (crossing(b, b2), crossing(a, a2)) {
                    (Some(tb), Some(ta)) => shift = shift.max((tb - ta).abs()),
                    (None, None) => {}
                    _ => shift = shift.max(1.0),
                }
            }
        }
    }
    Ok(ReinitReport {
        unit_slope_fraction: unit_slope_fraction(after, HYGIENE_BAND, HYGIENE_TOL),
        max_zero_shift: shift,
        mask_agreement: agree as f64 / (w * h) as f64,
    })
}
