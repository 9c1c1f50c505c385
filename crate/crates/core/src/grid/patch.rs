use crate::error::{Error, Result};

use super::{BoundaryPolicy, ImageGrid};

/// Square `side x side` window of reals; `side` is odd so the window has a center.
///
/// Values are row-major with offset `(du, dv)` from the center stored at
/// `(dv + r) * side + (du + r)`, `r = side / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    side: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch side must be odd, got {side}"
            )));
        }
        if values.len() != side * side {
            return Err(Error::invalid(format!(
                "patch of side {side} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("patch contains non-finite values"));
        }
        Ok(Self { side, values })
    }

    pub fn zeros(side: usize) -> Self {
        assert!(side % 2 == 1, "patch side must be odd");
        Self {
            side,
            values: vec![0.0; side * side],
        }
    }

    /// Single unit entry at the center.
    pub fn delta(side: usize) -> Self {
        let mut p = Self::zeros(side);
        let c = side * side / 2;
        p.values[c] = 1.0;
        p
    }

    pub(crate) fn from_raw(side: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), side * side);
        Self { side, values }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.side / 2
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Entry at column `u`, row `v` of the window (both `0..side`).
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.side + u]
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Scales to unit norm; returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.values.iter_mut().for_each(|v| *v *= inv);
        }
        n
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Patch) {
        debug_assert_eq!(self.side, other.side);
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(s, &o)| *s += a * o);
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }
}

/// Window of side `m` centered at `(x, y)`, out-of-image samples filled per `policy`.
pub fn extract_patch(
    img: &ImageGrid,
    x: usize,
    y: usize,
    m: usize,
    policy: BoundaryPolicy,
) -> Result<Patch> {
    if m.is_multiple_of(2) {
        return Err(Error::invalid(format!("patch side must be odd, got {m}")));
    }
    if x >= img.width() || y >= img.height() {
        return Err(Error::invalid(format!(
            "center ({x}, {y}) lies outside the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let r = (m / 2) as isize;
    let mut values = Vec::with_capacity(m * m);
    for dv in -r..=r {
        for du in -r..=r {
            values.push(img.sample(x as isize + du, y as isize + dv, policy));
        }
    }
    Ok(Patch::from_raw(m, values))
}

/// Inner product of two same-sized patches (unit pixel measure).
pub fn patch_dot(a: &Patch, b: &Patch) -> Result<f64> {
    if a.side != b.side {
        return Err(Error::invalid(format!(
            "patch sides differ: {} vs {}",
            a.side, b.side
        )));
    }
    Ok(dot(&a.values, &b.values))
}

/// Dot product with four independent accumulators, summed in fixed order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
