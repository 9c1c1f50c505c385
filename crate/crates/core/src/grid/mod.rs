//! Scalar fields on the pixel lattice and the filtering primitives built on them.
//!
//! [`ImageGrid`] stores real values row-major; (x, y) addresses column x of row y.
//! Every convolution-type operation takes a [`BoundaryPolicy`] that decides how
//! samples outside the lattice are synthesised.

mod border;
mod conv;
pub mod io;
mod patch;

pub use border::BoundaryPolicy;
pub use conv::{box_sum_sq, correlate, gaussian_blur, window_accumulate, Padded};
pub(crate) use patch::dot;
pub use patch::{extract_patch, patch_dot, Patch};

use crate::error::{Error, Result};

/// Real-valued 2-D field on a `width x height` pixel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid from row-major values, rejecting empty shapes and non-finite values.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        assert!(value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps values produced internally; callers guarantee shape and finiteness.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value at a possibly out-of-range position, resolved through `policy`.
    pub fn sample(&self, x: isize, y: isize, policy: BoundaryPolicy) -> f64 {
        let xi = policy.resolve(x, self.width);
        let yi = policy.resolve(y, self.height);
        self.data[yi * self.width + xi]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pointwise combination of two same-shaped grids.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other.dims())?;
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn ensure_same_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: dims,
            });
        }
        Ok(())
    }
}

/// Binary region indicator; `true` marks membership.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegionMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask data of length {} does not describe a {width}x{height} lattice",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "empty mask");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "empty mask");
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

    /// Converts a {0,1}-valued grid; any other value is rejected.
    pub fn from_grid(grid: &ImageGrid) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len());
        for (i, &v) in grid.as_slice().iter().enumerate() {
            if v == 0.0 {
                data.push(false);
            } else if v == 1.0 {
                data.push(true);
            } else {
                return Err(Error::invalid(format!(
                    "mask value {v} at ({}, {}) is neither 0 nor 1",
                    i % grid.width(),
                    i / grid.width()
                )));
            }
        }
        Self::new(grid.width(), grid.height(), data)
    }

    /// `grid > threshold` pointwise.
    pub fn threshold(grid: &ImageGrid, threshold: f64) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            data: grid.as_slice().iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_uniform(&self) -> bool {
        let n = self.count();
        n == 0 || n == self.data.len()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    pub fn and(&self, other: &RegionMask) -> Result<Self> {
        self.ensure_same_dims(other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// Number of positions where the two masks differ.
    pub fn hamming(&self, other: &RegionMask) -> Result<usize> {
        self.ensure_same_dims(other.dims())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count())
    }

    pub(crate) fn ensure_same_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: dims,
            });
        }
        Ok(())
    }
}

/// Per-pixel region ids for multi-region results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::invalid(format!(
                "label data of length {} does not describe a {width}x{height} lattice",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Two-phase labelling: region 0 where the mask is set, region 1 elsewhere.
    pub fn from_mask(mask: &RegionMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            labels: mask
                .as_slice()
                .iter()
                .map(|&b| if b { 0 } else { 1 })
                .collect(),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn region(&self, id: u32) -> RegionMask {
        RegionMask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l == id).collect(),
        }
    }
}
