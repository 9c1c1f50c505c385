//! Per-pixel error fields: constant fit, smooth fit, patch reconstruction
//! error and their coupled blend.

use crate::eigenpatch::PatchBasis;
use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, BoundaryPolicy, ImageGrid, Padded, RegionMask};

/// Nonnegative per-pixel error, evaluated over the whole image.
pub type ErrorField = ImageGrid;

/// Denominator floor of the normalised Gaussian fit.
pub const PS_DIV_FLOOR: f64 = 1e-8;

/// Fitted description of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionModel {
    pub basis: PatchBasis,
    /// Smooth reconstruction; only meaningful inside the region.
    pub g: ImageGrid,
    /// Region mean.
    pub c: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl RegionModel {
    pub fn new(basis: PatchBasis, g: ImageGrid, c: f64, alpha: f64, sigma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_sigma(sigma)?;
        if !c.is_finite() {
            return Err(Error::invalid("region mean must be finite"));
        }
        Ok(Self {
            basis,
            g,
            c,
            alpha,
            sigma,
        })
    }

    /// Fits the mean and the smooth reconstruction on `mask`, keeping `basis`.
    pub fn fit(
        img: &ImageGrid,
        mask: &RegionMask,
        basis: PatchBasis,
        alpha: f64,
        sigma: f64,
        policy: BoundaryPolicy,
    ) -> Result<Self> {
        let (c, _) = pc_fit(img, mask)?;
        let (g, _) = ps_fit_with(img, mask, sigma, policy)?;
        Self::new(basis, g, c, alpha, sigma)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Region mean and the squared deviation from it everywhere.
pub fn pc_fit(img: &ImageGrid, mask: &RegionMask) -> Result<(f64, ErrorField)> {
    mask.ensure_same_dims(img.dims())?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::DegenerateRegion("empty mask".into()));
    }
    let sum: f64 = img
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &h)| h)
        .map(|(v, _)| v)
        .sum();
    let c = sum / n as f64;
    Ok((c, img.map(|v| (v - c) * (v - c))))
}

/// Normalised Gaussian fit `G*(I H) / max(G*H, floor)` and its squared residual.
pub fn ps_fit(img: &ImageGrid, mask: &RegionMask, sigma: f64) -> Result<(ImageGrid, ErrorField)> {
    ps_fit_with(img, mask, sigma, BoundaryPolicy::Reflect)
}

pub fn ps_fit_with(
    img: &ImageGrid,
    mask: &RegionMask,
    sigma: f64,
    policy: BoundaryPolicy,
) -> Result<(ImageGrid, ErrorField)> {
    check_sigma(sigma)?;
    mask.ensure_same_dims(img.dims())?;
    let h = mask.to_grid();
    let ih = img.zip_map(&h, |a, b| a * b)?;
    let num = gaussian_blur(&ih, sigma, policy)?;
    let den = gaussian_blur(&h, sigma, policy)?;
    let g = num.zip_map(&den, |a, b| a / b.max(PS_DIV_FLOOR))?;
    let err = img.zip_map(&g, |a, b| (a - b) * (a - b))?;
    Ok((g, err))
}

/// Mean squared residual of every window's projection onto `basis`.
pub fn patch_error_map(img: &ImageGrid, basis: &PatchBasis) -> Result<ErrorField> {
    patch_error_map_with(img, basis, BoundaryPolicy::Reflect)
}

pub fn patch_error_map_with(
    img: &ImageGrid,
    basis: &PatchBasis,
    policy: BoundaryPolicy,
) -> Result<ErrorField> {
    let m = basis.side();
    if m > img.width() || m > img.height() {
        return Err(Error::KernelTooLarge {
            side: m,
            width: img.width(),
            height: img.height(),
        });
    }
    let padded = Padded::new(img, m / 2, policy);
    let mut acc = padded.box_sum_sq();
    for v in basis {
        for (a, c) in acc.iter_mut().zip(padded.correlate(v)) {
            *a -= c * c;
        }
    }
    let inv = 1.0 / (m * m) as f64;
    for a in &mut acc {
        *a = (*a * inv).max(0.0);
    }
    ImageGrid::new(img.width(), img.height(), acc)
}

/// `alpha * (I - g)^2 + (1 - alpha) * patch error`.
pub fn coupled_error(img: &ImageGrid, model: &RegionModel) -> Result<ErrorField> {
    model.g.ensure_same_dims(img.dims())?;
    let ps = img.zip_map(&model.g, |a, b| (a - b) * (a - b))?;
    let patch = patch_error_map(img, &model.basis)?;
    blend(&ps, &patch, model.alpha)
}

/// Pointwise convex combination of a smooth-fit error and a patch error.
pub fn blend(ps_err: &ErrorField, patch_err: &ErrorField, alpha: f64) -> Result<ErrorField> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        ps_err.ensure_same_dims(patch_err.dims())?;
        return Ok(ps_err.clone());
    }
    if alpha == 0.0 {
        ps_err.ensure_same_dims(patch_err.dims())?;
        return Ok(patch_err.clone());
    }
    ps_err.zip_map(patch_err, |p, q| alpha * p + (1.0 - alpha) * q)
}

/// Region 1 wherever its error does not exceed region 2's.
pub fn assign_labels(err1: &ErrorField, err2: &ErrorField) -> Result<RegionMask> {
    err1.ensure_same_dims(err2.dims())?;
    let data = err1
        .as_slice()
        .iter()
        .zip(err2.as_slice())
        .map(|(a, b)| a <= b)
        .collect();
    RegionMask::new(err1.width(), err1.height(), data)
}

/// `sum H e1 + (1 - H) e2`, the data term of the two-phase energy.
pub fn partition_energy(err1: &ErrorField, err2: &ErrorField, mask: &RegionMask) -> Result<f64> {
    err1.ensure_same_dims(err2.dims())?;
    mask.ensure_same_dims(err1.dims())?;
    Ok(err1
        .as_slice()
        .iter()
        .zip(err2.as_slice())
        .zip(mask.as_slice())
        .map(|((a, b), &h)| if h { *a } else { *b })
        .sum())
}
