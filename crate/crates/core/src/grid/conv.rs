use crate::error::{Error, Result};

use super::patch::dot;
use super::{BoundaryPolicy, ImageGrid, Patch};

/// Image extended by `radius` samples on every side.
///
/// Padded row `py` holds image row `py - radius`; the window of side
/// `2 * radius + 1` centered at image pixel (x, y) starts at padded (x, y).
#[derive(Debug, Clone)]
pub struct Padded {
    data: Vec<f64>,
    stride: usize,
    radius: usize,
    width: usize,
    height: usize,
}

impl Padded {
    pub fn new(img: &ImageGrid, radius: usize, policy: BoundaryPolicy) -> Self {
        let (w, h) = img.dims();
        let stride = w + 2 * radius;
        let rows = h + 2 * radius;
        let cols: Vec<usize> = (0..stride)
            .map(|px| policy.resolve(px as isize - radius as isize, w))
            .collect();
        let mut data = Vec::with_capacity(stride * rows);
        for py in 0..rows {
            let sy = policy.resolve(py as isize - radius as isize, h);
            let src = img.row(sy);
            data.extend(cols.iter().map(|&sx| src[sx]));
        }
        Self {
            data,
            stride,
            radius,
            width: w,
            height: h,
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
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub(crate) fn row(&self, py: usize) -> &[f64] {
        &self.data[py * self.stride..(py + 1) * self.stride]
    }

    /// Cross-correlation with a kernel whose radius equals the padding.
    pub fn correlate(&self, kernel: &Patch) -> Vec<f64> {
        assert_eq!(
            kernel.radius(),
            self.radius,
            "kernel radius must match padding"
        );
        let (w, h, m) = (self.width, self.height, kernel.side());
        let mut out = vec![0.0; w * h];
        for (y, orow) in out.chunks_exact_mut(w).enumerate() {
            for dv in 0..m {
                let prow = self.row(y + dv);
                for du in 0..m {
                    let kv = kernel.at(du, dv);
                    if kv == 0.0 {
                        continue;
                    }
                    for (o, s) in orow.iter_mut().zip(&prow[du..du + w]) {
                        *o += kv * s;
                    }
                }
            }
        }
        out
    }

    /// `sum_(x,y) coeff(x,y) * window(x,y)`: the adjoint of [`Padded::correlate`].
    pub fn accumulate(&self, coeff: &[f64]) -> Patch {
        let (w, m) = (self.width, 2 * self.radius + 1);
        assert_eq!(coeff.len(), w * self.height);
        let mut acc = vec![0.0; m * m];
        for (y, crow) in coeff.chunks_exact(w).enumerate() {
            if crow.iter().all(|&c| c == 0.0) {
                continue;
            }
            for dv in 0..m {
                let prow = self.row(y + dv);
                for du in 0..m {
                    acc[dv * m + du] += dot(crow, &prow[du..du + w]);
                }
            }
        }
        Patch::from_raw(m, acc)
    }

    /// Correlation at output pixels `x0..x1` of row `y`, added into `out`.
    pub(crate) fn correlate_span(
        &self,
        kernel: &Patch,
        y: usize,
        x0: usize,
        x1: usize,
        out: &mut [f64],
    ) {
        let m = kernel.side();
        debug_assert_eq!(out.len(), x1 - x0);
        for dv in 0..m {
            let prow = &self.row(y + dv)[x0..x1 + m - 1];
            for du in 0..m {
                let kv = kernel.at(du, dv);
                if kv == 0.0 {
                    continue;
                }
                for (o, s) in out.iter_mut().zip(&prow[du..du + (x1 - x0)]) {
                    *o += kv * s;
                }
            }
        }
    }

    /// Adjoint of [`Padded::correlate_span`]: adds the windows at `x0..x1` of row `y`,
    /// weighted by `coeff`, into the row-major patch `acc`.
    pub(crate) fn accumulate_span(&self, coeff: &[f64], y: usize, x0: usize, acc: &mut [f64]) {
        let m = 2 * self.radius + 1;
        let n = coeff.len();
        for dv in 0..m {
            let prow = &self.row(y + dv)[x0..x0 + n + m - 1];
            for du in 0..m {
                acc[dv * m + du] += dot(coeff, &prow[du..du + n]);
            }
        }
    }

    /// Window sums of squared samples via a summed-area table.
    pub fn box_sum_sq(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let m = 2 * self.radius + 1;
        let rows = h + 2 * self.radius;
        let sw = self.stride + 1;
        let mut table = vec![0.0; sw * (rows + 1)];
        for py in 0..rows {
            let mut run = 0.0;
            let src = self.row(py);
            for px in 0..self.stride {
                run += src[px] * src[px];
                table[(py + 1) * sw + px + 1] = table[py * sw + px + 1] + run;
            }
        }
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s =
                    table[(y + m) * sw + x + m] - table[y * sw + x + m] - table[(y + m) * sw + x]
                        + table[y * sw + x];
                out.push(s.max(0.0));
            }
        }
        out
    }
}

fn check_kernel_fits(img: &ImageGrid, side: usize) -> Result<()> {
    if side > img.width().min(img.height()) {
        return Err(Error::KernelTooLarge {
            side,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// `out(x, y) = sum_(u,v) img(x + u, y + v) * kernel(u, v)`, same size as `img`.
pub fn correlate(img: &ImageGrid, kernel: &Patch, policy: BoundaryPolicy) -> Result<ImageGrid> {
    check_kernel_fits(img, kernel.side())?;
    let padded = Padded::new(img, kernel.radius(), policy);
    Ok(ImageGrid::from_raw(
        img.width(),
        img.height(),
        padded.correlate(kernel),
    ))
}

/// Sum over all pixels of `coeff(x, y)` times the `m x m` window of `img` at (x, y).
pub fn window_accumulate(
    img: &ImageGrid,
    coeff: &ImageGrid,
    m: usize,
    policy: BoundaryPolicy,
) -> Result<Patch> {
    if m.is_multiple_of(2) {
        return Err(Error::invalid(format!("patch side must be odd, got {m}")));
    }
    check_kernel_fits(img, m)?;
    img.ensure_same_dims(coeff.dims())?;
    Ok(Padded::new(img, m / 2, policy).accumulate(coeff.as_slice()))
}

/// Per-pixel sum of squared intensities over the `m x m` window.
pub fn box_sum_sq(img: &ImageGrid, m: usize, policy: BoundaryPolicy) -> Result<ImageGrid> {
    if m.is_multiple_of(2) {
        return Err(Error::invalid(format!("window side must be odd, got {m}")));
    }
    check_kernel_fits(img, m)?;
    let padded = Padded::new(img, m / 2, policy);
    Ok(ImageGrid::from_raw(
        img.width(),
        img.height(),
        padded.box_sum_sq(),
    ))
}

/// Separable Gaussian smoothing, kernel truncated at four standard deviations.
pub fn gaussian_blur(img: &ImageGrid, sigma: f64, policy: BoundaryPolicy) -> Result<ImageGrid> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);

    let (w, h) = img.dims();
    let src = img.as_slice();
    let mut tmp = vec![0.0; w * h];
    for x in 0..w {
        let idx: Vec<usize> = (-radius..=radius)
            .map(|i| policy.resolve(x as isize + i, w))
            .collect();
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            tmp[y * w + x] = idx.iter().zip(&taps).map(|(&i, &t)| row[i] * t).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let orow = &mut out[y * w..(y + 1) * w];
        for (i, &t) in (-radius..=radius).zip(&taps) {
            let sy = policy.resolve(y as isize + i, h);
            for (o, s) in orow.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += t * s;
            }
        }
    }
    Ok(ImageGrid::from_raw(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
    }

    fn random_patch(m: usize, seed: u64) -> Patch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Patch::new(m, (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn loop_correlate(img: &ImageGrid, k: &Patch, policy: BoundaryPolicy) -> ImageGrid {
        let r = k.radius() as isize;
        ImageGrid::from_fn(img.width(), img.height(), |x, y| {
            let mut s = 0.0;
            for v in -r..=r {
                for u in -r..=r {
                    s += img.sample(x as isize + u, y as isize + v, policy)
                        * k.at((u + r) as usize, (v + r) as usize);
                }
            }
            s
        })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let img = random_image(9, 7, 1);
        for m in [1, 3, 5, 7] {
            let out = correlate(&img, &Patch::delta(m), BoundaryPolicy::Reflect).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn constant_image_with_unit_sum_kernel() {
        let img = ImageGrid::filled(8, 8, 0.37);
        let k = Patch::new(3, vec![1.0 / 9.0; 9]).unwrap();
        let out = correlate(&img, &k, BoundaryPolicy::Reflect).unwrap();
        for &v in out.as_slice() {
            assert!((v - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn correlate_matches_nested_loops() {
        let img = random_image(8, 8, 7);
        let k = random_patch(3, 8);
        for policy in [BoundaryPolicy::Reflect, BoundaryPolicy::Replicate] {
            let fast = correlate(&img, &k, policy).unwrap();
            let slow = loop_correlate(&img, &k, policy);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oversized_kernel_rejected() {
        let img = ImageGrid::zeros(4, 6);
        assert!(matches!(
            correlate(&img, &Patch::zeros(5), BoundaryPolicy::Reflect),
            Err(Error::KernelTooLarge { .. })
        ));
        assert!(box_sum_sq(&img, 5, BoundaryPolicy::Reflect).is_err());
    }

    #[test]
    fn box_sum_of_constant_and_delta() {
        let ones = ImageGrid::filled(6, 6, 1.0);
        let s = box_sum_sq(&ones, 3, BoundaryPolicy::Reflect).unwrap();
        assert!(s.as_slice().iter().all(|&v| (v - 9.0).abs() < 1e-12));

        let mut spike = ImageGrid::zeros(7, 7);
        spike.set(3, 3, 1.0);
        let s = box_sum_sq(&spike, 3, BoundaryPolicy::Reflect).unwrap();
        for y in 0usize..7 {
            for x in 0usize..7 {
                let near = x.abs_diff(3) <= 1 && y.abs_diff(3) <= 1;
                assert!((s.get(x, y) - if near { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_accumulate_is_adjoint_of_correlate() {
        // <correlate(I, k), c> == <k, accumulate(I, c)>
        let img = random_image(11, 9, 2);
        let c = random_image(11, 9, 3);
        let k = random_patch(5, 4);
        let lhs: f64 = correlate(&img, &k, BoundaryPolicy::Reflect)
            .unwrap()
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let acc = window_accumulate(&img, &c, 5, BoundaryPolicy::Reflect).unwrap();
        let rhs = dot(acc.values(), k.values());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn gaussian_preserves_constants() {
        let img = ImageGrid::filled(10, 6, 0.25);
        let g = gaussian_blur(&img, 3.0, BoundaryPolicy::Reflect).unwrap();
        assert!(g.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-14));
        assert!(gaussian_blur(&img, 0.0, BoundaryPolicy::Reflect).is_err());
    }

    proptest! {
        #[test]
        fn box_sum_matches_correlation_with_ones(seed in 0u64..1000, m in prop::sample::select(vec![1usize, 3, 5, 7])) {
            let img = random_image(12, 10, seed);
            let sq = img.map(|v| v * v);
            let ones = Patch::new(m, vec![1.0; m * m]).unwrap();
            let oracle = correlate(&sq, &ones, BoundaryPolicy::Reflect).unwrap();
            let fast = box_sum_sq(&img, m, BoundaryPolicy::Reflect).unwrap();
            for (a, b) in fast.as_slice().iter().zip(oracle.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }

        #[test]
        fn patch_dot_symmetric_and_bilinear(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let a = random_patch(5, seed);
            let b = random_patch(5, seed + 1);
            let c = random_patch(5, seed + 2);
            let ab = crate::grid::patch_dot(&a, &b).unwrap();
            let ba = crate::grid::patch_dot(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            let mut lin = a.clone();
            lin.scale(alpha);
            lin.axpy(1.0, &b);
            let lhs = crate::grid::patch_dot(&lin, &c).unwrap();
            let rhs = alpha * crate::grid::patch_dot(&a, &c).unwrap() + crate::grid::patch_dot(&b, &c).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
