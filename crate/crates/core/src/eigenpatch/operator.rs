use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryPolicy, ImageGrid, Padded, Patch, RegionMask};

use super::PatchBasis;

/// Which image supplies the window contents around each region center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSource {
    /// Windows are cut from `I * H`: samples outside the region read as zero.
    #[default]
    MaskedImage,
    /// Windows are cut from `I`; only the center decides membership.
    Image,
}

/// The patches of one region, stored as a padded window image plus center weights.
///
/// The patch autocorrelation operator is
/// `Lambda(a, b) = sum_{x in centers} W(x + a) W(x + b)`
/// where `W` is the window image. It is applied to a patch with one
/// correlation and one accumulation, never materialised unless asked for.
#[derive(Debug, Clone)]
pub struct RegionPatches {
    padded: Padded,
    /// Runs of region centers as `(y, x0, x1)`.
    spans: Vec<(usize, usize, usize)>,
    active: usize,
    side: usize,
}

fn center_spans(mask: &RegionMask) -> Vec<(usize, usize, usize)> {
    let w = mask.width();
    let mut spans = Vec::new();
    for y in 0..mask.height() {
        let row = &mask.as_slice()[y * w..(y + 1) * w];
        let mut x = 0;
        while x < w {
            if row[x] {
                let start = x;
                while x < w && row[x] {
                    x += 1;
                }
                spans.push((y, start, x));
            } else {
                x += 1;
            }
        }
    }
    spans
}

impl RegionPatches {
    pub fn new(
        img: &ImageGrid,
        mask: &RegionMask,
        side: usize,
        source: WindowSource,
        policy: BoundaryPolicy,
    ) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch side must be odd, got {side}"
            )));
        }
        img.ensure_same_dims(mask.dims())?;
        if side > img.width().min(img.height()) {
            return Err(Error::KernelTooLarge {
                side,
                width: img.width(),
                height: img.height(),
            });
        }
        let window = match source {
            WindowSource::Image => img.clone(),
            WindowSource::MaskedImage => ImageGrid::from_raw(
                img.width(),
                img.height(),
                img.as_slice()
                    .iter()
                    .zip(mask.as_slice())
                    .map(|(&v, &h)| if h { v } else { 0.0 })
                    .collect(),
            ),
        };
        Ok(Self {
            padded: Padded::new(&window, side / 2, policy),
            active: mask.count(),
            spans: center_spans(mask),
            side,
        })
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of region centers.
    #[inline]
    pub fn active_count(&self) -> usize {
        self.active
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.padded.width(), self.padded.height())
    }

    fn check_side(&self, side: usize) -> Result<()> {
        if side != self.side {
            return Err(Error::invalid(format!(
                "basis side {side} does not match patch side {}",
                self.side
            )));
        }
        Ok(())
    }

    /// `<p(x), v>` at every pixel, zero away from region centers.
    pub fn coefficients(&self, v: &Patch) -> Vec<f64> {
        let w = self.padded.width();
        let mut c = vec![0.0; w * self.padded.height()];
        for &(y, x0, x1) in &self.spans {
            self.padded
                .correlate_span(v, y, x0, x1, &mut c[y * w + x0..y * w + x1]);
        }
        c
    }

    /// `Lambda v = sum_x <p(x), v> p(x)`.
    pub fn apply(&self, v: &Patch) -> Patch {
        let m = self.side;
        let mut acc = vec![0.0; m * m];
        let mut buf = Vec::with_capacity(self.padded.width());
        for &(y, x0, x1) in &self.spans {
            buf.clear();
            buf.resize(x1 - x0, 0.0);
            self.padded.correlate_span(v, y, x0, x1, &mut buf);
            self.padded.accumulate_span(&buf, y, x0, &mut acc);
        }
        Patch::from_raw(m, acc)
    }

    /// `sum_x ||p(x)||^2` over region centers.
    pub fn total_energy(&self) -> f64 {
        let w = self.padded.width();
        let sums = self.padded.box_sum_sq();
        self.spans
            .iter()
            .map(|&(y, x0, x1)| sums[y * w + x0..y * w + x1].iter().sum::<f64>())
            .sum()
    }

    /// `U = sum_x sum_k <p(x), v_k>^2` over region centers.
    pub fn projection_energy(&self, basis: &PatchBasis) -> Result<f64> {
        self.check_side(basis.side())?;
        Ok(basis
            .iter()
            .map(|v| self.coefficients(v).iter().map(|c| c * c).sum::<f64>())
            .sum())
    }

    /// `sum_x ||p(x) - sum_k <p(x), v_k> v_k||^2`, evaluated patch by patch.
    pub fn reconstruction_error_total(&self, basis: &PatchBasis) -> Result<f64> {
        self.check_side(basis.side())?;
        let m = self.side;
        let mut p = vec![0.0; m * m];
        let mut total = 0.0;
        for &(y, x0, x1) in &self.spans {
            for x in x0..x1 {
                self.gather(x, y, &mut p);
                let mut residual = p.clone();
                for v in basis.iter() {
                    let c: f64 = p.iter().zip(v.values()).map(|(a, b)| a * b).sum();
                    residual
                        .iter_mut()
                        .zip(v.values())
                        .for_each(|(r, b)| *r -= c * b);
                }
                total += residual.iter().map(|r| r * r).sum::<f64>();
            }
        }
        Ok(total)
    }

    fn gather(&self, x: usize, y: usize, out: &mut [f64]) {
        let m = self.side;
        for dv in 0..m {
            out[dv * m..(dv + 1) * m].copy_from_slice(&self.padded.row(y + dv)[x..x + m]);
        }
    }

    /// Dense `m^2 x m^2` operator, row-major.
    pub fn operator_matrix(&self) -> Vec<f64> {
        let n = self.side * self.side;
        // column-major patch matrix: one contiguous vector per window offset
        let mut cols = vec![Vec::with_capacity(self.active); n];
        let mut p = vec![0.0; n];
        for &(y, x0, x1) in &self.spans {
            for x in x0..x1 {
                self.gather(x, y, &mut p);
                for (col, &v) in cols.iter_mut().zip(&p) {
                    col.push(v);
                }
            }
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = crate::grid::dot(&cols[i], &cols[j]);
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn apply_matches_dense_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageGrid::from_fn(12, 10, |_, _| rng.random_range(0.0..1.0));
        let mask = RegionMask::from_fn(12, 10, |x, y| (x + y) % 3 != 0);
        for source in [WindowSource::Image, WindowSource::MaskedImage] {
            let rp = RegionPatches::new(&img, &mask, 3, source, BoundaryPolicy::Reflect).unwrap();
            let a = rp.operator_matrix();
            let v = Patch::new(3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let fast = rp.apply(&v);
            for i in 0..9 {
                let dense: f64 = (0..9).map(|j| a[i * 9 + j] * v.values()[j]).sum();
                assert!((dense - fast.values()[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn masked_source_zeroes_outside_samples() {
        let img = ImageGrid::filled(5, 5, 1.0);
        let mask = RegionMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let rp = RegionPatches::new(
            &img,
            &mask,
            3,
            WindowSource::MaskedImage,
            BoundaryPolicy::Reflect,
        )
        .unwrap();
        assert_eq!(rp.total_energy(), 1.0);
        let rp = RegionPatches::new(&img, &mask, 3, WindowSource::Image, BoundaryPolicy::Reflect)
            .unwrap();
        assert_eq!(rp.total_energy(), 9.0);
    }
}
