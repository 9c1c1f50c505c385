//! Synthetic mosaics, evaluation metrics and batch experiments.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::eigenpatch::{gd_solve, oracle_solve, GdConfig, RegionPatches, WindowSource};
use crate::error::{Error, Result};
use crate::grid::{io, BoundaryPolicy, ImageGrid, LabelMap, RegionMask};
use crate::segmenter::{circle_grid, segment_two_phase, SegmentationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureKind {
    /// Plane wave; `orientation` in degrees, `frequency` in cycles per pixel.
    Sinusoid {
        orientation: f64,
        frequency: f64,
    },
    /// Square checkerboard; `period` pixels per light+dark pair.
    Checker {
        period: f64,
    },
    /// Sum of random-phase plane waves with orientations within
    /// `bandwidth` degrees of `orientation` and frequencies within 25% of `frequency`.
    BandpassNoise {
        orientation: f64,
        frequency: f64,
        bandwidth: f64,
        seed: u64,
    },
    Flat {
        level: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureDescriptor {
    #[serde(flatten)]
    pub kind: TextureKind,
    /// Peak-to-peak amplitude around the mean level (unused by `flat`).
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    /// Mean intensity of the non-flat kinds.
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_contrast() -> f64 {
    0.5
}

fn default_level() -> f64 {
    0.5
}

const BANDPASS_WAVES: usize = 24;

impl TextureDescriptor {
    pub fn sinusoid(orientation: f64, frequency: f64) -> Self {
        Self::with_kind(TextureKind::Sinusoid {
            orientation,
            frequency,
        })
    }

    pub fn checker(period: f64) -> Self {
        Self::with_kind(TextureKind::Checker { period })
    }

    pub fn bandpass(orientation: f64, frequency: f64, bandwidth: f64, seed: u64) -> Self {
        Self::with_kind(TextureKind::BandpassNoise {
            orientation,
            frequency,
            bandwidth,
            seed,
        })
    }

    pub fn flat(level: f64) -> Self {
        Self::with_kind(TextureKind::Flat { level })
    }

    fn with_kind(kind: TextureKind) -> Self {
        Self {
            kind,
            contrast: default_contrast(),
            level: default_level(),
        }
    }

    pub fn with_contrast(mut self, contrast: f64) -> Self {
        self.contrast = contrast;
        self
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        match self.kind {
            TextureKind::Sinusoid { frequency, .. }
            | TextureKind::BandpassNoise { frequency, .. } => {
                if !(frequency > 0.0 && frequency * 1.25 <= 0.5) {
                    return bad("frequency must lie in (0, 0.4] cycles per pixel");
                }
            }
            TextureKind::Checker { period } => {
                if period.is_nan() || period < 2.0 {
                    return bad("checker period must be at least 2 pixels");
                }
            }
            TextureKind::Flat { level } => {
                return if level.is_finite() {
                    Ok(())
                } else {
                    bad("flat level must be finite")
                };
            }
        }
        if let TextureKind::BandpassNoise { bandwidth, .. } = self.kind {
            if !(0.0..=90.0).contains(&bandwidth) {
                return bad("bandwidth must lie in [0, 90] degrees");
            }
        }
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return bad("contrast must be positive");
        }
        Ok(())
    }

    /// Renders the texture on a `width x height` grid.
    pub fn render(&self, width: usize, height: usize) -> Result<ImageGrid> {
        self.validate()?;
        let amp = 0.5 * self.contrast;
        let level = self.level;
        Ok(match self.kind {
            TextureKind::Flat { level } => ImageGrid::filled(width, height, level),
            TextureKind::Sinusoid {
                orientation,
                frequency,
            } => {
                let (s, c) = orientation.to_radians().sin_cos();
                ImageGrid::from_fn(width, height, |x, y| {
                    let t = x as f64 * c + y as f64 * s;
                    level + amp * (2.0 * PI * frequency * t).sin()
                })
            }
            TextureKind::Checker { period } => ImageGrid::from_fn(width, height, |x, y| {
                let cx = ((x as f64 + 0.5) / (0.5 * period)).floor() as i64;
                let cy = ((y as f64 + 0.5) / (0.5 * period)).floor() as i64;
                if (cx + cy).rem_euclid(2) == 0 {
                    level + amp
                } else {
                    level - amp
                }
            }),
            TextureKind::BandpassNoise {
                orientation,
                frequency,
                bandwidth,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let waves: Vec<(f64, f64, f64)> = (0..BANDPASS_WAVES)
                    .map(|_| {
                        let theta =
                            (orientation + rng.random_range(-1.0..=1.0) * bandwidth).to_radians();
                        let f = frequency * rng.random_range(0.75..=1.25);
                        let phase = rng.random_range(0.0..2.0 * PI);
                        (
                            2.0 * PI * f * theta.cos(),
                            2.0 * PI * f * theta.sin(),
                            phase,
                        )
                    })
                    .collect();
                // same variance as a single wave of amplitude `amp`
                let norm =
                    amp / (BANDPASS_WAVES as f64 / 2.0).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
                ImageGrid::from_fn(width, height, |x, y| {
                    let (xf, yf) = (x as f64, y as f64);
                    let s: f64 = waves
                        .iter()
                        .map(|&(kx, ky, p)| (kx * xf + ky * yf + p).sin())
                        .sum();
                    level + norm * s
                })
            }
        })
    }
}

/// A texture given either as a descriptor or as an image file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextureSource {
    Synthetic(TextureDescriptor),
    File { path: PathBuf },
}

impl TextureSource {
    fn render(&self, width: usize, height: usize) -> Result<ImageGrid> {
        match self {
            Self::Synthetic(d) => d.render(width, height),
            Self::File { path } => {
                let img = io::load_image(path)?;
                if img.width() < width || img.height() < height {
                    return Err(Error::invalid(format!(
                        "texture {} is {}x{}, smaller than the {width}x{height} mosaic",
                        path.display(),
                        img.width(),
                        img.height()
                    )));
                }
                Ok(ImageGrid::from_fn(width, height, |x, y| img.get(x, y)))
            }
        }
    }
}

impl From<TextureDescriptor> for TextureSource {
    fn from(d: TextureDescriptor) -> Self {
        Self::Synthetic(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Template {
    /// Texture B fills the right half.
    #[default]
    RightHalf,
    /// Texture B fills a centred disk covering a third of the area.
    Disk,
    /// Texture B where the mask file is bright.
    File(PathBuf),
}

impl Template {
    pub fn render(&self, size: usize) -> Result<RegionMask> {
        match self {
            Self::RightHalf => Ok(RegionMask::from_fn(size, size, |x, _| x >= size / 2)),
            Self::Disk => {
                let r = (size * size) as f64 / (3.0 * PI);
                let c = size as f64 / 2.0 - 0.5;
                Ok(RegionMask::from_fn(size, size, |x, y| {
                    (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r
                }))
            }
            Self::File(path) => {
                let m = io::load_mask(path)?;
                if m.dims() != (size, size) {
                    return Err(Error::DimensionMismatch {
                        expected: (size, size),
                        found: m.dims(),
                    });
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicSpec {
    pub texture_a: TextureSource,
    pub texture_b: TextureSource,
    #[serde(default)]
    pub template: Template,
    /// Subtract each texture's mean over its own region.
    #[serde(default)]
    pub zero_mean: bool,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub noise_sd: f64,
    /// Seed of the pixel noise.
    #[serde(default)]
    pub seed: u64,
}

fn default_size() -> usize {
    128
}

impl MosaicSpec {
    pub fn new(a: impl Into<TextureSource>, b: impl Into<TextureSource>) -> Self {
        Self {
            texture_a: a.into(),
            texture_b: b.into(),
            template: Template::RightHalf,
            zero_mean: false,
            size: default_size(),
            noise_sd: 0.0,
            seed: 0,
        }
    }

    pub fn zero_mean(mut self, on: bool) -> Self {
        self.zero_mean = on;
        self
    }

    pub fn size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }

    pub fn template(mut self, template: Template) -> Self {
        self.template = template;
        self
    }

    pub fn noise(mut self, sd: f64, seed: u64) -> Self {
        self.noise_sd = sd;
        self.seed = seed;
        self
    }

    /// Smallest allowed mosaic side for patch side `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.size < 4 * m {
            return Err(Error::invalid(format!(
                "mosaic size {} is below 4m = {}",
                self.size,
                4 * m
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be nonnegative"));
        }
        Ok(())
    }
}

fn masked_mean(img: &ImageGrid, mask: &RegionMask) -> f64 {
    let n = mask.count();
    if n == 0 {
        return 0.0;
    }
    img.as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &h)| h)
        .map(|(v, _)| v)
        .sum::<f64>()
        / n as f64
}

fn add_noise(img: &mut [f64], sd: f64, seed: u64) {
    if sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sd).expect("finite sd");
        for v in img {
            *v += normal.sample(&mut rng);
        }
    }
}

/// Pastes texture B through the template, A elsewhere. Returns the image and
/// the template (true = B).
pub fn make_mosaic(spec: &MosaicSpec) -> Result<(ImageGrid, RegionMask)> {
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::invalid("noise_sd must be nonnegative"));
    }
    let n = spec.size;
    let truth = spec.template.render(n)?;
    let outside = truth.complement();
    let mut a = spec.texture_a.render(n, n)?;
    let mut b = spec.texture_b.render(n, n)?;
    if spec.zero_mean {
        let (ma, mb) = (masked_mean(&a, &outside), masked_mean(&b, &truth));
        a = a.map(|v| v - ma);
        b = b.map(|v| v - mb);
    }
    let mut data: Vec<f64> = (0..n * n)
        .map(|i| {
            if truth.as_slice()[i] {
                b.as_slice()[i]
            } else {
                a.as_slice()[i]
            }
        })
        .collect();
    add_noise(&mut data, spec.noise_sd, spec.seed);
    Ok((ImageGrid::new(n, n, data)?, truth))
}

/// Five-region cross layout: top and bottom bands, left and right blocks and
/// a centre square, each a third of the side. Region ids follow that order.
pub fn cross_template(size: usize) -> LabelMap {
    let t = size / 3;
    let labels = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            if y < t {
                0
            } else if y >= size - t {
                1
            } else if x < t {
                2
            } else if x >= size - t {
                3
            } else {
                4
            }
        })
        .collect();
    LabelMap::new(size, size, labels).expect("labels sized to the grid")
}

/// Renders one texture per region of `layout`.
pub fn make_region_mosaic(
    textures: &[TextureSource],
    layout: &LabelMap,
    zero_mean: bool,
    noise_sd: f64,
    seed: u64,
) -> Result<ImageGrid> {
    if textures.len() < layout.num_labels() {
        return Err(Error::invalid(format!(
            "layout has {} regions but {} textures were given",
            layout.num_labels(),
            textures.len()
        )));
    }
    let (w, h) = layout.dims();
    let mut data = vec![0.0; w * h];
    for (id, tex) in textures.iter().enumerate().take(layout.num_labels()) {
        let mut img = tex.render(w, h)?;
        let region = layout.region(id as u32);
        if zero_mean {
            let mu = masked_mean(&img, &region);
            img = img.map(|v| v - mu);
        }
        for (i, &inside) in region.as_slice().iter().enumerate() {
            if inside {
                data[i] = img.as_slice()[i];
            }
        }
    }
    add_noise(&mut data, noise_sd, seed);
    ImageGrid::new(w, h, data)
}

/// Square seed of half-side `r` centred on the pixel of `region` farthest
/// from its boundary and from the image border, clipped to the region. Ties go
/// to the pixel nearest the region centroid.
pub fn interior_seed(region: &RegionMask, r: usize) -> Result<RegionMask> {
    let phi = crate::levelset::signed_distance(region)?;
    let (w, h) = region.dims();
    let n = region.count() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if region.get(x, y) {
                cx += x as f64 / n;
                cy += y as f64 / n;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut at = (0, 0);
    for y in 0..h {
        for x in 0..w {
            let edge = (x.min(y).min(w - 1 - x).min(h - 1 - y) + 1) as f64;
            let depth = phi.get(x, y).min(edge);
            let off = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if depth > best.0 || (depth == best.0 && off < best.1) {
                best = (depth, off);
                at = (x, y);
            }
        }
    }
    Ok(RegionMask::from_fn(w, h, |x, y| {
        region.get(x, y) && x.abs_diff(at.0) <= r && y.abs_diff(at.1) <= r
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub error_rate: f64,
    /// Mislabelled pixels of each true region over all pixels.
    pub error_rate_per_region: Vec<f64>,
}

/// Two-phase error rate under the better of the two label correspondences.
pub fn evaluate_mask(labels: &RegionMask, truth: &RegionMask) -> Result<Metrics> {
    let n = truth.len() as f64;
    let diff = labels.hamming(truth)?;
    let flipped = labels.len() - diff;
    let (wrong, swap) = if diff <= flipped {
        (diff, false)
    } else {
        (flipped, true)
    };
    let mut per = vec![0.0; 2];
    for (&t, &l) in truth.as_slice().iter().zip(labels.as_slice()) {
        if (l != swap) != t {
            per[usize::from(!t)] += 1.0 / n;
        }
    }
    Ok(Metrics {
        error_rate: wrong as f64 / n,
        error_rate_per_region: per,
    })
}

/// Multi-region error with region ids taken as given.
pub fn evaluate_labels(labels: &LabelMap, truth: &LabelMap) -> Result<Metrics> {
    if labels.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            found: labels.dims(),
        });
    }
    let n = truth.as_slice().len() as f64;
    let mut per = vec![0.0; truth.num_labels()];
    for (&l, &t) in labels.as_slice().iter().zip(truth.as_slice()) {
        if l != t {
            per[t as usize] += 1.0 / n;
        }
    }
    let total = labels
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(l, t)| l != t)
        .count() as f64
        / n;
    Ok(Metrics {
        error_rate: total,
        error_rate_per_region: per,
    })
}

/// One cell of the solver comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub image: usize,
    pub k: usize,
    /// Mean squared patch residual per pixel.
    pub gd_error: f64,
    pub oracle_error: f64,
    /// Errors divided by the image's largest mean error.
    pub gd_normalized: f64,
    pub oracle_normalized: f64,
    pub gd_energy: f64,
    pub oracle_energy: f64,
    pub gd_seconds: f64,
}

/// Full-image reconstruction errors of gradient-flow and oracle bases for every `k`.
pub fn run_benchmark_gd_vs_svd(
    images: &[ImageGrid],
    m: usize,
    k_values: &[usize],
    gd: &GdConfig,
) -> Result<Vec<BenchRow>> {
    for &k in k_values {
        if k == 0 || k > m * m {
            return Err(Error::invalid(format!("K = {k} outside 1..={}", m * m)));
        }
    }
    let mut rows = Vec::new();
    for (idx, img) in images.iter().enumerate() {
        let mask = RegionMask::filled(img.width(), img.height(), true);
        let patches = RegionPatches::new(
            img,
            &mask,
            m,
            WindowSource::MaskedImage,
            BoundaryPolicy::Reflect,
        )?;
        let denom = (patches.active_count() * m * m) as f64;
        let kmax = k_values.iter().copied().max().unwrap_or(1);
        let (oracle_full, _) = oracle_solve(&patches, kmax)?;
        let first = rows.len();
        for &k in k_values {
            let t0 = std::time::Instant::now();
            let (basis, _) = gd_solve(&patches, k, gd, None)?;
            let secs = t0.elapsed().as_secs_f64();
            let oracle = oracle_full.truncated(k)?;
            rows.push(BenchRow {
                image: idx,
                k,
                gd_error: patches.reconstruction_error_total(&basis)? / denom,
                oracle_error: patches.reconstruction_error_total(&oracle)? / denom,
                gd_normalized: 0.0,
                oracle_normalized: 0.0,
                gd_energy: patches.projection_energy(&basis)?,
                oracle_energy: patches.projection_energy(&oracle)?,
                gd_seconds: secs,
            });
        }
        let worst = rows[first..]
            .iter()
            .map(|r| r.gd_error.max(r.oracle_error))
            .fold(0.0, f64::max);
        // errors at roundoff level relative to the patch energy count as exact
        let exact = worst <= 1e-6 * patches.total_energy() / denom;
        for r in &mut rows[first..] {
            let (g, o) = if !exact {
                (r.gd_error / worst, r.oracle_error / worst)
            } else {
                (0.0, 0.0)
            };
            r.gd_normalized = g;
            r.oracle_normalized = o;
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("image,k,gd_error,oracle_error,gd_normalized,oracle_normalized,gd_energy,oracle_energy,gd_seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.10e},{:.10e},{:.8},{:.8},{:.10e},{:.10e},{:.4}",
            r.image,
            r.k,
            r.gd_error,
            r.oracle_error,
            r.gd_normalized,
            r.oracle_normalized,
            r.gd_energy,
            r.oracle_energy,
            r.gd_seconds
        );
    }
    s
}

/// Ten equal-mean texture pairs (sinusoid, checker and bandpass) on 128x128
/// right-half mosaics, used for the structure-only benchmark.
pub fn structure_only_suite() -> Vec<MosaicSpec> {
    let s = TextureDescriptor::sinusoid;
    let c = TextureDescriptor::checker;
    let b = TextureDescriptor::bandpass;
    [
        (b(0.0, 0.15, 15.0, 1), b(90.0, 0.15, 15.0, 2)),
        (c(8.0), b(30.0, 0.2, 20.0, 5)),
        (c(10.0), b(45.0, 0.12, 30.0, 9)),
        (s(45.0, 0.1), c(8.0)),
        (b(45.0, 0.2, 20.0, 10), b(135.0, 0.2, 20.0, 11)),
        (b(60.0, 0.1, 25.0, 14), b(150.0, 0.18, 25.0, 15)),
        (b(20.0, 0.3, 30.0, 16), c(8.0)),
        (c(6.0), b(0.0, 0.1, 30.0, 23)),
        (s(90.0, 0.25), b(0.0, 0.12, 30.0, 24)),
        (s(135.0, 0.1), b(45.0, 0.2, 25.0, 25)),
    ]
    .into_iter()
    .map(|(a, b)| MosaicSpec::new(a, b).zero_mean(true))
    .collect()
}

/// Initial contour of a two-phase run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum InitContour {
    /// Axis-aligned box given as fractions of the image size.
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Disk with centre and radius given as fractions of the width.
    Circle { cx: f64, cy: f64, r: f64 },
    /// Disks on a square lattice, in pixels.
    CircleGrid { radius: f64, spacing: f64 },
    /// Bright pixels of a mask file.
    File { path: PathBuf },
}

impl Default for InitContour {
    /// A box over the right-centre of the image, crossing the vertical midline.
    fn default() -> Self {
        Self::Rectangle {
            x0: 0.4,
            y0: 0.1,
            x1: 0.9,
            y1: 0.9,
        }
    }
}

impl InitContour {
    pub fn render(&self, width: usize, height: usize) -> Result<RegionMask> {
        let mask = match self {
            Self::Rectangle { x0, y0, x1, y1 } => {
                if !(0.0 <= *x0 && x0 < x1 && *x1 <= 1.0 && 0.0 <= *y0 && y0 < y1 && *y1 <= 1.0) {
                    return Err(Error::invalid(
                        "rectangle fractions must satisfy 0 <= lo < hi <= 1",
                    ));
                }
                let (w, h) = (width as f64, height as f64);
                RegionMask::from_fn(width, height, |x, y| {
                    let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                    fx >= x0 * w && fx < x1 * w && fy >= y0 * h && fy < y1 * h
                })
            }
            Self::Circle { cx, cy, r } => {
                if r.is_nan() || *r <= 0.0 {
                    return Err(Error::invalid("circle radius must be positive"));
                }
                let w = width as f64;
                RegionMask::from_fn(width, height, |x, y| {
                    let (dx, dy) = (x as f64 + 0.5 - cx * w, y as f64 + 0.5 - cy * w);
                    dx * dx + dy * dy <= (r * w).powi(2)
                })
            }
            Self::CircleGrid { radius, spacing } => circle_grid(width, height, *radius, *spacing)?,
            Self::File { path } => {
                let m = io::load_mask(path)?;
                if m.dims() != (width, height) {
                    return Err(Error::DimensionMismatch {
                        expected: (width, height),
                        found: m.dims(),
                    });
                }
                m
            }
        };
        if mask.is_uniform() {
            return Err(Error::invalid("initial contour does not split the image"));
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pair: usize,
    pub alpha: f64,
    pub error_rate: f64,
    pub steps: usize,
    pub seconds: f64,
}

/// Segments every mosaic at every `alpha` from the default initial contour.
pub fn run_alpha_sweep(
    specs: &[MosaicSpec],
    alphas: &[f64],
    base: &SegmentationConfig,
    init: &InitContour,
) -> Result<Vec<SweepRow>> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
    }
    let mut rows = Vec::new();
    for (pair, spec) in specs.iter().enumerate() {
        spec.validate(base.m)?;
        let (img, truth) = make_mosaic(spec)?;
        let init = init.render(img.width(), img.height())?;
        for &alpha in alphas {
            let cfg = SegmentationConfig {
                alpha,
                ..base.clone()
            };
            let res = segment_two_phase(&img, &init, &cfg)?;
            let metrics = evaluate_mask(&res.mask(), &truth)?;
            rows.push(SweepRow {
                pair,
                alpha,
                error_rate: metrics.error_rate,
                steps: res.steps_used,
                seconds: res.elapsed_secs,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("pair,alpha,error_rate,steps,seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{},{:.3}",
            r.pair, r.alpha, r.error_rate, r.steps, r.seconds
        );
    }
    s
}
