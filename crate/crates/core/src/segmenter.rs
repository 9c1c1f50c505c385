//! Alternating minimisation: region models are refitted from the current
//! partition, then the level set evolves under the resulting error fields.

use std::collections::VecDeque;
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::eigenpatch::{gd_solve, oracle_solve, GdConfig, RegionPatches, WindowSource};
use crate::error::{Error, Result};
use crate::grid::{BoundaryPolicy, ImageGrid, LabelMap, RegionMask};
use crate::levelset::{reinit_report, signed_distance, LevelSetState, ReinitReport, DEFAULT_EPS};
use crate::region::{blend, patch_error_map_with, pc_fit, ps_fit_with, ErrorField, RegionModel};

/// How region bases are obtained at each model refresh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSolver {
    /// A few warm-started gradient-flow sweeps.
    #[default]
    Gd,
    /// Dense eigendecomposition; slow, used as a reference.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Patch side.
    pub m: usize,
    /// Bases per region.
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    /// Weight of the smooth-fit error against the patch error.
    pub alpha: f64,
    /// Length penalty, in units of squared intensity on `intensity_scale`.
    pub nu: f64,
    /// Evolution step cap.
    pub max_steps: usize,
    /// Evolution steps between model refreshes.
    pub refresh_every: usize,
    /// Flow sweeps per basis at each refresh.
    pub gd_iters: usize,
    /// Gaussian scale of the smooth fit, pixels.
    pub sigma: f64,
    pub seed: u64,
    /// Heaviside width, pixels.
    pub eps: f64,
    /// Evolution steps between signed-distance resets; 0 disables.
    pub reinit_every: usize,
    /// Stop once fewer than this share of labels differ from the labels
    /// `stable_steps` steps earlier ...
    pub stable_fraction: f64,
    /// ... 0 disables early stopping.
    pub stable_steps: usize,
    /// Error fields are computed on `[0, 1]` data and multiplied by the square
    /// of this before evolution, so `nu` keeps its meaning for 8-bit images.
    pub intensity_scale: f64,
    pub boundary: BoundaryPolicy,
    /// Window content used when fitting bases.
    pub window_source: WindowSource,
    pub solver: BasisSolver,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            m: 13,
            k: 8,
            alpha: 0.1,
            nu: 100.0,
            max_steps: 600,
            refresh_every: 10,
            gd_iters: 5,
            sigma: 10.0,
            seed: 0,
            eps: DEFAULT_EPS,
            reinit_every: 25,
            stable_fraction: 5e-4,
            stable_steps: 20,
            intensity_scale: 255.0,
            boundary: BoundaryPolicy::Reflect,
            window_source: WindowSource::Image,
            solver: BasisSolver::Gd,
        }
    }
}

impl SegmentationConfig {
    /// Defaults for textured images.
    pub fn texture() -> Self {
        Self::default()
    }

    /// Defaults for piecewise smooth images: weak length penalty.
    pub fn smooth() -> Self {
        Self {
            nu: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.m == 0 || self.m.is_multiple_of(2) {
            return bad(format!("m must be odd and positive, got {}", self.m));
        }
        if self.k == 0 || self.k > self.m * self.m {
            return bad(format!(
                "K must lie in 1..={}, got {}",
                self.m * self.m,
                self.k
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be nonnegative, got {}", self.nu));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.intensity_scale > 0.0 && self.intensity_scale.is_finite()) {
            return bad(format!(
                "intensity_scale must be positive, got {}",
                self.intensity_scale
            ));
        }
        if self.refresh_every == 0 {
            return bad("refresh_every must be at least 1".into());
        }
        if self.gd_iters == 0 {
            return bad("gd_iters must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.stable_fraction) {
            return bad(format!(
                "stable_fraction must lie in [0, 1], got {}",
                self.stable_fraction
            ));
        }
        Ok(())
    }
}

/// Energies around one model refresh, in `[0, 1]` intensity units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshRecord {
    pub step: usize,
    /// Data energy of the previous models on the current partition.
    pub energy_before: Option<f64>,
    pub energy_after: f64,
    pub region_sizes: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Region ids; in a two-phase run id 0 is the inside of the level set.
    pub labels: LabelMap,
    pub models: Vec<RegionModel>,
    /// Data energy after each model refresh.
    pub energy_trace: Vec<f64>,
    pub steps_used: usize,
    pub refreshes: Vec<RefreshRecord>,
    pub reinits: Vec<ReinitReport>,
    pub warnings: Vec<String>,
    /// Final level set (two-phase runs only).
    pub phi: Option<ImageGrid>,
    pub elapsed_secs: f64,
}

impl SegmentationResult {
    /// Region id 0 as a mask.
    pub fn mask(&self) -> RegionMask {
        self.labels.region(0)
    }

    pub fn wall_time_per_step(&self) -> f64 {
        if self.steps_used == 0 {
            0.0
        } else {
            self.elapsed_secs / self.steps_used as f64
        }
    }
}

struct RegionFit {
    model: RegionModel,
    ps_err: ErrorField,
    patch_err: ErrorField,
}

impl RegionFit {
    fn coupled(&self, alpha: f64) -> Result<ErrorField> {
        blend(&self.ps_err, &self.patch_err, alpha)
    }
}

fn masked_sum(field: &ErrorField, mask: &RegionMask) -> f64 {
    field
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &h)| h)
        .map(|(v, _)| v)
        .sum()
}

fn squared_residual(img: &ImageGrid, g: &ImageGrid) -> Result<ErrorField> {
    img.zip_map(g, |a, b| (a - b) * (a - b))
}

/// Refits one region on `mask`. A refitted basis or smooth fit replaces the
/// previous one only if it does not raise that term's energy on `mask`.
fn fit_region(
    img: &ImageGrid,
    mask: &RegionMask,
    prev: Option<&RegionFit>,
    cfg: &SegmentationConfig,
    seed: u64,
) -> Result<RegionFit> {
    let patches = RegionPatches::new(img, mask, cfg.m, cfg.window_source, cfg.boundary)?;
    let mut basis = match cfg.solver {
        BasisSolver::Gd => {
            let gd = GdConfig::sweeps(cfg.gd_iters, seed);
            gd_solve(&patches, cfg.k, &gd, prev.map(|p| &p.model.basis))?.0
        }
        BasisSolver::Oracle => oracle_solve(&patches, cfg.k)?.0,
    };
    let mut patch_err = patch_error_map_with(img, &basis, cfg.boundary)?;
    let (c, _) = pc_fit(img, mask)?;
    let (mut g, _) = ps_fit_with(img, mask, cfg.sigma, cfg.boundary)?;
    let mut ps_err = squared_residual(img, &g)?;
    if let Some(p) = prev {
        if masked_sum(&p.patch_err, mask) < masked_sum(&patch_err, mask) {
            basis = p.model.basis.clone();
            patch_err = p.patch_err.clone();
        }
        if masked_sum(&p.ps_err, mask) < masked_sum(&ps_err, mask) {
            g = p.model.g.clone();
            ps_err = p.ps_err.clone();
        }
    }
    Ok(RegionFit {
        model: RegionModel::new(basis, g, c, cfg.alpha, cfg.sigma)?,
        ps_err,
        patch_err,
    })
}

fn data_energy(e1: &ErrorField, e2: &ErrorField, mask: &RegionMask) -> f64 {
    crate::region::partition_energy(e1, e2, mask).expect("fields share the image size")
}

fn check_inputs(img: &ImageGrid, mask: &RegionMask, cfg: &SegmentationConfig) -> Result<()> {
    cfg.validate()?;
    mask.ensure_same_dims(img.dims())?;
    if cfg.m > img.width() || cfg.m > img.height() {
        return Err(Error::KernelTooLarge {
            side: cfg.m,
            width: img.width(),
            height: img.height(),
        });
    }
    if mask.is_uniform() {
        return Err(Error::invalid("initial mask must contain both labels"));
    }
    Ok(())
}

/// Two-phase segmentation started from `init_mask` (true = region id 0).
pub fn segment_two_phase(
    img: &ImageGrid,
    init_mask: &RegionMask,
    cfg: &SegmentationConfig,
) -> Result<SegmentationResult> {
    segment_two_phase_observed(img, init_mask, cfg, &mut |_, _| {})
}

/// [`segment_two_phase`] calling `observer(step, phi)` after every evolution step.
pub fn segment_two_phase_observed(
    img: &ImageGrid,
    init_mask: &RegionMask,
    cfg: &SegmentationConfig,
    observer: &mut dyn FnMut(usize, &ImageGrid),
) -> Result<SegmentationResult> {
    check_inputs(img, init_mask, cfg)?;
    let start = Instant::now();
    let n_pixels = img.len();
    let min_region = cfg.m * cfg.m;
    let scale2 = cfg.intensity_scale * cfg.intensity_scale;

    let mut ls = LevelSetState::new(signed_distance(init_mask)?, cfg.eps, cfg.nu)?;
    let mut mask = init_mask.clone();
    let mut fits: [Option<RegionFit>; 2] = [None, None];
    let mut fields: Option<[ErrorField; 2]> = None;
    let mut result = SegmentationResult {
        labels: LabelMap::from_mask(init_mask),
        models: Vec::new(),
        energy_trace: Vec::new(),
        steps_used: 0,
        refreshes: Vec::new(),
        reinits: Vec::new(),
        warnings: Vec::new(),
        phi: None,
        elapsed_secs: 0.0,
    };
    let mut refresh_index = 0u64;
    let mut history: VecDeque<RegionMask> = VecDeque::with_capacity(cfg.stable_steps + 1);
    history.push_back(init_mask.clone());

    for step in 0..cfg.max_steps {
        if step % cfg.refresh_every == 0 {
            let regions = [mask.clone(), mask.complement()];
            let energy_before = match (&fits[0], &fits[1]) {
                (Some(a), Some(b)) => Some(data_energy(
                    &a.coupled(cfg.alpha)?,
                    &b.coupled(cfg.alpha)?,
                    &mask,
                )),
                _ => None,
            };
            for r in 0..2 {
                let size = regions[r].count();
                if size < min_region && fits[r].is_some() {
                    let msg = format!(
                        "region {r} shrank to {size} pixels at step {step}; its model is frozen"
                    );
                    warn!("{msg}");
                    result.warnings.push(msg);
                    continue;
                }
                let seed = cfg
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(refresh_index * 2 + r as u64);
                let fit = fit_region(img, &regions[r], fits[r].as_ref(), cfg, seed).map_err(
                    |e| match e {
                        Error::DegenerateRegion(why) => {
                            Error::DegenerateRegion(format!("region {r} at step {step}: {why}"))
                        }
                        other => other,
                    },
                )?;
                fits[r] = Some(fit);
            }
            refresh_index += 1;
            let [a, b] = [fits[0].as_ref().unwrap(), fits[1].as_ref().unwrap()];
            let (e1, e2) = (a.coupled(cfg.alpha)?, b.coupled(cfg.alpha)?);
            let energy_after = data_energy(&e1, &e2, &mask);
            debug!(
                "step {step}: energy {energy_after:.6e}, sizes {:?}",
                [regions[0].count(), regions[1].count()]
            );
            result.energy_trace.push(energy_after);
            result.refreshes.push(RefreshRecord {
                step,
                energy_before,
                energy_after,
                region_sizes: [regions[0].count(), regions[1].count()],
            });
            fields = Some([e1.map(|v| v * scale2), e2.map(|v| v * scale2)]);
        }

        let [e1, e2] = fields.as_ref().expect("fields are set at step 0");
        ls = ls.evolve_step(e1, e2)?;
        result.steps_used = step + 1;
        if cfg.reinit_every > 0 && (step + 1) % cfg.reinit_every == 0 {
            let next = ls.reinitialize();
            result.reinits.push(reinit_report(&ls.phi, &next.phi)?);
            ls = next;
        }

        mask = ls.mask();
        observer(step + 1, &ls.phi);
        if cfg.stable_steps > 0 {
            history.push_back(mask.clone());
            if history.len() > cfg.stable_steps {
                let old = history.pop_front().expect("non-empty");
                if (old.hamming(&mask)? as f64) < cfg.stable_fraction * n_pixels as f64 {
                    debug!("labels stable after {} steps", step + 1);
                    break;
                }
            }
        }
    }

    result.labels = LabelMap::from_mask(&mask);
    result.models = fits.into_iter().map(|f| f.expect("fitted").model).collect();
    result.phi = Some(ls.phi);
    result.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Coupled error of a fitted model over the whole image.
pub fn model_error(
    img: &ImageGrid,
    model: &RegionModel,
    boundary: BoundaryPolicy,
) -> Result<ErrorField> {
    let ps = squared_residual(img, &model.g)?;
    let patch = patch_error_map_with(img, &model.basis, boundary)?;
    blend(&ps, &patch, model.alpha)
}

/// `n` target-against-rest runs; each pixel goes to the target model with the
/// lowest coupled error, ties to the lowest region id.
pub fn segment_one_vs_all(
    img: &ImageGrid,
    init_masks: &[RegionMask],
    cfg: &SegmentationConfig,
) -> Result<SegmentationResult> {
    if init_masks.len() < 2 {
        return Err(Error::invalid("one-against-all needs at least two regions"));
    }
    for (i, a) in init_masks.iter().enumerate() {
        a.ensure_same_dims(img.dims())?;
        for b in &init_masks[i + 1..] {
            if a.and(b)?.count() > 0 {
                return Err(Error::invalid("initial masks must be disjoint"));
            }
        }
    }
    let start = Instant::now();
    let mut out = SegmentationResult {
        labels: LabelMap::from_mask(&init_masks[0]),
        models: Vec::new(),
        energy_trace: Vec::new(),
        steps_used: 0,
        refreshes: Vec::new(),
        reinits: Vec::new(),
        warnings: Vec::new(),
        phi: None,
        elapsed_secs: 0.0,
    };
    let mut best: Option<ErrorField> = None;
    let mut labels = vec![0u32; img.len()];
    for (id, target) in init_masks.iter().enumerate() {
        let wrap = |e: Error| Error::Region {
            region: id,
            source: Box::new(e),
        };
        let sub = segment_two_phase(img, target, cfg).map_err(wrap)?;
        let model = sub.models[0].clone();
        let err = model_error(img, &model, cfg.boundary).map_err(wrap)?;
        match &mut best {
            None => best = Some(err),
            Some(b) => {
                let mut merged = b.as_slice().to_vec();
                for (i, (slot, &new)) in merged.iter_mut().zip(err.as_slice()).enumerate() {
                    if new < *slot {
                        *slot = new;
                        labels[i] = id as u32;
                    }
                }
                *b = ImageGrid::new(img.width(), img.height(), merged)?;
            }
        }
        out.models.push(model);
        out.energy_trace.extend(&sub.energy_trace);
        out.steps_used += sub.steps_used;
        out.refreshes.extend(sub.refreshes);
        out.reinits.extend(sub.reinits);
        out.warnings.extend(
            sub.warnings
                .into_iter()
                .map(|w| format!("subproblem {id}: {w}")),
        );
    }
    out.labels = LabelMap::new(img.width(), img.height(), labels)?;
    out.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Disks of `radius` on a square lattice with the given spacing, offset by
/// half a spacing from the top-left corner.
pub fn circle_grid(width: usize, height: usize, radius: f64, spacing: f64) -> Result<RegionMask> {
    if !(radius > 0.0 && spacing > 0.0) {
        return Err(Error::invalid("circle radius and spacing must be positive"));
    }
    let mask = RegionMask::from_fn(width, height, |x, y| {
        let fx = (x as f64 + 0.5) / spacing;
        let fy = (y as f64 + 0.5) / spacing;
        let dx = (fx - fx.floor() - 0.5) * spacing;
        let dy = (fy - fy.floor() - 0.5) * spacing;
        dx * dx + dy * dy <= radius * radius
    });
    if mask.is_uniform() {
        return Err(Error::invalid("circle grid does not split the image"));
    }
    Ok(mask)
}
