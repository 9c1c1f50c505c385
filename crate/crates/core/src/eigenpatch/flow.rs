use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_count, PatchBasis, RegionPatches};
use crate::error::{Error, Result};
use crate::grid::{dot, Patch};

/// Settings for the greedy gradient-flow basis solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    /// Flow iterations per basis.
    pub max_iters: usize,
    /// Relative change of the Rayleigh quotient that ends a basis step; 0 disables.
    pub tol: f64,
    /// Step length of the normalised update `v + step * Lv / |Lv|`.
    pub step: f64,
    pub seed: u64,
    /// Compare each converged basis against a short run from a fresh start
    /// and switch to it when it is clearly better.
    pub restart_check: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-7,
            step: 1.0,
            seed: 0,
            restart_check: true,
        }
    }
}

impl GdConfig {
    /// Fixed sweep budget used inside the segmentation loop.
    pub fn sweeps(iters: usize, seed: u64) -> Self {
        Self {
            max_iters: iters,
            tol: 0.0,
            step: 1.0,
            seed,
            restart_check: false,
        }
    }
}

/// Outcome of a [`gd_solve`] run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Projection energy of the bases found so far plus the Rayleigh quotient
    /// of the basis being refined, recorded after every flow iteration.
    pub energy_trace: Vec<f64>,
    /// Rayleigh quotient of each final basis.
    pub basis_energies: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub restarts: usize,
}

/// One greedy step: the normalised gradient flow for a single basis,
/// kept orthogonal to the bases already fixed.
pub struct EigenFlow<'a> {
    patches: &'a RegionPatches,
    fixed: &'a [Patch],
    v: Patch,
    lv: Patch,
    rayleigh: f64,
    step: f64,
}

impl<'a> EigenFlow<'a> {
    pub fn new(patches: &'a RegionPatches, fixed: &'a [Patch], init: Patch, step: f64) -> Self {
        assert_eq!(
            init.side(),
            patches.side(),
            "initial patch has the wrong side"
        );
        let mut v = init;
        deflate(&mut v, fixed);
        deflate(&mut v, fixed);
        if v.normalize() < 1e-12 {
            v = least_covered_impulse(patches.side(), fixed);
        }
        let lv = patches.apply(&v);
        let rayleigh = dot(v.values(), lv.values());
        Self {
            patches,
            fixed,
            v,
            lv,
            rayleigh,
            step,
        }
    }

    /// `v <- normalize(deflate(v + step * Lv / |Lv|))`.
    pub fn advance(&mut self) {
        let norm = self.lv.norm();
        if norm == 0.0 {
            return;
        }
        self.v.axpy(self.step / norm, &self.lv);
        deflate(&mut self.v, self.fixed);
        self.v.normalize();
        self.lv = self.patches.apply(&self.v);
        self.rayleigh = dot(self.v.values(), self.lv.values());
    }

    pub fn current(&self) -> &Patch {
        &self.v
    }

    /// `<v, L v>`: the projection energy this basis contributes.
    pub fn rayleigh(&self) -> f64 {
        self.rayleigh
    }

    pub fn into_patch(self) -> Patch {
        self.v
    }
}

fn deflate(v: &mut Patch, fixed: &[Patch]) {
    for q in fixed {
        let c = dot(v.values(), q.values());
        v.axpy(-c, q);
    }
}

/// Unit impulse with the smallest projection onto `fixed`, orthogonalised.
fn least_covered_impulse(side: usize, fixed: &[Patch]) -> Patch {
    let n = side * side;
    let best = (0..n)
        .min_by(|&a, &b| {
            let ca: f64 = fixed.iter().map(|q| q.values()[a].powi(2)).sum();
            let cb: f64 = fixed.iter().map(|q| q.values()[b].powi(2)).sum();
            ca.total_cmp(&cb)
        })
        .unwrap_or(0);
    let mut v = Patch::zeros(side);
    v.values_mut()[best] = 1.0;
    deflate(&mut v, fixed);
    deflate(&mut v, fixed);
    v.normalize();
    v
}

fn random_patch(side: usize, rng: &mut ChaCha8Rng) -> Patch {
    let mut p = Patch::zeros(side);
    p.values_mut()
        .iter_mut()
        .for_each(|x| *x = rng.random_range(-1.0..=1.0));
    p
}

/// Runs the flow until the budget is spent or the Rayleigh quotient settles.
/// Returns whether it settled.
fn run(flow: &mut EigenFlow<'_>, cfg: &GdConfig, offset: f64, report: &mut SolverReport) -> bool {
    for _ in 0..cfg.max_iters {
        let before = flow.rayleigh();
        flow.advance();
        report.iterations_used += 1;
        report.energy_trace.push(offset + flow.rayleigh());
        if cfg.tol > 0.0
            && (flow.rayleigh() - before).abs()
                <= cfg.tol * flow.rayleigh().abs().max(f64::MIN_POSITIVE)
        {
            return true;
        }
    }
    false
}

/// Greedy solve for `k` orthonormal bases of the region's patch operator.
///
/// Basis `n` starts from `warm[n]` when given, otherwise from uniform noise
/// in `[-1, 1]`.
pub fn gd_solve(
    patches: &RegionPatches,
    k: usize,
    cfg: &GdConfig,
    warm: Option<&PatchBasis>,
) -> Result<(PatchBasis, SolverReport)> {
    let side = patches.side();
    check_count(k, side)?;
    if let Some(w) = warm {
        if w.side() != side {
            return Err(Error::invalid("warm-start basis has the wrong side"));
        }
    }
    if patches.total_energy() <= 0.0 {
        return Err(Error::DegenerateRegion(
            "region patches are identically zero".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SolverReport {
        converged: true,
        ..Default::default()
    };
    let mut fixed: Vec<Patch> = Vec::with_capacity(k);
    let mut offset = 0.0;
    for n in 0..k {
        let init = match warm.and_then(|w| w.bases().get(n)) {
            Some(p) => p.clone(),
            None => random_patch(side, &mut rng),
        };
        let mut flow = EigenFlow::new(patches, &fixed, init, cfg.step);
        report.energy_trace.push(offset + flow.rayleigh());
        let mut settled = run(&mut flow, cfg, offset, &mut report);

        if cfg.restart_check {
            let mut probe = EigenFlow::new(patches, &fixed, random_patch(side, &mut rng), cfg.step);
            for _ in 0..3 {
                probe.advance();
            }
            if flow.rayleigh() < 0.95 * probe.rayleigh() {
                report.restarts += 1;
                report.energy_trace.push(offset + probe.rayleigh());
                flow = probe;
                settled = run(&mut flow, cfg, offset, &mut report);
            }
        }

        report.converged &= settled;
        offset += flow.rayleigh();
        report.basis_energies.push(flow.rayleigh());
        fixed.push(flow.into_patch());
    }
    Ok((PatchBasis::new(fixed)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenpatch::{oracle_solve, svd_solve_basis, WindowSource};
    use crate::grid::{BoundaryPolicy, ImageGrid, RegionMask};

    fn patches(img: &ImageGrid, mask: &RegionMask, m: usize) -> RegionPatches {
        RegionPatches::new(
            img,
            mask,
            m,
            WindowSource::MaskedImage,
            BoundaryPolicy::Reflect,
        )
        .unwrap()
    }

    #[test]
    fn constant_image_gives_uniform_patch() {
        let c = 0.8;
        let img = ImageGrid::filled(20, 16, c);
        let mask = RegionMask::filled(20, 16, true);
        let m = 5;
        let (basis, report) = crate::eigenpatch::gd_solve_basis(
            &img,
            &mask,
            m,
            1,
            &GdConfig {
                tol: 0.0,
                ..GdConfig::default()
            },
        )
        .unwrap();
        let v = &basis.bases()[0];
        let sign = v.values()[0].signum();
        for &x in v.values() {
            assert!((sign * x - 1.0 / m as f64).abs() < 1e-6);
        }
        let expected = c * c * (m * m) as f64 * (20 * 16) as f64;
        let u = report.basis_energies[0];
        assert!((u - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn oriented_sinusoid_matches_oracle() {
        let img = ImageGrid::from_fn(48, 48, |x, y| {
            0.5 + 0.4 * (0.7 * x as f64 + 0.3 * y as f64).sin()
        });
        let mask = RegionMask::filled(48, 48, true);
        let rp = patches(&img, &mask, 7);
        let (gd, _) = gd_solve(&rp, 4, &GdConfig::default(), None).unwrap();
        let (svd, _) = oracle_solve(&rp, 4).unwrap();
        let ugd = rp.projection_energy(&gd).unwrap();
        let usvd = rp.projection_energy(&svd).unwrap();
        assert!(ugd >= 0.99 * usvd, "{ugd} vs {usvd}");
    }

    #[test]
    fn trace_nondecreasing_and_deflated() {
        let img = ImageGrid::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 11) as f64 / 11.0);
        let mask = RegionMask::from_fn(32, 32, |x, y| x + y < 40);
        let rp = patches(&img, &mask, 5);
        let (basis, report) = gd_solve(&rp, 6, &GdConfig::default(), None).unwrap();
        for w in report.energy_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0));
        }
        for (n, v) in basis.iter().enumerate() {
            for u in basis.bases()[..n].iter() {
                assert!(dot(v.values(), u.values()).abs() <= 1e-8);
            }
        }
        for w in report.basis_energies.windows(2) {
            assert!(w[0] >= w[1] * (1.0 - 1e-3));
        }
    }

    #[test]
    fn warm_start_from_oracle_stays_put() {
        let img = ImageGrid::from_fn(24, 24, |x, y| {
            ((x as f64 * 0.9).sin() + (y as f64 * 0.4).cos()) * 0.3 + 0.5
        });
        let mask = RegionMask::filled(24, 24, true);
        let rp = patches(&img, &mask, 5);
        let (svd, values) = oracle_solve(&rp, 3).unwrap();
        let (gd, _) = gd_solve(&rp, 3, &GdConfig::sweeps(5, 1), Some(&svd)).unwrap();
        let u = rp.projection_energy(&gd).unwrap();
        let sum: f64 = values.iter().sum();
        assert!((u - sum).abs() <= 1e-9 * sum);
    }

    #[test]
    fn zero_region_is_degenerate() {
        let img = ImageGrid::zeros(10, 10);
        let mask = RegionMask::filled(10, 10, true);
        let err = crate::eigenpatch::gd_solve_basis(&img, &mask, 3, 2, &GdConfig::default());
        assert!(matches!(err, Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn own_texture_basis_wins_on_own_mask() {
        // left: horizontal stripes, right: vertical stripes
        let img = ImageGrid::from_fn(48, 32, |x, y| {
            if x < 24 {
                0.5 + 0.4 * (1.3 * y as f64).sin()
            } else {
                0.5 + 0.4 * (0.9 * x as f64).cos()
            }
        });
        let left = RegionMask::from_fn(48, 32, |x, _| x < 24);
        let right = left.complement();
        let cfg = GdConfig::default();
        let (b_left, _) = crate::eigenpatch::gd_solve_basis(&img, &left, 5, 2, &cfg).unwrap();
        let (b_right, _) = crate::eigenpatch::gd_solve_basis(&img, &right, 5, 2, &cfg).unwrap();
        let (o_left, _) = svd_solve_basis(&img, &left, 5, 2).unwrap();
        let own = crate::eigenpatch::projection_energy(&img, &left, &b_left).unwrap();
        let other = crate::eigenpatch::projection_energy(&img, &left, &b_right).unwrap();
        let oracle = crate::eigenpatch::projection_energy(&img, &left, &o_left).unwrap();
        assert!(own > other);
        assert!(own >= 0.99 * oracle);
    }
}
