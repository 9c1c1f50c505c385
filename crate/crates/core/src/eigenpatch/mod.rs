//! Optimal orthonormal patch bases for a region.
//!
//! The best `K` bases (in the least-squares reconstruction sense) are the
//! top-`K` eigenvectors of the region's patch autocorrelation operator.
//! [`gd_solve_basis`] finds them greedily with a normalised gradient flow that
//! only touches the image through correlations; [`svd_solve_basis`] builds the
//! operator densely and diagonalises it, and serves as the reference.

mod flow;
pub mod io;
mod jacobi;
mod operator;

pub use flow::{gd_solve, EigenFlow, GdConfig, SolverReport};
pub use jacobi::symmetric_eigen;
pub use operator::{RegionPatches, WindowSource};

use crate::error::{Error, Result};
use crate::grid::{dot, BoundaryPolicy, ImageGrid, Patch, RegionMask};

/// Tolerance on unit norm and mutual orthogonality of basis members.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Ordered orthonormal set of `K` patches of side `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBasis {
    side: usize,
    bases: Vec<Patch>,
}

impl PatchBasis {
    pub fn new(bases: Vec<Patch>) -> Result<Self> {
        let basis = Self::unchecked(bases)?;
        let defect = basis.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "basis is not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(basis)
    }

    fn unchecked(bases: Vec<Patch>) -> Result<Self> {
        let side = match bases.first() {
            Some(p) => p.side(),
            None => return Err(Error::invalid("basis needs at least one patch")),
        };
        if bases.iter().any(|p| p.side() != side) {
            return Err(Error::invalid("basis patches have different sides"));
        }
        if bases.len() > side * side {
            return Err(Error::invalid(format!(
                "{} bases exceed the patch dimension {}",
                bases.len(),
                side * side
            )));
        }
        Ok(Self { side, bases })
    }

    /// The `m^2` unit impulses: a complete basis.
    pub fn standard(side: usize) -> Self {
        let n = side * side;
        let bases = (0..n)
            .map(|i| {
                let mut p = Patch::zeros(side);
                p.values_mut()[i] = 1.0;
                p
            })
            .collect();
        Self { side, bases }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of bases `K`.
    #[inline]
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Patch> {
        self.bases.iter()
    }

    pub fn bases(&self) -> &[Patch] {
        &self.bases
    }

    pub fn into_bases(self) -> Vec<Patch> {
        self.bases
    }

    /// First `k` members.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "cannot keep {k} of {} bases",
                self.len()
            )));
        }
        Ok(Self {
            side: self.side,
            bases: self.bases[..k].to_vec(),
        })
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.bases.iter().enumerate() {
            for (j, b) in self.bases.iter().enumerate().skip(i) {
                let g = dot(a.values(), b.values());
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

impl<'a> IntoIterator for &'a PatchBasis {
    type Item = &'a Patch;
    type IntoIter = std::slice::Iter<'a, Patch>;

    fn into_iter(self) -> Self::IntoIter {
        self.bases.iter()
    }
}

fn region_patches(img: &ImageGrid, mask: &RegionMask, side: usize) -> Result<RegionPatches> {
    RegionPatches::new(
        img,
        mask,
        side,
        WindowSource::default(),
        BoundaryPolicy::default(),
    )
}

/// `U = sum over masked centers of sum_k <p, v_k>^2`, windows cut from `I * H`.
pub fn projection_energy(img: &ImageGrid, mask: &RegionMask, basis: &PatchBasis) -> Result<f64> {
    region_patches(img, mask, basis.side())?.projection_energy(basis)
}

/// Total squared patch residual over masked centers, windows cut from `I * H`.
pub fn reconstruction_error_total(
    img: &ImageGrid,
    mask: &RegionMask,
    basis: &PatchBasis,
) -> Result<f64> {
    region_patches(img, mask, basis.side())?.reconstruction_error_total(basis)
}

/// Greedy gradient-flow solve for `k` bases of side `m`.
pub fn gd_solve_basis(
    img: &ImageGrid,
    mask: &RegionMask,
    m: usize,
    k: usize,
    cfg: &GdConfig,
) -> Result<(PatchBasis, SolverReport)> {
    gd_solve(&region_patches(img, mask, m)?, k, cfg, None)
}

/// Reference solve: dense operator, Jacobi eigendecomposition, top-`k` eigenpatches.
///
/// Returns the bases together with their eigenvalues in descending order.
pub fn svd_solve_basis(
    img: &ImageGrid,
    mask: &RegionMask,
    m: usize,
    k: usize,
) -> Result<(PatchBasis, Vec<f64>)> {
    oracle_solve(&region_patches(img, mask, m)?, k)
}

/// [`svd_solve_basis`] on prepared region patches.
pub fn oracle_solve(patches: &RegionPatches, k: usize) -> Result<(PatchBasis, Vec<f64>)> {
    let side = patches.side();
    let n = side * side;
    check_count(k, side)?;
    if patches.total_energy() <= 0.0 {
        return Err(Error::DegenerateRegion(
            "region patches are identically zero".into(),
        ));
    }
    let (values, vectors) = symmetric_eigen(patches.operator_matrix(), n);
    let bases = (0..k)
        .map(|c| Patch::from_raw(side, (0..n).map(|r| vectors[r * n + c]).collect()))
        .collect();
    Ok((PatchBasis::unchecked(bases)?, values[..k].to_vec()))
}

pub(crate) fn check_count(k: usize, side: usize) -> Result<()> {
    if side.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "patch side must be odd, got {side}"
        )));
    }
    if k == 0 || k > side * side {
        return Err(Error::invalid(format!(
            "number of bases must lie in 1..={}, got {k}",
            side * side
        )));
    }
    Ok(())
}

/// Rotates a basis by a `K x K` orthogonal matrix: `w_k = sum_h q[k][h] v_h`.
///
/// `q` is row-major.
pub fn mix_basis(basis: &PatchBasis, q: &[f64]) -> Result<PatchBasis> {
    let k = basis.len();
    if q.len() != k * k {
        return Err(Error::invalid(format!(
            "mixing matrix must be {k}x{k}, got {} entries",
            q.len()
        )));
    }
    for i in 0..k {
        for j in 0..k {
            let g: f64 = (0..k).map(|r| q[r * k + i] * q[r * k + j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (g - target).abs() > 1e-10 {
                return Err(Error::invalid("mixing matrix is not orthogonal"));
            }
        }
    }
    let mixed = (0..k)
        .map(|row| {
            let mut w = Patch::zeros(basis.side());
            for (h, v) in basis.iter().enumerate() {
                w.axpy(q[row * k + h], v);
            }
            w
        })
        .collect();
    PatchBasis::new(mixed)
}
