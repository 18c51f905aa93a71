//! State-quality metrics: Uhlmann fidelity, purity, classical similarity.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, hermiticity_error, CMatrix, C64};
use crate::measurement::MeasurementDataset;
use crate::state::DensityMatrix;

/// Eigenvalues in `[-EIG_CLAMP, 0)` are treated as roundoff and set to zero.
pub const EIG_CLAMP: f64 = 1e-10;

/// Inside the fidelity, eigenvalues below this fraction of the largest one are
/// at the eigensolver's resolution and are dropped; their square roots would
/// otherwise contribute `O(sqrt(eps))` noise.
const FIDELITY_RESOLUTION: f64 = 1e-14;

fn sqrt_with_cutoff(m: &CMatrix, rel_cutoff: f64) -> Result<CMatrix> {
    let herm = hermiticity_error(m);
    if herm > EIG_CLAMP {
        return Err(Error::NotPhysical(format!(
            "matrix is not Hermitian (error {herm:.3e})"
        )));
    }
    let (vals, vecs) = hermitian_eigh(m);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        if l < -EIG_CLAMP {
            return Err(Error::NotPhysical(format!("negative eigenvalue {l:.3e}")));
        }
        let r = if l <= rel_cutoff * top { 0.0 } else { l.sqrt() };
        scaled.column_mut(j).scale_mut(r);
    }
    let out = scaled * vecs.adjoint();
    Ok((&out + out.adjoint()).map(|z| z * 0.5))
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    sqrt_with_cutoff(m, 0.0)
}

/// `F(rho, sigma) = [Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let s = sqrt_with_cutoff(rho.matrix(), FIDELITY_RESOLUTION)?;
    let inner = &s * sigma.matrix() * &s;
    let inner = (&inner + inner.adjoint()).map(|z: C64| z * 0.5);
    let (vals, _) = hermitian_eigh(&inner);
    let top = vals.last().copied().unwrap_or(0.0);
    let tr: f64 = vals
        .iter()
        .filter(|&&l| l > FIDELITY_RESOLUTION * top)
        .map(|&l| l.sqrt())
        .sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// `|Tr rho^2 - Tr target^2|`.
pub fn purity_error(rho: &DensityMatrix, target: &DensityMatrix) -> f64 {
    (purity(rho) - purity(target)).abs()
}

/// Mean Bhattacharyya coefficient over the bases shared by two datasets.
pub fn classical_similarity(a: &MeasurementDataset, b: &MeasurementDataset) -> Result<f64> {
    if a.n_steps() != b.n_steps() {
        return Err(Error::DimensionMismatch {
            expected: a.n_steps(),
            found: b.n_steps(),
        });
    }
    if a.entries().len() != b.entries().len() {
        return Err(Error::DimensionMismatch {
            expected: a.entries().len(),
            found: b.entries().len(),
        });
    }
    let mut total = 0.0;
    for (ea, eb) in a.entries().iter().zip(b.entries()) {
        if ea.index != eb.index {
            return Err(Error::MissingBasis(ea.index));
        }
        total += ea.probs.iter().zip(&eb.probs).map(|(p, q)| (p * q).sqrt()).sum::<f64>();
    }
    Ok(total / a.entries().len() as f64)
}
