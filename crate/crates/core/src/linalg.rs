//! Small dense helpers shared by the simulation and reconstruction code.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Spectral decomposition of a complex Hermitian matrix.
///
/// Eigenvalues are returned in ascending order, with the matching eigenvectors
/// as the columns of the second element.
pub fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    // Symmetrize first so the solver sees an exactly Hermitian input.
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest elementwise deviation from Hermiticity, `max |m(i,j) - conj(m(j,i))|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest absolute entry of a complex matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Embeds a 2x2 coin operator as `op ⊗ I` on the coin-major walker basis.
pub fn coin_tensor_identity(op: &nalgebra::Matrix2<C64>, sites: usize) -> CMatrix {
    let d = 2 * sites;
    let mut out = CMatrix::zeros(d, d);
    for l in 0..sites {
        for s in 0..2 {
            for t in 0..2 {
                out[(2 * l + s, 2 * l + t)] = op[(s, t)];
            }
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
