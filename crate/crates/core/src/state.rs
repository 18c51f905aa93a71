//! The walker's density matrix on the coin-major basis
//! `(up,0), (down,0), (up,1), (down,1), ..., (up,N), (down,N)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, hermiticity_error, CMatrix, C64};

/// Tolerance used by [`DensityMatrix::check_physical`].
pub const PHYSICAL_TOL: f64 = 1e-10;

/// Coin state of the walker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    Up = 0,
    Down = 1,
}

/// Row/column index of `|coin, site>` in the coin-major ordering.
pub fn basis_index(coin: Coin, site: usize) -> usize {
    2 * site + coin as usize
}

/// Visible dimension `2(N+1)` of an `N`-step walk.
pub fn walk_dim(n_steps: usize) -> usize {
    2 * (n_steps + 1)
}

/// Deviations of a matrix from the density-matrix constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub hermiticity_error: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn holds(&self, tol: f64) -> bool {
        self.hermiticity_error <= tol && self.trace_error <= tol && self.min_eigenvalue >= -tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix after checking that it is square, Hermitian, unit-trace and PSD
    /// within [`PHYSICAL_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotPhysical(format!(
                "matrix is {}x{}, not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let state = Self { matrix };
        state.check_physical(PHYSICAL_TOL)?;
        Ok(state)
    }

    /// Wraps a matrix known to be a valid state by construction.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &nalgebra::DVector<C64>) -> Result<Self> {
        let norm2 = psi.norm_squared();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(Error::invalid("pure state vector has zero or non-finite norm"));
        }
        let m = psi * psi.adjoint() / C64::new(norm2, 0.0);
        Ok(Self { matrix: m })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0);
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of walk steps `N` implied by `dim = 2(N+1)`, if the dimension is even.
    pub fn n_steps(&self) -> Option<usize> {
        let d = self.dim();
        (d >= 2 && d.is_multiple_of(2)).then(|| d / 2 - 1)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Lattice-site occupation probabilities, summed over the coin.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.diagonal().chunks(2).map(|c| c.iter().sum()).collect()
    }

    /// Largest off-diagonal magnitude.
    pub fn max_off_diagonal(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    worst = worst.max(self.matrix[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigh(&self.matrix).0
    }

    pub fn physicality(&self) -> Physicality {
        let min_eigenvalue = self.eigenvalues().first().copied().unwrap_or(0.0);
        Physicality {
            hermiticity_error: hermiticity_error(&self.matrix),
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            min_eigenvalue,
        }
    }

    pub fn check_physical(&self, tol: f64) -> Result<Physicality> {
        let p = self.physicality();
        if p.holds(tol) {
            Ok(p)
        } else {
            Err(Error::NotPhysical(format!(
                "hermiticity error {:.3e}, trace error {:.3e}, min eigenvalue {:.3e}",
                p.hermiticity_error, p.trace_error, p.min_eigenvalue
            )))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&StateFile::from(self)).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StateFile::from(self)).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text).map_err(|e| Error::parse("state", e.to_string()))?;
        file.into_state()
    }
}

/// On-disk layout of a density matrix: real and imaginary parts, row-major.
#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    format_version: u32,
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for StateFile {
    fn from(state: &DensityMatrix) -> Self {
        let d = state.dim();
        let m = state.matrix();
        Self {
            format_version: 1,
            dim: d,
            re: (0..d).map(|r| (0..d).map(|c| m[(r, c)].re).collect()).collect(),
            im: (0..d).map(|r| (0..d).map(|c| m[(r, c)].im).collect()).collect(),
        }
    }
}

impl StateFile {
    fn into_state(self) -> Result<DensityMatrix> {
        if self.format_version != 1 {
            return Err(Error::parse(
                "format_version",
                format!("unsupported version {}", self.format_version),
            ));
        }
        let d = self.dim;
        for (name, rows) in [("re", &self.re), ("im", &self.im)] {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::parse(name, format!("expected {d}x{d} entries")));
            }
        }
        let m = CMatrix::from_fn(d, d, |r, c| C64::new(self.re[r][c], self.im[r][c]));
        DensityMatrix::new(m)
    }
}
