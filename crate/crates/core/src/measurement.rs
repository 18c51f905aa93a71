//! Interferometric measurement bases and projector distributions.
//!
//! Basis `n = 0` is the reference basis. For `k = 1..=N+1`, basis `2k-1`
//! projects onto `(|up,l> ± i|down,(l-(k-1)) mod (N+1)>)/sqrt(2)` and basis `2k`
//! onto `(|up,l> ± |down,(l-(k-1)) mod (N+1)>)/sqrt(2)`. Row `j = 2l + s` of the
//! transformation matrix is the bra of outcome `(s, l)`, `s = 0` taking the `+`.

use std::path::Path;

use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{coin_tensor_identity, CMatrix, C64, I, ONE, ZERO};
use crate::state::{basis_index, walk_dim, Coin, DensityMatrix};

/// Probabilities in `[-CLAMP_TOL, 0)` are treated as roundoff and set to zero.
pub const CLAMP_TOL: f64 = 1e-12;

/// Number of measurement bases `2(N+1)+1`.
pub fn num_bases(n_steps: usize) -> usize {
    2 * (n_steps + 1) + 1
}

/// `S'`: identity on `up`, `|down,l> -> |down,(l-1) mod (N+1)>`.
pub fn cyclic_shift(n_steps: usize) -> CMatrix {
    let sites = n_steps + 1;
    let d = walk_dim(n_steps);
    let mut s = CMatrix::zeros(d, d);
    for l in 0..sites {
        s[(basis_index(Coin::Up, l), basis_index(Coin::Up, l))] = ONE;
        s[(
            basis_index(Coin::Down, (l + sites - 1) % sites),
            basis_index(Coin::Down, l),
        )] = ONE;
    }
    s
}

/// Rotation taking the sigma_x eigenbasis to the computational one.
pub fn k_x() -> Matrix2<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix2::new(ONE, ONE, ONE, -ONE) * C64::new(h, 0.0)
}

/// Rotation taking the sigma_y eigenbasis to the computational one.
pub fn k_y() -> Matrix2<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix2::new(ONE, -I, ONE, I) * C64::new(h, 0.0)
}

/// A measurement basis, stored both densely and as per-row nonzero lists.
#[derive(Debug, Clone)]
pub struct BasisUnitary {
    index: usize,
    matrix: CMatrix,
    rows: Vec<Vec<(usize, C64)>>,
}

impl BasisUnitary {
    pub fn from_matrix(index: usize, matrix: CMatrix) -> Self {
        let rows = (0..matrix.nrows())
            .map(|r| {
                (0..matrix.ncols())
                    .filter(|&c| matrix[(r, c)] != ZERO)
                    .map(|c| (c, matrix[(r, c)]))
                    .collect()
            })
            .collect();
        Self { index, matrix, rows }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Nonzero `(column, value)` pairs of each row.
    pub fn sparse_rows(&self) -> &[Vec<(usize, C64)>] {
        &self.rows
    }

    /// `diag(U rho U^dagger)` without clamping, using row sparsity.
    pub(crate) fn raw_probabilities(&self, rho: &CMatrix) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                let mut acc = ZERO;
                for &(a, ua) in row {
                    for &(b, ub) in row {
                        acc += ua * rho[(a, b)] * ub.conj();
                    }
                }
                acc.re
            })
            .collect()
    }
}

/// Builds basis `n` of an `n_steps`-step walk.
pub fn basis_unitary(n: usize, n_steps: usize) -> Result<BasisUnitary> {
    let nb = num_bases(n_steps);
    if n >= nb {
        return Err(Error::invalid(format!(
            "basis index {n} out of range 0..{} for N={n_steps}",
            nb - 1
        )));
    }
    let d = walk_dim(n_steps);
    if n == 0 {
        return Ok(BasisUnitary::from_matrix(0, CMatrix::identity(d, d)));
    }
    let k = n.div_ceil(2);
    let gate = if n % 2 == 1 { k_y() } else { k_x() };
    // Rows must pair |up,l> with |down,l-(k-1)>, i.e. the inverse power of S'.
    let back = cyclic_shift(n_steps).adjoint();
    let mut shift = CMatrix::identity(d, d);
    for _ in 1..k {
        shift = &back * shift;
    }
    let m = coin_tensor_identity(&gate, n_steps + 1) * shift;
    Ok(BasisUnitary::from_matrix(n, m))
}

/// All `2(N+1)+1` bases in index order.
pub fn all_bases(n_steps: usize) -> Vec<BasisUnitary> {
    (0..num_bases(n_steps))
        .map(|n| basis_unitary(n, n_steps).expect("index in range"))
        .collect()
}

/// Clamps roundoff negatives, rejecting anything below `-CLAMP_TOL`.
pub(crate) fn clamp_probabilities(basis: usize, raw: Vec<f64>) -> Result<Vec<f64>> {
    raw.into_iter()
        .enumerate()
        .map(|(j, p)| {
            if p >= 0.0 {
                Ok(p)
            } else if p >= -CLAMP_TOL {
                Ok(0.0)
            } else {
                Err(Error::NegativeProbability {
                    basis,
                    outcome: j,
                    value: p,
                })
            }
        })
        .collect()
}

/// Outcome probabilities `diag(U rho U^dagger)`.
pub fn measure_distribution(rho: &DensityMatrix, basis: &BasisUnitary) -> Result<Vec<f64>> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rho.dim(),
        });
    }
    clamp_probabilities(basis.index(), basis.raw_probabilities(rho.matrix()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDistribution {
    pub index: usize,
    pub probs: Vec<f64>,
}

/// Per-basis outcome distributions of one walk state.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDataset {
    n_steps: usize,
    shots: Option<u64>,
    seed: Option<u64>,
    entries: Vec<BasisDistribution>,
}

const SUM_TOL: f64 = 1e-9;

impl MeasurementDataset {
    /// Validates and sorts entries by basis index. Every basis `0..2(N+1)` must
    /// appear exactly once.
    pub fn new(
        n_steps: usize,
        shots: Option<u64>,
        seed: Option<u64>,
        mut entries: Vec<BasisDistribution>,
    ) -> Result<Self> {
        if shots == Some(0) {
            return Err(Error::invalid("shots must be positive"));
        }
        let nb = num_bases(n_steps);
        let d = walk_dim(n_steps);
        entries.sort_by_key(|e| e.index);
        for (pos, e) in entries.iter().enumerate() {
            if e.index >= nb {
                return Err(Error::parse(
                    "bases.index",
                    format!("basis index {} out of range for N={n_steps}", e.index),
                ));
            }
            if pos > 0 && entries[pos - 1].index == e.index {
                return Err(Error::parse("bases.index", format!("duplicate basis n={}", e.index)));
            }
            if e.probs.len() != d {
                return Err(Error::parse(
                    "bases.probs",
                    format!("basis n={} has {} probabilities, expected {d}", e.index, e.probs.len()),
                ));
            }
            if e.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::parse(
                    "bases.probs",
                    format!("basis n={} has a negative or non-finite probability", e.index),
                ));
            }
            let total: f64 = e.probs.iter().sum();
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::parse(
                    "bases.probs",
                    format!("basis n={} sums to {total}", e.index),
                ));
            }
        }
        if let Some(missing) = (0..nb).find(|n| entries.get(*n).map(|e| e.index) != Some(*n)) {
            return Err(Error::MissingBasis(missing));
        }
        Ok(Self {
            n_steps,
            shots,
            seed,
            entries,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dim(&self) -> usize {
        walk_dim(self.n_steps)
    }

    pub fn shots(&self) -> Option<u64> {
        self.shots
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn entries(&self) -> &[BasisDistribution] {
        &self.entries
    }

    pub fn probs(&self, basis: usize) -> Option<&[f64]> {
        self.entries.get(basis).map(|e| e.probs.as_slice())
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            format_version: 1,
            n_steps: self.n_steps,
            shots: self.shots,
            seed: self.seed,
            bases: self.entries.clone(),
        };
        serde_json::to_string_pretty(&file).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::parse("dataset", e.to_string()))?;
        if file.format_version != 1 {
            return Err(Error::parse(
                "format_version",
                format!("unsupported version {}", file.format_version),
            ));
        }
        Self::new(file.n_steps, file.shots, file.seed, file.bases)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format_version: u32,
    n_steps: usize,
    shots: Option<u64>,
    seed: Option<u64>,
    bases: Vec<BasisDistribution>,
}

/// Measures `rho` in every basis. With `shots`, each basis gets one multinomial
/// draw and stores empirical frequencies; the generator for basis `n` is seeded
/// with `seed ^ n`.
pub fn generate_dataset(
    rho: &DensityMatrix,
    n_steps: usize,
    shots: Option<u64>,
    seed: Option<u64>,
) -> Result<MeasurementDataset> {
    if rho.dim() != walk_dim(n_steps) {
        return Err(Error::DimensionMismatch {
            expected: walk_dim(n_steps),
            found: rho.dim(),
        });
    }
    if shots == Some(0) {
        return Err(Error::invalid("shots must be positive"));
    }
    let mut entries = Vec::with_capacity(num_bases(n_steps));
    for basis in all_bases(n_steps) {
        let mut probs = measure_distribution(rho, &basis)?;
        if let Some(shots) = shots {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0) ^ basis.index() as u64);
            probs = sample_frequencies(&probs, shots, &mut rng)?;
        } else {
            // Renormalize away accumulated roundoff so the stored vector sums to 1.
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
        }
        entries.push(BasisDistribution {
            index: basis.index(),
            probs,
        });
    }
    MeasurementDataset::new(n_steps, shots, seed, entries)
}

/// One multinomial draw via sequential conditional binomials.
fn sample_frequencies(probs: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut remaining = shots;
    let mut mass = 1.0f64;
    let mut out = Vec::with_capacity(probs.len());
    for (j, &p) in probs.iter().enumerate() {
        let count = if j + 1 == probs.len() || remaining == 0 {
            remaining
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng)
        };
        remaining -= count;
        mass -= p;
        out.push(count as f64 / shots as f64);
    }
    Ok(out)
}

pub fn save_dataset(ds: &MeasurementDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ds.to_json())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MeasurementDataset> {
    MeasurementDataset::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::walk::{evolve, initial_state, NoiseModel, WalkConfig};
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn cyclic_shift_examples() {
        let s = cyclic_shift(1);
        // |down,0> (index 1) -> |down,1> (index 3).
        assert_eq!(s[(3, 1)], ONE);
        assert_eq!(s[(1, 3)], ONE);
        for n in [1usize, 2, 5] {
            let s = cyclic_shift(n);
            let d = walk_dim(n);
            let mut p = CMatrix::identity(d, d);
            for _ in 0..=n {
                p = &s * p;
            }
            assert!(max_abs(&(p - CMatrix::identity(d, d))) <= 1e-14);
            assert!(max_abs(&(s.adjoint() * &s - CMatrix::identity(d, d))) <= 1e-14);
        }
    }

    /// Bra of the displayed basis vector for outcome (s, l) of basis n.
    fn formula_row(n: usize, s: usize, l: usize, n_steps: usize) -> Vec<C64> {
        let d = walk_dim(n_steps);
        let mut ket = vec![ZERO; d];
        if n == 0 {
            ket[2 * l + s] = ONE;
        } else {
            let sites = n_steps + 1;
            let k = n.div_ceil(2);
            let partner = (l + sites * k - (k - 1)) % sites;
            let sign = if s == 0 { 1.0 } else { -1.0 };
            let coeff = if n % 2 == 1 { I * sign } else { C64::new(sign, 0.0) };
            ket[2 * l] = C64::new(FRAC_1_SQRT_2, 0.0);
            ket[2 * partner + 1] = coeff * FRAC_1_SQRT_2;
        }
        ket.into_iter().map(|z| z.conj()).collect()
    }

    #[test]
    fn rows_match_displayed_formulas_up_to_phase() {
        for n_steps in [1usize, 2, 3, 5] {
            for basis in all_bases(n_steps) {
                let m = basis.matrix();
                assert!(max_abs(&(m.adjoint() * m - CMatrix::identity(m.nrows(), m.nrows()))) < 1e-12);
                for l in 0..=n_steps {
                    for s in 0..2 {
                        let bra = formula_row(basis.index(), s, l, n_steps);
                        let row = 2 * l + s;
                        let overlap: C64 = (0..m.ncols()).map(|c| m[(row, c)] * bra[c].conj()).sum();
                        assert!((overlap.norm() - 1.0).abs() < 1e-12, "n={} row={row}", basis.index());
                    }
                }
            }
        }
    }

    #[test]
    fn basis_counts_and_range() {
        assert_eq!(num_bases(5), 13);
        assert_eq!(all_bases(5).len(), 13);
        assert_eq!(num_bases(30), 63);
        assert!(basis_unitary(13, 5).is_err());
        let b0 = basis_unitary(0, 2).unwrap();
        assert_eq!(b0.matrix(), &CMatrix::identity(6, 6));
    }

    #[test]
    fn distribution_examples() {
        let mixed = DensityMatrix::maximally_mixed(8);
        for b in all_bases(3) {
            let p = measure_distribution(&mixed, &b).unwrap();
            assert!(p.iter().all(|x| (x - 0.125).abs() < 1e-15));
        }
        let rho0 = initial_state(2);
        let p = measure_distribution(&rho0, &basis_unitary(0, 2).unwrap()).unwrap();
        let expected = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        assert!(p.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 1e-15), "{p:?}");
        assert!(matches!(
            measure_distribution(&rho0, &basis_unitary(0, 3).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clamping_rules() {
        assert_eq!(clamp_probabilities(0, vec![-5e-13, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            clamp_probabilities(4, vec![-1e-9, 1.0]),
            Err(Error::NegativeProbability { basis: 4, .. })
        ));
    }

    #[test]
    fn exact_dataset_stores_distributions() {
        let rho = evolve(&WalkConfig::hadamard(3, NoiseModel::None)).unwrap();
        let ds = generate_dataset(&rho, 3, None, None).unwrap();
        assert_eq!(ds.entries().len(), 9);
        for b in all_bases(3) {
            let p = measure_distribution(&rho, &b).unwrap();
            for (a, e) in ds.probs(b.index()).unwrap().iter().zip(&p) {
                assert!((a - e).abs() <= 1e-15);
            }
        }
        assert!(generate_dataset(&rho, 3, Some(0), Some(1)).is_err());
        assert!(generate_dataset(&rho, 4, None, None).is_err());
    }

    #[test]
    fn shot_frequencies_within_binomial_error() {
        let rho = evolve(&WalkConfig::hadamard(2, NoiseModel::Depolarizing { p: 0.2 })).unwrap();
        let shots = 1_000_000u64;
        let ds = generate_dataset(&rho, 2, Some(shots), Some(42)).unwrap();
        let again = generate_dataset(&rho, 2, Some(shots), Some(42)).unwrap();
        assert_eq!(ds, again);
        for b in all_bases(2) {
            let exact = measure_distribution(&rho, &b).unwrap();
            for (f, p) in ds.probs(b.index()).unwrap().iter().zip(&exact) {
                let tol = 5.0 * (p * (1.0 - p) / shots as f64).sqrt() + 1e-6;
                assert!((f - p).abs() <= tol, "basis {} f={f} p={p}", b.index());
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rho = evolve(&WalkConfig::hadamard(2, NoiseModel::Depolarizing { p: 0.1 })).unwrap();
        let ds = generate_dataset(&rho, 2, None, None).unwrap();
        let back = MeasurementDataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(ds, back);

        let minimal = r#"{"format_version": 1, "n_steps": 1, "shots": null, "seed": null, "bases": [
            {"index": 0, "probs": [0.5, 0.5, 0.0, 0.0]},
            {"index": 1, "probs": [0.25, 0.25, 0.25, 0.25]},
            {"index": 2, "probs": [0.25, 0.25, 0.25, 0.25]},
            {"index": 3, "probs": [0.25, 0.25, 0.25, 0.25]},
            {"index": 4, "probs": [0.25, 0.25, 0.25, 0.25]}]}"#;
        let ds = MeasurementDataset::from_json(minimal).unwrap();
        assert_eq!(ds.entries().len(), 5);

        let missing = minimal.replace(r#"{"index": 3, "probs": [0.25, 0.25, 0.25, 0.25]},"#, "");
        let err = MeasurementDataset::from_json(&missing).unwrap_err();
        assert_eq!(err.to_string(), "missing basis n=3");

        let no_steps = minimal.replace(r#""n_steps": 1,"#, "");
        let err = MeasurementDataset::from_json(&no_steps).unwrap_err();
        assert!(err.to_string().contains("n_steps"), "{err}");
    }
}
