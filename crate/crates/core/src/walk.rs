//! Discrete-time quantum walk on a truncated line, evolved as a density matrix.
//!
//! One step is `U = S (R(alpha) ⊗ I)` followed by an optional noise channel.
//! The shift moves `up` one site to the right and leaves `down` in place; the
//! top site wraps back to site 0 so that `S` stays unitary on `N+1` sites. An
//! `N`-step walk started at site 0 never populates the wrap source before its
//! last step, which [`evolve`] checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{coin_tensor_identity, CMatrix, C64, I, ONE, ZERO};
use crate::state::{basis_index, walk_dim, Coin, DensityMatrix};

/// How the fluctuating phase of the dephasing gate is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingMode {
    /// Exact average: coin coherences scale by `sin(db)/db`.
    Analytic,
    /// Average of `n_samples` random phase gates with `beta ~ U[-db, db]`.
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    KrausMixing { w_s: f64, w_l: f64 },
    Dephasing { delta_beta: f64, mode: DephasingMode },
    Depolarizing { p: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::KrausMixing { w_s, w_l } => check_mixing(w_s, w_l),
            NoiseModel::Dephasing { delta_beta, mode } => {
                check_delta_beta(delta_beta)?;
                if let DephasingMode::MonteCarlo { n_samples: 0, .. } = mode {
                    return Err(Error::invalid("monte carlo dephasing needs n_samples > 0"));
                }
                Ok(())
            }
            NoiseModel::Depolarizing { p } => check_fraction("p", p),
        }
    }

    /// True for every model that can leave the walker in a mixed state.
    pub fn is_open(&self) -> bool {
        !matches!(self, NoiseModel::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub n_steps: usize,
    /// Coin angle used at each step, in radians.
    pub coin_angles: Vec<f64>,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl WalkConfig {
    /// Constant-angle Hadamard walk (`alpha = pi/4`).
    pub fn hadamard(n_steps: usize, noise: NoiseModel) -> Self {
        Self::constant_angle(n_steps, PI / 4.0, noise)
    }

    pub fn constant_angle(n_steps: usize, alpha: f64, noise: NoiseModel) -> Self {
        Self {
            n_steps,
            coin_angles: vec![alpha; n_steps],
            noise,
            seed: 0,
        }
    }

    /// Coherent walk whose coin angle is redrawn uniformly from `[0, pi]` every step.
    pub fn disordered(n_steps: usize, seed: u64, noise: NoiseModel) -> Self {
        Self {
            n_steps,
            coin_angles: disordered_angles(n_steps, seed),
            noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coin_angles.len() != self.n_steps {
            return Err(Error::invalid(format!(
                "{} coin angles given for {} steps",
                self.coin_angles.len(),
                self.n_steps
            )));
        }
        if let Some(a) = self.coin_angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("coin angle {a} is not finite")));
        }
        self.noise.validate()
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {x} is outside [0, 1]")))
    }
}

fn check_mixing(w_s: f64, w_l: f64) -> Result<()> {
    check_fraction("w_s", w_s)?;
    check_fraction("w_l", w_l)?;
    if w_s + w_l > 1.0 + 1e-15 {
        return Err(Error::invalid(format!("w_s + w_l = {} exceeds 1", w_s + w_l)));
    }
    Ok(())
}

fn check_delta_beta(delta_beta: f64) -> Result<()> {
    if (0.0..=PI).contains(&delta_beta) {
        Ok(())
    } else {
        Err(Error::invalid(format!("delta_beta = {delta_beta} is outside [0, pi]")))
    }
}

/// `R(alpha) = exp(-i alpha sigma_y) sigma_z = [[cos a, sin a], [sin a, -cos a]]`.
pub fn coin_operator(alpha: f64) -> Matrix2<C64> {
    let (s, c) = alpha.sin_cos();
    Matrix2::new(C64::new(c, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-c, 0.0))
}

/// Conditional shift on `N+1` sites: `|up,l> -> |up,l+1 mod N+1>`, `|down,l> -> |down,l>`.
pub fn shift_operator(n_steps: usize) -> CMatrix {
    let sites = n_steps + 1;
    let d = walk_dim(n_steps);
    let mut s = CMatrix::zeros(d, d);
    for l in 0..sites {
        s[(basis_index(Coin::Up, (l + 1) % sites), basis_index(Coin::Up, l))] = ONE;
        s[(basis_index(Coin::Down, l), basis_index(Coin::Down, l))] = ONE;
    }
    s
}

/// One unitary walk step `S (R(alpha) ⊗ I)`.
pub fn step_unitary(alpha: f64, n_steps: usize) -> CMatrix {
    shift_operator(n_steps) * coin_tensor_identity(&coin_operator(alpha), n_steps + 1)
}

/// Kraus operators of one mixing step: `sqrt(1-w_s-w_l) U`, then `sqrt(w_s) P_s U`
/// for each coin value and `sqrt(w_l) P_l U` for each site. Zero-weight
/// operators are omitted.
pub fn kraus_operators(alpha: f64, n_steps: usize, w_s: f64, w_l: f64) -> Result<Vec<CMatrix>> {
    check_mixing(w_s, w_l)?;
    let u = step_unitary(alpha, n_steps);
    let d = walk_dim(n_steps);
    let coherent = (1.0 - w_s - w_l).max(0.0);
    let mut ops = Vec::new();
    if coherent > 0.0 {
        ops.push(&u * C64::new(coherent.sqrt(), 0.0));
    }
    if w_s > 0.0 {
        for coin in [Coin::Up, Coin::Down] {
            let p = CMatrix::from_fn(d, d, |r, c| if r == c && r % 2 == coin as usize { ONE } else { ZERO });
            ops.push(p * &u * C64::new(w_s.sqrt(), 0.0));
        }
    }
    if w_l > 0.0 {
        for site in 0..=n_steps {
            let p = CMatrix::from_fn(d, d, |r, c| if r == c && r / 2 == site { ONE } else { ZERO });
            ops.push(p * &u * C64::new(w_l.sqrt(), 0.0));
        }
    }
    Ok(ops)
}

fn n_steps_of(rho: &DensityMatrix) -> Result<usize> {
    rho.n_steps()
        .ok_or_else(|| Error::invalid(format!("dimension {} is not 2(N+1)", rho.dim())))
}

/// `rho -> sum_k E_k rho E_k^dagger` with the mixing Kraus set.
pub fn apply_kraus_step(rho: &DensityMatrix, alpha: f64, w_s: f64, w_l: f64) -> Result<DensityMatrix> {
    let n_steps = n_steps_of(rho)?;
    let ops = kraus_operators(alpha, n_steps, w_s, w_l)?;
    let d = rho.dim();
    let mut out = CMatrix::zeros(d, d);
    for e in &ops {
        out += e * rho.matrix() * e.adjoint();
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn scale_coin_coherences(rho: &DensityMatrix, factor: C64) -> DensityMatrix {
    let d = rho.dim();
    let mut m = rho.matrix().clone();
    for r in 0..d {
        for c in 0..d {
            match (r % 2, c % 2) {
                (0, 1) => m[(r, c)] *= factor,
                (1, 0) => m[(r, c)] *= factor.conj(),
                _ => {}
            }
        }
    }
    DensityMatrix::from_matrix_unchecked(m)
}

/// Phase gate `exp(i beta sigma_z / 2) ⊗ I` with `beta` uniform on `[-db, db]`.
///
/// The gate multiplies `rho(up, down)` entries by `exp(i beta)` and leaves the
/// coin-diagonal blocks alone, so the channel only rescales coin coherences.
pub fn dephasing_step(rho: &DensityMatrix, delta_beta: f64, mode: DephasingMode) -> Result<DensityMatrix> {
    check_delta_beta(delta_beta)?;
    let factor = match mode {
        DephasingMode::Analytic => C64::new(sinc(delta_beta), 0.0),
        DephasingMode::MonteCarlo { n_samples, seed } => {
            if n_samples == 0 {
                return Err(Error::invalid("monte carlo dephasing needs n_samples > 0"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = ZERO;
            for _ in 0..n_samples {
                let beta = if delta_beta > 0.0 {
                    rng.random_range(-delta_beta..=delta_beta)
                } else {
                    0.0
                };
                acc += C64::from_polar(1.0, beta);
            }
            acc / n_samples as f64
        }
    };
    Ok(scale_coin_coherences(rho, factor))
}

/// Single-qubit depolarizing channel on the coin, identity on the lattice.
pub fn depolarizing_step(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    check_fraction("p", p)?;
    let sites = n_steps_of(rho)? + 1;
    let paulis = [
        Matrix2::new(ZERO, ONE, ONE, ZERO),
        Matrix2::new(ZERO, -I, I, ZERO),
        Matrix2::new(ONE, ZERO, ZERO, -ONE),
    ];
    let mut out = rho.matrix() * C64::new(1.0 - p, 0.0);
    for sigma in &paulis {
        let s = coin_tensor_identity(sigma, sites);
        out += &s * rho.matrix() * &s * C64::new(p / 3.0, 0.0);
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// `|psi0> = (|up> + i|down>)/sqrt(2) ⊗ |0>`.
pub fn initial_state(n_steps: usize) -> DensityMatrix {
    let d = walk_dim(n_steps);
    let mut psi = nalgebra::DVector::from_element(d, ZERO);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    psi[basis_index(Coin::Up, 0)] = C64::new(h, 0.0);
    psi[basis_index(Coin::Down, 0)] = C64::new(0.0, h);
    DensityMatrix::from_matrix_unchecked(&psi * psi.adjoint())
}

/// Per-step coin angles drawn uniformly from `[0, pi]`.
pub fn disordered_angles(n_steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_steps).map(|_| rng.random_range(0.0..=PI)).collect()
}

/// Runs the configured walk from [`initial_state`].
pub fn evolve(config: &WalkConfig) -> Result<DensityMatrix> {
    config.validate()?;
    let n = config.n_steps;
    let wrap_source = basis_index(Coin::Up, n);
    let mut rho = initial_state(n);
    for (t, &alpha) in config.coin_angles.iter().enumerate() {
        if t < n && rho.matrix()[(wrap_source, wrap_source)].norm() > 1e-12 {
            return Err(Error::WrapPopulated { step: t, site: n });
        }
        rho = match config.noise {
            NoiseModel::KrausMixing { w_s, w_l } => apply_kraus_step(&rho, alpha, w_s, w_l)?,
            other => {
                let u = step_unitary(alpha, n);
                let stepped = DensityMatrix::from_matrix_unchecked(&u * rho.matrix() * u.adjoint());
                match other {
                    NoiseModel::None => stepped,
                    NoiseModel::Dephasing { delta_beta, mode } => {
                        let mode = match mode {
                            DephasingMode::MonteCarlo { n_samples, seed } => DephasingMode::MonteCarlo {
                                n_samples,
                                seed: seed ^ config.seed.rotate_left(17) ^ (t as u64),
                            },
                            m => m,
                        };
                        dephasing_step(&stepped, delta_beta, mode)?
                    }
                    NoiseModel::Depolarizing { p } => depolarizing_step(&stepped, p)?,
                    NoiseModel::KrausMixing { .. } => unreachable!(),
                }
            }
        };
    }
    Ok(rho)
}

/// Checks `sum_k E_k^dagger E_k = I`, returning the largest deviation.
pub fn kraus_completeness_error(ops: &[CMatrix]) -> f64 {
    let Some(first) = ops.first() else {
        return f64::INFINITY;
    };
    let d = first.nrows();
    let mut acc = DMatrix::<C64>::zeros(d, d);
    for e in ops {
        acc += e.adjoint() * e;
    }
    crate::linalg::max_abs(&(acc - CMatrix::identity(d, d)))
}
