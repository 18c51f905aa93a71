//! Maximum-likelihood tomography with `rho = T T^H / Tr(T T^H)` for a
//! lower-triangular `T`, fitted to the same KL cost as the network model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::state::DensityMatrix;
use crate::training::cost::kl_eval;
use crate::training::{final_metrics, minimize, FitData, Objective, OptimizerKind, TrainConfig, TrainReport};

/// Half-width of the uniform initialization around the identity.
pub const INIT_SPREAD: f64 = 0.1;

/// Real parameters of a lower-triangular `d x d` matrix: the `d` real diagonal
/// entries, then each strictly-lower entry row by row as `(re, im)`. Length `d^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyParams {
    pub dim: usize,
    pub t_params: Vec<f64>,
}

impl CholeskyParams {
    pub fn new(dim: usize, t_params: Vec<f64>) -> Result<Self> {
        if t_params.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: t_params.len(),
            });
        }
        if t_params.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite Cholesky parameter"));
        }
        Ok(Self { dim, t_params })
    }

    /// `T = I`.
    pub fn identity(dim: usize) -> Self {
        let mut t_params = vec![0.0; dim * dim];
        t_params[..dim].iter_mut().for_each(|x| *x = 1.0);
        Self { dim, t_params }
    }

    /// Identity plus i.i.d. uniform noise in `[-INIT_SPREAD, INIT_SPREAD]`.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::identity(dim);
        p.t_params
            .iter_mut()
            .for_each(|x| *x += rng.random_range(-INIT_SPREAD..=INIT_SPREAD));
        p
    }

    pub fn num_params(&self) -> usize {
        self.t_params.len()
    }

    pub fn t_matrix(&self) -> CMatrix {
        unpack(self.dim, &self.t_params)
    }
}

fn unpack(d: usize, x: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(d, d);
    for i in 0..d {
        t[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = d;
    for i in 1..d {
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn normalized_gram(t: &CMatrix) -> Result<(CMatrix, f64)> {
    let tau = t.norm_squared();
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid("Cholesky parameters have zero trace"));
    }
    let g = t * t.adjoint();
    let g = (&g + g.adjoint()).map(|z| z * (0.5 / tau));
    Ok((g, tau))
}

/// `rho = T T^H / Tr(T T^H)`.
pub fn rho_from_t(p: &CholeskyParams) -> Result<DensityMatrix> {
    let (rho, _) = normalized_gram(&p.t_matrix())?;
    DensityMatrix::new(rho)
}

/// The KL cost over packed Cholesky parameters.
pub struct MaxLikObjective<'a> {
    data: &'a FitData,
}

impl<'a> MaxLikObjective<'a> {
    pub fn new(data: &'a FitData) -> Self {
        Self { data }
    }
}

impl Objective for MaxLikObjective<'_> {
    fn num_params(&self) -> usize {
        self.data.dim() * self.data.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (rho, _) = normalized_gram(&unpack(self.data.dim(), x))?;
        Ok(kl_eval(&rho, self.data, false).cost)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.data.dim();
        let t = unpack(d, x);
        let (rho, tau) = normalized_gram(&t)?;
        let eval = kl_eval(&rho, self.data, true);
        // dD = -Tr(M d rho) with M = K^T; d rho expands to
        // Re sum conj(Gc) dT with Gc = 2 (M - Tr(M rho)) T / tau.
        let m = eval.weights.expect("weights requested").transpose();
        let c = (&m * &rho).trace();
        let gc = (&m * &t - &t * c).map(|z| z * (2.0 / tau));
        let mut grad = Vec::with_capacity(d * d);
        for i in 0..d {
            grad.push(-gc[(i, i)].re);
        }
        for i in 1..d {
            for j in 0..i {
                grad.push(-gc[(i, j)].re);
                grad.push(-gc[(i, j)].im);
            }
        }
        Ok((eval.cost, grad))
    }
}

/// Gradient of the KL cost with respect to the packed parameters.
pub fn gradient(p: &CholeskyParams, data: &FitData) -> Result<Vec<f64>> {
    data.check_dim(p.dim)?;
    Ok(MaxLikObjective::new(data).value_and_gradient(&p.t_params)?.1)
}

/// KL cost of the state encoded by `p`.
pub fn cost(p: &CholeskyParams, data: &FitData) -> Result<f64> {
    data.check_dim(p.dim)?;
    MaxLikObjective::new(data).value(&p.t_params)
}

/// Settings for [`maxlik_fit`]; the optimizer is always conjugate gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxLikConfig {
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for MaxLikConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grad_tol: 1e-8,
            max_iters: 2000,
        }
    }
}

/// Fits a Cholesky-parameterized state by conjugate gradient from a seeded
/// random start.
pub fn maxlik_fit(
    data: &FitData,
    config: &MaxLikConfig,
    target: Option<&DensityMatrix>,
) -> Result<(DensityMatrix, CholeskyParams, TrainReport)> {
    let d = data.dim();
    let train = TrainConfig {
        grad_tol: config.grad_tol,
        max_iters: config.max_iters,
        seed: config.seed,
        ..TrainConfig::with_optimizer(OptimizerKind::Cg)
    };
    let init = CholeskyParams::random(d, config.seed);
    let (x, mut report) = minimize(&MaxLikObjective::new(data), &init.t_params, &train)?;
    let params = CholeskyParams::new(d, x)?;
    let rho = rho_from_t(&params)?;
    if let Some(target) = target {
        report.final_metrics = Some(final_metrics(&rho, target)?);
    }
    Ok((rho, params, report))
}
