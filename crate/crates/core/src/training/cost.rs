//! Total KL divergence between measured and model distributions, and its
//! exact gradient with respect to the network parameters.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::measurement::{all_bases, BasisUnitary, MeasurementDataset};
use crate::ndo::{NdoForward, NdoParams};

/// Model probabilities are floored at this value inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Imaginary parts of the gradient larger than this indicate a formula error.
const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Measured distributions paired with the basis transformations they were taken in.
#[derive(Debug, Clone)]
pub struct FitData {
    dim: usize,
    terms: Vec<(BasisUnitary, Vec<f64>)>,
}

impl FitData {
    /// Pairs every dataset entry with the basis of the same index.
    pub fn new(ds: &MeasurementDataset, bases: &[BasisUnitary]) -> Result<Self> {
        let pairs = ds
            .entries()
            .iter()
            .map(|e| {
                let basis = bases
                    .iter()
                    .find(|b| b.index() == e.index)
                    .ok_or(Error::MissingBasis(e.index))?;
                Ok((basis.clone(), e.probs.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs)
    }

    /// Uses the standard basis family for the dataset's walk length.
    pub fn for_dataset(ds: &MeasurementDataset) -> Result<Self> {
        Self::new(ds, &all_bases(ds.n_steps()))
    }

    /// Arbitrary `(basis, distribution)` pairs, e.g. a subset of the full family.
    pub fn from_pairs(terms: Vec<(BasisUnitary, Vec<f64>)>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|(b, _)| b.dim())
            .ok_or_else(|| Error::invalid("no measurement bases supplied"))?;
        for (b, p) in &terms {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: b.dim(),
                });
            }
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_bases(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(BasisUnitary, Vec<f64>)] {
        &self.terms
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: d,
            });
        }
        Ok(())
    }
}

/// Cost of a density matrix plus the data-weighted operator
/// `K(a, b) = sum_n sum_j P_nj / Q_nj * U_n(j, a) conj(U_n(j, b))`,
/// so that `dD = -Re sum_ab K(a, b) d rho(a, b)`.
pub(crate) struct KlEval {
    pub cost: f64,
    pub weights: Option<CMatrix>,
}

pub(crate) fn kl_eval(rho: &CMatrix, data: &FitData, with_weights: bool) -> KlEval {
    let d = data.dim;
    let mut cost = 0.0;
    let mut weights = with_weights.then(|| CMatrix::zeros(d, d));
    for (basis, probs) in &data.terms {
        let model = basis.raw_probabilities(rho);
        for (j, (&p, &q)) in probs.iter().zip(&model).enumerate() {
            if p <= 0.0 {
                continue;
            }
            let q = q.max(PROB_FLOOR);
            cost += p * (p / q).ln();
            if let Some(k) = weights.as_mut() {
                let w = p / q;
                let row = &basis.sparse_rows()[j];
                for &(a, ua) in row {
                    for &(b, ub) in row {
                        k[(a, b)] += ua * ub.conj() * w;
                    }
                }
            }
        }
    }
    KlEval { cost, weights }
}

/// `D = sum_n sum_v P(v^n) log[P(v^n) / P_theta(v^n)]`.
pub fn cost(params: &NdoParams, data: &FitData) -> Result<f64> {
    data.check_dim(params.dim())?;
    let fwd = NdoForward::new(params);
    Ok(kl_eval(&fwd.rho, data, false).cost)
}

/// Cost and gradient from a precomputed forward pass.
pub(crate) fn cost_and_grad(fwd: &NdoForward, data: &FitData) -> Result<(f64, Vec<f64>)> {
    let eval = kl_eval(&fwd.rho, data, true);
    let k = eval.weights.expect("weights requested");
    let d = data.dim;
    let n = fwd.layout.len;
    // sum_ab K(a,b) rho(a,b) grad A(a,b), accumulated with complex values.
    let mut acc = vec![ZERO; n];
    let mut mass = ZERO;
    for a in 0..d {
        for b in 0..d {
            let c: C64 = k[(a, b)] * fwd.rho[(a, b)];
            if c == ZERO {
                continue;
            }
            mass += c;
            fwd.visit_grad_a(a, b, |idx, x| acc[idx] += c * x);
        }
    }
    let glz = fwd.grad_log_z();
    let mut grad = Vec::with_capacity(n);
    for (idx, z) in acc.iter().enumerate() {
        if z.im.abs() > IMAG_RESIDUE_TOL * z.re.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "gradient component {idx} has imaginary residue {:.3e}",
                z.im
            )));
        }
        grad.push(-z.re + mass.re * glz[idx]);
    }
    Ok((eval.cost, grad))
}

/// Exact gradient of [`cost`] over the flattened parameter vector.
pub fn grad_cost(params: &NdoParams, data: &FitData) -> Result<Vec<f64>> {
    data.check_dim(params.dim())?;
    Ok(cost_and_grad(&NdoForward::new(params), data)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{basis_unitary, generate_dataset};
    use crate::ndo::{density_matrix, init_params};

    fn model_dataset(p: &NdoParams) -> MeasurementDataset {
        let rho = density_matrix(p);
        let n = rho.n_steps().unwrap();
        generate_dataset(&rho, n, None, None).unwrap()
    }

    #[test]
    fn self_generated_data_has_zero_cost() {
        let p = init_params(6, 3, 3, 0.7, 1).unwrap();
        let data = FitData::for_dataset(&model_dataset(&p)).unwrap();
        assert!(cost(&p, &data).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn two_outcome_kl_is_log_two() {
        let p = NdoParams::zeros(2, 1, 1);
        let data = FitData::from_pairs(vec![(basis_unitary(0, 0).unwrap(), vec![1.0, 0.0])]).unwrap();
        assert!((cost(&p, &data).unwrap() - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn cost_is_non_negative() {
        for seed in 0..50 {
            let target = init_params(6, 2, 2, 1.0, 1000 + seed).unwrap();
            let model = init_params(6, 2, 2, 1.0, 2000 + seed).unwrap();
            let data = FitData::for_dataset(&model_dataset(&target)).unwrap();
            assert!(cost(&model, &data).unwrap() >= -1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = init_params(6, 3, 3, 1.0, 5).unwrap();
        let model = init_params(6, 3, 3, 0.5, 6).unwrap();
        let data = FitData::for_dataset(&model_dataset(&target)).unwrap();
        let g = grad_cost(&model, &data).unwrap();
        let x = model.to_vec();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = cost(&NdoParams::from_vec(6, 3, 3, &xp).unwrap(), &data).unwrap();
            let fm = cost(&NdoParams::from_vec(6, 3, 3, &xm).unwrap(), &data).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-3);
            assert!(err <= 1e-5, "param {k}: fd {fd} analytic {}", g[k]);
        }
    }

    #[test]
    fn stationary_at_the_generating_state() {
        let p = init_params(6, 3, 3, 0.7, 2).unwrap();
        let data = FitData::for_dataset(&model_dataset(&p)).unwrap();
        let g = grad_cost(&p, &data).unwrap();
        assert!(crate::linalg::norm(&g) <= 1e-8);
    }

    #[test]
    fn reference_basis_alone_ignores_visible_phase_bias() {
        let target = init_params(6, 3, 3, 1.0, 8).unwrap();
        let model = init_params(6, 3, 3, 1.0, 9).unwrap();
        let rho = density_matrix(&target);
        let b0 = basis_unitary(0, 2).unwrap();
        let p0 = crate::measurement::measure_distribution(&rho, &b0).unwrap();
        let data = FitData::from_pairs(vec![(b0, p0)]).unwrap();
        let g = grad_cost(&model, &data).unwrap();
        let lay = model.layout();
        assert!(g[lay.b_mu..lay.c_lambda].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let data = FitData::for_dataset(&model_dataset(&init_params(6, 2, 2, 0.3, 1).unwrap())).unwrap();
        let wrong = NdoParams::zeros(8, 2, 2);
        assert!(matches!(cost(&wrong, &data), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(grad_cost(&wrong, &data), Err(Error::DimensionMismatch { .. })));
    }
}
