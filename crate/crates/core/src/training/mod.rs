//! Fitting the neural density operator to measured distributions.

pub mod cost;
pub mod metric;
pub mod optim;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::metrics::{fidelity, purity};
use crate::ndo::{NdoForward, NdoParams};
use crate::state::DensityMatrix;

pub use cost::{cost, grad_cost, FitData, PROB_FLOOR};
pub use metric::{gngd_metric, gngd_metric_dense, jacobian_rows, rho_jacobian, solve_regularized, solve_residual};
pub use optim::{
    minimize, FinalMetrics, IterRecord, LineSearch, Objective, OptimizerKind, Termination, TrainConfig, TrainReport,
    TRAIN_INIT_SCALE,
};

/// The KL cost as a function of the flattened NDO parameter vector.
pub struct NdoObjective<'a> {
    data: &'a FitData,
    dim: usize,
    hidden: usize,
    ancilla: usize,
}

impl<'a> NdoObjective<'a> {
    pub fn new(data: &'a FitData, hidden: usize, ancilla: usize) -> Self {
        Self {
            data,
            dim: data.dim(),
            hidden,
            ancilla,
        }
    }

    pub fn params(&self, x: &[f64]) -> Result<NdoParams> {
        NdoParams::from_vec(self.dim, self.hidden, self.ancilla, x)
    }
}

impl Objective for NdoObjective<'_> {
    fn num_params(&self) -> usize {
        NdoParams::zeros(self.dim, self.hidden, self.ancilla).num_params()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let fwd = NdoForward::new(&self.params(x)?);
        Ok(cost::kl_eval(&fwd.rho, self.data, false).cost)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        cost::cost_and_grad(&NdoForward::new(&self.params(x)?), self.data)
    }

    fn metric_factor(&self, x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        Ok(Some(jacobian_rows(&NdoForward::new(&self.params(x)?))))
    }
}

/// Fidelity and purity of a reconstruction against a known state.
pub fn final_metrics(rho: &DensityMatrix, target: &DensityMatrix) -> Result<FinalMetrics> {
    let p = purity(rho);
    let t = purity(target);
    Ok(FinalMetrics {
        fidelity: fidelity(rho, target)?,
        purity: p,
        target_purity: t,
        purity_error: (p - t).abs(),
    })
}

/// Trains from `init` with the configured optimizer. When `target` is given the
/// report carries the final fidelity and purity error against it.
pub fn optimize(
    config: &TrainConfig,
    data: &FitData,
    init: &NdoParams,
    target: Option<&DensityMatrix>,
) -> Result<(NdoParams, TrainReport)> {
    config.validate()?;
    init.validate()?;
    data.check_dim(init.dim())?;
    let obj = NdoObjective::new(data, init.hidden(), init.ancilla());
    let (x, mut report) = minimize(&obj, &init.to_vec(), config)?;
    let params = obj.params(&x)?;
    if let Some(target) = target {
        report.final_metrics = Some(final_metrics(&NdoForward::new(&params).density_matrix(), target)?);
    }
    Ok((params, report))
}

/// One natural-gradient update from `params` using an explicit metric.
/// Returns the new parameters and the accepted step size.
pub fn gngd_step(
    params: &NdoParams,
    grad: &[f64],
    metric: &DMatrix<f64>,
    data: &FitData,
    eps: f64,
    line_search: &LineSearch,
) -> Result<(NdoParams, f64)> {
    data.check_dim(params.dim())?;
    let obj = NdoObjective::new(data, params.hidden(), params.ancilla());
    let (x, step) = optim::natural_gradient_step(&obj, &params.to_vec(), grad, metric, eps, line_search)?;
    Ok((obj.params(&x)?, step))
}
