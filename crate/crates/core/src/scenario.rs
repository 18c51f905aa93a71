//! End-to-end reconstruction runs: simulate a walk, measure it exactly, fit
//! the network (or the MaxLik baseline) and score the result.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxlik::{maxlik_fit, MaxLikConfig};
use crate::measurement::generate_dataset;
use crate::ndo::{init_params, NdoParams};
use crate::state::DensityMatrix;
use crate::training::{final_metrics, optimize, FinalMetrics, FitData, OptimizerKind, TrainConfig, TrainReport};
use crate::walk::{evolve, DephasingMode, NoiseModel, WalkConfig};

/// Hidden and ancillary layer size for coherent walks.
pub const COHERENT_UNITS: usize = 10;
/// Hidden and ancillary layer size for open walks.
pub const OPEN_UNITS: usize = 15;

/// Initialization half-width for open-walk fits.
pub const OPEN_INIT_SCALE: f64 = 0.3;

/// Default training setup per noise class. Open walks are only partially
/// determined by the measured bases; L-BFGS from a moderate initialization
/// fills the unmeasured coherences more faithfully than the natural-gradient
/// fit, which drives the cost lower but drifts in the unconstrained
/// directions. Coherent walks use the natural-gradient default.
pub fn default_train_config(open: bool, seed: u64) -> TrainConfig {
    if open {
        TrainConfig {
            optimizer: OptimizerKind::Lbfgs,
            init_scale: OPEN_INIT_SCALE,
            seed,
            ..TrainConfig::default()
        }
    } else {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Dephasing strengths of the six-mixing sweep.
pub const SWEEP_DELTA_BETAS: [f64; 6] = [0.0, PI / 8.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI];

/// Layer sizes and optimizer settings for one network fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdoSettings {
    pub hidden: usize,
    pub ancilla: usize,
    pub train: TrainConfig,
}

impl NdoSettings {
    /// Default layer sizes: [`OPEN_UNITS`] for noisy walks, [`COHERENT_UNITS`] otherwise.
    pub fn for_noise(noise: &NoiseModel) -> Self {
        let units = if noise.is_open() { OPEN_UNITS } else { COHERENT_UNITS };
        Self {
            hidden: units,
            ancilla: units,
            train: default_train_config(noise.is_open(), 0),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }

    pub fn init(&self, dim: usize) -> Result<NdoParams> {
        init_params(dim, self.hidden, self.ancilla, self.train.init_scale, self.train.seed)
    }
}

/// Outcome of one reconstruction against a known target.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub target: DensityMatrix,
    pub rho: DensityMatrix,
    pub report: TrainReport,
    pub metrics: FinalMetrics,
}

/// Exact (noise-free) measurement data of `target` in every basis.
pub fn exact_data(target: &DensityMatrix) -> Result<FitData> {
    let n_steps = target
        .n_steps()
        .ok_or_else(|| Error::invalid(format!("dimension {} is not 2(N+1)", target.dim())))?;
    FitData::for_dataset(&generate_dataset(target, n_steps, None, None)?)
}

pub fn reconstruct_ndo(target: &DensityMatrix, settings: &NdoSettings) -> Result<Reconstruction> {
    let data = exact_data(target)?;
    let (params, report) = optimize(&settings.train, &data, &settings.init(target.dim())?, Some(target))?;
    let rho = crate::ndo::density_matrix(&params);
    let metrics = final_metrics(&rho, target)?;
    Ok(Reconstruction {
        target: target.clone(),
        rho,
        report,
        metrics,
    })
}

pub fn reconstruct_maxlik(target: &DensityMatrix, config: &MaxLikConfig) -> Result<Reconstruction> {
    let data = exact_data(target)?;
    let (rho, _, report) = maxlik_fit(&data, config, Some(target))?;
    let metrics = final_metrics(&rho, target)?;
    Ok(Reconstruction {
        target: target.clone(),
        rho,
        report,
        metrics,
    })
}

/// Analytic dephasing of strength `delta_beta` applied after every Hadamard step.
pub fn dephasing_walk(n_steps: usize, delta_beta: f64) -> WalkConfig {
    WalkConfig::hadamard(
        n_steps,
        NoiseModel::Dephasing {
            delta_beta,
            mode: DephasingMode::Analytic,
        },
    )
}

/// `samples` dephasing strengths drawn uniformly from `[0, pi]`.
pub fn dephasing_samples(samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| rng.random_range(0.0..=PI)).collect()
}

/// Walk family of the fidelity-versus-steps benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkFamily {
    Hadamard,
    Disordered,
    Open,
}

impl WalkFamily {
    pub const ALL: [WalkFamily; 3] = [WalkFamily::Hadamard, WalkFamily::Disordered, WalkFamily::Open];

    pub fn name(&self) -> &'static str {
        match self {
            WalkFamily::Hadamard => "hadamard",
            WalkFamily::Disordered => "disordered",
            WalkFamily::Open => "open",
        }
    }

    /// Walk for sample `sample`; the Hadamard walk ignores the sample index.
    /// Returns the walk and, for open walks, its dephasing strength.
    pub fn walk(&self, n_steps: usize, sample: usize, seed: u64) -> (WalkConfig, Option<f64>) {
        let sample_seed = seed.wrapping_mul(1_000_003).wrapping_add(sample as u64);
        match self {
            WalkFamily::Hadamard => (WalkConfig::hadamard(n_steps, NoiseModel::None), None),
            WalkFamily::Disordered => (WalkConfig::disordered(n_steps, sample_seed, NoiseModel::None), None),
            WalkFamily::Open => {
                let db = dephasing_samples(1, sample_seed)[0];
                (dephasing_walk(n_steps, db), Some(db))
            }
        }
    }

    pub fn units(&self) -> usize {
        match self {
            WalkFamily::Open => OPEN_UNITS,
            _ => COHERENT_UNITS,
        }
    }
}

/// One row of the fidelity-versus-steps benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub family: WalkFamily,
    pub n_steps: usize,
    pub sample: usize,
    pub delta_beta: Option<f64>,
    pub ndo_fidelity: f64,
    pub ndo_purity_error: f64,
    pub ndo_iterations: usize,
    pub maxlik_fidelity: f64,
    pub maxlik_purity_error: f64,
}

/// Reconstructs one walk with both the network and MaxLik.
pub fn benchmark_walk(
    family: WalkFamily,
    n_steps: usize,
    sample: usize,
    seed: u64,
    train: &TrainConfig,
    maxlik: &MaxLikConfig,
) -> Result<BenchmarkRow> {
    let (walk, delta_beta) = family.walk(n_steps, sample, seed);
    let target = evolve(&walk)?;
    let settings = NdoSettings {
        hidden: family.units(),
        ancilla: family.units(),
        train: TrainConfig {
            seed: train.seed.wrapping_add(sample as u64),
            ..train.clone()
        },
    };
    let ndo = reconstruct_ndo(&target, &settings)?;
    let ml = reconstruct_maxlik(
        &target,
        &MaxLikConfig {
            seed: maxlik.seed.wrapping_add(sample as u64),
            ..*maxlik
        },
    )?;
    Ok(BenchmarkRow {
        family,
        n_steps,
        sample,
        delta_beta,
        ndo_fidelity: ndo.metrics.fidelity,
        ndo_purity_error: ndo.metrics.purity_error,
        ndo_iterations: ndo.report.iterations,
        maxlik_fidelity: ml.metrics.fidelity,
        maxlik_purity_error: ml.metrics.purity_error,
    })
}

/// Row of the purity-versus-dephasing sweep, averaged over network seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta_beta: f64,
    pub target_purity: f64,
    pub mean_purity: f64,
    pub mean_fidelity: f64,
    pub mean_purity_error: f64,
}

pub fn dephasing_sweep(n_steps: usize, delta_beta: f64, samples: usize, train: &TrainConfig) -> Result<SweepRow> {
    if samples == 0 {
        return Err(Error::invalid("samples must be at least 1"));
    }
    let target = evolve(&dephasing_walk(n_steps, delta_beta))?;
    let (mut purity, mut fidelity, mut perr) = (0.0, 0.0, 0.0);
    let mut target_purity = 0.0;
    for s in 0..samples {
        let settings = NdoSettings {
            hidden: OPEN_UNITS,
            ancilla: OPEN_UNITS,
            train: TrainConfig {
                seed: train.seed.wrapping_add(s as u64),
                ..train.clone()
            },
        };
        let r = reconstruct_ndo(&target, &settings)?;
        purity += r.metrics.purity;
        fidelity += r.metrics.fidelity;
        perr += r.metrics.purity_error;
        target_purity = r.metrics.target_purity;
    }
    let k = samples as f64;
    Ok(SweepRow {
        delta_beta,
        target_purity,
        mean_purity: purity / k,
        mean_fidelity: fidelity / k,
        mean_purity_error: perr / k,
    })
}

/// Runs every optimizer in `kinds` from the same initial parameters on one dataset.
pub fn compare_optimizers(
    data: &FitData,
    hidden: usize,
    ancilla: usize,
    base: &TrainConfig,
    kinds: &[OptimizerKind],
    target: Option<&DensityMatrix>,
) -> Result<Vec<TrainReport>> {
    let init = init_params(data.dim(), hidden, ancilla, base.init_scale, base.seed)?;
    kinds
        .iter()
        .map(|&kind| {
            let cfg = TrainConfig {
                optimizer: kind,
                ..base.clone()
            };
            optimize(&cfg, data, &init, target).map(|(_, r)| r)
        })
        .collect()
}

/// Iterations each optimizer needs to reach the cost gradient descent attains
/// after `gd_budget` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub reference_cost: f64,
    pub iterations: Vec<(OptimizerKind, Option<usize>)>,
}

impl Speedup {
    pub fn from_reports(reports: &[TrainReport], gd_budget: usize) -> Result<Self> {
        let gd = reports
            .iter()
            .find(|r| r.optimizer == OptimizerKind::Gd)
            .ok_or_else(|| Error::invalid("speedup needs a gradient-descent run"))?;
        let reference_cost = gd
            .records
            .iter()
            .take_while(|r| r.iter <= gd_budget)
            .last()
            .map(|r| r.cost)
            .unwrap_or(f64::NAN);
        let iterations = reports
            .iter()
            .map(|r| (r.optimizer, r.iterations_to_reach(reference_cost)))
            .collect();
        Ok(Self {
            reference_cost,
            iterations,
        })
    }

    pub fn iterations_of(&self, kind: OptimizerKind) -> Option<usize> {
        self.iterations.iter().find(|(k, _)| *k == kind).and_then(|(_, n)| *n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dephasing_samples_are_deterministic_and_in_range() {
        let a = dephasing_samples(50, 3);
        assert_eq!(a, dephasing_samples(50, 3));
        assert!(a.iter().all(|x| (0.0..=PI).contains(x)));
        assert_ne!(a, dephasing_samples(50, 4));
    }

    #[test]
    fn families_use_expected_layer_sizes() {
        assert_eq!(WalkFamily::Hadamard.units(), 10);
        assert_eq!(WalkFamily::Open.units(), 15);
        let (walk, db) = WalkFamily::Open.walk(3, 0, 1);
        assert!(walk.noise.is_open());
        assert!(db.is_some());
        assert_eq!(
            WalkFamily::Hadamard.walk(3, 7, 1).0,
            WalkConfig::hadamard(3, NoiseModel::None)
        );
    }

    #[test]
    fn speedup_reads_reference_level_from_gradient_descent() {
        let data = exact_data(&evolve(&WalkConfig::hadamard(1, NoiseModel::None)).unwrap()).unwrap();
        let base = TrainConfig {
            max_iters: 20,
            ..TrainConfig::default()
        };
        let reports = compare_optimizers(&data, 2, 2, &base, &[OptimizerKind::Gd, OptimizerKind::Lbfgs], None).unwrap();
        let s = Speedup::from_reports(&reports, 10).unwrap();
        assert_eq!(s.reference_cost, reports[0].records[10].cost);
        assert!(s.iterations_of(OptimizerKind::Gd).unwrap() <= 10);
        assert!(s.iterations_of(OptimizerKind::Lbfgs).is_some());
    }
}
