//! Line-searched first-order optimizers and generalized natural gradient
//! descent over a flat parameter vector.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::metric::solve_with_factor;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// A smooth scalar objective over `R^n`.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Real factor `R` of the natural-gradient metric `G = R^T R`, if the
    /// objective defines one.
    fn metric_factor(&self, _x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Cg,
    Lbfgs,
    Gngd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Gd,
        OptimizerKind::Cg,
        OptimizerKind::Lbfgs,
        OptimizerKind::Gngd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Cg => "cg",
            OptimizerKind::Lbfgs => "lbfgs",
            OptimizerKind::Gngd => "gngd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(OptimizerKind::Gd),
            "cg" => Ok(OptimizerKind::Cg),
            "lbfgs" | "l-bfgs" => Ok(OptimizerKind::Lbfgs),
            "gngd" => Ok(OptimizerKind::Gngd),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Backtracking Armijo line search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_halvings: 30,
        }
    }
}

/// Initialization half-width used by training runs. Wider than the network
/// default so the initial state is not a near-pure uniform superposition,
/// which otherwise steers natural-gradient runs into mixed local minima.
pub const TRAIN_INIT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Relative metric regularization: `G + eps * Tr(G)/P * I`, with `eps`
    /// starting at `metric_eps`.
    pub metric_eps: f64,
    /// Upper bound for the adaptive regularization. After a step shorter than
    /// a fifth of `line_search.initial_step` the regularization triples (up to
    /// this cap); after a full step it shrinks by three (down to
    /// `metric_eps`). Setting it equal to `metric_eps` keeps it fixed.
    pub metric_eps_max: f64,
    pub line_search: LineSearch,
    pub lbfgs_memory: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Gngd,
            grad_tol: 1e-8,
            max_iters: 2000,
            metric_eps: 1e-6,
            metric_eps_max: 1e-2,
            line_search: LineSearch::default(),
            lbfgs_memory: 10,
            init_scale: TRAIN_INIT_SCALE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_optimizer(optimizer: OptimizerKind) -> Self {
        Self {
            optimizer,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid(format!("grad_tol = {} must be positive", self.grad_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.metric_eps >= 0.0) {
            return Err(Error::invalid("metric_eps must be non-negative"));
        }
        if !(self.metric_eps_max >= self.metric_eps) || !self.metric_eps_max.is_finite() {
            return Err(Error::invalid("metric_eps_max must be finite and at least metric_eps"));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid("init_scale must be finite and non-negative"));
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0) || !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.armijo > 0.0 && ls.armijo < 1.0) {
            return Err(Error::invalid(
                "line search needs step > 0, shrink and armijo in (0, 1)",
            ));
        }
        if self.optimizer == OptimizerKind::Lbfgs && self.lbfgs_memory == 0 {
            return Err(Error::invalid("lbfgs_memory must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::GradTol => "grad_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailure => "line_search_failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub fidelity: f64,
    pub purity: f64,
    pub target_purity: f64,
    pub purity_error: f64,
}

/// Optimizer trace. Row 0 is the initial point; row `i` follows the `i`-th
/// accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub termination: Termination,
    pub records: Vec<IterRecord>,
    pub final_metrics: Option<FinalMetrics>,
}

impl TrainReport {
    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cost)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.grad_norm)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    /// First iteration whose cost is at or below `level`.
    pub fn iterations_to_reach(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.cost <= level).map(|r| r.iter)
    }

    /// Zeroes the wall-clock column so reports of identical runs compare equal.
    pub fn strip_timings(&mut self) {
        self.records.iter_mut().for_each(|r| r.millis = 0.0);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,cost,grad_norm,step,millis\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:.3}\n",
                r.iter, r.cost, r.grad_norm, r.step, r.millis
            ));
        }
        out
    }
}

fn axpy(x: &[f64], alpha: f64, dir: &[f64]) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, b)| a + alpha * b).collect()
}

pub(crate) struct Accepted {
    pub x: Vec<f64>,
    pub value: f64,
    pub step: f64,
}

/// Backtracking from `initial_step`; returns the accepted point, or the last
/// step size tried when every trial fails.
pub(crate) fn backtrack<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    f0: f64,
    slope: f64,
    dir: &[f64],
    ls: &LineSearch,
) -> Result<std::result::Result<Accepted, f64>> {
    let mut eta = ls.initial_step;
    for trial in 0..=ls.max_halvings {
        if trial > 0 {
            eta *= ls.shrink;
        }
        let cand = axpy(x, eta, dir);
        let f = obj.value(&cand)?;
        if f.is_finite() && f < f0 && f <= f0 + ls.armijo * eta * slope {
            return Ok(Ok(Accepted {
                x: cand,
                value: f,
                step: eta,
            }));
        }
    }
    Ok(Err(eta))
}

/// Limited-memory BFGS two-loop recursion, returning `-H g`.
fn lbfgs_direction(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Natural-gradient direction `-(G + eps Tr(G)/P I)^{-1} g`.
pub(crate) fn natural_direction(factor: &DMatrix<f64>, g: &[f64], eps: f64) -> Result<Vec<f64>> {
    Ok(solve_with_factor(factor, g, eps)?.into_iter().map(|x| -x).collect())
}

/// Runs the configured optimizer from `x0`. All optimizers share the line
/// search and the gradient-norm stopping rule.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], config: &TrainConfig) -> Result<(Vec<f64>, TrainReport)> {
    config.validate()?;
    let n = obj.num_params();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let ls = &config.line_search;
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.value_and_gradient(&x)?;
    let mut records = vec![IterRecord {
        iter: 0,
        cost: f,
        grad_norm: norm(&g),
        step: 0.0,
        millis: 0.0,
    }];
    let mut prev_dir: Option<Vec<f64>> = None;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iters = 0;
    let mut damping = config.metric_eps;
    let termination = loop {
        if norm(&g) <= config.grad_tol {
            break Termination::GradTol;
        }
        if iters >= config.max_iters {
            break Termination::MaxIters;
        }
        let started = Instant::now();
        let mut dir = match config.optimizer {
            OptimizerKind::Gd => g.iter().map(|x| -x).collect(),
            OptimizerKind::Cg => match &prev_dir {
                Some(p) => p.clone(),
                None => g.iter().map(|x| -x).collect(),
            },
            OptimizerKind::Lbfgs => lbfgs_direction(&g, &memory),
            OptimizerKind::Gngd => {
                let factor = obj
                    .metric_factor(&x)?
                    .ok_or_else(|| Error::invalid("objective provides no metric for gngd"))?;
                natural_direction(&factor, &g, damping)?
            }
        };
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = g.iter().map(|x| -x).collect();
            slope = -dot(&g, &g);
            memory.clear();
        }
        let accepted = match backtrack(obj, &x, f, slope, &dir, ls)? {
            Ok(acc) => acc,
            Err(last_eta) => {
                // Plain gradient step at the last step size tried.
                let cand = axpy(&x, -last_eta, &g);
                let fc = obj.value(&cand)?;
                if fc.is_finite() && fc < f && fc <= f - ls.armijo * last_eta * dot(&g, &g) {
                    memory.clear();
                    prev_dir = None;
                    Accepted {
                        x: cand,
                        value: fc,
                        step: last_eta,
                    }
                } else {
                    break Termination::LineSearchFailure;
                }
            }
        };
        let (f_new, g_new) = obj.value_and_gradient(&accepted.x)?;
        iters += 1;
        if accepted.step >= ls.initial_step {
            damping = (damping / 3.0).max(config.metric_eps);
        } else if accepted.step < ls.initial_step * 0.2 {
            damping = (damping * 3.0).min(config.metric_eps_max);
        }
        match config.optimizer {
            OptimizerKind::Cg => {
                // Polak-Ribiere-plus with a restart every n iterations.
                let denom = dot(&g, &g);
                let beta = if iters % n == 0 || denom == 0.0 {
                    0.0
                } else {
                    let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
                    (num / denom).max(0.0)
                };
                let next: Vec<f64> = g_new.iter().zip(&dir).map(|(gi, di)| -gi + beta * di).collect();
                prev_dir = Some(if dot(&next, &g_new) < 0.0 {
                    next
                } else {
                    g_new.iter().map(|x| -x).collect()
                });
            }
            OptimizerKind::Lbfgs => {
                let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
                    if memory.len() == config.lbfgs_memory {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
            }
            _ => {}
        }
        debug_assert!(f_new <= accepted.value || (f_new - accepted.value).abs() <= 1e-12 * f.abs().max(1.0));
        x = accepted.x;
        f = f_new;
        g = g_new;
        records.push(IterRecord {
            iter: iters,
            cost: f,
            grad_norm: norm(&g),
            step: accepted.step,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    };
    Ok((
        x,
        TrainReport {
            optimizer: config.optimizer,
            iterations: iters,
            termination,
            records,
            final_metrics: None,
        },
    ))
}

/// One natural-gradient update with an explicit metric: solves the regularized
/// system, then backtracks along the resulting direction. Falls back to a plain
/// gradient step at the last step size if no trial satisfies the Armijo rule.
pub fn natural_gradient_step<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    grad: &[f64],
    metric: &DMatrix<f64>,
    eps: f64,
    ls: &LineSearch,
) -> Result<(Vec<f64>, f64)> {
    let f0 = obj.value(x)?;
    let delta = super::metric::solve_regularized(metric, grad, eps)?;
    let dir: Vec<f64> = delta.iter().map(|v| -v).collect();
    let slope = dot(grad, &dir);
    match backtrack(obj, x, f0, slope, &dir, ls)? {
        Ok(acc) => Ok((acc.x, acc.step)),
        Err(last_eta) => {
            let cand = axpy(x, -last_eta, grad);
            let fc = obj.value(&cand)?;
            if fc < f0 && fc <= f0 - ls.armijo * last_eta * dot(grad, grad) {
                Ok((cand, last_eta))
            } else {
                Err(Error::Numerical("line-search failure".into()))
            }
        }
    }
}
