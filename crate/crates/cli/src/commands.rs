use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use qwtomo::maxlik::{maxlik_fit, MaxLikConfig};
use qwtomo::measurement::{generate_dataset, load_dataset, save_dataset, MeasurementDataset};
use qwtomo::metrics::{classical_similarity, fidelity, purity};
use qwtomo::ndo::{density_matrix, init_params, NdoParams};
use qwtomo::scenario::{
    benchmark_walk, compare_optimizers, default_train_config, dephasing_sweep, BenchmarkRow, Speedup, SweepRow,
    WalkFamily, COHERENT_UNITS, OPEN_UNITS, SWEEP_DELTA_BETAS,
};
use qwtomo::state::DensityMatrix;
use qwtomo::training::{optimize, FitData, OptimizerKind, TrainConfig, TrainReport};
use qwtomo::walk::{evolve, DephasingMode, NoiseModel, WalkConfig};

use crate::args::*;
use crate::Usage;

/// Where summaries go: human-readable lines or one JSON document.
pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit(&self, text: &str, value: serde_json::Value) {
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        // A closed pipe (e.g. `| head`) is not an error worth reporting.
        let _ = if self.json {
            writeln!(
                stdout,
                "{}",
                serde_json::to_string_pretty(&value).expect("summary serializes")
            )
        } else {
            write!(stdout, "{text}")
        };
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn noise_model(w: &WalkArgs, seed: u64) -> anyhow::Result<NoiseModel> {
    let need =
        |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("--noise {} requires --{flag}", w.noise.name())));
    Ok(match w.noise {
        NoiseKind::None => NoiseModel::None,
        NoiseKind::Mixing => NoiseModel::KrausMixing {
            w_s: need(w.w_s, "w-s")?,
            w_l: need(w.w_l, "w-l")?,
        },
        NoiseKind::Dephasing => NoiseModel::Dephasing {
            delta_beta: need(w.delta_beta, "delta-beta")?,
            mode: match w.mc_samples {
                Some(n) => DephasingMode::MonteCarlo { n_samples: n, seed },
                None => DephasingMode::Analytic,
            },
        },
        NoiseKind::Depolarizing => NoiseModel::Depolarizing {
            p: need(w.depolarizing_p, "depolarizing-p")?,
        },
    })
}

fn walk_config(w: &WalkArgs, seed: u64) -> anyhow::Result<WalkConfig> {
    let steps = w.steps.ok_or_else(|| usage("--steps is required to simulate a walk"))?;
    let noise = noise_model(w, seed)?;
    Ok(match (w.alpha, w.disordered_seed) {
        (_, Some(s)) => WalkConfig::disordered(steps, s, noise),
        (Some(a), None) => WalkConfig::constant_angle(steps, a, noise),
        (None, None) => WalkConfig::hadamard(steps, noise),
    })
}

fn check_steps(expected: Option<usize>, found: usize, what: &str) -> anyhow::Result<()> {
    match expected {
        Some(n) if n != found => bail!("--steps {n} does not match the {what}, which has n_steps = {found}"),
        _ => Ok(()),
    }
}

fn units(hidden: Option<usize>, ancillary: Option<usize>, open: bool) -> (usize, usize) {
    let default = if open { OPEN_UNITS } else { COHERENT_UNITS };
    (hidden.unwrap_or(default), ancillary.unwrap_or(default))
}

fn apply_optim(mut cfg: TrainConfig, o: &OptimArgs) -> TrainConfig {
    if let Some(v) = o.grad_tol {
        cfg.grad_tol = v;
    }
    if let Some(v) = o.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = o.metric_eps {
        cfg.metric_eps = v;
        cfg.metric_eps_max = cfg.metric_eps_max.max(v);
    }
    if let Some(v) = o.metric_eps_max {
        cfg.metric_eps_max = v;
    }
    if let Some(v) = o.init_scale {
        cfg.init_scale = v;
    }
    if let Some(v) = o.lbfgs_memory {
        cfg.lbfgs_memory = v;
    }
    cfg
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    write_file(path, std::str::from_utf8(&bytes)?)
}

fn load_state(path: &Path) -> anyhow::Result<DensityMatrix> {
    DensityMatrix::load(path).with_context(|| format!("loading state {}", path.display()))
}

fn load_data(path: &Path) -> anyhow::Result<MeasurementDataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn save_report(
    report: &mut TrainReport,
    timings: bool,
    json: Option<&PathBuf>,
    csv: Option<&PathBuf>,
) -> anyhow::Result<()> {
    if !timings {
        report.strip_timings();
    }
    if let Some(p) = json {
        write_file(p, &report.to_json())?;
    }
    if let Some(p) = csv {
        write_file(p, &report.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PositionRow {
    site: usize,
    probability: f64,
}

pub fn simulate(a: &SimulateArgs, out: &Output) -> anyhow::Result<()> {
    let cfg = walk_config(&a.walk, a.seed)?;
    let rho = evolve(&cfg)?;
    if let Some(p) = &a.out {
        write_file(p, &rho.to_json())?;
    }
    let marg = rho.position_marginal();
    if let Some(p) = &a.positions {
        let rows: Vec<PositionRow> = marg
            .iter()
            .enumerate()
            .map(|(site, &probability)| PositionRow { site, probability })
            .collect();
        write_csv(p, &rows)?;
    }
    let pur = purity(&rho);
    let mut text = format!(
        "steps {}\ndim {}\npurity {pur:.12}\nposition distribution:\n",
        cfg.n_steps,
        rho.dim()
    );
    for (l, p) in marg.iter().enumerate() {
        writeln!(text, "  {l:>3} {p:.12}").ok();
    }
    out.emit(
        &text,
        json!({ "n_steps": cfg.n_steps, "dim": rho.dim(), "purity": pur, "positions": marg }),
    );
    Ok(())
}

pub fn gen_data(a: &GenDataArgs, out: &Output) -> anyhow::Result<()> {
    let rho = match &a.from_state {
        Some(p) => load_state(p)?,
        None => evolve(&walk_config(&a.walk, a.seed)?)?,
    };
    let n_steps = rho
        .n_steps()
        .ok_or_else(|| anyhow::anyhow!("state dimension {} is not 2(N+1)", rho.dim()))?;
    check_steps(a.walk.steps, n_steps, "state")?;
    let ds = generate_dataset(&rho, n_steps, a.shots, a.shots.map(|_| a.seed))?;
    save_dataset(&ds, &a.out)?;
    out.emit(
        &format!(
            "wrote {} bases for N={n_steps} to {}\n",
            ds.entries().len(),
            a.out.display()
        ),
        json!({ "n_steps": n_steps, "bases": ds.entries().len(), "shots": a.shots, "out": a.out }),
    );
    Ok(())
}

fn metrics_json(report: &TrainReport) -> serde_json::Value {
    serde_json::to_value(report.final_metrics).expect("metrics serialize")
}

fn report_text(report: &TrainReport) -> String {
    let mut t = format!(
        "optimizer {}\niterations {}\ntermination {}\nfinal cost {:.6e}\nfinal gradient norm {:.6e}\n",
        report.optimizer,
        report.iterations,
        report.termination,
        report.final_cost(),
        report.final_grad_norm()
    );
    if let Some(m) = report.final_metrics {
        write!(
            t,
            "fidelity {:.6}\npurity {:.6}\ntarget purity {:.6}\npurity error {:.3e}\n",
            m.fidelity, m.purity, m.target_purity, m.purity_error
        )
        .ok();
    }
    t
}

pub fn train(a: &TrainArgs, out: &Output) -> anyhow::Result<()> {
    let ds = load_data(&a.dataset)?;
    check_steps(a.steps, ds.n_steps(), "dataset")?;
    let data = FitData::for_dataset(&ds)?;
    let open = a.noise != NoiseKind::None;
    let mut cfg = apply_optim(default_train_config(open, a.seed), &a.optim);
    if let Some(k) = a.optimizer {
        cfg.optimizer = k;
    }
    let init = match &a.init {
        Some(p) => {
            let p = NdoParams::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            if p.dim() != ds.dim() {
                bail!(
                    "checkpoint dimension {} does not match dataset dimension {}",
                    p.dim(),
                    ds.dim()
                );
            }
            p
        }
        None => {
            let (h, m) = units(a.hidden, a.ancillary, open);
            init_params(ds.dim(), h, m, cfg.init_scale, cfg.seed)?
        }
    };
    let target = a.target.as_deref().map(load_state).transpose()?;
    let (params, mut report) = optimize(&cfg, &data, &init, target.as_ref())?;
    params.save(&a.out)?;
    save_report(&mut report, a.timings, a.report.as_ref(), a.trace.as_ref())?;
    out.emit(
        &report_text(&report),
        json!({
            "optimizer": report.optimizer,
            "iterations": report.iterations,
            "termination": report.termination,
            "final_cost": report.final_cost(),
            "final_grad_norm": report.final_grad_norm(),
            "metrics": metrics_json(&report),
            "checkpoint": a.out,
        }),
    );
    Ok(())
}

pub fn maxlik(a: &MaxlikArgs, out: &Output) -> anyhow::Result<()> {
    let ds = load_data(&a.dataset)?;
    check_steps(a.steps, ds.n_steps(), "dataset")?;
    let data = FitData::for_dataset(&ds)?;
    let cfg = MaxLikConfig {
        seed: a.seed,
        grad_tol: a.grad_tol,
        max_iters: a.max_iters,
    };
    let target = a.target.as_deref().map(load_state).transpose()?;
    let (rho, params, mut report) = maxlik_fit(&data, &cfg, target.as_ref())?;
    write_file(&a.out, &rho.to_json())?;
    if let Some(p) = &a.checkpoint {
        write_file(p, &serde_json::to_string_pretty(&params)?)?;
    }
    save_report(&mut report, a.timings, a.report.as_ref(), a.trace.as_ref())?;
    out.emit(
        &report_text(&report),
        json!({
            "iterations": report.iterations,
            "termination": report.termination,
            "final_cost": report.final_cost(),
            "metrics": metrics_json(&report),
            "state": a.out,
        }),
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, out: &Output) -> anyhow::Result<()> {
    let rho = match (&a.checkpoint, &a.state) {
        (Some(p), _) => {
            density_matrix(&NdoParams::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?)
        }
        (None, Some(p)) => load_state(p)?,
        (None, None) => return Err(usage("one of --checkpoint or --state is required")),
    };
    let n_steps = rho
        .n_steps()
        .ok_or_else(|| anyhow::anyhow!("state dimension {} is not 2(N+1)", rho.dim()))?;
    let own = generate_dataset(&rho, n_steps, None, None)?;
    let pur = purity(&rho);
    let (fid, target_purity, reference) = match (&a.reference, &a.dataset) {
        (Some(p), _) => {
            let r = load_state(p)?;
            let rn = r.n_steps().unwrap_or(usize::MAX);
            if rn != n_steps {
                bail!("reconstruction has n_steps = {n_steps} but the reference has n_steps = {rn}");
            }
            let ds = generate_dataset(&r, n_steps, None, None)?;
            (Some(fidelity(&rho, &r)?), Some(purity(&r)), ds)
        }
        (None, Some(p)) => {
            let ds = load_data(p)?;
            if ds.n_steps() != n_steps {
                bail!(
                    "reconstruction has n_steps = {n_steps} but the dataset has n_steps = {}",
                    ds.n_steps()
                );
            }
            (None, None, ds)
        }
        (None, None) => return Err(usage("one of --reference or --dataset is required")),
    };
    let sim = classical_similarity(&own, &reference)?;
    let perr = target_purity.map(|t| (pur - t).abs());
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    out.emit(
        &format!(
            "fidelity {}\npurity {pur:.6}\ntarget purity {}\npurity error {}\nsimilarity {sim:.6}\n",
            fmt(fid),
            fmt(target_purity),
            perr.map_or("n/a".to_string(), |x| format!("{x:.3e}"))
        ),
        json!({
            "fidelity": fid,
            "purity": pur,
            "target_purity": target_purity,
            "purity_error": perr,
            "similarity": sim,
        }),
    );
    Ok(())
}

#[derive(Serialize)]
struct CostRow {
    iter: usize,
    optimizer: OptimizerKind,
    cost: f64,
}

fn cost_rows(reports: &[TrainReport]) -> Vec<CostRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.records.iter().map(|rec| CostRow {
                iter: rec.iter,
                optimizer: r.optimizer,
                cost: rec.cost,
            })
        })
        .collect()
}

fn speedup_summary(reports: &[TrainReport], budget: usize) -> anyhow::Result<(String, serde_json::Value)> {
    let s = Speedup::from_reports(reports, budget)?;
    let mut text = format!(
        "reference cost (gd after {budget} iterations) {:.6e}\n",
        s.reference_cost
    );
    writeln!(
        text,
        "{:<8} {:>10} {:>14} {:>14}",
        "optimizer", "iterations", "final cost", "iters to ref"
    )
    .ok();
    let mut rows = Vec::new();
    for r in reports {
        let reach = s.iterations_of(r.optimizer);
        writeln!(
            text,
            "{:<8} {:>10} {:>14.6e} {:>14}",
            r.optimizer.name(),
            r.iterations,
            r.final_cost(),
            reach.map_or("-".into(), |n| n.to_string())
        )
        .ok();
        rows.push(json!({
            "optimizer": r.optimizer,
            "iterations": r.iterations,
            "termination": r.termination,
            "final_cost": r.final_cost(),
            "iterations_to_reference": reach,
        }));
    }
    Ok((text, json!({ "reference_cost": s.reference_cost, "optimizers": rows })))
}

pub fn bench_opt(a: &BenchOptArgs, out: &Output) -> anyhow::Result<()> {
    let (ds, open) = match &a.dataset {
        Some(p) => {
            let ds = load_data(p)?;
            check_steps(a.walk.steps, ds.n_steps(), "dataset")?;
            (ds, a.walk.noise != NoiseKind::None)
        }
        None => {
            let cfg = walk_config(&a.walk, a.seed)?;
            let rho = evolve(&cfg)?;
            (generate_dataset(&rho, cfg.n_steps, None, None)?, cfg.noise.is_open())
        }
    };
    let data = FitData::for_dataset(&ds)?;
    let (h, m) = units(a.hidden, a.ancillary, open);
    let base = apply_optim(
        TrainConfig {
            max_iters: 1000,
            seed: a.seed,
            ..TrainConfig::default()
        },
        &a.optim,
    );
    let reports = compare_optimizers(&data, h, m, &base, &OptimizerKind::ALL, None)?;
    if let Some(p) = &a.out {
        write_csv(p, &cost_rows(&reports))?;
    }
    let (text, value) = speedup_summary(&reports, base.max_iters)?;
    out.emit(&text, value);
    Ok(())
}

pub fn reproduce(a: &ReproduceArgs, out: &Output) -> anyhow::Result<()> {
    let dir = a.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from("reproduce").join(match a.preset {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
        })
    });
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let train_for = |open: bool, seed: u64| {
        let mut cfg = apply_optim(default_train_config(open, seed), &a.optim);
        if let Some(k) = a.optimizer {
            cfg.optimizer = k;
        }
        cfg
    };
    match a.preset {
        Preset::Fig3 => reproduce_fig3(a, &dir, out, &train_for),
        Preset::Fig4 => reproduce_fig4(a, &dir, out, &train_for(true, a.seed)),
        Preset::Fig5 => reproduce_fig5(a, &dir, out),
    }
}

#[derive(Serialize)]
struct Fig3Summary {
    family: WalkFamily,
    n_steps: usize,
    samples: usize,
    ndo_fidelity: f64,
    ndo_purity_error: f64,
    maxlik_fidelity: f64,
    maxlik_purity_error: f64,
}

fn reproduce_fig3(
    a: &ReproduceArgs,
    dir: &Path,
    out: &Output,
    train_for: &dyn Fn(bool, u64) -> TrainConfig,
) -> anyhow::Result<()> {
    let samples = a.samples.unwrap_or(if a.full { 20 } else { 10 });
    let max_steps = a.max_steps.unwrap_or(if a.full { 10 } else { 6 });
    if samples == 0 || max_steps == 0 {
        return Err(usage("--samples and --max-steps must be at least 1"));
    }
    let mut rows: Vec<BenchmarkRow> = Vec::new();
    let mut summary = Vec::new();
    for family in WalkFamily::ALL {
        let train = train_for(family == WalkFamily::Open, a.seed);
        for n in 1..=max_steps {
            let start = rows.len();
            for s in 0..samples {
                let ml = MaxLikConfig {
                    seed: a.seed,
                    ..MaxLikConfig::default()
                };
                rows.push(benchmark_walk(family, n, s, a.seed, &train, &ml)?);
            }
            let block = &rows[start..];
            let mean = |f: &dyn Fn(&BenchmarkRow) -> f64| block.iter().map(f).sum::<f64>() / block.len() as f64;
            summary.push(Fig3Summary {
                family,
                n_steps: n,
                samples,
                ndo_fidelity: mean(&|r| r.ndo_fidelity),
                ndo_purity_error: mean(&|r| r.ndo_purity_error),
                maxlik_fidelity: mean(&|r| r.maxlik_fidelity),
                maxlik_purity_error: mean(&|r| r.maxlik_purity_error),
            });
        }
    }
    write_csv(&dir.join("fig3_samples.csv"), &rows)?;
    write_csv(&dir.join("fig3.csv"), &summary)?;
    let mut text = format!(
        "{:<11} {:>3} {:>12} {:>12} {:>12} {:>12}\n",
        "family", "N", "fidelity", "purity err", "maxlik fid", "maxlik perr"
    );
    for r in &summary {
        writeln!(
            text,
            "{:<11} {:>3} {:>12.5} {:>12.3e} {:>12.5} {:>12.3e}",
            r.family.name(),
            r.n_steps,
            r.ndo_fidelity,
            r.ndo_purity_error,
            r.maxlik_fidelity,
            r.maxlik_purity_error
        )
        .ok();
    }
    write_file(&dir.join("summary.txt"), &text)?;
    out.emit(&text, json!({ "out_dir": dir, "rows": summary }));
    Ok(())
}

fn reproduce_fig4(a: &ReproduceArgs, dir: &Path, out: &Output, train: &TrainConfig) -> anyhow::Result<()> {
    let samples = a.samples.unwrap_or(if a.full { 20 } else { 5 });
    let steps = a.steps.unwrap_or(5);
    let rows: Vec<SweepRow> = SWEEP_DELTA_BETAS
        .iter()
        .map(|&db| dephasing_sweep(steps, db, samples, train))
        .collect::<qwtomo::Result<_>>()?;
    write_csv(&dir.join("fig4.csv"), &rows)?;
    let mut text = format!(
        "{:>10} {:>14} {:>14} {:>10} {:>12}\n",
        "delta_beta", "target purity", "reconstructed", "fidelity", "purity err"
    );
    for r in &rows {
        writeln!(
            text,
            "{:>10.6} {:>14.6} {:>14.6} {:>10.5} {:>12.3e}",
            r.delta_beta, r.target_purity, r.mean_purity, r.mean_fidelity, r.mean_purity_error
        )
        .ok();
    }
    write_file(&dir.join("summary.txt"), &text)?;
    out.emit(&text, json!({ "out_dir": dir, "rows": rows }));
    Ok(())
}

fn reproduce_fig5(a: &ReproduceArgs, dir: &Path, out: &Output) -> anyhow::Result<()> {
    let steps = a.steps.unwrap_or(if a.full { 30 } else { 10 });
    let (h, m) = match (a.hidden, a.ancillary) {
        (Some(h), Some(m)) => (h, m),
        _ if a.full => return Err(usage("reproduce fig5 --full requires --hidden and --ancillary")),
        (h, m) => (h.unwrap_or(COHERENT_UNITS), m.unwrap_or(COHERENT_UNITS)),
    };
    let rho = evolve(&WalkConfig::hadamard(steps, NoiseModel::None))?;
    let data = FitData::for_dataset(&generate_dataset(&rho, steps, None, None)?)?;
    let base = apply_optim(
        TrainConfig {
            max_iters: 1000,
            seed: a.seed,
            ..TrainConfig::default()
        },
        &a.optim,
    );
    let reports = compare_optimizers(&data, h, m, &base, &OptimizerKind::ALL, Some(&rho))?;
    write_csv(&dir.join("fig5.csv"), &cost_rows(&reports))?;
    let (text, value) = speedup_summary(&reports, base.max_iters)?;
    write_file(&dir.join("summary.txt"), &text)?;
    out.emit(&text, json!({ "out_dir": dir, "steps": steps, "summary": value }));
    Ok(())
}
