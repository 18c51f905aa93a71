//! Analytic derivatives against central finite differences.

use qwtomo::maxlik::{self, CholeskyParams};
use qwtomo::measurement::generate_dataset;
use qwtomo::ndo::{density_matrix, init_params, NdoParams};
use qwtomo::training::{cost, grad_cost, rho_jacobian, FitData};
use qwtomo::walk::{evolve, NoiseModel, WalkConfig};

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

/// Relative error with an absolute floor so near-zero components are not
/// judged on round-off alone.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn walk_data(n_steps: usize, delta_beta: f64) -> FitData {
    let noise = NoiseModel::Dephasing {
        delta_beta,
        mode: qwtomo::walk::DephasingMode::Analytic,
    };
    let rho = evolve(&WalkConfig::hadamard(n_steps, noise)).unwrap();
    FitData::for_dataset(&generate_dataset(&rho, n_steps, None, None).unwrap()).unwrap()
}

fn shifted(p: &NdoParams, k: usize, h: f64) -> NdoParams {
    let mut x = p.to_vec();
    x[k] += h;
    NdoParams::from_vec(p.dim(), p.hidden(), p.ancilla(), &x).unwrap()
}

/// Ten configurations with d in {4, 6, 8}.
fn configs() -> Vec<(usize, usize, usize, u64)> {
    (0..10u64)
        .map(|i| (1 + (i as usize % 3), 2 + (i as usize % 2), 2 + (i as usize / 5), i))
        .collect()
}

#[test]
fn cost_gradient_matches_finite_differences() {
    for (n_steps, m_h, m_a, seed) in configs() {
        let data = walk_data(n_steps, 0.3 * seed as f64);
        let p = init_params(2 * (n_steps + 1), m_h, m_a, 0.5, seed).unwrap();
        let g = grad_cost(&p, &data).unwrap();
        for (k, &gk) in g.iter().enumerate() {
            let fd = (cost(&shifted(&p, k, H), &data).unwrap() - cost(&shifted(&p, k, -H), &data).unwrap()) / (2.0 * H);
            assert!(rel_err(gk, fd) <= TOL, "seed {seed} k {k}: {gk} vs {fd}");
        }
    }
}

#[test]
fn rho_jacobian_matches_finite_differences() {
    for (n_steps, m_h, m_a, seed) in configs() {
        let d = 2 * (n_steps + 1);
        let p = init_params(d, m_h, m_a, 0.5, 100 + seed).unwrap();
        let j = rho_jacobian(&p);
        for k in 0..p.num_params() {
            let plus = density_matrix(&shifted(&p, k, H));
            let minus = density_matrix(&shifted(&p, k, -H));
            for a in 0..d {
                for b in 0..d {
                    let fd = (plus.matrix()[(a, b)] - minus.matrix()[(a, b)]) / (2.0 * H);
                    let an = j[(a * d + b, k)];
                    assert!(rel_err(an.re, fd.re) <= TOL, "seed {seed} k {k} ({a},{b}) re");
                    assert!(rel_err(an.im, fd.im) <= TOL, "seed {seed} k {k} ({a},{b}) im");
                }
            }
        }
    }
}

#[test]
fn maxlik_gradient_matches_finite_differences() {
    for seed in 0..5u64 {
        let n_steps = 1 + seed as usize % 3;
        let data = walk_data(n_steps, 0.7 * seed as f64);
        let p = CholeskyParams::random(2 * (n_steps + 1), seed);
        let g = maxlik::gradient(&p, &data).unwrap();
        for k in 0..p.num_params() {
            let at = |h: f64| {
                let mut t = p.t_params.clone();
                t[k] += h;
                maxlik::cost(&CholeskyParams::new(p.dim, t).unwrap(), &data).unwrap()
            };
            let fd = (at(H) - at(-H)) / (2.0 * H);
            assert!(rel_err(g[k], fd) <= TOL, "seed {seed} k {k}: {} vs {fd}", g[k]);
        }
    }
}
