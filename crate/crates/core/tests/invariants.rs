//! Randomized invariants over channels, the network and the Cholesky baseline.

use proptest::prelude::*;
use qwtomo::maxlik::{rho_from_t, CholeskyParams};
use qwtomo::measurement::{all_bases, generate_dataset, measure_distribution};
use qwtomo::metrics::{fidelity, purity};
use qwtomo::ndo::{density_matrix, init_params, purification_oracle, NdoParams};
use qwtomo::state::DensityMatrix;
use qwtomo::walk::{evolve, DephasingMode, NoiseModel, WalkConfig};

const TOL: f64 = 1e-10;

fn assert_physical(rho: &DensityMatrix) {
    let p = rho.physicality();
    assert!(p.holds(TOL), "{p:?}");
}

fn noise_strategy() -> impl Strategy<Value = NoiseModel> {
    prop_oneof![
        Just(NoiseModel::None),
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| NoiseModel::KrausMixing {
            w_s: a * (1.0 - b),
            w_l: a * b
        }),
        (0.0..=std::f64::consts::PI).prop_map(|db| NoiseModel::Dephasing {
            delta_beta: db,
            mode: DephasingMode::Analytic
        }),
        (0.0..=std::f64::consts::PI, 1usize..20, any::<u64>()).prop_map(|(db, n, seed)| NoiseModel::Dephasing {
            delta_beta: db,
            mode: DephasingMode::MonteCarlo { n_samples: n, seed }
        }),
        (0.0..=1.0f64).prop_map(|p| NoiseModel::Depolarizing { p }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn walks_stay_physical(n in 0usize..6, angles_seed in any::<u64>(), noise in noise_strategy(), disordered in any::<bool>()) {
        let cfg = if disordered {
            WalkConfig::disordered(n, angles_seed, noise)
        } else {
            WalkConfig::hadamard(n, noise)
        };
        let rho = evolve(&cfg).unwrap();
        assert_physical(&rho);
        for b in all_bases(n) {
            let probs = measure_distribution(&rho, &b).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn network_states_are_physical(d in 2usize..9, m_h in 0usize..5, m_a in 0usize..5, scale in 0.0..3.0f64, seed in any::<u64>()) {
        assert_physical(&density_matrix(&init_params(d, m_h, m_a, scale, seed).unwrap()));
    }

    #[test]
    fn closed_form_matches_purification(d in 2usize..7, m_h in 1usize..4, m_a in 1usize..5, seed in any::<u64>()) {
        let p = init_params(d, m_h, m_a, 1.0, seed).unwrap();
        let a = density_matrix(&p);
        let b = purification_oracle(&p).unwrap();
        let diff = (a.matrix() - b.matrix()).camax();
        prop_assert!(diff <= 1e-10, "{}", diff);
    }

    #[test]
    fn flattening_round_trips(d in 1usize..6, m_h in 0usize..4, m_a in 0usize..4, seed in any::<u64>()) {
        let p = init_params(d, m_h, m_a, 1.0, seed).unwrap();
        let q = NdoParams::from_vec(d, m_h, m_a, &p.to_vec()).unwrap();
        prop_assert_eq!(p.to_vec(), q.to_vec());
        let r = NdoParams::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(p.to_vec(), r.to_vec());
    }

    #[test]
    fn cholesky_states_are_physical_and_scale_invariant(d in 1usize..9, seed in any::<u64>(), s in 0.1..10.0f64) {
        let p = CholeskyParams::random(d, seed);
        let rho = rho_from_t(&p).unwrap();
        assert_physical(&rho);
        let scaled = CholeskyParams::new(d, p.t_params.iter().map(|x| x * s).collect()).unwrap();
        let diff = (rho_from_t(&scaled).unwrap().matrix() - rho.matrix()).camax();
        prop_assert!(diff <= 1e-14, "{}", diff);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(d in 2usize..7, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = rho_from_t(&CholeskyParams::random(d, s1)).unwrap();
        let b = density_matrix(&init_params(d, 2, 2, 1.0, s2).unwrap());
        let f_ab = fidelity(&a, &b).unwrap();
        let f_ba = fidelity(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&f_ab));
        prop_assert!((f_ab - f_ba).abs() < 1e-8, "{} {}", f_ab, f_ba);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-8);
        let pa = purity(&a);
        prop_assert!(pa <= 1.0 + 1e-12 && pa >= 1.0 / d as f64 - 1e-12);
    }

    #[test]
    fn shot_datasets_are_normalized(n in 0usize..4, shots in 1u64..10_000, seed in any::<u64>()) {
        let rho = evolve(&WalkConfig::hadamard(n, NoiseModel::None)).unwrap();
        let ds = generate_dataset(&rho, n, Some(shots), Some(seed)).unwrap();
        for e in ds.entries() {
            prop_assert!((e.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for p in &e.probs {
                let counts = p * shots as f64;
                prop_assert!((counts - counts.round()).abs() < 1e-6);
            }
        }
    }
}
