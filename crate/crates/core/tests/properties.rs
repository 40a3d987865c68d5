//! Property tests of the invariants every model must respect.

use std::f64::consts::TAU;
use std::ops::ControlFlow;

use carlfel::bloch::{bloch_invariant, evolve_bloch, BlochState, Variant};
use carlfel::classical::{bunching, evolve_classical, init_cold_beam, ClassicalState, Placement};
use carlfel::harness::{ModelKind, RunConfig};
use carlfel::integrate::IntegratorConfig;
use carlfel::quantum::{
    self, psi_density_lab, quantum_invariant, rhs_cn, rhs_density, GuardPolicy, Ladder, LadderState,
    MomentumWavefunction,
};
use carlfel::scaling::ScaledParams;
use carlfel::series::{resample, TimeSeriesRecord};
use carlfel::wigner::wigner_from_state;
use num_complex::Complex64;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Normalized wavefunction on a ladder of 3..=7 levels around 0.
fn wavefunction() -> impl Strategy<Value = MomentumWavefunction> {
    (1i64..4, 1i64..4, complex(), 0.0f64..5.0).prop_flat_map(|(below, above, field, tau)| {
        let len = (below + above + 1) as usize;
        prop::collection::vec(complex(), len).prop_map(move |mut c| {
            let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-3);
            c.iter_mut().for_each(|z| *z /= norm);
            if c.iter().all(|z| z.norm_sqr() == 0.0) {
                c[0] = Complex64::new(1.0, 0.0);
            }
            MomentumWavefunction {
                ladder: Ladder::new(-below, above).unwrap(),
                c,
                tau,
                field_abar: field * 0.5,
            }
        })
    })
}

fn params() -> impl Strategy<Value = ScaledParams> {
    (0.05f64..20.0, -3.0f64..3.0).prop_map(|(r, d)| ScaledParams::new(r, d).unwrap())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn bunching_never_exceeds_one(theta in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        prop_assert!(bunching(&theta).unwrap().norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn classical_invariant_is_conserved(
        p in params(), n in 8usize..96, seed in any::<u64>(), a in 1e-3f64..0.5
    ) {
        let init = init_cold_beam(n, Complex64::new(a, 0.0), Placement::SeededRandom { seed }).unwrap();
        let cfg = IntegratorConfig::rk45(1e-11, 1e-13, 0.1);
        let inv = |s: &ClassicalState| s.field_a.norm_sqr() + s.mean_pbar();
        let start = inv(&init);
        let mut worst = 0.0f64;
        evolve_classical(&init, &p, &cfg, 8.0, |s| {
            worst = worst.max((inv(s) - start).abs());
            ControlFlow::Continue(())
        }).unwrap();
        prop_assert!(worst < 1e-9, "drift {worst}");
    }

    #[test]
    fn seeded_runs_are_bit_identical(seed in any::<u64>(), p in params()) {
        let run = || {
            let init = init_cold_beam(40, Complex64::new(1e-2, 0.0), Placement::SeededRandom { seed }).unwrap();
            evolve_classical(&init, &p, &IntegratorConfig::rk45(1e-9, 1e-12, 0.5), 4.0, |_| ControlFlow::Continue(())).unwrap().0
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn zero_detuning_is_universal(r1 in 0.05f64..50.0, r2 in 0.05f64..50.0) {
        let traj = |rho: f64| {
            let p = ScaledParams::new(rho, 0.0).unwrap();
            let init = init_cold_beam(64, Complex64::new(1e-4, 0.0), Placement::Equispaced).unwrap();
            let mut out = Vec::new();
            evolve_classical(&init, &p, &IntegratorConfig::rk4(0.05, 4), 6.0, |s| {
                out.push(s.field_a.norm_sqr());
                ControlFlow::Continue(())
            }).unwrap();
            out
        };
        prop_assert_eq!(traj(r1), traj(r2));
    }

    #[test]
    fn density_equation_is_induced_by_amplitude_equation(s in wavefunction(), p in params()) {
        let d = rhs_cn(&s, &p).unwrap();
        let rho = s.to_density();
        let dr = rhs_density(&rho, &p).unwrap();
        let l = s.c.len();
        for m in 0..l {
            for n in 0..l {
                let induced = d.dc[m].conj() * s.c[n] + s.c[m].conj() * d.dc[n];
                prop_assert!((induced - dr.drho[(m, n)]).norm() < 1e-12 * (1.0 + 1.0 / p.rho_bar));
            }
        }
        prop_assert!((d.dfield - dr.dfield).norm() < 1e-12);
    }

    #[test]
    fn quantum_runs_conserve_norm_and_invariant(s in wavefunction(), p in params()) {
        let s = MomentumWavefunction { tau: 0.0, ..s };
        let guard = GuardPolicy { edge_limit: 1.0, ..GuardPolicy::default() };
        let cfg = IntegratorConfig::rk45(1e-11, 1e-13, 0.1);
        let start = quantum_invariant(&s, &p);
        let mut worst = (0.0f64, 0.0f64);
        quantum::evolve(&s, &p, &cfg, 5.0, &guard, |x| {
            let norm: f64 = x.populations().iter().sum();
            worst.0 = worst.0.max((norm - 1.0).abs());
            worst.1 = worst.1.max((quantum_invariant(x, &p) - start).abs());
            ControlFlow::Continue(())
        }).unwrap();
        prop_assert!(worst.0 < 1e-8 && worst.1 < 1e-8, "{worst:?}");
    }

    #[test]
    fn mixed_states_stay_hermitian_and_positive(a in wavefunction(), w in 0.0f64..1.0, p in params()) {
        let mut b = a.clone();
        b.c.rotate_left(1);
        let mut rho = a.to_density();
        rho.rho = rho.rho.scale(w) + b.to_density().rho.scale(1.0 - w);
        rho.tau = 0.0;
        let guard = GuardPolicy { edge_limit: 1.0, ..GuardPolicy::default() };
        let run = quantum::evolve(&rho, &p, &IntegratorConfig::rk45(1e-11, 1e-13, 0.5), 4.0, &guard, |_| ControlFlow::Continue(())).unwrap();
        prop_assert!(run.state.hermiticity_error() < 1e-12);
        prop_assert!(run.state.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn wigner_marginal_is_position_density(s in wavefunction(), p in params()) {
        let m = 4 * s.ladder.span() + 1;
        let w = wigner_from_state(&s, &p, m).unwrap();
        let psi = psi_density_lab(&s, &p, m).unwrap();
        for (a, b) in w.marginals().theta_density.iter().zip(&psi) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        prop_assert!((w.invariant() - quantum_invariant(&s, &p)).abs() < 1e-12);
        let integral: f64 = psi.iter().sum::<f64>() * TAU / m as f64;
        prop_assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bloch_sphere_and_invariant_at_resonance(
        phi in 0.0f64..TAU, a in complex(), literal in any::<bool>()
    ) {
        let v = if literal { Variant::PaperLiteral } else { Variant::ConsistentReduction };
        let b = BlochState::from_angle(0, phi, a * 0.3);
        let start = bloch_invariant(&b, v);
        let mut worst = (0.0f64, 0.0f64);
        evolve_bloch(&b, v, &IntegratorConfig::rk45(1e-12, 1e-14, 0.1), 20.0, |x| {
            worst.0 = worst.0.max((x.s.norm_sqr() + x.d * x.d - 1.0).abs());
            worst.1 = worst.1.max((bloch_invariant(x, v) - start).abs());
            ControlFlow::Continue(())
        }).unwrap();
        prop_assert!(worst.0 < 1e-8 && worst.1 < 1e-8, "{worst:?}");
    }

    #[test]
    fn resampling_reproduces_cubics(c in prop::array::uniform4(-2.0f64..2.0), x in 0.0f64..9.0) {
        let f = |t: f64| ((c[3] * t + c[2]) * t + c[1]) * t + c[0];
        let tau: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let v: Vec<f64> = tau.iter().map(|&t| f(t)).collect();
        let got = resample(&tau, &v, &[x]).unwrap()[0];
        prop_assert!((got - f(x)).abs() < 1e-9 * (1.0 + f(x).abs()));
    }

    #[test]
    fn csv_lines_round_trip_exactly(vals in prop::array::uniform8(any::<f64>().prop_filter("finite", |v| v.is_finite()))) {
        let r = TimeSeriesRecord {
            tau: vals[0], re_a: vals[1], im_a: vals[2], abs_a2: vals[3],
            photons_per_particle: vals[4], mean_pbar: vals[5], norm: vals[6], invariant_value: vals[7],
        };
        let parsed: Vec<f64> = r.csv_line().split(',').map(|v| v.parse().unwrap()).collect();
        prop_assert_eq!(parsed, vals.to_vec());
    }

    #[test]
    fn run_configs_round_trip(
        model in prop::sample::select(ModelKind::ALL.to_vec()),
        rho in 0.01f64..100.0, delta in -5.0f64..5.0, tau in 0.0f64..500.0, seed in any::<u64>()
    ) {
        let mut cfg = RunConfig::new(model, rho, delta, tau);
        cfg.initial.placement = Placement::SeededRandom { seed };
        prop_assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}
