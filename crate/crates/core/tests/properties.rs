//! Cross-module invariants on randomly drawn stable systems.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use turnpike_core::lq::{self, LqProblem};
use turnpike_core::operators::semigroup;
use turnpike_core::riccati::{closed_loop_generator, solve_are, solve_dre};
use turnpike_core::scenarios::{random_stable, ExperimentConfig};
use turnpike_core::stationary::{feasible_directions, solve_stationary, stationary_cost};
use turnpike_core::SolverChoice;

fn system(seed: u64) -> turnpike_core::LtiSystem {
    random_stable(3, 2, seed, 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_composes(seed in 0u64..1000, s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let sys = system(seed);
        let lhs = semigroup(&sys, s + t).unwrap();
        let rhs = semigroup(&sys, s).unwrap() * semigroup(&sys, t).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn are_solution_is_stabilizing(seed in 0u64..1000) {
        let sys = system(seed);
        let are = solve_are(&sys).unwrap();
        prop_assert!(are.residual <= 1e-10);
        prop_assert!((&are.p - are.p.transpose()).norm() <= 1e-12 * are.p.norm());
        let (_, lambda) = closed_loop_generator(&sys, &are);
        prop_assert!(lambda > 0.0);
        // x^T P x is the optimal infinite-horizon cost, so P >= 0
        prop_assert!(are.p.clone().symmetric_eigen().eigenvalues.min() >= -1e-12);
    }

    #[test]
    fn steady_state_beats_feasible_neighbours(
        seed in 0u64..1000,
        z in prop::collection::vec(-2.0..2.0f64, 3),
        coeffs in prop::collection::vec(-1.0..1.0f64, 5),
    ) {
        let sys = system(seed);
        let z = DVector::from_vec(z);
        let stat = solve_stationary(&sys, &z).unwrap();
        prop_assert!(stat.relative_residual(&sys, &z) <= 1e-10);
        let dirs = feasible_directions(&sys);
        let w = &dirs * DVector::from_iterator(dirs.ncols(), coeffs.iter().copied().cycle().take(dirs.ncols()));
        let (dx, du) = (w.rows(0, 3).into_owned(), w.rows(3, 2).into_owned());
        let base = stationary_cost(&sys, &z, &stat.x_bar, &stat.u_bar);
        let moved = stationary_cost(&sys, &z, &(&stat.x_bar + dx), &(&stat.u_bar + du));
        prop_assert!(moved >= base - 1e-12 * (1.0 + base));
    }

    #[test]
    fn dre_decreases_towards_are_from_above(seed in 0u64..1000) {
        // Starting above P, the backward Riccati flow stays above P and converges to it.
        let sys = system(seed);
        let are = solve_are(&sys).unwrap();
        let p0 = &are.p + DMatrix::identity(3, 3);
        let dre = solve_dre(&sys, 10.0, &p0, 2000).unwrap();
        let (_, lambda) = closed_loop_generator(&sys, &are);
        let gaps: Vec<f64> = dre.p_samples.iter().map(|p| (p - &are.p).norm()).collect();
        // samples run forward in time, so index 0 is furthest from the terminal
        // condition; there the gap has contracted at the closed-loop rate
        prop_assert!(gaps[0] <= gaps[1000] * (-lambda * 5.0).exp());
        for p in &dre.p_samples {
            prop_assert!((p - &are.p).symmetric_eigen().eigenvalues.min() >= -1e-10);
        }
    }
}

#[test]
fn both_finite_horizon_solvers_agree() {
    for seed in [3, 11, 42] {
        let sys = system(seed);
        let prob = LqProblem::tracking(
            sys,
            4.0,
            DVector::from_vec(vec![1.0, -0.5, 0.25]),
            DVector::from_vec(vec![0.5, 0.0, -1.0]),
            1e-3,
        )
        .unwrap();
        let a = lq::solve(&prob, SolverChoice::Transcription).unwrap();
        let b = lq::solve(&prob, SolverChoice::Sweep).unwrap();
        let gap = a.x.iter().zip(&b.x).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-5, "seed {seed}: state gap {gap:e}");
        let (ja, jb) = (lq::cost(&prob, &a).unwrap(), lq::cost(&prob, &b).unwrap());
        assert!((ja - jb).abs() <= 1e-6 * (1.0 + ja.abs()), "seed {seed}: {ja} vs {jb}");
    }
}

#[test]
fn resolved_configs_survive_a_json_round_trip() {
    for name in ["scalar", "random_stable", "heat_1d"] {
        let cfg = ExperimentConfig::for_scenario(name).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg, "{name}");
    }
}
