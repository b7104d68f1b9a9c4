use parareal_core::analysis::{kappa_e, sup_over_grid, SpectralGrid};
use parareal_core::fem::{l2_distance, LinearCase, Problem, SourceForm};
use parareal_core::parareal::{empirical_factor, fine_reference, run, Coarse, InitMode, PararealConfig};
use parareal_core::propagators::{catalog_two_step, ButcherTableau};
use proptest::prelude::*;

#[test]
fn manufactured_reference_tracks_exact_solution() {
    let prob = Problem::linear(LinearCase::Ii, SourceForm::Manufactured, 1000).unwrap();
    let config = PararealConfig { j: 50, ..PararealConfig::default() };
    let (reference, _) = fine_reference(&config, &ButcherTableau::radau_iia_3(), &prob).unwrap();
    let exact = prob.exact(10.0).unwrap();
    let gap = l2_distance(reference.last().unwrap(), &exact, &prob.sys).unwrap();
    assert!(gap <= 2e-6, "{gap}");
}

#[test]
fn two_step_contraction_stays_under_kappa_bound() {
    let prob = Problem::linear(LinearCase::I, SourceForm::Printed, 100).unwrap();
    let config = PararealConfig { j: 50, ..PararealConfig::default() };
    let nc = config.n_coarse().unwrap() as u32;
    let fp = ButcherTableau::radau_iia_3();
    let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
    let grid = SpectralGrid::default_grid();
    for name in ["bdf2", "o2cp"] {
        let ts = catalog_two_step(name).unwrap();
        let bound = sup_over_grid(|s| kappa_e(&ts, s, nc), &grid).unwrap().sup;
        let out = run(&config, &Coarse::from_name(name).unwrap(), &fp, &prob, &reference).unwrap();
        let e = &out.trace.errors;
        for k in 1..e.len() - 1 {
            if e[k + 1] < 1e-10 {
                break;
            }
            let ratio = e[k + 1] / e[k];
            assert!(ratio <= 1.5 * bound, "{name} k={k}: {ratio} vs {bound}");
        }
    }
}

#[test]
fn coarse_sweep_start_also_converges() {
    let prob = Problem::linear(LinearCase::I, SourceForm::Printed, 50).unwrap();
    let config = PararealConfig { j: 50, init: InitMode::CoarseSweep, ..PararealConfig::default() };
    let fp = ButcherTableau::radau_iia_3();
    let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
    for name in ["sdirk2", "bdf2", "ocp", "o2cp"] {
        let out = run(&config, &Coarse::from_name(name).unwrap(), &fp, &prob, &reference).unwrap();
        assert!(out.trace.iterations.is_some(), "{name}");
    }
}

#[test]
fn extrapolated_variant_matches_implicit_on_linear_problems() {
    // Without a reaction term the extrapolated step only differs through the loads.
    let prob = Problem::linear(LinearCase::Iii, SourceForm::Printed, 30).unwrap();
    let config = PararealConfig { j: 20, ..PararealConfig::default() };
    let fp = ButcherTableau::radau_iia_3();
    let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
    let out = run(&config, &Coarse::from_name("o2cp-e").unwrap(), &fp, &prob, &reference).unwrap();
    assert!(out.trace.finite_gaps.iter().all(|g| *g <= 1e-11));
    assert!(out.trace.iterations.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_prefix_grows_every_iteration(
        seed in any::<u64>(),
        half_j in 1usize..4,
        cp in prop::sample::select(vec!["sdirk2", "bdf2", "ocp", "o2cp"]),
    ) {
        let prob = Problem::linear(LinearCase::Iii, SourceForm::Printed, 12).unwrap();
        let j = 2 * half_j;
        let config = PararealConfig {
            t_final: 0.12 * j as f64,
            j,
            dt: 0.02,
            k_max: 8,
            tol: 0.0,
            seed,
            init: InitMode::Random,
        };
        let prob = prob.with_t_final(config.t_final);
        let nc = config.n_coarse().unwrap();
        let fp = ButcherTableau::radau_iia_2();
        let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
        let out = run(&config, &Coarse::from_name(cp).unwrap(), &fp, &prob, &reference).unwrap();
        prop_assert!(out.trace.finite_gaps.iter().all(|g| *g <= 1e-11));
        // After N_c iterations nothing is left to correct.
        prop_assert!(out.trace.errors[nc] <= 1e-11);
    }

    #[test]
    fn errors_are_nonnegative_and_finite(seed in any::<u64>()) {
        let prob = Problem::semilinear(1.0, 10).unwrap().with_t_final(0.4);
        let config = PararealConfig { t_final: 0.4, j: 10, dt: 0.01, k_max: 5, tol: 1e-9, seed, init: InitMode::Random };
        let fp = ButcherTableau::radau_iia_3();
        let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
        for cp in ["o2cp", "o2cp-e", "ocp-e"] {
            let out = run(&config, &Coarse::from_name(cp).unwrap(), &fp, &prob, &reference).unwrap();
            prop_assert!(out.trace.errors.iter().all(|e| e.is_finite() && *e >= 0.0));
            prop_assert_eq!(out.lattice[0].clone(), prob.u0.clone());
        }
    }
}

#[test]
fn smaller_coarsening_contracts_faster_for_two_step_and_ocp() {
    let prob = Problem::linear(LinearCase::Ii, SourceForm::Printed, 100).unwrap();
    let fp = ButcherTableau::radau_iia_3();
    let factor = |j: usize, name: &str| {
        let config = PararealConfig { j, ..PararealConfig::default() };
        let (reference, _) = fine_reference(&config, &fp, &prob).unwrap();
        let out = run(&config, &Coarse::from_name(name).unwrap(), &fp, &prob, &reference).unwrap();
        empirical_factor(&out.trace).unwrap()
    };
    for name in ["bdf2", "ocp", "o2cp"] {
        let (g20, g50) = (factor(20, name), factor(50, name));
        assert!(g20 < g50, "{name}: {g20} vs {g50}");
    }
}
