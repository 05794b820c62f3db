use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tclab::pathsim::{self, McConfig, MIN_PATHS};
use tclab::ChainModel;

fn c5() -> ChainModel {
    ChainModel::from_rows(
        &[
            vec![-3.0, 1.0, 0.5, 0.0, 0.5],
            vec![0.5, -2.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.5, -2.5, 1.5, 0.0],
            vec![0.0, 0.0, 1.0, -2.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.5, -1.5],
        ],
        &[1.0, 2.0, 0.5, 1.5, 1.0],
    )
    .unwrap()
}

fn partial() -> DVector<f64> {
    DVector::from_column_slice(&[1.0, 0.0, 2.0, 0.0, 0.5])
}

fn cfg(paths: usize, seed: u64) -> McConfig {
    McConfig {
        paths,
        seed,
        workers: 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_is_a_right_continuous_generalized_inverse(seed in any::<u64>(), x0 in 0usize..5, ts in prop::collection::vec(0.0..4.0f64, 1..12)) {
        let model = c5();
        let mu = partial();
        let a_density = mu.component_div(model.ref_measure());
        let path = pathsim::sample_path_seeded(&model, x0, 1e6, seed);
        prop_assert!(path.killed);
        let a = pathsim::pcaf(&path, &a_density);
        let mut sorted = ts.clone();
        sorted.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for t in sorted {
            let (tau, state) = pathsim::inverse_pcaf_state(&path, &a, t);
            prop_assert!(tau >= prev);
            prev = tau;
            if t >= a.total() {
                prop_assert!(tau.is_infinite());
                prop_assert!(state.is_none());
                continue;
            }
            // A(tau_t) = t, A stays at most t before tau_t and exceeds it right after.
            prop_assert!((a.at(&path, tau) - t).abs() <= 1e-9 * (1.0 + t));
            prop_assert!(a.at(&path, tau * (1.0 - 1e-9)) <= t + 1e-9);
            prop_assert!(a.at(&path, tau + 1e-6) > t);
            // The time-changed process lives on the support of mu.
            let x = state.unwrap();
            prop_assert!(mu[x] > 0.0);
            prop_assert_eq!(path.state_at(tau), Some(x));
        }
    }

    #[test]
    fn paths_are_well_formed(seed in any::<u64>(), x0 in 0usize..5) {
        let path = pathsim::sample_path_seeded(&c5(), x0, 1e6, seed);
        prop_assert_eq!(path.states[0], x0);
        prop_assert_eq!(path.jump_times.len(), path.states.len() + 1);
        prop_assert!(path.jump_times.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(path.states.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(path.state_at(path.lifetime()), None);
    }
}

#[test]
fn lifetime_matches_green_potential_of_one() {
    let model = c5();
    let q = model.generator().clone();
    let zeta = (-q).lu().solve(&DVector::from_element(5, 1.0)).unwrap();
    for x in 0..5 {
        let e = pathsim::mc_lifetime(&model, x, &cfg(50_000, 11)).unwrap();
        assert!(
            e.z_score(zeta[x]).abs() <= 4.0,
            "x={x}: {e:?} vs {}",
            zeta[x]
        );
    }
}

#[test]
fn transition_matches_matrix_exponential() {
    let model = c5();
    let u = DVector::from_column_slice(&[0.3, -1.0, 0.8, 0.5, 0.2]);
    let t = 0.7;
    // Independent exponential by scaling and squaring with a Taylor core.
    let a: DMatrix<f64> = model.generator() * (t / 1024.0);
    let mut e = DMatrix::identity(5, 5);
    let mut term = DMatrix::identity(5, 5);
    for k in 1..20 {
        term = &term * &a / k as f64;
        e += &term;
    }
    for _ in 0..10 {
        e = &e * &e;
    }
    let exact = e * &u;
    for x in [0, 3] {
        let est = pathsim::mc_transition(&model, t, &u, x, &cfg(50_000, 5)).unwrap();
        assert!(
            est.z_score(exact[x]).abs() <= 4.0,
            "x={x}: {est:?} vs {}",
            exact[x]
        );
    }
}

#[test]
fn estimates_are_reproducible_for_a_seed() {
    let model = c5();
    let u = DVector::from_column_slice(&[0.9, 0.4, 0.7, 0.1, 0.6]);
    let a = pathsim::mc_semigroup(&model, &partial(), 0.8, &u, 1, &cfg(5_000, 3)).unwrap();
    let b = pathsim::mc_semigroup(&model, &partial(), 0.8, &u, 1, &cfg(5_000, 3)).unwrap();
    let c = pathsim::mc_semigroup(&model, &partial(), 0.8, &u, 1, &cfg(5_000, 4)).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    assert_ne!(a.mean, c.mean);
}

#[test]
fn too_few_paths_are_rejected() {
    let model = c5();
    let u = DVector::from_element(5, 1.0);
    assert!(pathsim::mc_semigroup(&model, &partial(), 1.0, &u, 0, &cfg(MIN_PATHS - 1, 0)).is_err());
    assert!(pathsim::mc_semigroup(&model, &partial(), 1.0, &u, 0, &cfg(MIN_PATHS, 0)).is_ok());
}

#[test]
fn function_vanishing_on_the_support_gives_zero_estimates() {
    let model = c5();
    let u = DVector::from_column_slice(&[0.0, 2.0, 0.0, -1.0, 0.0]);
    let s = pathsim::mc_semigroup(&model, &partial(), 0.5, &u, 1, &cfg(2_000, 9)).unwrap();
    assert_eq!((s.mean, s.stderr), (0.0, 0.0));
    let r = pathsim::mc_resolvent(&model, &partial(), 1.0, &u, 3, &cfg(2_000, 9)).unwrap();
    assert_eq!((r.clock.mean, r.pcaf.mean), (0.0, 0.0));
}
