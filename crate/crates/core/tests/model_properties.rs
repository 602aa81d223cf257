mod common;

use common::{dense_operators, normal_vector, random_system};
use dualsmooth::{Rng, Supervector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noise_round_trip(seed in any::<u64>(), horizon in 0usize..8, n in 1usize..4, m in 1usize..3) {
        let mut rng = Rng::seed_from_u64(seed);
        let sys = random_system(horizon, n, m, &mut rng);
        let w = Supervector::from_flat(normal_vector((horizon + 1) * n, &mut rng), n).unwrap();
        let z = Supervector::from_flat(normal_vector((horizon + 1) * m, &mut rng), m).unwrap();
        let x = sys.states_from_noise(&w).unwrap();
        let (w2, _) = sys.residuals(&x, &z).unwrap();
        prop_assert!((w2.as_flat() - w.as_flat()).amax() <= 1e-12 * (1.0 + x.as_flat().amax()));
    }

    #[test]
    fn forward_substitution_matches_dense_solve(seed in any::<u64>(), horizon in 0usize..8, n in 1usize..4) {
        let mut rng = Rng::seed_from_u64(seed);
        let sys = random_system(horizon, n, 1, &mut rng);
        let (a, _) = dense_operators(&sys);
        let w = normal_vector((horizon + 1) * n, &mut rng);
        let dense = a.lu().solve(&w).unwrap();
        prop_assert!((sys.solve_dynamics_flat(&w) - dense).amax() <= 1e-10);
    }

    #[test]
    fn adjoint_states_are_dual_feasible(seed in any::<u64>(), horizon in 0usize..8, n in 1usize..4, m in 1usize..3) {
        let mut rng = Rng::seed_from_u64(seed);
        let sys = random_system(horizon, n, m, &mut rng);
        let (a, h) = dense_operators(&sys);
        let u = normal_vector((horizon + 1) * m, &mut rng);
        let y = sys.adjoint_states_flat(&u);
        let r = a.transpose() * &y - h.transpose() * &u;
        prop_assert!(r.norm() <= 1e-12 * (1.0 + u.norm()) * (1.0 + y.norm()));
    }

    #[test]
    fn flat_operators_match_dense(seed in any::<u64>(), horizon in 0usize..6, n in 1usize..4, m in 1usize..3) {
        let mut rng = Rng::seed_from_u64(seed);
        let sys = random_system(horizon, n, m, &mut rng);
        let (a, h) = dense_operators(&sys);
        let x = normal_vector((horizon + 1) * n, &mut rng);
        let u = normal_vector((horizon + 1) * m, &mut rng);
        prop_assert!((sys.apply_dynamics_flat(&x) - &a * &x).amax() <= 1e-12);
        prop_assert!((sys.apply_dynamics_transpose_flat(&x) - a.transpose() * &x).amax() <= 1e-12);
        prop_assert!((sys.apply_measurement_flat(&x) - &h * &x).amax() <= 1e-12);
        prop_assert!((sys.apply_measurement_transpose_flat(&u) - h.transpose() * &u).amax() <= 1e-12);
        prop_assert_eq!(sys.dynamics_supermatrix().matrix, a);
        prop_assert_eq!(sys.measurement_supermatrix().matrix, h);
    }
}
