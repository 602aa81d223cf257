mod common;

use common::{block_diag, dense_operators, fin, normal_vector, random_monitoring, random_pd, random_system};
use dualsmooth::solver::{
    largest_singular_value, operator_norm_estimate, reconstruct_primal_from_dual, solve_dual_and_reconstruct,
    solve_first_order, solve_quadratic_direct, StackedMap,
};
use dualsmooth::{
    CertificateStatus, Penalty, PrimalProblem, Rng, SeparablePenalty, SolverOptions, StopReason, Supervector,
};
use nalgebra::{DMatrix, DVector};

struct Gaussian {
    problem: PrimalProblem,
    m: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
}

fn gaussian_instance(seed: u64, horizon: usize, n: usize, m: usize) -> Gaussian {
    let mut rng = Rng::seed_from_u64(seed);
    let sys = random_system(horizon, n, m, &mut rng);
    let mm: Vec<_> = (0..=horizon).map(|_| random_pd(n, &mut rng)).collect();
    let rr: Vec<_> = (0..=horizon).map(|_| random_pd(m, &mut rng)).collect();
    let f = SeparablePenalty::new(mm.iter().map(|q| Penalty::quadratic(q.clone()).unwrap()).collect()).unwrap();
    let g = SeparablePenalty::new(rr.iter().map(|q| Penalty::quadratic(q.clone()).unwrap()).collect()).unwrap();
    let z = Supervector::from_flat(normal_vector((horizon + 1) * m, &mut rng), m).unwrap();
    Gaussian {
        problem: PrimalProblem::new(sys, f, g, z).unwrap(),
        m: mm,
        r: rr,
    }
}

/// Normal equations `(A'MA + H'RH) x = H'R z` solved densely.
fn dense_gaussian_oracle(g: &Gaussian) -> DVector<f64> {
    let (a, h) = dense_operators(g.problem.system());
    let mm = block_diag(&g.m);
    let rr = block_diag(&g.r);
    let lhs = a.transpose() * &mm * &a + h.transpose() * &rr * &h;
    let rhs = h.transpose() * &rr * g.problem.measurements().as_flat();
    lhs.cholesky().unwrap().solve(&rhs)
}

fn tight() -> SolverOptions {
    SolverOptions {
        max_iters: 200_000,
        ..SolverOptions::default()
    }
}

#[test]
fn first_order_matches_dense_oracle_on_gaussian_instances() {
    for seed in 0..4 {
        let g = gaussian_instance(seed, 6, 2, 1);
        let oracle = dense_gaussian_oracle(&g);
        let sol = solve_first_order(&g.problem, &tight()).unwrap();
        assert!(sol.converged, "seed {seed}: {:?}", sol.stop_reason);
        let err = (sol.x.as_flat() - &oracle).norm();
        assert!(err <= 1e-6 * (1.0 + oracle.norm()), "seed {seed}: {err}");
    }
}

#[test]
fn direct_matches_dense_oracle_and_first_order() {
    let g = gaussian_instance(21, 12, 3, 2);
    let oracle = dense_gaussian_oracle(&g);
    let direct = solve_quadratic_direct(&g.problem).unwrap();
    assert_eq!(direct.stop_reason, StopReason::Direct);
    assert!((direct.x.as_flat() - &oracle).amax() <= 1e-9 * (1.0 + oracle.amax()));
    assert!(direct.gap.abs() <= 1e-8 * (1.0 + fin(direct.primal_value).abs()));
    let first = solve_first_order(&g.problem, &tight()).unwrap();
    assert!((first.x.as_flat() - direct.x.as_flat()).norm() <= 1e-6 * (1.0 + oracle.norm()));
}

#[test]
fn converged_solutions_certify_themselves() {
    let mut rng = Rng::seed_from_u64(3);
    let sys = random_system(5, 2, 2, &mut rng);
    let f = SeparablePenalty::uniform(Penalty::squared_norm(2).unwrap(), 6).unwrap();
    let g = SeparablePenalty::uniform(random_monitoring(2, &mut rng), 6).unwrap();
    let z = Supervector::from_flat(normal_vector(12, &mut rng), 2).unwrap();
    let Ok(p) = PrimalProblem::new(sys, f, g, z) else { panic!("instance") };
    assert_ne!(p.certify_strong_duality().status, CertificateStatus::Unknown);
    let sol = solve_first_order(&p, &tight()).unwrap();
    assert!(sol.converged, "{:?}", sol.stop_reason);
    let primal = fin(p.objective(&sol.x).unwrap());
    let (dual, _) = p.dual().objective(&sol.u).unwrap();
    let gap = primal - fin(dual);
    assert!(gap >= -1e-10 * (1.0 + primal.abs()));
    assert!(gap <= 1e-8 * (1.0 + primal.abs()), "gap {gap}");
    assert!((gap - sol.gap).abs() <= 1e-12 * (1.0 + primal.abs()));
}

#[test]
fn solver_is_bitwise_deterministic() {
    let g = gaussian_instance(8, 10, 2, 1);
    let opts = SolverOptions {
        record_history: true,
        ..SolverOptions::default()
    };
    let a = solve_first_order(&g.problem, &opts).unwrap();
    let b = solve_first_order(&g.problem, &opts).unwrap();
    let bits = |s: &Supervector| s.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.x), bits(&b.x));
    assert_eq!(bits(&a.u), bits(&b.u));
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.history, b.history);
}

#[test]
fn recorded_gap_trends_down() {
    let g = gaussian_instance(13, 10, 2, 2);
    let opts = SolverOptions {
        record_history: true,
        ..tight()
    };
    let sol = solve_first_order(&g.problem, &opts).unwrap();
    let gaps: Vec<f64> = sol.history.iter().map(|r| r.gap.abs()).filter(|g| g.is_finite()).collect();
    assert!(gaps.len() >= 4);
    // Windowed maxima must decrease across the run; single checks may rise.
    let q = gaps.len() / 4;
    let window_max = |w: &[f64]| w.iter().cloned().fold(0.0f64, f64::max);
    assert!(window_max(&gaps[3 * q..]) < window_max(&gaps[..q]));
    assert!(gaps[gaps.len() - 1] < gaps[0]);
}

#[test]
fn reconstruction_matches_primal_solution() {
    for seed in 30..33 {
        let g = gaussian_instance(seed, 8, 2, 1);
        let est = solve_dual_and_reconstruct(&g.problem, &tight()).unwrap();
        let sol = &est.solution;
        let err = (est.reconstruction.x.as_flat() - sol.x.as_flat()).norm();
        assert!(err <= 1e-6 * (1.0 + sol.x.norm()), "seed {seed}: {err}");
        let again = reconstruct_primal_from_dual(&g.problem.dual(), &sol.u).unwrap();
        assert_eq!(again.x, est.reconstruction.x);
    }
}

#[test]
fn operator_norm_of_simple_maps() {
    let id = DMatrix::<f64>::identity(5, 5);
    assert!((operator_norm_estimate(&id) - 1.01).abs() <= 1e-9);
    let d3 = DMatrix::<f64>::identity(4, 4) * 3.0;
    assert!((operator_norm_estimate(&d3) - 3.03).abs() <= 1e-9);
}

#[test]
fn stacked_operator_norm_matches_dense_svd() {
    let mut rng = Rng::seed_from_u64(17);
    let sys = random_system(7, 3, 2, &mut rng);
    let (a, h) = dense_operators(&sys);
    let mut k = DMatrix::zeros(a.nrows() + h.nrows(), a.ncols());
    k.view_mut((0, 0), a.shape()).copy_from(&a);
    k.view_mut((a.nrows(), 0), h.shape()).copy_from(&h);
    let exact = k.svd(false, false).singular_values.max();
    let est = largest_singular_value(&StackedMap { system: &sys });
    assert!((est - exact).abs() <= 1e-6 * exact, "{est} vs {exact}");
}
