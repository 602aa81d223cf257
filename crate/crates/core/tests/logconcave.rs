use dualsmooth::logconcave::penalty_from_mle;
use dualsmooth::penalty::numeric_conjugate_oracle;
use dualsmooth::sim::laplace_sample;
use dualsmooth::{exp_integral, fit_logconcave_mle, MleDensity, Rng};

fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// Directional derivative of `σ` by central differences.
fn directional(d: &MleDensity, h: &[f64]) -> f64 {
    let eps = 1e-6;
    let v = d.log_values();
    let plus: Vec<f64> = v.iter().zip(h).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = v.iter().zip(h).map(|(a, b)| a - eps * b).collect();
    (d.objective(&plus) - d.objective(&minus)) / (2.0 * eps)
}

#[test]
fn fitted_density_is_normalised_and_concave() {
    for seed in 0..5 {
        let d = fit_logconcave_mle(&normal_sample(200, seed)).unwrap();
        assert!((d.integral() - 1.0).abs() <= 1e-6);
        assert!(d.max_second_difference() <= 1e-8);
        let independent = exp_integral(d.knots(), d.log_values()).unwrap();
        assert!((independent - d.integral()).abs() <= 1e-14);
    }
}

#[test]
fn optimality_along_concave_directions() {
    for seed in 0..4 {
        let samples = if seed % 2 == 0 { normal_sample(150, seed) } else { laplace_sample(150, 1.0, seed).unwrap() };
        let d = fit_logconcave_mle(&samples).unwrap();
        let k = d.knots();
        // Affine directions are two-sided.
        let ones = vec![1.0; k.len()];
        assert!(directional(&d, &ones).abs() <= 1e-6);
        assert!(directional(&d, k).abs() <= 1e-6);
        // Concave hinges keep feasibility, so σ must not decrease along them.
        for &tau in k {
            let right: Vec<f64> = k.iter().map(|x| -(x - tau).max(0.0)).collect();
            let left: Vec<f64> = k.iter().map(|x| -(tau - x).max(0.0)).collect();
            assert!(directional(&d, &right) >= -1e-6, "seed {seed} right hinge at {tau}");
            assert!(directional(&d, &left) >= -1e-6, "seed {seed} left hinge at {tau}");
        }
    }
}

#[test]
fn likelihood_dominates_concave_perturbations() {
    let d = fit_logconcave_mle(&normal_sample(120, 99)).unwrap();
    let best = d.objective(d.log_values());
    let k = d.knots();
    let mut rng = Rng::seed_from_u64(4);
    for _ in 0..100 {
        let eps = 0.2 * rng.uniform();
        let (a, b, c) = (rng.standard_normal(), rng.standard_normal(), rng.uniform());
        let center = rng.uniform_range(k[0], k[k.len() - 1]);
        let v: Vec<f64> = d
            .log_values()
            .iter()
            .zip(k)
            .map(|(v, x)| v + eps * (a + b * x - c * (x - center).powi(2)))
            .collect();
        assert!(d.objective(&v) >= best - 1e-12);
    }
}

#[test]
fn fit_is_affine_equivariant() {
    let base = laplace_sample(80, 1.0, 12).unwrap();
    let d = fit_logconcave_mle(&base).unwrap();
    for &(a, b) in &[(2.0, 0.0), (0.5, 3.0), (-1.5, -1.0)] {
        let moved: Vec<f64> = base.iter().map(|x| a * x + b).collect();
        let e = fit_logconcave_mle(&moved).unwrap();
        for (j, &x) in d.knots().iter().enumerate() {
            let expected = d.log_values()[j] - f64::ln(f64::abs(a));
            assert!((e.log_density(a * x + b) - expected).abs() <= 1e-5, "a={a} b={b} knot {j}");
        }
    }
}

#[test]
fn mle_penalty_conjugate_matches_grid() {
    let d = fit_logconcave_mle(&laplace_sample(100, 1.0, 7).unwrap()).unwrap();
    let p = penalty_from_mle(&d).unwrap();
    let k = d.knots();
    let (lo, hi) = (k[0], k[k.len() - 1]);
    let slopes: Vec<f64> = k.windows(2).zip(d.log_values().windows(2)).map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0])).collect();
    let lip = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let h = (hi - lo) / 20_000.0;
    for i in 0..50 {
        let y = -3.0 + 6.0 * i as f64 / 49.0;
        let closed = p.conjugate_value(&[y]).unwrap().finite().unwrap();
        let grid = numeric_conjugate_oracle(&p, y, lo, hi, h).unwrap().value.finite().unwrap();
        assert!((closed - grid).abs() <= 2.0 * h * (1.0 + y.abs() + lip), "y = {y}");
    }
    let max_log = d.log_values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((p.conjugate_value(&[0.0]).unwrap().finite().unwrap() - max_log).abs() <= 1e-12);
}

#[test]
fn duplicated_samples_weight_knots() {
    let d = fit_logconcave_mle(&[0.0, 0.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
    assert_eq!(d.knots(), &[0.0, 1.0, 2.0]);
    assert_eq!(d.weights(), &[2.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0]);
    assert_eq!(d.sample_size(), 6);
    assert!((d.integral() - 1.0).abs() <= 1e-6);
}
