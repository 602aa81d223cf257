#![allow(dead_code)]

use dualsmooth::{ExtReal, LinearSystem, Penalty, Rng};
use nalgebra::{DMatrix, DVector};

pub fn fin(v: ExtReal) -> f64 {
    v.finite().unwrap_or(f64::NAN)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

pub fn normal_vector(n: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.standard_normal())
}

pub fn random_pd(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let b = normal_matrix(n, n, rng);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2
}

/// Spectral norm at most 1.
pub fn random_dynamics(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let f = normal_matrix(n, n, rng);
    let norm = f.clone().svd(false, false).singular_values.max();
    f / norm.max(1.0)
}

pub fn random_system(horizon: usize, n: usize, m: usize, rng: &mut Rng) -> LinearSystem {
    let f = (0..horizon).map(|_| random_dynamics(n, rng)).collect();
    let h = (0..=horizon).map(|_| normal_matrix(m, n, rng)).collect();
    LinearSystem::new(f, h).unwrap()
}

/// Dense `A` and `H` assembled independently of the library.
pub fn dense_operators(sys: &LinearSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let steps = sys.num_steps();
    let (n, m) = (sys.state_dim(), sys.meas_dim());
    let mut a = DMatrix::identity(steps * n, steps * n);
    for (t, f) in sys.dynamics().iter().enumerate() {
        a.view_mut(((t + 1) * n, t * n), (n, n)).copy_from(&(-f));
    }
    let mut h = DMatrix::zeros(steps * m, steps * n);
    for (t, ht) in sys.measurement().iter().enumerate() {
        h.view_mut((t * m, t * n), (m, n)).copy_from(ht);
    }
    (a, h)
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let mut out = DMatrix::zeros(n * blocks.len(), n * blocks.len());
    for (t, b) in blocks.iter().enumerate() {
        out.view_mut((t * n, t * n), (n, n)).copy_from(b);
    }
    out
}

pub fn random_monitoring(n: usize, rng: &mut Rng) -> Penalty {
    let mut l = Vec::new();
    let mut u = Vec::new();
    let mut m = Vec::new();
    for _ in 0..n {
        let lo = if rng.uniform() < 0.2 { f64::NEG_INFINITY } else { rng.uniform_range(-3.0, 1.0) };
        let hi = if rng.uniform() < 0.2 { f64::INFINITY } else { lo.max(-3.0) + rng.uniform_range(0.0, 3.0) };
        l.push(lo);
        u.push(hi);
        m.push(if rng.uniform() < 0.3 { 0.0 } else { rng.uniform_range(0.0, 3.0) });
    }
    Penalty::monitoring(l, u, m).unwrap()
}

pub fn random_pwl(rng: &mut Rng) -> Penalty {
    let k = 2 + (rng.next_u64() % 6) as usize;
    let mut knots = vec![rng.uniform_range(-3.0, 0.0)];
    for _ in 1..k {
        let next = knots[knots.len() - 1] + rng.uniform_range(0.1, 1.5);
        knots.push(next);
    }
    let mut slopes: Vec<f64> = (0..k - 1).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    slopes.sort_by(f64::total_cmp);
    let mut values = vec![rng.uniform_range(-1.0, 1.0)];
    for j in 0..k - 1 {
        let next = values[j] + slopes[j] * (knots[j + 1] - knots[j]);
        values.push(next);
    }
    Penalty::piecewise_linear(knots, values).unwrap()
}

/// One random penalty of kind 0 quadratic, 1 monitoring, 2 pwl, 3 zero.
pub fn random_penalty(kind: usize, rng: &mut Rng) -> Penalty {
    let n = 1 + (rng.next_u64() % 3) as usize;
    match kind {
        0 => {
            let rank = if rng.uniform() < 0.3 { n - 1 } else { n }.max(1);
            let b = normal_matrix(n, rank, rng);
            Penalty::quadratic(&b * b.transpose()).unwrap()
        }
        1 => random_monitoring(n, rng),
        2 => random_pwl(rng),
        _ => Penalty::zero(n).unwrap(),
    }
}
