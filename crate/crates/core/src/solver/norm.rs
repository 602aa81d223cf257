//! Operator-norm estimation by power iteration.

use nalgebra::{DMatrix, DVector};

use crate::model::LinearSystem;
use crate::sim::Rng;

/// A linear map given through products with the map and its adjoint.
pub trait LinearMap {
    fn input_dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;
}

impl LinearMap for DMatrix<f64> {
    fn input_dim(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(y)
    }
}

/// `x ↦ (Ax, Hx)`; the output is the concatenation of both parts.
#[derive(Debug, Clone, Copy)]
pub struct StackedMap<'a> {
    pub system: &'a LinearSystem,
}

impl LinearMap for StackedMap<'_> {
    fn input_dim(&self) -> usize {
        self.system.num_steps() * self.system.state_dim()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let ax = self.system.apply_dynamics_flat(x);
        let hx = self.system.apply_measurement_flat(x);
        let mut out = DVector::zeros(ax.len() + hx.len());
        out.rows_mut(0, ax.len()).copy_from(&ax);
        out.rows_mut(ax.len(), hx.len()).copy_from(&hx);
        out
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let na = self.input_dim();
        let a_part = y.rows(0, na).into_owned();
        let h_part = y.rows(na, y.len() - na).into_owned();
        self.system.apply_dynamics_transpose_flat(&a_part) + self.system.apply_measurement_transpose_flat(&h_part)
    }
}

const POWER_ITERS: usize = 200;
const POWER_RTOL: f64 = 1e-12;
const INFLATION: f64 = 1.01;

/// Largest singular value by power iteration on `K'K` (200 iterations or a
/// relative change below `1e-12`).
pub fn largest_singular_value<K: LinearMap + ?Sized>(k: &K) -> f64 {
    let dim = k.input_dim();
    if dim == 0 {
        return 0.0;
    }
    let mut rng = Rng::seed_from_u64(0x0DD5_EED5);
    let mut v = DVector::from_fn(dim, |_, _| rng.standard_normal());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        let kv = k.apply(&v);
        let next = k.apply_transpose(&kv);
        let lambda = next.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = next / lambda;
        let change = (lambda - estimate).abs();
        estimate = lambda;
        if change <= POWER_RTOL * lambda {
            break;
        }
    }
    estimate.sqrt()
}

/// [`largest_singular_value`] inflated by 1% so that steps derived from it
/// satisfy `τσ‖K‖² < 1` strictly.
pub fn operator_norm_estimate<K: LinearMap + ?Sized>(k: &K) -> f64 {
    INFLATION * largest_singular_value(k)
}
