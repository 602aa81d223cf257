//! The primal MAP smoothing program and its dual optimal-control program.
//!
//! Primal: `min_x f(Ax) + g(z - Hx)`.
//!
//! Dual: `sup_u z'u - f*(y) - g*(u)` where the adjoint states follow the
//! backward recursion `y_T = H_T'u_T`, `y_t = F_t'y_{t+1} + H_t'u_t`, so that
//! `A'y = H'u` holds by construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::model::{LinearSystem, Supervector};
use crate::penalty::{Penalty, SeparablePenalty};
use crate::solver::direct::{solve_block_qp, QuadTerm};

#[derive(Debug, Clone)]
pub struct PrimalProblem {
    system: LinearSystem,
    process: SeparablePenalty,
    measurement: SeparablePenalty,
    z: Supervector,
}

impl PrimalProblem {
    pub fn new(
        system: LinearSystem,
        process: SeparablePenalty,
        measurement: SeparablePenalty,
        z: Supervector,
    ) -> Result<Self> {
        let steps = system.num_steps();
        if process.num_blocks() != steps {
            return Err(Error::dims("process penalty blocks", steps, process.num_blocks()));
        }
        if process.block_dim() != system.state_dim() {
            return Err(Error::dims("process penalty dimension", system.state_dim(), process.block_dim()));
        }
        if measurement.num_blocks() != steps {
            return Err(Error::dims("measurement penalty blocks", steps, measurement.num_blocks()));
        }
        if measurement.block_dim() != system.meas_dim() {
            return Err(Error::dims("measurement penalty dimension", system.meas_dim(), measurement.block_dim()));
        }
        if z.num_blocks() != steps || z.block_dim() != system.meas_dim() {
            return Err(Error::dims("measurements", steps * system.meas_dim(), z.as_flat().len()));
        }
        if z.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("measurements must be finite".into()));
        }
        Ok(PrimalProblem {
            system,
            process,
            measurement,
            z,
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn process(&self) -> &SeparablePenalty {
        &self.process
    }

    pub fn measurement(&self) -> &SeparablePenalty {
        &self.measurement
    }

    pub fn measurements(&self) -> &Supervector {
        &self.z
    }

    /// `f(Ax) + g(z - Hx)`.
    pub fn objective(&self, x: &Supervector) -> Result<ExtReal> {
        self.system.check_state_flat(x.as_flat())?;
        Ok(self.objective_flat(x.as_flat()))
    }

    pub(crate) fn objective_flat(&self, x: &DVector<f64>) -> ExtReal {
        let w = self.system.apply_dynamics_flat(x);
        let v = self.z.as_flat() - self.system.apply_measurement_flat(x);
        self.process.value_unchecked(&w) + self.measurement.value_unchecked(&v)
    }

    pub fn dual(&self) -> DualProblem<'_> {
        DualProblem { primal: self }
    }

    /// `primal(x) - dual(u)`; `+inf` when either side is infinite, an error
    /// when both are.
    pub fn duality_gap(&self, x: &Supervector, u: &Supervector) -> Result<f64> {
        let p = self.objective(x)?;
        let (d, _) = self.dual().objective(u)?;
        gap_of(p, d)
    }

    /// Moves `x` onto the domain of the objective by alternating between the
    /// process-noise box (through `w = Ax`) and the per-step measurement
    /// residual boxes. Returns `x` unchanged if it is already feasible.
    pub(crate) fn restore_feasibility(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.objective_flat(x).is_finite() {
            return x.clone();
        }
        let sys = &self.system;
        let (n, m) = (sys.state_dim(), sys.meas_dim());
        let f_boxes: Vec<Vec<(f64, f64)>> = self.process.blocks().iter().map(Penalty::domain_box).collect();
        let g_boxes: Vec<Vec<(f64, f64)>> = self.measurement.blocks().iter().map(Penalty::domain_box).collect();
        let pinvs: Vec<Option<DMatrix<f64>>> = sys
            .measurement()
            .iter()
            .map(|h| h.clone().pseudo_inverse(1e-12).ok())
            .collect();
        let mut x = x.clone();
        for _ in 0..100 {
            let mut w = sys.apply_dynamics_flat(&x);
            for (t, b) in f_boxes.iter().enumerate() {
                for (i, &(lo, hi)) in b.iter().enumerate() {
                    w[t * n + i] = w[t * n + i].clamp(lo, hi);
                }
            }
            x = sys.solve_dynamics_flat(&w);
            let hx = sys.apply_measurement_flat(&x);
            for (t, b) in g_boxes.iter().enumerate() {
                let v = DVector::from_fn(m, |i, _| self.z.as_flat()[t * m + i] - hx[t * m + i]);
                let c = DVector::from_fn(m, |i, _| v[i].clamp(b[i].0, b[i].1));
                let excess = &v - &c;
                if excess.amax() > 0.0 {
                    if let Some(p) = &pinvs[t] {
                        let shift = p * excess;
                        let mut xt = x.rows_mut(t * n, n);
                        xt += shift;
                    }
                }
            }
            if self.objective_flat(&x).is_finite() {
                break;
            }
        }
        x
    }

    /// Strong-duality certificate. The PLQ route is tried first; the
    /// strict-feasibility route is evaluated regardless and reported in
    /// [`DualityCertificate::strict_witness`].
    pub fn certify_strong_duality(&self) -> DualityCertificate {
        let feasible = self.surrogate_point().and_then(|x| {
            let x = self.restore_feasibility(&x);
            self.objective_flat(&x).is_finite().then(|| self.witness(x))
        });
        let strict = self.strict_feasibility_witness();
        let plq = self.process.is_plq() && self.measurement.is_plq();
        let (status, witness) = if plq && feasible.is_some() {
            (CertificateStatus::PlqAutomatic, feasible)
        } else if strict.is_some() {
            (CertificateStatus::StrictFeasibility, strict.clone())
        } else {
            (CertificateStatus::Unknown, None)
        };
        DualityCertificate {
            status,
            witness,
            strict_witness: strict,
        }
    }

    fn witness(&self, x: DVector<f64>) -> Witness {
        let n = self.system.state_dim();
        let w = self.system.apply_dynamics_flat(&x);
        Witness {
            x: Supervector::from_flat(x, n).expect("state dimension"),
            w: Supervector::from_flat(w, n).expect("state dimension"),
        }
    }

    /// Minimiser of the quadratic surrogate: each penalty replaced by
    /// `½‖· - c‖²` centred at a point of its domain (`{0}` kept as a hard pin).
    fn surrogate_point(&self) -> Option<DVector<f64>> {
        let terms = |pen: &SeparablePenalty| -> Vec<QuadTerm> {
            pen.blocks()
                .iter()
                .map(|p| {
                    let center = DVector::from_vec(p.domain_point());
                    match p {
                        Penalty::Zero { .. } => QuadTerm::Pinned { center },
                        _ => QuadTerm::Weighted {
                            m: DMatrix::identity(p.dim(), p.dim()),
                            center,
                        },
                    }
                })
                .collect()
        };
        solve_block_qp(&self.system, &terms(&self.process), &terms(&self.measurement), self.z.as_flat())
            .ok()
            .map(|s| s.x)
    }

    fn is_strict_witness(&self, x: &DVector<f64>) -> bool {
        let (n, m) = (self.system.state_dim(), self.system.meas_dim());
        let w = self.system.apply_dynamics_flat(x);
        let v = self.z.as_flat() - self.system.apply_measurement_flat(x);
        let w_ok = self
            .process
            .blocks()
            .iter()
            .enumerate()
            .all(|(t, p)| p.in_interior(&w.as_slice()[t * n..(t + 1) * n]));
        let v_ok = self
            .measurement
            .blocks()
            .iter()
            .enumerate()
            .all(|(t, p)| p.in_interior(&v.as_slice()[t * m..(t + 1) * m]));
        w_ok && v_ok
    }

    fn strict_feasibility_witness(&self) -> Option<Witness> {
        let n = self.system.state_dim();
        let mut w = DVector::zeros(self.system.num_steps() * n);
        for (t, p) in self.process.blocks().iter().enumerate() {
            let point = p.interior_point()?;
            w.rows_mut(t * n, n).copy_from_slice(&point);
        }
        let propagated = self.system.solve_dynamics_flat(&w);
        if self.is_strict_witness(&propagated) {
            return Some(self.witness(propagated));
        }
        let surrogate = self.surrogate_point()?;
        self.is_strict_witness(&surrogate).then(|| self.witness(surrogate))
    }
}

pub(crate) fn gap_of(primal: ExtReal, dual: ExtReal) -> Result<f64> {
    match (primal, dual) {
        (ExtReal::PosInf, ExtReal::NegInf) => Err(Error::UndefinedGap),
        (ExtReal::Finite(p), ExtReal::Finite(d)) => Ok(p - d),
        _ => Ok(f64::INFINITY),
    }
}

/// The dual control problem of a [`PrimalProblem`]; conjugates are taken of
/// the primal's penalties.
#[derive(Debug, Clone, Copy)]
pub struct DualProblem<'a> {
    primal: &'a PrimalProblem,
}

impl<'a> DualProblem<'a> {
    pub fn primal(&self) -> &'a PrimalProblem {
        self.primal
    }

    /// `z'u - f*(y) - g*(u)` together with the adjoint states `y`.
    pub fn objective(&self, u: &Supervector) -> Result<(ExtReal, Supervector)> {
        self.primal.system.check_meas_flat(u.as_flat())?;
        let (value, y) = self.objective_flat(u.as_flat());
        Ok((value, Supervector::from_flat(y, self.primal.system.state_dim())?))
    }

    pub(crate) fn objective_flat(&self, u: &DVector<f64>) -> (ExtReal, DVector<f64>) {
        let p = self.primal;
        let y = p.system.adjoint_states_flat(u);
        let conj = p.process.conjugate_value_unchecked(&y) + p.measurement.conjugate_value_unchecked(u);
        (ExtReal::Finite(p.z.as_flat().dot(u)) - conj, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateStatus {
    /// All penalties are PLQ and the primal has a feasible point.
    PlqAutomatic,
    /// A verified strictly feasible pair exists.
    StrictFeasibility,
    Unknown,
}

impl CertificateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateStatus::PlqAutomatic => "PLQ_AUTOMATIC",
            CertificateStatus::StrictFeasibility => "STRICT_FEASIBILITY",
            CertificateStatus::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: Supervector,
    pub w: Supervector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityCertificate {
    pub status: CertificateStatus,
    /// Feasible point for `PlqAutomatic`, strictly feasible point for
    /// `StrictFeasibility`.
    pub witness: Option<Witness>,
    pub strict_witness: Option<Witness>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_problem() -> PrimalProblem {
        let sys = LinearSystem::new(vec![], vec![dmatrix![1.0]]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 1).unwrap();
        let g = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 1).unwrap();
        let z = Supervector::from_rows(&[vec![1.0]]).unwrap();
        PrimalProblem::new(sys, f, g, z).unwrap()
    }

    fn scalar(v: f64) -> Supervector {
        Supervector::from_rows(&[vec![v]]).unwrap()
    }

    #[test]
    fn scalar_objectives() {
        let p = scalar_problem();
        assert!((p.objective(&scalar(0.5)).unwrap().to_f64() - 0.25).abs() < 1e-15);
        let (d, y) = p.dual().objective(&scalar(0.5)).unwrap();
        assert!((d.to_f64() - 0.25).abs() < 1e-15);
        assert_eq!(y.to_rows(), vec![vec![0.5]]);
        assert!(p.duality_gap(&scalar(0.5), &scalar(0.5)).unwrap().abs() < 1e-15);
        assert!((p.duality_gap(&scalar(0.0), &scalar(0.5)).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scalar_dual_matches_hand_substitution() {
        // with y = u: u - ½u² - ½u²
        let p = scalar_problem();
        for u in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let (d, _) = p.dual().objective(&scalar(u)).unwrap();
            assert!((d.to_f64() - (u - u * u)).abs() < 1e-14);
        }
    }

    #[test]
    fn dual_at_zero_is_sum_of_minima() {
        let p = scalar_problem();
        let (d, y) = p.dual().objective(&scalar(0.0)).unwrap();
        assert_eq!(d, ExtReal::Finite(0.0));
        assert_eq!(y.norm(), 0.0);
    }

    #[test]
    fn dual_is_minus_infinity_off_conjugate_domain() {
        let sys = LinearSystem::new(vec![], vec![dmatrix![1.0]]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 1).unwrap();
        let g = SeparablePenalty::uniform(Penalty::absolute_value(), 1).unwrap();
        let p = PrimalProblem::new(sys, f, g, scalar(0.0)).unwrap();
        assert_eq!(p.dual().objective(&scalar(1.5)).unwrap().0, ExtReal::NegInf);
        assert_eq!(p.duality_gap(&scalar(0.0), &scalar(1.5)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn primal_is_infinite_off_domain_and_gap_undefined() {
        let sys = LinearSystem::new(vec![], vec![dmatrix![1.0]]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 1).unwrap();
        let pwl = Penalty::piecewise_linear(vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let g = SeparablePenalty::uniform(pwl, 1).unwrap();
        let p = PrimalProblem::new(sys, f, g, scalar(0.0)).unwrap();
        assert_eq!(p.objective(&scalar(3.0)).unwrap(), ExtReal::PosInf);
        let g2 = SeparablePenalty::uniform(Penalty::absolute_value(), 1).unwrap();
        let sys = LinearSystem::new(vec![], vec![dmatrix![1.0]]).unwrap();
        let z0 = SeparablePenalty::uniform(Penalty::zero(1).unwrap(), 1).unwrap();
        let q = PrimalProblem::new(sys, z0, g2, scalar(0.0)).unwrap();
        assert!(matches!(q.duality_gap(&scalar(1.0), &scalar(2.0)), Err(Error::UndefinedGap)));
    }

    #[test]
    fn zero_state_with_zero_data_sums_minima() {
        let sys = LinearSystem::time_invariant(3, dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![1.0, 1.0]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(2).unwrap(), 4).unwrap();
        let g = SeparablePenalty::uniform(Penalty::absolute_value(), 4).unwrap();
        let p = PrimalProblem::new(sys, f, g, Supervector::zeros(4, 1)).unwrap();
        assert_eq!(p.objective(&Supervector::zeros(4, 2)).unwrap(), ExtReal::Finite(0.0));
    }

    #[test]
    fn build_rejects_mismatched_blocks() {
        let sys = LinearSystem::new(vec![dmatrix![1.0]], vec![dmatrix![1.0]; 2]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 1).unwrap();
        let g = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 2).unwrap();
        assert!(PrimalProblem::new(sys, f, g, Supervector::zeros(2, 1)).is_err());
    }

    #[test]
    fn certificates() {
        let gauss = scalar_problem();
        let cert = gauss.certify_strong_duality();
        assert_eq!(cert.status, CertificateStatus::PlqAutomatic);
        let strict = cert.strict_witness.expect("gaussian problem is strictly feasible");
        assert_eq!(strict.x.norm(), 0.0);

        // f = indicator of {0} and g = indicator of {0} with z != 0: infeasible
        let sys = LinearSystem::new(vec![], vec![dmatrix![1.0]]).unwrap();
        let zero = SeparablePenalty::uniform(Penalty::zero(1).unwrap(), 1).unwrap();
        let p = PrimalProblem::new(sys, zero.clone(), zero, scalar(1.0)).unwrap();
        let cert = p.certify_strong_duality();
        assert_eq!(cert.status, CertificateStatus::Unknown);
        assert!(cert.witness.is_none());
    }

    #[test]
    fn kalman_variant_has_hard_constraints() {
        let sys = LinearSystem::new(vec![dmatrix![1.0]], vec![dmatrix![1.0]; 2]).unwrap();
        let f = SeparablePenalty::uniform(Penalty::squared_norm(1).unwrap(), 2).unwrap();
        let g = SeparablePenalty::uniform(Penalty::zero(1).unwrap(), 2).unwrap();
        let z = Supervector::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let p = PrimalProblem::new(sys, f, g, z.clone()).unwrap();
        assert_eq!(p.objective(&Supervector::from_rows(&[vec![1.0], vec![2.5]]).unwrap()).unwrap(), ExtReal::PosInf);
        // x = z: w = (1, 1)
        assert_eq!(p.objective(&z).unwrap(), ExtReal::Finite(1.0));
        let cert = p.certify_strong_duality();
        assert_eq!(cert.status, CertificateStatus::PlqAutomatic);
        assert!(cert.strict_witness.is_none());
    }
}
