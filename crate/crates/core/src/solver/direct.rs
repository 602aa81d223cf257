//! Direct linear-algebra solves for quadratic instances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LinearSystem, Supervector};
use crate::penalty::Penalty;
use crate::problems::{gap_of, PrimalProblem};
use crate::solver::{Solution, StopReason};

/// One block of a block-separable quadratic objective.
#[derive(Debug, Clone)]
pub(crate) enum QuadTerm {
    /// `½ (r - c)' M (r - c)`.
    Weighted { m: DMatrix<f64>, center: DVector<f64> },
    /// Hard constraint `r = c`.
    Pinned { center: DVector<f64> },
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    /// Dual controls `u`: `M_g (z - Hx - c)` on weighted blocks, minus the
    /// constraint multiplier on pinned blocks.
    pub u: DVector<f64>,
}

/// Minimises `Σ_t q^f_t((Ax)_t) + Σ_t q^g_t(z_t - H_t x_t)` over `x` by
/// solving the KKT system of the equality-constrained quadratic program.
pub(crate) fn solve_block_qp(
    system: &LinearSystem,
    f_terms: &[QuadTerm],
    g_terms: &[QuadTerm],
    z: &DVector<f64>,
) -> Result<QpSolution> {
    let (n, m) = (system.state_dim(), system.meas_dim());
    let steps = system.num_steps();
    let dim = steps * n;
    let a = system.dynamics_supermatrix().matrix;

    let mut q = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut rows: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    let mut pinned_g: Vec<(usize, usize)> = Vec::new();

    for (t, term) in f_terms.iter().enumerate() {
        let at = a.rows(t * n, n).into_owned();
        match term {
            QuadTerm::Weighted { m: mt, center } => {
                q += at.transpose() * mt * &at;
                rhs += at.transpose() * (mt * center);
            }
            QuadTerm::Pinned { center } => rows.push((at, center.clone())),
        }
    }
    for (t, term) in g_terms.iter().enumerate() {
        let ht = &system.measurement()[t];
        let target = z.rows(t * m, m) - match term {
            QuadTerm::Weighted { center, .. } | QuadTerm::Pinned { center } => center,
        };
        match term {
            QuadTerm::Weighted { m: nt, .. } => {
                let mut qb = q.view_mut((t * n, t * n), (n, n));
                qb += ht.transpose() * nt * ht;
                let mut rb = rhs.rows_mut(t * n, n);
                rb += ht.transpose() * (nt * &target);
            }
            QuadTerm::Pinned { .. } => {
                let mut row = DMatrix::<f64>::zeros(m, dim);
                row.view_mut((0, t * n), (m, n)).copy_from(ht);
                pinned_g.push((t, rows.iter().map(|r| r.0.nrows()).sum()));
                rows.push((row, target));
            }
        }
    }

    let ncons: usize = rows.iter().map(|r| r.0.nrows()).sum();
    let size = dim + ncons;
    let mut kkt = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    kkt.view_mut((0, 0), (dim, dim)).copy_from(&q);
    b.rows_mut(0, dim).copy_from(&rhs);
    let mut offset = dim;
    for (e, c) in &rows {
        let r = e.nrows();
        kkt.view_mut((offset, 0), (r, dim)).copy_from(e);
        kkt.view_mut((0, offset), (dim, r)).copy_from(&e.transpose());
        b.rows_mut(offset, r).copy_from(c);
        offset += r;
    }

    let svd = kkt.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-13 * smax {
        return Err(Error::Singular(format!(
            "KKT matrix is singular (condition estimate {:e}); measurements may be inconsistent or the states underdetermined",
            smax / smin
        )));
    }
    let mut sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    // one step of iterative refinement
    let correction = svd
        .solve(&(&b - &kkt * &sol), 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    sol += correction;
    let x = sol.rows(0, dim).into_owned();

    let hx = system.apply_measurement_flat(&x);
    let mut u = DVector::<f64>::zeros(steps * m);
    for (t, term) in g_terms.iter().enumerate() {
        if let QuadTerm::Weighted { m: nt, center } = term {
            let resid = z.rows(t * m, m) - hx.rows(t * m, m) - center;
            u.rows_mut(t * m, m).copy_from(&(nt * resid));
        }
    }
    for (t, off) in pinned_g {
        let nu = sol.rows(dim + off, m);
        u.rows_mut(t * m, m).copy_from(&(-nu));
    }
    Ok(QpSolution { x, u })
}

/// Direct solve when every `f_t` is quadratic with `M ≻ 0` and every `g_t`
/// is quadratic or the indicator of `{0}`.
pub fn solve_quadratic_direct(p: &PrimalProblem) -> Result<Solution> {
    let sys = p.system();
    let f_terms = p
        .process()
        .blocks()
        .iter()
        .enumerate()
        .map(|(t, pen)| match pen {
            Penalty::Quadratic(q) if q.is_positive_definite() => Ok(QuadTerm::Weighted {
                m: q.matrix().clone(),
                center: DVector::zeros(pen.dim()),
            }),
            _ => Err(Error::InvalidPenalty(format!(
                "direct solve needs a positive definite quadratic process penalty (step {t} is {})",
                pen.kind_name()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let g_terms = p
        .measurement()
        .blocks()
        .iter()
        .enumerate()
        .map(|(t, pen)| match pen {
            Penalty::Quadratic(q) => Ok(QuadTerm::Weighted {
                m: q.matrix().clone(),
                center: DVector::zeros(pen.dim()),
            }),
            Penalty::Zero { dim } => Ok(QuadTerm::Pinned {
                center: DVector::zeros(*dim),
            }),
            _ => Err(Error::InvalidPenalty(format!(
                "direct solve needs quadratic or zero measurement penalties (step {t} is {})",
                pen.kind_name()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;

    let qp = solve_block_qp(sys, &f_terms, &g_terms, p.measurements().as_flat())?;
    let primal = p.objective_flat(&qp.x);
    let (dual, y) = p.dual().objective_flat(&qp.u);
    let gap = gap_of(primal, dual)?;
    let n = sys.state_dim();
    let w = sys.apply_dynamics_flat(&qp.x);
    Ok(Solution {
        x: Supervector::from_flat(qp.x, n)?,
        w: Supervector::from_flat(w, n)?,
        u: Supervector::from_flat(qp.u, sys.meas_dim())?,
        y: Supervector::from_flat(y, n)?,
        primal_value: primal,
        dual_value: dual,
        gap,
        iterations: 0,
        converged: gap.is_finite(),
        stop_reason: StopReason::Direct,
        history: Vec::new(),
    })
}
