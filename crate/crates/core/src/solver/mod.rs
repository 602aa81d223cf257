//! Primal-dual hybrid gradient solver for the smoothing/control pair.
//!
//! The primal is written as `min_x Φ(Kx)` with `K x = (Ax, Hx)` and
//! `Φ(p, q) = f(p) + g(z - q)`. Each iteration takes a proximal step on `Φ*`
//! (closed form per time step through the penalties' conjugate proxes) and a
//! gradient step on `x`:
//!
//! ```text
//! a⁺ = prox_{σf*}(a + σ A x̄)
//! u⁺ = prox_{σg*}(u + σ (z - H x̄))
//! x⁺ = x - τ (A'a⁺ - H'u⁺)
//! x̄  = x⁺ + θ (x⁺ - x)
//! ```
//!
//! The dual variable of the `H` block enters `Φ*` as `λ_H = -u`, so `u` is
//! directly the control of the dual problem; `y` is always re-derived from
//! `u` by the backward recursion.

pub mod direct;
pub mod norm;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::model::Supervector;
use crate::problems::{gap_of, CertificateStatus, DualProblem, PrimalProblem};

pub use direct::solve_quadratic_direct;
pub use norm::{largest_singular_value, operator_norm_estimate, LinearMap, StackedMap};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative duality-gap tolerance: `gap ≤ tol_gap · (1 + |primal|)`.
    pub tol_gap: f64,
    /// Tolerance on the fixed-point residual `‖Δx‖/τ + ‖Δλ‖/σ`.
    pub tol_residual: f64,
    /// Ratio `σ / τ` of dual to primal step.
    pub step_ratio: f64,
    /// Over-relaxation `θ ∈ [0, 1]`.
    pub over_relaxation: f64,
    /// Seed for randomized initialization (iterates start at zero; kept for
    /// reproducible extensions).
    pub seed: u64,
    /// Iterations between objective evaluations.
    pub check_every: usize,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 50_000,
            tol_gap: 1e-8,
            tol_residual: 1e-9,
            step_ratio: 1.0,
            over_relaxation: 1.0,
            seed: 0,
            check_every: 10,
            record_history: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tol_gap) || !positive(self.tol_residual) {
            return Err(Error::InvalidOptions("tolerances must be positive".into()));
        }
        if !positive(self.step_ratio) {
            return Err(Error::InvalidOptions("step ratio must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.over_relaxation) {
            return Err(Error::InvalidOptions("over-relaxation must lie in [0, 1]".into()));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidOptions("check_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GapTolerance,
    /// Residual below tolerance while the dual value was still `-inf`.
    ResidualTolerance,
    MaxIterations,
    Diverged,
    /// Produced by a direct (non-iterative) solve.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Supervector,
    /// `A x`.
    pub w: Supervector,
    pub u: Supervector,
    /// Adjoint states derived from `u`.
    pub y: Supervector,
    pub primal_value: ExtReal,
    pub dual_value: ExtReal,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub history: Vec<TraceRow>,
}

impl Solution {
    /// `gap / (1 + |primal|)`.
    pub fn relative_gap(&self) -> f64 {
        relative(self.gap, self.primal_value)
    }
}

fn relative(gap: f64, primal: ExtReal) -> f64 {
    match primal.finite() {
        Some(p) => gap / (1.0 + p.abs()),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: DVector<f64>,
    u: DVector<f64>,
    primal: ExtReal,
    dual: ExtReal,
    gap: f64,
}

impl Candidate {
    fn evaluate(p: &PrimalProblem, x: &DVector<f64>, u: &DVector<f64>) -> Candidate {
        let x = p.restore_feasibility(x);
        let primal = p.objective_flat(&x);
        let (dual, _) = p.dual().objective_flat(u);
        let gap = gap_of(primal, dual).unwrap_or(f64::INFINITY);
        Candidate {
            x,
            u: u.clone(),
            primal,
            dual,
            gap,
        }
    }

    fn relative_gap(&self) -> f64 {
        relative(self.gap, self.primal)
    }
}

pub fn solve_first_order(p: &PrimalProblem, opts: &SolverOptions) -> Result<Solution> {
    opts.validate()?;
    if p.certify_strong_duality().status == CertificateStatus::Unknown {
        log::warn!("no strong-duality certificate for this problem; attempting to solve anyway");
    }
    let sys = p.system();
    let z = p.measurements().as_flat();
    let nx = sys.num_steps() * sys.state_dim();
    let nu = sys.num_steps() * sys.meas_dim();

    let k_norm = operator_norm_estimate(&StackedMap { system: sys }).max(1e-12);
    let tau = 1.0 / (k_norm * opts.step_ratio.sqrt());
    let sigma = opts.step_ratio.sqrt() / k_norm;
    let theta = opts.over_relaxation;
    let z_scale = 1.0 + z.norm();

    let mut x = DVector::<f64>::zeros(nx);
    let mut x_bar = x.clone();
    let mut a = DVector::<f64>::zeros(nx);
    let mut u = DVector::<f64>::zeros(nu);
    let mut a_next = a.clone();
    let mut u_next = u.clone();
    let mut x_sum = DVector::<f64>::zeros(nx);
    let mut u_sum = DVector::<f64>::zeros(nu);

    let mut best: Option<Candidate> = None;
    let mut history = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    for k in 1..=opts.max_iters {
        iterations = k;
        let ax = sys.apply_dynamics_flat(&x_bar);
        let hx = sys.apply_measurement_flat(&x_bar);
        p.process().conjugate_prox_into(&(&a + sigma * ax), sigma, &mut a_next);
        p.measurement().conjugate_prox_into(&(&u + sigma * (z - hx)), sigma, &mut u_next);
        let kt = sys.apply_dynamics_transpose_flat(&a_next) - sys.apply_measurement_transpose_flat(&u_next);
        let x_next = &x - tau * kt;

        let dx = (&x_next - &x).norm() / tau;
        let dl = ((&a_next - &a).norm_squared() + (&u_next - &u).norm_squared()).sqrt() / sigma;
        let residual = dx + dl;

        x_bar = &x_next + theta * (&x_next - &x);
        x = x_next;
        std::mem::swap(&mut a, &mut a_next);
        std::mem::swap(&mut u, &mut u_next);
        x_sum += &x;
        u_sum += &u;

        if !x.iter().chain(u.iter()).all(|v| v.is_finite()) || x.amax() > 1e15 * z_scale {
            stop = StopReason::Diverged;
            break;
        }

        if k % opts.check_every != 0 && k != opts.max_iters {
            continue;
        }
        let last = Candidate::evaluate(p, &x, &u);
        let avg = Candidate::evaluate(p, &(&x_sum / k as f64), &(&u_sum / k as f64));
        // the last iterate is the sharper estimate once it certifies
        let current = if last.relative_gap() <= opts.tol_gap || last.relative_gap() <= avg.relative_gap() {
            last
        } else {
            avg
        };
        if opts.record_history {
            history.push(TraceRow {
                iteration: k,
                primal_value: current.primal.to_f64(),
                dual_value: current.dual.to_f64(),
                gap: current.gap,
                residual,
            });
        }
        let gap_ok = current.relative_gap() <= opts.tol_gap;
        let dual_finite = current.dual.is_finite();
        if best.as_ref().is_none_or(|b| current.relative_gap() <= b.relative_gap()) {
            best = Some(current);
        }
        if gap_ok && residual <= opts.tol_residual {
            stop = StopReason::GapTolerance;
            break;
        }
        if !dual_finite && residual <= opts.tol_residual {
            stop = StopReason::ResidualTolerance;
            break;
        }
    }

    let chosen = best.unwrap_or_else(|| Candidate::evaluate(p, &x, &u));
    let converged = stop == StopReason::GapTolerance;
    if !converged {
        log::warn!(
            "first-order solver stopped without convergence ({stop:?}) after {iterations} iterations, relative gap {:e}",
            chosen.relative_gap()
        );
    }
    build_solution(p, chosen, iterations, converged, stop, history)
}

fn build_solution(
    p: &PrimalProblem,
    c: Candidate,
    iterations: usize,
    converged: bool,
    stop_reason: StopReason,
    history: Vec<TraceRow>,
) -> Result<Solution> {
    let sys = p.system();
    let n = sys.state_dim();
    let w = sys.apply_dynamics_flat(&c.x);
    let y = sys.adjoint_states_flat(&c.u);
    Ok(Solution {
        x: Supervector::from_flat(c.x, n)?,
        w: Supervector::from_flat(w, n)?,
        u: Supervector::from_flat(c.u, sys.meas_dim())?,
        y: Supervector::from_flat(y, n)?,
        primal_value: c.primal,
        dual_value: c.dual,
        gap: c.gap,
        iterations,
        converged,
        stop_reason,
        history,
    })
}

/// Primal estimate rebuilt from a dual solution.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub y: Supervector,
    /// `w_t = ∇f_t*(y_t)`.
    pub w: Supervector,
    /// `A⁻¹ w`.
    pub x: Supervector,
}

/// Rebuilds `(w, x)` from dual controls `u`: derive `y`, take the minimiser
/// `w_t` of `f_t(w) - w'y_t` (the conjugate gradient), and propagate
/// `x = A⁻¹ w`.
pub fn reconstruct_primal_from_dual(d: &DualProblem<'_>, u: &Supervector) -> Result<Reconstruction> {
    let p = d.primal();
    let sys = p.system();
    let y = sys.adjoint_states(u)?;
    let n = sys.state_dim();
    let mut w = Supervector::zeros(sys.num_steps(), n);
    for (t, pen) in p.process().blocks().iter().enumerate() {
        let yt: Vec<f64> = y.block(t).iter().copied().collect();
        let grad = pen
            .conjugate_gradient(&yt)?
            .ok_or(Error::NonDifferentiableConjugate { step: t })?;
        w.block_mut(t).copy_from_slice(&grad);
    }
    let x = sys.states_from_noise(&w)?;
    Ok(Reconstruction { y, w, x })
}

/// Dual solve followed by reconstruction of the primal estimate.
#[derive(Debug, Clone)]
pub struct DualEstimate {
    pub solution: Solution,
    pub reconstruction: Reconstruction,
    /// Primal objective at the reconstructed states.
    pub reconstructed_value: ExtReal,
    /// `primal(x_reconstructed) - dual(u)`.
    pub reconstructed_gap: f64,
}

pub fn solve_dual_and_reconstruct(p: &PrimalProblem, opts: &SolverOptions) -> Result<DualEstimate> {
    let solution = solve_first_order(p, opts)?;
    let reconstruction = reconstruct_primal_from_dual(&p.dual(), &solution.u)?;
    let reconstructed_value = p.objective(&reconstruction.x)?;
    let reconstructed_gap = gap_of(reconstructed_value, solution.dual_value).unwrap_or(f64::INFINITY);
    Ok(DualEstimate {
        solution,
        reconstruction,
        reconstructed_value,
        reconstructed_gap,
    })
}
