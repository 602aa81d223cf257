//! Univariate log-concave maximum-likelihood density.
//!
//! The estimate is `exp(φ)` with `φ` concave and piecewise linear between the
//! distinct sample points, `-inf` outside their range. Knot values minimise
//!
//! ```text
//! σ(v) = -Σ w_j v_j + Σ Δ_j J(v_j, v_{j+1}),   J(a, b) = ∫_0^1 exp((1-s)a + sb) ds
//! ```
//!
//! subject to non-increasing slopes, solved with a logarithmic-barrier Newton
//! method. The objective is invariant to the barrier under constant shifts, so
//! every barrier center already integrates to one.

use crate::error::{Error, Result};
use crate::penalty::Penalty;

const MU_START: f64 = 1.0;
const MU_END: f64 = 1e-10;
const MU_FACTOR: f64 = 0.1;
const NEWTON_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 200;
/// Accepted Newton decrement when the final barrier subproblem stalls at
/// rounding level.
const STALL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MleDensity {
    knots: Vec<f64>,
    log_values: Vec<f64>,
    weights: Vec<f64>,
    sample_size: usize,
}

impl MleDensity {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `φ̂` at each knot.
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// Sample multiplicity of each knot divided by the sample size.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// `φ̂(x)`, `-inf` outside the knot range.
    pub fn log_density(&self, x: f64) -> f64 {
        let k = &self.knots;
        let (lo, hi) = (k[0], k[k.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let j = k.partition_point(|&t| t <= x).clamp(1, k.len() - 1) - 1;
        let s = (x - k[j]) / (k[j + 1] - k[j]);
        (1.0 - s) * self.log_values[j] + s * self.log_values[j + 1]
    }

    pub fn integral(&self) -> f64 {
        exp_integral(&self.knots, &self.log_values).expect("knots are sorted")
    }

    /// Largest slope increase across interior knots (non-positive when concave).
    pub fn max_second_difference(&self) -> f64 {
        slopes(&self.knots, &self.log_values)
            .windows(2)
            .map(|s| s[1] - s[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `σ(v)` for these knots and weights.
    pub fn objective(&self, log_values: &[f64]) -> f64 {
        sigma(&self.knots, &self.weights, log_values)
    }
}

/// `∫ exp(φ)` for `φ` piecewise linear through `(knots, values)`.
pub fn exp_integral(knots: &[f64], values: &[f64]) -> Result<f64> {
    if knots.len() != values.len() {
        return Err(Error::dims("exp_integral values", knots.len(), values.len()));
    }
    if let Some(i) = knots.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::UnsortedKnots(i + 1));
    }
    Ok(knots
        .windows(2)
        .zip(values.windows(2))
        .map(|(k, v)| (k[1] - k[0]) * segment_mean(v[0], v[1]))
        .sum())
}

/// `(e^a - e^b) / (a - b)`, with `J(a, a) = e^a`.
fn segment_mean(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let d = lo - hi;
    let ratio = if d.abs() < 1e-5 {
        1.0 + d * (0.5 + d / 6.0)
    } else {
        d.exp_m1() / d
    };
    hi.exp() * ratio
}

/// `∫_0^1 r^k e^{d r} dr` for `k = 0, 1, 2` and `d ≤ 0`.
fn moments(d: f64) -> [f64; 3] {
    if d.abs() < 0.5 {
        let mut out = [0.0; 3];
        let mut term = 1.0;
        for n in 0..30 {
            if n > 0 {
                term *= d / n as f64;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += term / (n + k + 1) as f64;
            }
        }
        out
    } else {
        let e = d.exp();
        let k0 = d.exp_m1() / d;
        let k1 = (e - k0) / d;
        let k2 = (e - 2.0 * k1) / d;
        [k0, k1, k2]
    }
}

/// `J` with gradient and Hessian entries `(J, J_a, J_b, J_aa, J_ab, J_bb)`.
fn segment_derivatives(a: f64, b: f64) -> [f64; 6] {
    // expand from the larger endpoint so the moments are evaluated at d ≤ 0
    let swap = b > a;
    let (p, q) = if swap { (b, a) } else { (a, b) };
    let [k0, k1, k2] = moments(q - p);
    let e = p.exp();
    let j = e * k0;
    let jq = e * k1;
    let jqq = e * k2;
    let jp = j - jq;
    let jpq = jq - jqq;
    let jpp = jp - jpq;
    if swap {
        [j, jq, jp, jqq, jpq, jpp]
    } else {
        [j, jp, jq, jpp, jpq, jqq]
    }
}

fn slopes(knots: &[f64], v: &[f64]) -> Vec<f64> {
    knots
        .windows(2)
        .zip(v.windows(2))
        .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
        .collect()
}

fn sigma(knots: &[f64], weights: &[f64], v: &[f64]) -> f64 {
    let linear: f64 = weights.iter().zip(v).map(|(w, v)| w * v).sum();
    -linear + exp_integral(knots, v).unwrap_or(f64::NAN)
}

/// Concavity margins `c_j = s_j - s_{j+1}`, all required positive.
fn margins(knots: &[f64], v: &[f64]) -> Vec<f64> {
    slopes(knots, v).windows(2).map(|s| s[0] - s[1]).collect()
}

/// Gradient of `c_j` on `(v_j, v_{j+1}, v_{j+2})`.
fn margin_gradient(knots: &[f64], j: usize) -> [f64; 3] {
    let d0 = knots[j + 1] - knots[j];
    let d1 = knots[j + 2] - knots[j + 1];
    [-1.0 / d0, 1.0 / d0 + 1.0 / d1, -1.0 / d1]
}

/// Symmetric matrix with bandwidth 2, stored by diagonals.
#[derive(Clone)]
struct Band {
    diag: Vec<f64>,
    off1: Vec<f64>,
    off2: Vec<f64>,
}

impl Band {
    fn zeros(m: usize) -> Self {
        Band {
            diag: vec![0.0; m],
            off1: vec![0.0; m.saturating_sub(1)],
            off2: vec![0.0; m.saturating_sub(2)],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo] += v,
            1 => self.off1[lo] += v,
            2 => self.off2[lo] += v,
            _ => unreachable!("outside band"),
        }
    }

    /// Solves `B x = rhs` by banded `LDLᵀ`; `None` unless positive definite.
    /// Retries with a growing diagonal shift when cancellation breaks the
    /// factorisation; the shifted step is still a descent direction.
    fn solve_regularized(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        if let Some(x) = self.solve(rhs) {
            return Some(x);
        }
        let scale = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut shift = 1e-14 * scale;
        for _ in 0..8 {
            let mut shifted = self.clone();
            shifted.diag.iter_mut().for_each(|d| *d += shift);
            if let Some(x) = shifted.solve(rhs) {
                return Some(x);
            }
            shift *= 100.0;
        }
        None
    }

    fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let m = self.diag.len();
        let mut d = vec![0.0; m];
        let mut l1 = vec![0.0; m];
        let mut l2 = vec![0.0; m];
        for i in 0..m {
            // L[i][i-2], L[i][i-1]
            if i >= 2 {
                l2[i] = self.off2[i - 2] / d[i - 2];
            }
            if i >= 1 {
                let mut s = self.off1[i - 1];
                if i >= 2 {
                    s -= l2[i] * d[i - 2] * l1[i - 1];
                }
                l1[i] = s / d[i - 1];
            }
            let mut s = self.diag[i];
            if i >= 1 {
                s -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                s -= l2[i] * l2[i] * d[i - 2];
            }
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            d[i] = s;
        }
        let mut x = rhs.to_vec();
        for i in 0..m {
            if i >= 1 {
                x[i] -= l1[i] * x[i - 1];
            }
            if i >= 2 {
                x[i] -= l2[i] * x[i - 2];
            }
        }
        for i in 0..m {
            x[i] /= d[i];
        }
        for i in (0..m).rev() {
            if i + 1 < m {
                x[i] -= l1[i + 1] * x[i + 1];
            }
            if i + 2 < m {
                x[i] -= l2[i + 2] * x[i + 2];
            }
        }
        Some(x)
    }
}

struct Barrier<'a> {
    knots: &'a [f64],
    weights: &'a [f64],
    mu: f64,
}

impl Barrier<'_> {
    fn value(&self, v: &[f64]) -> f64 {
        let c = margins(self.knots, v);
        if c.iter().any(|&c| !(c > 0.0)) {
            return f64::INFINITY;
        }
        sigma(self.knots, self.weights, v) - self.mu * c.iter().map(|c| c.ln()).sum::<f64>()
    }

    fn gradient_and_hessian(&self, v: &[f64]) -> (Vec<f64>, Band) {
        let m = v.len();
        let mut g: Vec<f64> = self.weights.iter().map(|w| -w).collect();
        let mut h = Band::zeros(m);
        for j in 0..m - 1 {
            let dt = self.knots[j + 1] - self.knots[j];
            let [_, ja, jb, jaa, jab, jbb] = segment_derivatives(v[j], v[j + 1]);
            g[j] += dt * ja;
            g[j + 1] += dt * jb;
            h.add(j, j, dt * jaa);
            h.add(j, j + 1, dt * jab);
            h.add(j + 1, j + 1, dt * jbb);
        }
        if self.mu == 0.0 {
            return (g, h);
        }
        for (j, c) in margins(self.knots, v).into_iter().enumerate() {
            let a = margin_gradient(self.knots, j);
            for r in 0..3 {
                g[j + r] -= self.mu * a[r] / c;
                for s in r..3 {
                    h.add(j + r, j + s, self.mu * a[r] * a[s] / (c * c));
                }
            }
        }
        (g, h)
    }

    /// Largest `t ≤ 1` keeping every margin positive along `dv`.
    fn max_step(&self, v: &[f64], dv: &[f64]) -> f64 {
        let c = margins(self.knots, v);
        let dc = margins(self.knots, dv);
        let mut t: f64 = 1.0;
        for (c, dc) in c.iter().zip(&dc) {
            if *dc < 0.0 {
                t = t.min(0.99 * c / -dc);
            }
        }
        t
    }

    /// Damped Newton to the barrier center; returns the final decrement `λ²/2`.
    fn center(&self, v: &mut Vec<f64>) -> f64 {
        let mut decrement = f64::INFINITY;
        for _ in 0..MAX_NEWTON {
            let (g, h) = self.gradient_and_hessian(v);
            let Some(step) = h.solve_regularized(&g) else {
                break;
            };
            let dv: Vec<f64> = step.iter().map(|s| -s).collect();
            decrement = 0.5 * g.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            if decrement <= NEWTON_TOL {
                break;
            }
            let f0 = self.value(v);
            let slope = -2.0 * decrement;
            let mut t = self.max_step(v, &dv);
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = v.iter().zip(&dv).map(|(v, d)| v + t * d).collect();
                let f1 = self.value(&trial);
                if f1 <= f0 + 0.25 * t * slope || (f1.is_finite() && (f1 - f0).abs() <= 1e-15 * (1.0 + f0.abs())) {
                    *v = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        decrement
    }
}

/// `v = B θ`: knot values linear between the retained knots `keep`.
struct Reduced<'a> {
    knots: &'a [f64],
    keep: Vec<usize>,
    /// Per knot: bracket `s` and weights on `θ_s`, `θ_{s+1}`.
    coef: Vec<(usize, f64, f64)>,
}

impl<'a> Reduced<'a> {
    fn new(knots: &'a [f64], keep: Vec<usize>) -> Self {
        let mut coef = Vec::with_capacity(knots.len());
        for s in 0..keep.len() - 1 {
            let (a, b) = (keep[s], keep[s + 1]);
            for j in a..b {
                let r = (knots[j] - knots[a]) / (knots[b] - knots[a]);
                coef.push((s, 1.0 - r, r));
            }
        }
        coef.push((keep.len() - 2, 0.0, 1.0));
        Reduced { knots, keep, coef }
    }

    fn expand(&self, theta: &[f64]) -> Vec<f64> {
        self.coef.iter().map(|&(s, a, b)| a * theta[s] + b * theta[s + 1]).collect()
    }

    fn gradient_and_hessian(&self, weights: &[f64], v: &[f64]) -> (Vec<f64>, Band) {
        let gv = Barrier {
            knots: self.knots,
            weights,
            mu: 0.0,
        };
        let (g, h) = gv.gradient_and_hessian(v);
        let n = self.keep.len();
        let mut gt = vec![0.0; n];
        for (j, &(s, a, b)) in self.coef.iter().enumerate() {
            gt[s] += a * g[j];
            gt[s + 1] += b * g[j];
        }
        let mut ht = Band::zeros(n);
        let mut add = |i: usize, j: usize, hv: f64| {
            let (si, ai, bi) = self.coef[i];
            let (sj, aj, bj) = self.coef[j];
            for (p, wp) in [(si, ai), (si + 1, bi)] {
                for (q, wq) in [(sj, aj), (sj + 1, bj)] {
                    // the mirrored entry comes from the transposed pair
                    if wp != 0.0 && wq != 0.0 && p <= q {
                        ht.add(p, q, wp * wq * hv);
                    }
                }
            }
        };
        for j in 0..v.len() {
            add(j, j, h.diag[j]);
            if j + 1 < v.len() {
                add(j, j + 1, h.off1[j]);
                add(j + 1, j, h.off1[j]);
            }
        }
        (gt, ht)
    }
}

/// Newton on `σ(Bθ)` with active constraints held at equality; `None` if the
/// reduced problem fails to converge.
fn solve_reduced(red: &Reduced, weights: &[f64], start: &[f64]) -> Option<Vec<f64>> {
    let mut theta: Vec<f64> = red.keep.iter().map(|&j| start[j]).collect();
    let value = |t: &[f64]| sigma(red.knots, weights, &red.expand(t));
    let mut previous = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let v = red.expand(&theta);
        let (g, h) = red.gradient_and_hessian(weights, &v);
        let step = h.solve(&g)?;
        let decrement = 0.5 * g.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
        let f0 = value(&theta);
        // rounding floors the decrement once it stops shrinking quadratically
        let floor = decrement <= 1e-14 * (1.0 + f0.abs()) && decrement > 0.5 * previous;
        if decrement <= 1e-26 * (1.0 + f0.abs()) || floor {
            return Some(v);
        }
        previous = decrement;
        if decrement <= 1e-10 {
            // quadratic region: σ can no longer resolve the improvement
            theta.iter_mut().zip(&step).for_each(|(x, s)| *x -= s);
            continue;
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(x, s)| x - t * s).collect();
            let f1 = value(&trial);
            if f1 <= f0 - 0.25 * t * 2.0 * decrement {
                theta = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // no further progress at rounding level
                return (decrement <= 1e-16).then(|| red.expand(&theta));
            }
        }
    }
    None
}

/// Active-set refinement of a barrier solution: hold the concavity
/// constraints outside `keep` at equality, solve exactly, and repair the set
/// until margins and multipliers have the right signs.
fn polish(knots: &[f64], weights: &[f64], start: &[f64], mut keep: Vec<usize>) -> Option<Vec<f64>> {
    let mut v = start.to_vec();
    for _ in 0..knots.len() {
        let red = Reduced::new(knots, keep.clone());
        v = solve_reduced(&red, weights, &v)?;
        let c = margins(knots, &v);
        // retained interior kink with a non-positive margin
        let worst_kept = keep[1..keep.len() - 1]
            .iter()
            .map(|&k| (k, c[k - 1]))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, ck)) = worst_kept {
            if ck <= 0.0 {
                keep.retain(|&j| j != k);
                continue;
            }
        }
        // multiplier of a dropped kink: λ_k = -∇σ·(τ - τ_k)_+
        let g = Barrier {
            knots,
            weights,
            mu: 0.0,
        }
        .gradient_and_hessian(&v)
        .0;
        let worst_dropped = (1..knots.len() - 1)
            .filter(|k| !keep.contains(k))
            .map(|k| {
                let lambda: f64 = -(k..knots.len()).map(|j| g[j] * (knots[j] - knots[k])).sum::<f64>();
                (k, lambda)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst_dropped {
            Some((k, lambda)) if lambda < -1e-12 => {
                let pos = keep.partition_point(|&j| j < k);
                keep.insert(pos, k);
            }
            _ => return Some(v),
        }
    }
    None
}

/// Fits the log-concave MLE by barrier Newton over the distinct sample points.
pub fn fit_logconcave_mle(samples: &[f64]) -> Result<MleDensity> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::DegenerateSample(format!("need at least 3 samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &x in &sorted {
        if knots.last() == Some(&x) {
            *counts.last_mut().expect("nonempty") += 1;
        } else {
            knots.push(x);
            counts.push(1);
        }
    }
    if knots.len() < 2 {
        return Err(Error::DegenerateSample("all samples are equal".into()));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    // Gaussian log-density fitted to the sample is strictly concave, hence a
    // strictly feasible start.
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt().max(f64::MIN_POSITIVE);
    let norm = -(sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let mut v: Vec<f64> = knots.iter().map(|x| norm - 0.5 * ((x - mean) / sd).powi(2)).collect();
    if margins(&knots, &v).iter().any(|&c| !(c > 0.0)) {
        return Err(Error::NotConverged("could not build a strictly concave starting point".into()));
    }

    let mut mu = MU_START;
    let mut decrement;
    loop {
        let barrier = Barrier {
            knots: &knots,
            weights: &weights,
            mu,
        };
        decrement = barrier.center(&mut v);
        log::debug!("log-concave barrier mu={mu:e} decrement={decrement:e}");
        if mu <= MU_END * (1.0 + 1e-9) {
            break;
        }
        mu = (mu * MU_FACTOR).max(MU_END);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotConverged("barrier Newton produced non-finite values".into()));
    }
    let stalled = !(decrement <= STALL_TOL);
    let c = margins(&knots, &v);
    // complementarity at the last barrier center: c_j · λ_j = μ
    let mut keep = vec![0];
    keep.extend((0..c.len()).filter(|&j| c[j] * c[j] > mu).map(|j| j + 1));
    keep.push(knots.len() - 1);
    // A polished point passed its own KKT check, so it settles a stalled barrier.
    match polish(&knots, &weights, &v, keep) {
        Some(pv) if sigma(&knots, &weights, &pv) <= sigma(&knots, &weights, &v) + 1e-12 => v = pv,
        _ if stalled => {
            return Err(Error::NotConverged(format!("barrier Newton stopped with decrement {decrement:e}")));
        }
        _ => log::warn!("active-set polish failed; keeping the barrier solution"),
    }
    let density = MleDensity {
        knots,
        log_values: v,
        weights,
        sample_size: n,
    };
    let integral = density.integral();
    if (integral - 1.0).abs() > 1e-6 {
        log::warn!("fitted log-concave density integrates to {integral}");
    }
    Ok(density)
}

/// `ĝ = -φ̂` as a piecewise-linear penalty on the knot range.
pub fn penalty_from_mle(d: &MleDensity) -> Result<Penalty> {
    let values: Vec<f64> = d.log_values.iter().map(|v| -v).collect();
    Penalty::piecewise_linear(d.knots.clone(), values)
}

/// Gradient of `σ` at `v` for the knots and weights of `d`.
pub fn objective_gradient(d: &MleDensity, v: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = d.weights.iter().map(|w| -w).collect();
    for j in 0..v.len() - 1 {
        let dt = d.knots[j + 1] - d.knots[j];
        let [_, ja, jb, ..] = segment_derivatives(v[j], v[j + 1]);
        g[j] += dt * ja;
        g[j + 1] += dt * jb;
    }
    g
}
