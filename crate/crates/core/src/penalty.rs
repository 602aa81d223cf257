//! Extended-real-valued convex penalties.
//!
//! Every penalty exposes its value, its Fenchel conjugate
//! `p*(y) = sup_x { x'y - p(x) }`, the proximal map
//! `prox_{τp}(v) = argmin_w { p(w) + ‖w - v‖² / (2τ) }`, the proximal map of
//! the conjugate, and its (box-shaped) effective domain.
//!
//! Four kinds are supported, all piecewise linear-quadratic:
//!
//! - `Quadratic`: `½ x'Mx` with `M` symmetric PSD.
//! - `Monitoring`: `ρ_{U,M}(x) = sup_{u ∈ U} { x'u - ½ u'Mu }` with a box `U`
//!   and diagonal `M ⪰ 0`. Its conjugate is `½ y'My` on `U`, `+inf` off it.
//! - `PiecewiseLinear`: a convex interpolant of `(τ_j, g_j)` on `[τ_1, τ_m]`,
//!   `+inf` outside.
//! - `Zero`: the indicator of `{0}`.
//!
//! Domain membership is tested with a slack of [`DOMAIN_TOL`] (relative to the
//! bound magnitude); points inside the slack are evaluated at their projection
//! onto the domain.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::sim::Rng;

/// Slack used for domain membership of boxes, intervals, and `{0}`.
pub const DOMAIN_TOL: f64 = 1e-9;

const PSD_FLOOR: f64 = -1e-10;
const SLOPE_TOL: f64 = 1e-12;

fn slack(bound: f64) -> f64 {
    DOMAIN_TOL * (1.0 + bound.abs())
}

/// Interval membership with slack; infinite bounds never reject.
fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo == f64::NEG_INFINITY || x >= lo - slack(lo)) && (hi == f64::INFINITY || x <= hi + slack(hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPenalty {
    m: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    null_tol: f64,
}

impl QuadraticPenalty {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l > self.null_tol)
    }

    /// `Q diag(scale(λ)) Q' v`.
    fn spectral_apply(&self, v: &[f64], scale: impl Fn(f64) -> f64) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let mut coeffs = self.eigenvectors.tr_mul(&v);
        for (c, &l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= scale(l);
        }
        (&self.eigenvectors * coeffs).iter().copied().collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.m * &x))
    }

    fn conjugate_value(&self, y: &[f64]) -> ExtReal {
        let yv = DVector::from_column_slice(y);
        let coeffs = self.eigenvectors.tr_mul(&yv);
        let mut null_sq = 0.0;
        let mut value = 0.0;
        for (&c, &l) in coeffs.iter().zip(self.eigenvalues.iter()) {
            if l > self.null_tol {
                value += 0.5 * c * c / l;
            } else {
                null_sq += c * c;
            }
        }
        if null_sq.sqrt() > DOMAIN_TOL * (1.0 + yv.norm()) {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(value)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringPenalty {
    lower: Vec<f64>,
    upper: Vec<f64>,
    m_diag: Vec<f64>,
}

impl MonitoringPenalty {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn m_diag(&self) -> &[f64] {
        &self.m_diag
    }

    fn coord_domain(&self, i: usize) -> (f64, f64) {
        if self.m_diag[i] > 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let lo = if self.lower[i].is_finite() { f64::NEG_INFINITY } else { 0.0 };
        let hi = if self.upper[i].is_finite() { f64::INFINITY } else { 0.0 };
        (lo, hi)
    }

    fn coord_value(&self, i: usize, x: f64) -> f64 {
        let (l, u, m) = (self.lower[i], self.upper[i], self.m_diag[i]);
        if m > 0.0 {
            let c = (x / m).clamp(l, u);
            x * c - 0.5 * m * c * c
        } else if x > 0.0 {
            x * u
        } else if x < 0.0 {
            x * l
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn lo(&self) -> f64 {
        self.knots[0]
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn value(&self, x: f64) -> ExtReal {
        if !within(x, self.lo(), self.hi()) {
            return ExtReal::PosInf;
        }
        let x = x.clamp(self.lo(), self.hi());
        let j = self.knots.partition_point(|&k| k <= x).clamp(1, self.knots.len() - 1) - 1;
        ExtReal::Finite(self.values[j] + self.slopes[j] * (x - self.knots[j]))
    }

    fn conjugate_value(&self, y: f64) -> f64 {
        self.knots
            .iter()
            .zip(&self.values)
            .map(|(&k, &g)| k * y - g)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn prox(&self, v: f64, step: f64) -> f64 {
        let mut slopes = Vec::with_capacity(self.slopes.len() + 2);
        slopes.push(f64::NEG_INFINITY);
        slopes.extend_from_slice(&self.slopes);
        slopes.push(f64::INFINITY);
        pwl_prox(&self.knots, &slopes, v, step)
    }

    /// The conjugate is convex piecewise linear with breakpoints at the
    /// slopes and slopes equal to the knots.
    fn conjugate_prox(&self, v: f64, step: f64) -> f64 {
        pwl_prox(&self.slopes, &self.knots, v, step)
    }

    fn conjugate_gradient(&self, y: f64) -> Option<f64> {
        let scores: Vec<f64> = self.knots.iter().zip(&self.values).map(|(&k, &g)| k * y - g).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + best.abs());
        let mut active = scores.iter().enumerate().filter(|(_, &s)| s >= best - tol);
        let (j, _) = active.next()?;
        if active.next().is_some() {
            None
        } else {
            Some(self.knots[j])
        }
    }
}

/// Proximal map of a 1-D convex piecewise-linear function.
///
/// `slopes[k]` is the slope on `(breaks[k-1], breaks[k])` with
/// `breaks[-1] = -inf`, `breaks[len] = +inf`; `slopes.len() == breaks.len() + 1`.
/// Infinite end slopes encode a bounded domain. Returns the unique `y` with
/// `v - y ∈ step · ∂h(y)`.
fn pwl_prox(breaks: &[f64], slopes: &[f64], v: f64, step: f64) -> f64 {
    debug_assert_eq!(slopes.len(), breaks.len() + 1);
    // The v-range mapped onto break k is [b_k + step s_k, b_k + step s_{k+1}];
    // these ranges are ordered in k, so binary search on their upper ends.
    let (mut lo, mut hi) = (0usize, breaks.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if v <= breaks[mid] + step * slopes[mid + 1] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let k = lo;
    if k == breaks.len() {
        return v - step * slopes[k];
    }
    if v >= breaks[k] + step * slopes[k] {
        breaks[k]
    } else {
        v - step * slopes[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Quadratic(QuadraticPenalty),
    Monitoring(MonitoringPenalty),
    PiecewiseLinear(PiecewiseLinear),
    Zero { dim: usize },
}

impl Penalty {
    pub fn quadratic(m: DMatrix<f64>) -> Result<Self> {
        let (r, c) = m.shape();
        if r == 0 || r != c {
            return Err(Error::InvalidPenalty(format!("quadratic M must be square and non-empty, got {r}x{c}")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPenalty("quadratic M must be finite".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidPenalty("quadratic M must be symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let min_eig = eig.eigenvalues.min();
        if min_eig < PSD_FLOOR * scale {
            return Err(Error::InvalidPenalty(format!(
                "quadratic M must be positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        let eigenvalues = eig.eigenvalues.map(|l| l.max(0.0));
        let null_tol = 1e-12 * eigenvalues.max().max(1.0);
        Ok(Penalty::Quadratic(QuadraticPenalty {
            m: sym,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
            null_tol,
        }))
    }

    /// `½ ‖x‖²` in dimension `dim`.
    pub fn squared_norm(dim: usize) -> Result<Self> {
        Penalty::quadratic(DMatrix::identity(dim, dim))
    }

    pub fn monitoring(lower: Vec<f64>, upper: Vec<f64>, m_diag: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || m_diag.len() != d {
            return Err(Error::InvalidPenalty(format!(
                "monitoring bounds and M diagonal must share a non-zero length (l: {}, u: {}, M: {})",
                lower.len(),
                upper.len(),
                m_diag.len()
            )));
        }
        for i in 0..d {
            let (l, u, m) = (lower[i], upper[i], m_diag[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(Error::InvalidPenalty(format!("monitoring box is empty in coordinate {i}: [{l}, {u}]")));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidPenalty(format!("monitoring M diagonal must be finite and >= 0 (coordinate {i})")));
            }
        }
        Ok(Penalty::Monitoring(MonitoringPenalty { lower, upper, m_diag }))
    }

    /// `|x|` as the monitoring function of `U = [-1, 1]`, `M = 0`.
    pub fn absolute_value() -> Self {
        Penalty::monitoring(vec![-1.0], vec![1.0], vec![0.0]).expect("valid box")
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || values.len() != knots.len() {
            return Err(Error::InvalidPenalty(format!(
                "piecewise-linear penalty needs >= 2 knots and one value per knot (knots: {}, values: {})",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPenalty("knots and values must be finite".into()));
        }
        if let Some(i) = knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::UnsortedKnots(i + 1));
        }
        let slopes: Vec<f64> = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(k, g)| (g[1] - g[0]) / (k[1] - k[0]))
            .collect();
        if let Some(i) = slopes.windows(2).position(|s| s[1] < s[0] - SLOPE_TOL * (1.0 + s[0].abs())) {
            return Err(Error::InvalidPenalty(format!("piecewise-linear penalty is not convex at knot {}", i + 1)));
        }
        // Remove sub-tolerance slope decreases so the conjugate breakpoints are sorted.
        let mut slopes = slopes;
        for i in 1..slopes.len() {
            slopes[i] = slopes[i].max(slopes[i - 1]);
        }
        Ok(Penalty::PiecewiseLinear(PiecewiseLinear { knots, values, slopes }))
    }

    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPenalty("zero indicator needs dimension >= 1".into()));
        }
        Ok(Penalty::Zero { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Penalty::Quadratic(q) => q.m.nrows(),
            Penalty::Monitoring(m) => m.lower.len(),
            Penalty::PiecewiseLinear(_) => 1,
            Penalty::Zero { dim } => *dim,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Penalty::Quadratic(_) => "quadratic",
            Penalty::Monitoring(_) => "monitoring",
            Penalty::PiecewiseLinear(_) => "pwl",
            Penalty::Zero { .. } => "zero",
        }
    }

    /// Every implemented kind is convex piecewise linear-quadratic.
    pub fn is_plq(&self) -> bool {
        true
    }

    fn check_dim(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dims(format!("{} penalty {what}", self.kind_name()), self.dim(), v.len()));
        }
        Ok(())
    }

    fn check_step(step: f64) -> Result<()> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidPenalty(format!("proximal step must be positive and finite, got {step}")));
        }
        Ok(())
    }

    /// Effective domain as a box, one `(lo, hi)` pair per coordinate.
    pub fn domain_box(&self) -> Vec<(f64, f64)> {
        match self {
            Penalty::Quadratic(q) => vec![(f64::NEG_INFINITY, f64::INFINITY); q.m.nrows()],
            Penalty::Monitoring(m) => (0..m.lower.len()).map(|i| m.coord_domain(i)).collect(),
            Penalty::PiecewiseLinear(p) => vec![(p.lo(), p.hi())],
            Penalty::Zero { dim } => vec![(0.0, 0.0); *dim],
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<ExtReal> {
        self.check_dim("argument", x)?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> ExtReal {
        if !self.domain_box().iter().zip(x).all(|(&(lo, hi), &xi)| within(xi, lo, hi)) {
            return ExtReal::PosInf;
        }
        let clamped: Vec<f64> = self
            .domain_box()
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &xi)| xi.clamp(lo, hi))
            .collect();
        match self {
            Penalty::Quadratic(q) => ExtReal::Finite(q.value(&clamped)),
            Penalty::Monitoring(m) => {
                ExtReal::from(clamped.iter().enumerate().map(|(i, &xi)| m.coord_value(i, xi)).sum::<f64>())
            }
            Penalty::PiecewiseLinear(p) => p.value(clamped[0]),
            Penalty::Zero { .. } => ExtReal::ZERO,
        }
    }

    pub fn conjugate_value(&self, y: &[f64]) -> Result<ExtReal> {
        self.check_dim("conjugate argument", y)?;
        Ok(self.conjugate_value_unchecked(y))
    }

    pub(crate) fn conjugate_value_unchecked(&self, y: &[f64]) -> ExtReal {
        match self {
            Penalty::Quadratic(q) => q.conjugate_value(y),
            Penalty::Monitoring(m) => {
                let mut total = 0.0;
                for (i, &yi) in y.iter().enumerate() {
                    if !within(yi, m.lower[i], m.upper[i]) {
                        return ExtReal::PosInf;
                    }
                    let c = yi.clamp(m.lower[i], m.upper[i]);
                    total += 0.5 * m.m_diag[i] * c * c;
                }
                ExtReal::Finite(total)
            }
            Penalty::PiecewiseLinear(p) => ExtReal::from(p.conjugate_value(y[0])),
            Penalty::Zero { .. } => ExtReal::ZERO,
        }
    }

    /// `argmin_w { p(w) + ‖w - v‖² / (2 step) }`.
    pub fn prox(&self, v: &[f64], step: f64) -> Result<Vec<f64>> {
        self.check_dim("prox argument", v)?;
        Self::check_step(step)?;
        Ok(self.prox_unchecked(v, step))
    }

    pub(crate) fn prox_unchecked(&self, v: &[f64], step: f64) -> Vec<f64> {
        match self {
            Penalty::Quadratic(q) => q.spectral_apply(v, |l| 1.0 / (1.0 + step * l)),
            Penalty::Monitoring(m) => v
                .iter()
                .enumerate()
                .map(|(i, &vi)| vi - step * (vi / (step + m.m_diag[i])).clamp(m.lower[i], m.upper[i]))
                .collect(),
            Penalty::PiecewiseLinear(p) => vec![p.prox(v[0], step)],
            Penalty::Zero { dim } => vec![0.0; *dim],
        }
    }

    /// `prox_{step · p*}(v)`, in closed form for every kind. The Moreau
    /// identity `prox_{τp*}(v) + τ prox_{p/τ}(v/τ) = v` ties it to [`Penalty::prox`].
    pub fn conjugate_prox(&self, v: &[f64], step: f64) -> Result<Vec<f64>> {
        self.check_dim("conjugate prox argument", v)?;
        Self::check_step(step)?;
        Ok(self.conjugate_prox_unchecked(v, step))
    }

    pub(crate) fn conjugate_prox_unchecked(&self, v: &[f64], step: f64) -> Vec<f64> {
        match self {
            Penalty::Quadratic(q) => {
                let tol = q.null_tol;
                q.spectral_apply(v, |l| if l > tol { l / (l + step) } else { 0.0 })
            }
            Penalty::Monitoring(m) => v
                .iter()
                .enumerate()
                .map(|(i, &vi)| (vi / (1.0 + step * m.m_diag[i])).clamp(m.lower[i], m.upper[i]))
                .collect(),
            Penalty::PiecewiseLinear(p) => vec![p.conjugate_prox(v[0], step)],
            Penalty::Zero { .. } => v.to_vec(),
        }
    }

    /// Gradient of the conjugate at `y`, i.e. the unique minimiser of
    /// `p(w) - w'y`. `None` when the conjugate is not differentiable at `y`
    /// (or `y` lies outside its domain).
    pub fn conjugate_gradient(&self, y: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim("conjugate gradient argument", y)?;
        Ok(match self {
            Penalty::Quadratic(q) => {
                if q.is_positive_definite() {
                    Some(q.spectral_apply(y, |l| 1.0 / l))
                } else {
                    None
                }
            }
            Penalty::Monitoring(m) => {
                let interior = y
                    .iter()
                    .enumerate()
                    .all(|(i, &yi)| yi > m.lower[i] + slack(m.lower[i]) && yi < m.upper[i] - slack(m.upper[i]));
                interior.then(|| y.iter().zip(&m.m_diag).map(|(&yi, &mi)| mi * yi).collect())
            }
            Penalty::PiecewiseLinear(p) => p.conjugate_gradient(y[0]).map(|g| vec![g]),
            Penalty::Zero { dim } => Some(vec![0.0; *dim]),
        })
    }

    /// A point in the interior of the domain, if the domain has one.
    pub fn interior_point(&self) -> Option<Vec<f64>> {
        match self {
            Penalty::PiecewiseLinear(p) => Some(vec![0.5 * (p.lo() + p.hi())]),
            Penalty::Zero { .. } => None,
            _ => self
                .domain_box()
                .iter()
                .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
                    (false, false) => Some(0.0),
                    (false, true) if hi > 0.0 => Some(0.0),
                    (false, true) => Some(hi - 1.0),
                    (true, false) if lo < 0.0 => Some(0.0),
                    (true, false) => Some(lo + 1.0),
                    (true, true) if lo < hi => Some(0.5 * (lo + hi)),
                    (true, true) => None,
                })
                .collect(),
        }
    }

    /// Some point of the domain (an interior point when one exists).
    pub fn domain_point(&self) -> Vec<f64> {
        self.interior_point().unwrap_or_else(|| {
            self.domain_box()
                .iter()
                .map(|&(lo, hi)| if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 })
                .collect()
        })
    }

    /// Whether `x` lies in the interior of the domain.
    pub fn in_interior(&self, x: &[f64]) -> bool {
        self.domain_box()
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &xi)| lo < hi && xi > lo && xi < hi)
    }

    /// Runtime level-boundedness check: the value must grow from radius
    /// `1e2` to radius `1e3` along `rays` random directions.
    pub fn is_level_bounded(&self, rays: usize, rng: &mut Rng) -> bool {
        let d = self.dim();
        // exact test: 0 ∈ int dom f*; the rays alone miss flat directions
        let exact = match self {
            Penalty::Quadratic(q) => q.is_positive_definite(),
            Penalty::Monitoring(m) => m.lower.iter().zip(&m.upper).all(|(&l, &u)| l < 0.0 && u > 0.0),
            Penalty::PiecewiseLinear(_) | Penalty::Zero { .. } => true,
        };
        exact && (0..rays).all(|_| {
            let mut dir: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|v| *v /= norm);
            let at = |r: f64| self.value_unchecked(&dir.iter().map(|v| v * r).collect::<Vec<_>>());
            match (at(1e2), at(1e3)) {
                (_, ExtReal::PosInf) => true,
                (ExtReal::Finite(near), ExtReal::Finite(far)) => far > near,
                _ => false,
            }
        })
    }
}

/// Result of the brute-force conjugate oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConjugate {
    pub value: ExtReal,
    pub argmax: f64,
    /// The maximum sat on a grid endpoint; the window is likely too small.
    pub at_endpoint: bool,
}

/// Brute-force conjugate of a 1-D penalty: `max_k { x_k y - p(x_k) }` over the
/// grid `x_k = a + k h` on `[a, b]`.
pub fn numeric_conjugate_oracle(p: &Penalty, y: f64, a: f64, b: f64, h: f64) -> Result<GridConjugate> {
    if p.dim() != 1 {
        return Err(Error::dims("numeric conjugate oracle penalty", 1, p.dim()));
    }
    if !(h > 0.0) || !(b > a) {
        return Err(Error::InvalidPenalty(format!("invalid grid [{a}, {b}] with step {h}")));
    }
    let count = ((b - a) / h).round() as usize;
    let mut best = GridConjugate {
        value: ExtReal::NegInf,
        argmax: a,
        at_endpoint: false,
    };
    let mut best_k = 0;
    for k in 0..=count {
        let x = if k == count { b } else { a + k as f64 * h };
        if let ExtReal::Finite(px) = p.value_unchecked(&[x]) {
            let score = ExtReal::Finite(x * y - px);
            if score > best.value {
                best.value = score;
                best.argmax = x;
                best_k = k;
            }
        }
    }
    best.at_endpoint = best.value.is_finite() && (best_k == 0 || best_k == count);
    if best.at_endpoint {
        log::warn!("grid conjugate at y = {y} attained at a grid endpoint; widen [{a}, {b}]");
    }
    Ok(best)
}

/// Per-time-step penalties `f(w) = Σ_t f_t(w_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparablePenalty {
    blocks: Vec<Penalty>,
}

impl SeparablePenalty {
    pub fn new(blocks: Vec<Penalty>) -> Result<Self> {
        let dim = blocks
            .first()
            .map(Penalty::dim)
            .ok_or_else(|| Error::InvalidPenalty("separable penalty needs at least one block".into()))?;
        if let Some((t, p)) = blocks.iter().enumerate().find(|(_, p)| p.dim() != dim) {
            return Err(Error::dims(format!("penalty block {t}"), dim, p.dim()));
        }
        Ok(SeparablePenalty { blocks })
    }

    pub fn uniform(p: Penalty, steps: usize) -> Result<Self> {
        SeparablePenalty::new(vec![p; steps])
    }

    pub fn blocks(&self) -> &[Penalty] {
        &self.blocks
    }

    pub fn block(&self, t: usize) -> &Penalty {
        &self.blocks[t]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].dim()
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        let expected = self.blocks.len() * self.block_dim();
        if v.len() != expected {
            return Err(Error::dims("separable penalty argument", expected, v.len()));
        }
        Ok(())
    }

    pub fn value(&self, v: &DVector<f64>) -> Result<ExtReal> {
        self.check(v)?;
        Ok(self.value_unchecked(v))
    }

    pub(crate) fn value_unchecked(&self, v: &DVector<f64>) -> ExtReal {
        let d = self.block_dim();
        self.blocks
            .iter()
            .enumerate()
            .map(|(t, p)| p.value_unchecked(&v.as_slice()[t * d..(t + 1) * d]))
            .sum()
    }

    pub fn conjugate_value(&self, v: &DVector<f64>) -> Result<ExtReal> {
        self.check(v)?;
        Ok(self.conjugate_value_unchecked(v))
    }

    pub(crate) fn conjugate_value_unchecked(&self, v: &DVector<f64>) -> ExtReal {
        let d = self.block_dim();
        self.blocks
            .iter()
            .enumerate()
            .map(|(t, p)| p.conjugate_value_unchecked(&v.as_slice()[t * d..(t + 1) * d]))
            .sum()
    }

    pub(crate) fn conjugate_prox_into(&self, v: &DVector<f64>, step: f64, out: &mut DVector<f64>) {
        let d = self.block_dim();
        for (t, p) in self.blocks.iter().enumerate() {
            let r = t * d..(t + 1) * d;
            let res = p.conjugate_prox_unchecked(&v.as_slice()[r.clone()], step);
            out.as_mut_slice()[r].copy_from_slice(&res);
        }
    }

    pub fn is_plq(&self) -> bool {
        self.blocks.iter().all(Penalty::is_plq)
    }
}
