//! Linear time-varying system, supervectors, and the block supermatrices
//! `A` (dynamics) and `H` (measurements).
//!
//! States are indexed `0..=T`. The dynamics are `x_0 = w_0` and
//! `x_{t+1} = F_t x_t + w_{t+1}`; measurements are `z_t = H_t x_t + v_t`.
//! In supervector form the dynamics read `A x = w`, where `A` is unit
//! lower block-bidiagonal with `-F_t` on the subdiagonal, and the measurement
//! map is the block-diagonal `H = diag(H_0, .., H_T)`.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};

use crate::error::{Error, Result};

/// A per-time-step variable stacked over all `T + 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    data: DVector<f64>,
    block_dim: usize,
}

impl Supervector {
    pub fn zeros(blocks: usize, block_dim: usize) -> Self {
        Supervector {
            data: DVector::zeros(blocks * block_dim),
            block_dim,
        }
    }

    pub fn from_flat(data: DVector<f64>, block_dim: usize) -> Result<Self> {
        if block_dim == 0 || !data.len().is_multiple_of(block_dim) {
            return Err(Error::dims("supervector length", block_dim, data.len()));
        }
        Ok(Supervector { data, block_dim })
    }

    pub fn from_blocks(blocks: &[DVector<f64>]) -> Result<Self> {
        let block_dim = blocks
            .first()
            .map(|b| b.len())
            .ok_or_else(|| Error::dims("supervector blocks", 1, 0))?;
        let mut data = DVector::zeros(blocks.len() * block_dim);
        for (t, b) in blocks.iter().enumerate() {
            if b.len() != block_dim {
                return Err(Error::dims(format!("supervector block {t}"), block_dim, b.len()));
            }
            data.rows_mut(t * block_dim, block_dim).copy_from(b);
        }
        Supervector::from_flat(data, block_dim)
    }

    /// Builds a supervector from rows of plain numbers, one row per step.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let blocks: Vec<DVector<f64>> = rows
            .iter()
            .map(|r| DVector::from_column_slice(r))
            .collect();
        Supervector::from_blocks(&blocks)
    }

    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.block_dim
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn block(&self, t: usize) -> DVectorView<'_, f64> {
        self.data.rows(t * self.block_dim, self.block_dim)
    }

    pub fn block_mut(&mut self, t: usize) -> DVectorViewMut<'_, f64> {
        self.data.rows_mut(t * self.block_dim, self.block_dim)
    }

    pub fn blocks(&self) -> impl Iterator<Item = DVectorView<'_, f64>> + '_ {
        (0..self.num_blocks()).map(move |t| self.block(t))
    }

    pub fn as_flat(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_flat(self) -> DVector<f64> {
        self.data
    }

    pub fn dot(&self, other: &Supervector) -> f64 {
        self.data.dot(&other.data)
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.blocks().map(|b| b.iter().copied().collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStructure {
    /// Identity diagonal blocks, arbitrary blocks on the first subdiagonal.
    UnitLowerBidiagonal,
    BlockDiagonal,
}

/// Dense supermatrix with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub matrix: DMatrix<f64>,
    pub structure: BlockStructure,
    pub block_rows: usize,
    pub block_cols: usize,
}

impl BlockMatrix {
    pub fn num_blocks(&self) -> usize {
        self.matrix.nrows() / self.block_rows
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.matrix
            .view(
                (i * self.block_rows, j * self.block_cols),
                (self.block_rows, self.block_cols),
            )
            .into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    state_dim: usize,
    meas_dim: usize,
    dynamics: Vec<DMatrix<f64>>,
    measurement: Vec<DMatrix<f64>>,
}

impl LinearSystem {
    /// `dynamics` holds `F_0..F_{T-1}`, `measurement` holds `H_0..H_T`.
    pub fn new(dynamics: Vec<DMatrix<f64>>, measurement: Vec<DMatrix<f64>>) -> Result<Self> {
        let h0 = measurement
            .first()
            .ok_or_else(|| Error::InvalidSystem("at least one measurement matrix is required".into()))?;
        let (meas_dim, state_dim) = h0.shape();
        if state_dim == 0 || meas_dim == 0 {
            return Err(Error::InvalidSystem("state and measurement dimensions must be >= 1".into()));
        }
        if measurement.len() != dynamics.len() + 1 {
            return Err(Error::dims(
                "number of measurement matrices (T + 1)",
                dynamics.len() + 1,
                measurement.len(),
            ));
        }
        for (t, f) in dynamics.iter().enumerate() {
            if f.shape() != (state_dim, state_dim) {
                return Err(Error::InvalidSystem(format!(
                    "F_{t} has shape {:?}, expected ({state_dim}, {state_dim})",
                    f.shape()
                )));
            }
        }
        for (t, h) in measurement.iter().enumerate() {
            if h.shape() != (meas_dim, state_dim) {
                return Err(Error::InvalidSystem(format!(
                    "H_{t} has shape {:?}, expected ({meas_dim}, {state_dim})",
                    h.shape()
                )));
            }
        }
        if dynamics.iter().chain(&measurement).any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSystem("matrix entries must be finite".into()));
        }
        Ok(LinearSystem {
            state_dim,
            meas_dim,
            dynamics,
            measurement,
        })
    }

    /// Time-invariant system with `horizon` steps.
    pub fn time_invariant(horizon: usize, f: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        LinearSystem::new(vec![f; horizon], vec![h; horizon + 1])
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.len()
    }

    pub fn num_steps(&self) -> usize {
        self.dynamics.len() + 1
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn meas_dim(&self) -> usize {
        self.meas_dim
    }

    pub fn dynamics(&self) -> &[DMatrix<f64>] {
        &self.dynamics
    }

    pub fn measurement(&self) -> &[DMatrix<f64>] {
        &self.measurement
    }

    pub fn dynamics_supermatrix(&self) -> BlockMatrix {
        let n = self.state_dim;
        let steps = self.num_steps();
        let mut a = DMatrix::identity(steps * n, steps * n);
        for (t, f) in self.dynamics.iter().enumerate() {
            a.view_mut(((t + 1) * n, t * n), (n, n)).copy_from(&(-f));
        }
        BlockMatrix {
            matrix: a,
            structure: BlockStructure::UnitLowerBidiagonal,
            block_rows: n,
            block_cols: n,
        }
    }

    pub fn measurement_supermatrix(&self) -> BlockMatrix {
        let (m, n) = (self.meas_dim, self.state_dim);
        let steps = self.num_steps();
        let mut h = DMatrix::zeros(steps * m, steps * n);
        for (t, ht) in self.measurement.iter().enumerate() {
            h.view_mut((t * m, t * n), (m, n)).copy_from(ht);
        }
        BlockMatrix {
            matrix: h,
            structure: BlockStructure::BlockDiagonal,
            block_rows: m,
            block_cols: n,
        }
    }

    fn check_len(&self, what: &str, v: &DVector<f64>, block: usize) -> Result<()> {
        let expected = self.num_steps() * block;
        if v.len() != expected {
            return Err(Error::dims(what, expected, v.len()));
        }
        Ok(())
    }

    fn check_super(&self, what: &str, v: &Supervector, block: usize) -> Result<()> {
        if v.block_dim() != block || v.num_blocks() != self.num_steps() {
            return Err(Error::dims(what, self.num_steps() * block, v.as_flat().len()));
        }
        Ok(())
    }

    /// `A x` on flat storage: `(Ax)_0 = x_0`, `(Ax)_{t+1} = x_{t+1} - F_t x_t`.
    pub fn apply_dynamics_flat(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.state_dim;
        let mut out = x.clone();
        for (t, f) in self.dynamics.iter().enumerate() {
            let prev = x.rows(t * n, n);
            let mut next = out.rows_mut((t + 1) * n, n);
            next.gemv(-1.0, f, &prev, 1.0);
        }
        out
    }

    /// `A' y`: `(A'y)_t = y_t - F_t' y_{t+1}` for `t < T`, `(A'y)_T = y_T`.
    pub fn apply_dynamics_transpose_flat(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.state_dim;
        let mut out = y.clone();
        for (t, f) in self.dynamics.iter().enumerate() {
            let next = y.rows((t + 1) * n, n);
            let mut cur = out.rows_mut(t * n, n);
            cur.gemv_tr(-1.0, f, &next, 1.0);
        }
        out
    }

    /// Forward substitution for `A x = w`.
    pub fn solve_dynamics_flat(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.state_dim;
        let mut x = w.clone();
        for (t, f) in self.dynamics.iter().enumerate() {
            let prev = x.rows(t * n, n).into_owned();
            let mut next = x.rows_mut((t + 1) * n, n);
            next.gemv(1.0, f, &prev, 1.0);
        }
        x
    }

    /// Backward substitution for `A' y = r`: `y_T = r_T`,
    /// `y_t = r_t + F_t' y_{t+1}`.
    pub fn solve_dynamics_transpose_flat(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.state_dim;
        let mut y = r.clone();
        for (t, f) in self.dynamics.iter().enumerate().rev() {
            let next = y.rows((t + 1) * n, n).into_owned();
            let mut cur = y.rows_mut(t * n, n);
            cur.gemv_tr(1.0, f, &next, 1.0);
        }
        y
    }

    pub fn apply_measurement_flat(&self, x: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.meas_dim, self.state_dim);
        let mut out = DVector::zeros(self.num_steps() * m);
        for (t, h) in self.measurement.iter().enumerate() {
            out.rows_mut(t * m, m).gemv(1.0, h, &x.rows(t * n, n), 0.0);
        }
        out
    }

    pub fn apply_measurement_transpose_flat(&self, u: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.meas_dim, self.state_dim);
        let mut out = DVector::zeros(self.num_steps() * n);
        for (t, h) in self.measurement.iter().enumerate() {
            out.rows_mut(t * n, n).gemv_tr(1.0, h, &u.rows(t * m, m), 0.0);
        }
        out
    }

    /// Adjoint states of the dual control problem: `y = A^{-T} H' u`, i.e.
    /// `y_T = H_T' u_T` and `y_t = F_t' y_{t+1} + H_t' u_t`.
    pub fn adjoint_states_flat(&self, u: &DVector<f64>) -> DVector<f64> {
        self.solve_dynamics_transpose_flat(&self.apply_measurement_transpose_flat(u))
    }

    pub fn states_from_noise(&self, w: &Supervector) -> Result<Supervector> {
        self.check_super("process noise supervector", w, self.state_dim)?;
        Supervector::from_flat(self.solve_dynamics_flat(w.as_flat()), self.state_dim)
    }

    /// Dynamics residual `w = A x` and measurement residual `v = z - H x`.
    pub fn residuals(&self, x: &Supervector, z: &Supervector) -> Result<(Supervector, Supervector)> {
        self.check_super("state supervector", x, self.state_dim)?;
        self.check_super("measurement supervector", z, self.meas_dim)?;
        let w = self.apply_dynamics_flat(x.as_flat());
        let v = z.as_flat() - self.apply_measurement_flat(x.as_flat());
        Ok((
            Supervector::from_flat(w, self.state_dim)?,
            Supervector::from_flat(v, self.meas_dim)?,
        ))
    }

    pub fn adjoint_states(&self, u: &Supervector) -> Result<Supervector> {
        self.check_super("control supervector", u, self.meas_dim)?;
        Supervector::from_flat(self.adjoint_states_flat(u.as_flat()), self.state_dim)
    }

    pub(crate) fn check_state_flat(&self, x: &DVector<f64>) -> Result<()> {
        self.check_len("state supervector", x, self.state_dim)
    }

    pub(crate) fn check_meas_flat(&self, z: &DVector<f64>) -> Result<()> {
        self.check_len("measurement supervector", z, self.meas_dim)
    }
}
