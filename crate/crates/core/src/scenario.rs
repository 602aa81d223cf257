//! Scenario JSON and CSV input decoding.
//!
//! ```json
//! {
//!   "system": { "T": 10, "F": [[1, 1], [0, 1]], "H": [[1, 1]] },
//!   "process_penalty": { "kind": "quadratic", "M": [[1, 0], [0, 1]] },
//!   "measurement_penalty": { "kind": "mle", "laplace_sample": { "n": 100, "scale": 1, "seed": 7 } },
//!   "measurements": { "simulate": {
//!       "process_noise": { "kind": "gaussian" },
//!       "measurement_noise": { "kind": "laplace", "scale": 1 },
//!       "seed": 42 } },
//!   "solver": { "tol_gap": 1e-9 },
//!   "output_dir": "out"
//! }
//! ```
//!
//! `F` and `H` are either one matrix or a list with one matrix per step.
//! Penalties are either one spec or a list with one spec per time step.
//! Infinite monitoring bounds are written as `null`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::logconcave::{fit_logconcave_mle, penalty_from_mle, MleDensity};
use crate::model::{LinearSystem, Supervector};
use crate::penalty::{Penalty, SeparablePenalty};
use crate::problems::PrimalProblem;
use crate::sim::{laplace_sample, simulate, NoiseSpec, Simulation};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub system: SystemSpec,
    pub process_penalty: OneOrMany<PenaltySpec>,
    pub measurement_penalty: OneOrMany<PenaltySpec>,
    pub measurements: MeasurementSource,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "F", default)]
    pub dynamics: Option<OneOrMany<Vec<Vec<f64>>>>,
    #[serde(rename = "H")]
    pub measurement: OneOrMany<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, count: usize, context: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); count]),
            OneOrMany::Many(list) if list.len() == count => Ok(list.clone()),
            OneOrMany::Many(list) => Err(Error::dims(context, count, list.len())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltySpec {
    Quadratic {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
    Monitoring {
        l: Vec<Option<f64>>,
        u: Vec<Option<f64>>,
        #[serde(rename = "M_diag")]
        m_diag: Vec<f64>,
    },
    Pwl {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Zero {},
    /// `-log` of the log-concave MLE fitted to a 1-D sample.
    Mle {
        #[serde(default)]
        samples: Option<Vec<f64>>,
        #[serde(default)]
        samples_csv: Option<PathBuf>,
        #[serde(default)]
        laplace_sample: Option<LaplaceSampleSpec>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceSampleSpec {
    pub n: usize,
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSource {
    Values(Vec<Vec<f64>>),
    Csv(PathBuf),
    Simulate(SimulateSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub process_noise: NoiseSpecJson,
    pub measurement_noise: NoiseSpecJson,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpecJson {
    /// Identity covariance when `covariance` is omitted.
    Gaussian {
        #[serde(default)]
        covariance: Option<Vec<Vec<f64>>>,
    },
    Laplace {
        scale: f64,
    },
    None {},
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub max_iters: Option<usize>,
    pub tol_gap: Option<f64>,
    pub tol_residual: Option<f64>,
    pub step_ratio: Option<f64>,
    pub over_relaxation: Option<f64>,
    pub seed: Option<u64>,
    pub check_every: Option<usize>,
}

impl SolverSpec {
    pub fn to_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_gap: self.tol_gap.unwrap_or(d.tol_gap),
            tol_residual: self.tol_residual.unwrap_or(d.tol_residual),
            step_ratio: self.step_ratio.unwrap_or(d.step_ratio),
            over_relaxation: self.over_relaxation.unwrap_or(d.over_relaxation),
            seed: self.seed.unwrap_or(d.seed),
            check_every: self.check_every.unwrap_or(d.check_every),
            record_history: false,
        }
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: PrimalProblem,
    pub options: SolverOptions,
    /// Ground truth when measurements were simulated.
    pub simulation: Option<Simulation>,
    /// Fitted density when the measurement penalty came from a sample.
    pub density: Option<MleDensity>,
    pub output_dir: Option<PathBuf>,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
}

pub fn parse_penalty_spec(text: &str) -> Result<PenaltySpec> {
    serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
}

/// Reads and resolves a scenario file; relative paths inside it are taken
/// relative to the file's directory.
pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let spec = parse_scenario(&text).map_err(|e| match e {
        Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    spec.resolve(base, seed_override)
}

pub fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Scenario(format!("{context}: matrix must be non-empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Scenario(format!("{context}: row {bad} has {} entries, expected {c}", rows[bad].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Scenario(format!("{context}: entries must be finite")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl PenaltySpec {
    /// Builds the penalty for a block of dimension `dim`. `base` resolves
    /// relative sample paths.
    pub fn build(&self, dim: usize, base: &Path) -> Result<(Penalty, Option<MleDensity>)> {
        let p = match self {
            PenaltySpec::Quadratic { m } => Penalty::quadratic(matrix_from_rows(m, "quadratic M")?)?,
            PenaltySpec::Monitoring { l, u, m_diag } => Penalty::monitoring(
                l.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                u.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
                m_diag.clone(),
            )?,
            PenaltySpec::Pwl { knots, values } => Penalty::piecewise_linear(knots.clone(), values.clone())?,
            PenaltySpec::Zero {} => Penalty::zero(dim)?,
            PenaltySpec::Mle {
                samples,
                samples_csv,
                laplace_sample: lap,
            } => {
                let data = match (samples, samples_csv, lap) {
                    (Some(s), None, None) => s.clone(),
                    (None, Some(path), None) => {
                        let bytes = std::fs::read(base.join(path))?;
                        parse_samples_csv(&bytes)?
                    }
                    (None, None, Some(l)) => laplace_sample(l.n, l.scale, l.seed)?,
                    _ => {
                        return Err(Error::Scenario(
                            "mle penalty needs exactly one of samples, samples_csv, laplace_sample".into(),
                        ))
                    }
                };
                let density = fit_logconcave_mle(&data)?;
                let p = penalty_from_mle(&density)?;
                check_dim(&p, dim)?;
                return Ok((p, Some(density)));
            }
        };
        check_dim(&p, dim)?;
        Ok((p, None))
    }
}

fn check_dim(p: &Penalty, dim: usize) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::dims(format!("{} penalty dimension", p.kind_name()), dim, p.dim()));
    }
    Ok(())
}

impl NoiseSpecJson {
    pub fn build(&self, dim: usize) -> Result<NoiseSpec> {
        Ok(match self {
            NoiseSpecJson::Gaussian { covariance: None } => NoiseSpec::standard_gaussian(dim),
            NoiseSpecJson::Gaussian { covariance: Some(c) } => {
                let covariance = matrix_from_rows(c, "gaussian covariance")?;
                if covariance.nrows() != dim || covariance.ncols() != dim {
                    return Err(Error::dims("gaussian covariance", dim, covariance.nrows()));
                }
                NoiseSpec::Gaussian { covariance }
            }
            NoiseSpecJson::Laplace { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Scenario("laplace scale must be positive".into()));
                }
                NoiseSpec::Laplace { scale: *scale, dim }
            }
            NoiseSpecJson::None {} => NoiseSpec::None { dim },
        })
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearSystem> {
        let steps = self.horizon + 1;
        let h: Vec<DMatrix<f64>> = self
            .measurement
            .expand(steps, "number of H matrices")?
            .iter()
            .map(|m| matrix_from_rows(m, "H"))
            .collect::<Result<_>>()?;
        let f: Vec<DMatrix<f64>> = match &self.dynamics {
            Some(spec) => spec
                .expand(self.horizon, "number of F matrices")?
                .iter()
                .map(|m| matrix_from_rows(m, "F"))
                .collect::<Result<_>>()?,
            None if self.horizon == 0 => Vec::new(),
            None => return Err(Error::Scenario("system.F is required when T > 0".into())),
        };
        LinearSystem::new(f, h)
    }
}

impl ScenarioSpec {
    pub fn resolve(&self, base: &Path, seed_override: Option<u64>) -> Result<Scenario> {
        let system = self.system.build()?;
        let steps = system.num_steps();
        let (nx, nz) = (system.state_dim(), system.meas_dim());
        let process = build_penalties(&self.process_penalty, steps, nx, base, "process_penalty")?.0;
        let (measurement, density) = build_penalties(&self.measurement_penalty, steps, nz, base, "measurement_penalty")?;

        let mut simulation = None;
        let z = match &self.measurements {
            MeasurementSource::Values(rows) => rows_to_measurements(rows, steps, nz)?,
            MeasurementSource::Csv(path) => {
                let bytes = std::fs::read(base.join(path))?;
                rows_to_measurements(&parse_measurements_csv(&bytes)?, steps, nz)?
            }
            MeasurementSource::Simulate(s) => {
                let pn = s.process_noise.build(nx)?;
                let mn = s.measurement_noise.build(nz)?;
                let sim = simulate(&system, &pn, &mn, seed_override.unwrap_or(s.seed))?;
                let z = sim.measurements.clone();
                simulation = Some(sim);
                z
            }
        };
        let options = self.solver.clone().unwrap_or_default().to_options();
        options.validate()?;
        Ok(Scenario {
            problem: PrimalProblem::new(system, process, measurement, z)?,
            options,
            simulation,
            density,
            output_dir: self.output_dir.as_ref().map(|d| base.join(d)),
        })
    }
}

fn build_penalties(
    spec: &OneOrMany<PenaltySpec>,
    steps: usize,
    dim: usize,
    base: &Path,
    context: &str,
) -> Result<(SeparablePenalty, Option<MleDensity>)> {
    let specs = spec.expand(steps, context)?;
    let mut density = None;
    let mut blocks = Vec::with_capacity(steps);
    // a single spec is built once so a fitted density is shared by all steps
    if let OneOrMany::One(one) = spec {
        let (p, d) = one.build(dim, base)?;
        return Ok((SeparablePenalty::uniform(p, steps)?, d));
    }
    for s in specs {
        let (p, d) = s.build(dim, base)?;
        density = density.or(d);
        blocks.push(p);
    }
    Ok((SeparablePenalty::new(blocks)?, density))
}

fn rows_to_measurements(rows: &[Vec<f64>], steps: usize, nz: usize) -> Result<Supervector> {
    if rows.len() != steps {
        return Err(Error::dims("number of measurement rows", steps, rows.len()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != nz) {
        return Err(Error::dims("measurement row length", nz, bad.len()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Scenario("measurements must be finite".into()));
    }
    Supervector::from_rows(rows)
}

/// Numeric CSV rows; a first row that does not parse as numbers is a header.
fn parse_numeric_csv(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Csv(format!("line {}: values must be finite", i + 1)));
                }
                rows.push(row);
            }
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::Csv(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

/// One-column sample CSV.
pub fn parse_samples_csv(bytes: &[u8]) -> Result<Vec<f64>> {
    let rows = parse_numeric_csv(bytes)?;
    if let Some(bad) = rows.iter().position(|r| r.len() != 1) {
        return Err(Error::Csv(format!("sample row {bad} must have exactly one column")));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Measurement CSV: one row per time step, one column per measurement
/// coordinate. A leading column named `t` is dropped.
pub fn parse_measurements_csv(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let drop_index = std::str::from_utf8(first)
        .ok()
        .and_then(|s| s.split(',').next())
        .map(|s| s.trim() == "t")
        .unwrap_or(false);
    let rows = parse_numeric_csv(bytes)?;
    Ok(if drop_index {
        rows.into_iter().map(|r| r.into_iter().skip(1).collect()).collect()
    } else {
        rows
    })
}
