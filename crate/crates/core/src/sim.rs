//! Seeded simulation of ground-truth trajectories and noisy measurements.
//!
//! The generator is xoshiro256** seeded through SplitMix64. Both algorithms
//! are fixed here so that fixtures are reproducible across platforms.
//! Uniforms use the top 53 bits; normals use the Box-Muller transform;
//! Laplace draws use the inverse CDF.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LinearSystem, Supervector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn laplace(&mut self, scale: f64) -> f64 {
        laplace_inverse_cdf(self.uniform(), scale)
    }
}

/// `-s · sign(p - ½) · ln(1 - 2|p - ½|)`.
pub fn laplace_inverse_cdf(p: f64, scale: f64) -> f64 {
    let c = p - 0.5;
    if c == 0.0 {
        return 0.0;
    }
    -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// Lower-triangular factor `L` with `L L' = cov`, tolerating semidefinite
/// input: pivots below `1e-12` (relative) give a zero column.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::NonPsdCovariance);
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    if (cov - cov.transpose()).amax() > tol {
        return Err(Error::NonPsdCovariance);
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = cov[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -tol {
            return Err(Error::NonPsdCovariance);
        }
        if d <= tol {
            for i in j + 1..n {
                let r = cov[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                if r.abs() > 1e-8 * scale {
                    return Err(Error::NonPsdCovariance);
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let r = cov[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = r / ljj;
        }
    }
    Ok(l)
}

pub fn sample_gaussian(covariance: &DMatrix<f64>, rng: &mut Rng) -> Result<DVector<f64>> {
    let l = psd_factor(covariance)?;
    let z = DVector::from_fn(covariance.nrows(), |_, _| rng.standard_normal());
    Ok(l * z)
}

pub fn sample_laplace(scale: f64, rng: &mut Rng) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidPenalty(format!("laplace scale must be positive, got {scale}")));
    }
    Ok(rng.laplace(scale))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Gaussian { covariance: DMatrix<f64> },
    /// Independent Laplace(0, scale) coordinates.
    Laplace { scale: f64, dim: usize },
    None { dim: usize },
}

impl NoiseSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        NoiseSpec::Gaussian {
            covariance: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::Gaussian { covariance } => covariance.nrows(),
            NoiseSpec::Laplace { dim, .. } | NoiseSpec::None { dim } => *dim,
        }
    }

    fn validate(&self) -> Result<Option<DMatrix<f64>>> {
        match self {
            NoiseSpec::Gaussian { covariance } => psd_factor(covariance).map(Some),
            NoiseSpec::Laplace { scale, .. } if !(*scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidPenalty(format!("laplace scale must be positive, got {scale}")),
            ),
            _ => Ok(None),
        }
    }

    fn draw(&self, factor: Option<&DMatrix<f64>>, rng: &mut Rng) -> DVector<f64> {
        match self {
            NoiseSpec::Gaussian { covariance } => {
                let z = DVector::from_fn(covariance.nrows(), |_, _| rng.standard_normal());
                factor.expect("validated") * z
            }
            NoiseSpec::Laplace { scale, dim } => DVector::from_fn(*dim, |_, _| rng.laplace(*scale)),
            NoiseSpec::None { dim } => DVector::zeros(*dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Supervector,
    pub measurements: Supervector,
    pub process_noise: Supervector,
    pub measurement_noise: Supervector,
}

/// Draws all process noise `w_0..w_T` first, then all measurement noise.
pub fn simulate(
    system: &LinearSystem,
    process_noise: &NoiseSpec,
    measurement_noise: &NoiseSpec,
    seed: u64,
) -> Result<Simulation> {
    if process_noise.dim() != system.state_dim() {
        return Err(Error::dims("process noise dimension", system.state_dim(), process_noise.dim()));
    }
    if measurement_noise.dim() != system.meas_dim() {
        return Err(Error::dims("measurement noise dimension", system.meas_dim(), measurement_noise.dim()));
    }
    let pf = process_noise.validate()?;
    let mf = measurement_noise.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let steps = system.num_steps();
    let w: Vec<DVector<f64>> = (0..steps).map(|_| process_noise.draw(pf.as_ref(), &mut rng)).collect();
    let v: Vec<DVector<f64>> = (0..steps).map(|_| measurement_noise.draw(mf.as_ref(), &mut rng)).collect();
    let w = Supervector::from_blocks(&w)?;
    let v = Supervector::from_blocks(&v)?;
    let x = system.states_from_noise(&w)?;
    let z = system.apply_measurement_flat(x.as_flat()) + v.as_flat();
    Ok(Simulation {
        states: x,
        measurements: Supervector::from_flat(z, system.meas_dim())?,
        process_noise: w,
        measurement_noise: v,
    })
}

/// `n` independent Laplace(0, scale) draws.
pub fn laplace_sample(n: usize, scale: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_laplace(scale, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn example_system() -> LinearSystem {
        LinearSystem::time_invariant(10, dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_covariance_gives_zero_vector() {
        let mut rng = Rng::seed_from_u64(1);
        let v = sample_gaussian(&DMatrix::zeros(3, 3), &mut rng).unwrap();
        assert_eq!(v, DVector::zeros(3));
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let mut rng = Rng::seed_from_u64(1);
        assert!(matches!(
            sample_gaussian(&dmatrix![1.0, 2.0; 2.0, 1.0], &mut rng),
            Err(Error::NonPsdCovariance)
        ));
    }

    #[test]
    fn laplace_median_is_zero() {
        assert_eq!(laplace_inverse_cdf(0.5, 3.0), 0.0);
        assert!(laplace_inverse_cdf(0.75, 1.0) > 0.0);
        assert!((laplace_inverse_cdf(0.75, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = Rng::seed_from_u64(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.laplace(1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var = 2, Var of the sample variance = (μ4 - σ⁴)/n = (24 - 4)/n
        assert!(mean.abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert!((var - 2.0).abs() < 0.1);
        assert!((var - 2.0).abs() < 3.0 * (20.0 / n as f64).sqrt());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::seed_from_u64(77);
        let cov = dmatrix![2.0, 0.6; 0.6, 1.0];
        let n = 100_000;
        let mut s = DMatrix::<f64>::zeros(2, 2);
        let mut m = DVector::<f64>::zeros(2);
        for _ in 0..n {
            let v = sample_gaussian(&cov, &mut rng).unwrap();
            s += &v * v.transpose();
            m += v;
        }
        let m = m / n as f64;
        let s = s / n as f64;
        assert!(m.amax() < 3.0 * (2.0 / n as f64).sqrt());
        // standard error of E[v_i v_j] is sqrt((σ_ii σ_jj + σ_ij²)/n)
        for i in 0..2 {
            for j in 0..2 {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((s[(i, j)] - cov[(i, j)]).abs() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn simulation_without_measurement_noise_is_exact() {
        let sys = example_system();
        let sim = simulate(&sys, &NoiseSpec::standard_gaussian(2), &NoiseSpec::None { dim: 1 }, 5).unwrap();
        let hx = sys.apply_measurement_flat(sim.states.as_flat());
        assert_eq!(&hx, sim.measurements.as_flat());
    }

    #[test]
    fn simulation_without_process_noise_has_zero_states() {
        let sys = example_system();
        let sim = simulate(&sys, &NoiseSpec::None { dim: 2 }, &NoiseSpec::Laplace { scale: 1.0, dim: 1 }, 5).unwrap();
        assert_eq!(sim.states.norm(), 0.0);
        assert_eq!(sim.measurements, sim.measurement_noise);
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let sys = example_system();
        let run = |seed| {
            simulate(&sys, &NoiseSpec::standard_gaussian(2), &NoiseSpec::Laplace { scale: 1.0, dim: 1 }, seed).unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        assert_eq!(a.states.num_blocks(), 11);
        assert_ne!(a, run(43));
    }

    #[test]
    fn simulation_dimension_mismatch() {
        let sys = example_system();
        assert!(simulate(&sys, &NoiseSpec::standard_gaussian(3), &NoiseSpec::None { dim: 1 }, 0).is_err());
    }
}
