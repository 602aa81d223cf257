//! Batch command-line interface: simulate, fit a density, estimate, solve the
//! dual and reconstruct, verify against oracles, and emit conjugate plot data.
//!
//! Exit codes: 0 success, 1 solver non-convergence or a failed verification,
//! 2 input error.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dualsmooth::logconcave::penalty_from_mle;
use dualsmooth::penalty::numeric_conjugate_oracle;
use dualsmooth::scenario::{load_scenario, parse_samples_csv, Scenario};
use dualsmooth::solver::{reconstruct_primal_from_dual, solve_first_order, solve_quadratic_direct, Solution, TraceRow};
use dualsmooth::{fit_logconcave_mle, CertificateStatus, Error, ExtReal, MleDensity, Penalty, PrimalProblem, Supervector};

#[derive(Debug, Parser)]
#[command(name = "dualsmooth", version, about = "MAP smoothing, dual control, and duality certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write simulated states, noises, and measurements.
    Simulate(Common),
    /// Fit the log-concave MLE to a sample and write knots and plot grids.
    FitDensity(DensityArgs),
    /// Solve the smoothing problem.
    Estimate(Common),
    /// Solve the dual control problem and reconstruct the state estimate.
    DualEstimate(Common),
    /// Cross-check the solver against oracles and print a PASS/FAIL table.
    Verify(Common),
    /// Write penalty and conjugate grids of a 1-D measurement penalty.
    ConjugatePlot(DensityArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long = "scenario", value_name = "PATH")]
    scenario_flag: Option<PathBuf>,
    #[arg(value_name = "SCENARIO", conflicts_with = "scenario_flag")]
    scenario_pos: Option<PathBuf>,
    /// Output directory (overrides the scenario's `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Simulation seed (overrides the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    /// Relative duality-gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the convergence trace to `trace.csv`.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    common: Common,
    /// One-column sample CSV (instead of a scenario's measurement penalty).
    #[arg(long, value_name = "PATH")]
    samples: Option<PathBuf>,
    /// Grid points per plot.
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged(_) => Failure::NotConverged(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => simulate_cmd(c),
        Command::FitDensity(d) => fit_density_cmd(d),
        Command::Estimate(c) => estimate_cmd(c),
        Command::DualEstimate(c) => dual_estimate_cmd(c),
        Command::Verify(c) => verify_cmd(c),
        Command::ConjugatePlot(d) => conjugate_plot_cmd(d),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

impl Common {
    fn scenario_path(&self) -> Option<&Path> {
        self.scenario_flag.as_deref().or(self.scenario_pos.as_deref())
    }

    fn load(&self) -> std::result::Result<Scenario, Failure> {
        let path = self
            .scenario_path()
            .ok_or_else(|| Failure::Input("a scenario is required (--scenario <path>)".into()))?;
        let mut s = load_scenario(path, self.seed)?;
        if let Some(tol) = self.tol {
            s.options.tol_gap = tol;
        }
        if let Some(m) = self.max_iters {
            s.options.max_iters = m;
        }
        s.options.record_history = self.trace;
        s.options.validate()?;
        Ok(s)
    }

    fn out_dir(&self, scenario: Option<&Scenario>) -> std::result::Result<PathBuf, Failure> {
        let dir = self
            .out
            .clone()
            .or_else(|| scenario.and_then(|s| s.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn fmt_ext(v: ExtReal) -> String {
    match v {
        ExtReal::Finite(x) => x.to_string(),
        ExtReal::PosInf => "inf".into(),
        ExtReal::NegInf => "-inf".into(),
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn labels(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// CSV with a `t` column followed by the blocks of each supervector.
fn write_series(path: &Path, columns: &[(&str, &Supervector)]) -> CliResult {
    let mut header = vec!["t".to_string()];
    for (name, v) in columns {
        header.extend(labels(name, v.block_dim()));
    }
    let steps = columns.first().map_or(0, |(_, v)| v.num_blocks());
    let rows: Vec<Vec<String>> = (0..steps)
        .map(|t| {
            let mut row = vec![t.to_string()];
            for (_, v) in columns {
                row.extend(v.block(t).iter().map(|x| x.to_string()));
            }
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn write_summary(path: &Path, entries: &[(&str, String)]) -> CliResult {
    let rows: Vec<Vec<String>> = entries.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
    write_csv(path, &["key".into(), "value".into()], &rows)?;
    for (k, v) in entries {
        println!("{k}: {v}");
    }
    Ok(())
}

fn write_trace(path: &Path, history: &[TraceRow]) -> CliResult {
    let header: Vec<String> = ["iteration", "primal_value", "dual_value", "gap", "residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.primal_value.to_string(),
                r.dual_value.to_string(),
                r.gap.to_string(),
                r.residual.to_string(),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn solver_summary(p: &PrimalProblem, s: &Solution) -> Vec<(&'static str, String)> {
    vec![
        ("certificate", p.certify_strong_duality().status.as_str().to_string()),
        ("primal_value", fmt_ext(s.primal_value)),
        ("dual_value", fmt_ext(s.dual_value)),
        ("gap", s.gap.to_string()),
        ("relative_gap", s.relative_gap().to_string()),
        ("iterations", s.iterations.to_string()),
        ("converged", s.converged.to_string()),
        ("stop_reason", format!("{:?}", s.stop_reason)),
    ]
}

fn non_converged(s: &Solution) -> Failure {
    Failure::NotConverged(format!(
        "solver stopped ({:?}) after {} iterations with relative gap {:e}",
        s.stop_reason,
        s.iterations,
        s.relative_gap()
    ))
}

fn simulate_cmd(c: &Common) -> CliResult {
    let s = c.load()?;
    let sim = s
        .simulation
        .as_ref()
        .ok_or_else(|| Failure::Input("scenario measurements are not simulated".into()))?;
    let dir = c.out_dir(Some(&s))?;
    write_series(&dir.join("states.csv"), &[("x", &sim.states)])?;
    write_series(&dir.join("measurements.csv"), &[("z", &sim.measurements)])?;
    write_series(&dir.join("process_noise.csv"), &[("w", &sim.process_noise)])?;
    write_series(&dir.join("measurement_noise.csv"), &[("v", &sim.measurement_noise)])?;
    println!("wrote simulation for {} steps to {}", sim.states.num_blocks(), dir.display());
    Ok(())
}

fn estimate_cmd(c: &Common) -> CliResult {
    let s = c.load()?;
    let dir = c.out_dir(Some(&s))?;
    let sol = solve_first_order(&s.problem, &s.options)?;
    write_series(&dir.join("estimate.csv"), &[("x", &sol.x), ("w", &sol.w)])?;
    write_summary(&dir.join("summary.csv"), &solver_summary(&s.problem, &sol))?;
    if c.trace {
        write_trace(&dir.join("trace.csv"), &sol.history)?;
    }
    if sol.converged {
        Ok(())
    } else {
        Err(non_converged(&sol))
    }
}

fn dual_estimate_cmd(c: &Common) -> CliResult {
    let s = c.load()?;
    let dir = c.out_dir(Some(&s))?;
    let p = &s.problem;
    let sol = solve_first_order(p, &s.options)?;
    let rec = reconstruct_primal_from_dual(&p.dual(), &sol.u)?;
    let value = p.objective(&rec.x)?;
    let gap = match (value, sol.dual_value) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => a - b,
        _ => f64::INFINITY,
    };
    write_series(
        &dir.join("dual_estimate.csv"),
        &[("x", &rec.x), ("w", &rec.w), ("y", &rec.y), ("u", &sol.u)],
    )?;
    let mut summary = solver_summary(p, &sol);
    summary.retain(|(k, _)| !matches!(*k, "primal_value" | "gap" | "relative_gap"));
    summary.insert(1, ("reconstructed_primal_value", fmt_ext(value)));
    summary.insert(3, ("gap", gap.to_string()));
    summary.insert(4, ("relative_gap", (gap / (1.0 + value.to_f64().abs())).to_string()));
    write_summary(&dir.join("summary.csv"), &summary)?;
    if c.trace {
        write_trace(&dir.join("trace.csv"), &sol.history)?;
    }
    if sol.converged {
        Ok(())
    } else {
        Err(non_converged(&sol))
    }
}

struct Table {
    failed: usize,
}

impl Table {
    fn row(&mut self, pass: Option<bool>, name: &str, detail: impl Display) {
        let tag = match pass {
            Some(true) => "PASS",
            Some(false) => {
                self.failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag:<5} {name:<32} {detail}");
    }
}

fn is_quadratic(p: &Penalty) -> bool {
    matches!(p, Penalty::Quadratic(_))
}

fn verify_cmd(c: &Common) -> CliResult {
    let s = c.load()?;
    let p = &s.problem;
    let mut table = Table { failed: 0 };

    let cert = p.certify_strong_duality();
    table.row(
        Some(cert.status != CertificateStatus::Unknown),
        "strong duality certificate",
        cert.status.as_str(),
    );

    let sol = solve_first_order(p, &s.options)?;
    table.row(
        Some(sol.converged),
        "first-order duality gap",
        format!("relative gap {:e} after {} iterations", sol.relative_gap(), sol.iterations),
    );

    let f_quadratic = p.process().blocks().iter().all(is_quadratic);
    let g_direct = p
        .measurement()
        .blocks()
        .iter()
        .all(|b| is_quadratic(b) || matches!(b, Penalty::Zero { .. }));
    if f_quadratic && g_direct {
        match solve_quadratic_direct(p) {
            Ok(direct) => {
                let err = (sol.x.as_flat() - direct.x.as_flat()).norm();
                let tol = 1e-6 * (1.0 + direct.x.norm());
                table.row(Some(err <= tol), "direct oracle agreement", format!("|dx| = {err:e} (tol {tol:e})"));
            }
            Err(e) => table.row(None, "direct oracle agreement", e),
        }
    } else {
        table.row(None, "direct oracle agreement", "penalties are not all quadratic");
    }

    let f_pd = p.process().blocks().iter().all(|b| match b {
        Penalty::Quadratic(q) => q.is_positive_definite(),
        _ => false,
    });
    if f_pd {
        let rec = reconstruct_primal_from_dual(&p.dual(), &sol.u)?;
        let err = (rec.x.as_flat() - sol.x.as_flat()).norm();
        let tol = 1e-5 * (1.0 + sol.x.norm());
        table.row(Some(err <= tol), "dual reconstruction agreement", format!("|dx| = {err:e} (tol {tol:e})"));
    } else {
        match reconstruct_primal_from_dual(&p.dual(), &sol.u) {
            Ok(rec) => {
                let err = (rec.x.as_flat() - sol.x.as_flat()).norm();
                table.row(None, "dual reconstruction agreement", format!("|dx| = {err:e} (f not positive definite)"));
            }
            Err(e) => table.row(None, "dual reconstruction agreement", e),
        }
    }

    let mut seen: Vec<&Penalty> = Vec::new();
    for (which, pen) in p
        .process()
        .blocks()
        .iter()
        .map(|b| ("process", b))
        .chain(p.measurement().blocks().iter().map(|b| ("measurement", b)))
    {
        if pen.dim() != 1 || seen.contains(&pen) {
            continue;
        }
        seen.push(pen);
        let (pass, detail) = conjugate_check(pen)?;
        table.row(Some(pass), &format!("{which} conjugate vs grid ({})", pen.kind_name()), detail);
    }

    if let Some(d) = &s.density {
        let integral = d.integral();
        table.row(Some((integral - 1.0).abs() <= 1e-6), "density integral", format!("{integral}"));
        let sd = d.max_second_difference();
        table.row(Some(sd <= 1e-10), "density concavity", format!("max second difference {sd:e}"));
    }

    if table.failed == 0 {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL ({} checks)", table.failed);
        Err(Failure::NotConverged(format!("{} verification checks failed", table.failed)))
    }
}

/// Query range for plotting and checking the conjugate of a 1-D penalty.
fn conjugate_range(p: &Penalty) -> (f64, f64) {
    match p {
        Penalty::PiecewiseLinear(pwl) => {
            let s = pwl.slopes();
            (s[0] - 1.0, s[s.len() - 1] + 1.0)
        }
        Penalty::Monitoring(m) => (m.lower()[0].max(-4.0) - 1.0, m.upper()[0].min(4.0) + 1.0),
        _ => (-3.0, 3.0),
    }
}

fn lipschitz_on(p: &Penalty, window: f64) -> f64 {
    match p {
        Penalty::PiecewiseLinear(pwl) => pwl.slopes().iter().fold(0.0, |a: f64, s| a.max(s.abs())),
        Penalty::Monitoring(m) => m.lower()[0].abs().max(m.upper()[0].abs()).min(window),
        Penalty::Quadratic(q) => q.matrix()[(0, 0)] * window,
        Penalty::Zero { .. } => 0.0,
    }
}

/// Closed-form conjugate against the grid oracle at 21 points. The grid error
/// is bounded by `h (|y| + L)` with `L` the Lipschitz constant on the window.
fn conjugate_check(p: &Penalty) -> std::result::Result<(bool, String), Failure> {
    let (ylo, yhi) = conjugate_range(p);
    let ymax = ylo.abs().max(yhi.abs());
    let (dlo, dhi) = p.domain_box()[0];
    let curvature = match p {
        Penalty::Quadratic(q) => q.matrix()[(0, 0)],
        Penalty::Monitoring(m) => m.m_diag()[0],
        _ => 0.0,
    };
    let window = 2.0 + ymax * curvature.max(1.0);
    let (a, b) = match p {
        Penalty::PiecewiseLinear(_) => (dlo - 1.0, dhi + 1.0),
        _ => (-window, window),
    };
    let h = match p {
        Penalty::PiecewiseLinear(_) => (dhi - dlo) / 20_000.0,
        _ => 1e-3,
    };
    let lip = lipschitz_on(p, window);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for k in 0..21 {
        let y = ylo + (yhi - ylo) * k as f64 / 20.0;
        let closed = p.conjugate_value(&[y])?;
        let grid = numeric_conjugate_oracle(p, y, a, b, h)?;
        match closed {
            ExtReal::Finite(v) => {
                let err = (v - grid.value.to_f64()).abs();
                worst = worst.max(err);
                ok &= err <= 2.0 * h * (1.0 + y.abs() + lip);
            }
            _ => {
                // an infinite closed form needs an oracle that keeps growing
                let wider = numeric_conjugate_oracle(p, y, 2.0 * a, 2.0 * b, h)?;
                ok &= wider.value > grid.value;
            }
        }
    }
    Ok((ok, format!("max |error| {worst:e} at 21 points, h = {h:e}")))
}

/// The 1-D penalty and optional density addressed by `--samples` or the
/// scenario's first measurement block.
fn density_source(d: &DensityArgs) -> std::result::Result<(Penalty, Option<MleDensity>, Option<Scenario>), Failure> {
    if let Some(path) = &d.samples {
        let samples = parse_samples_csv(&std::fs::read(path)?)?;
        let density = fit_logconcave_mle(&samples)?;
        return Ok((penalty_from_mle(&density)?, Some(density), None));
    }
    let s = d.common.load()?;
    let pen = s.problem.measurement().block(0).clone();
    if pen.dim() != 1 {
        return Err(Failure::Input("measurement penalty must be one-dimensional".into()));
    }
    let density = s.density.clone();
    Ok((pen, density, Some(s)))
}

fn write_plot_grids(dir: &Path, p: &Penalty, points: usize) -> CliResult {
    let points = points.max(2);
    let (dlo, dhi) = p.domain_box()[0];
    let (xlo, xhi) = if dlo.is_finite() && dhi.is_finite() && dhi > dlo {
        (dlo, dhi)
    } else {
        (dlo.max(-5.0), dhi.min(5.0).max(dlo.max(-5.0) + 1.0))
    };
    let grid = |lo: f64, hi: f64, f: &dyn Fn(f64) -> dualsmooth::Result<ExtReal>| -> std::result::Result<Vec<Vec<String>>, Failure> {
        (0..points)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
                Ok(vec![x.to_string(), fmt_ext(f(x)?)])
            })
            .collect()
    };
    let rows = grid(xlo, xhi, &|x| p.value(&[x]))?;
    write_csv(&dir.join("penalty_grid.csv"), &["x".into(), "value".into()], &rows)?;
    let (ylo, yhi) = conjugate_range(p);
    let rows = grid(ylo, yhi, &|y| p.conjugate_value(&[y]))?;
    write_csv(&dir.join("conjugate_grid.csv"), &["y".into(), "conjugate".into()], &rows)?;
    Ok(())
}

fn fit_density_cmd(d: &DensityArgs) -> CliResult {
    let (pen, density, scenario) = density_source(d)?;
    let density = density.ok_or_else(|| Failure::Input("scenario measurement penalty is not fitted from a sample".into()))?;
    let dir = d.common.out_dir(scenario.as_ref())?;
    let rows: Vec<Vec<String>> = density
        .knots()
        .iter()
        .zip(density.log_values())
        .zip(density.weights())
        .map(|((k, v), w)| vec![k.to_string(), v.to_string(), w.to_string()])
        .collect();
    write_csv(&dir.join("density.csv"), &["knot".into(), "log_density".into(), "weight".into()], &rows)?;
    write_plot_grids(&dir, &pen, d.points)?;
    println!(
        "fitted {} knots from {} samples; integral {}",
        density.knots().len(),
        density.sample_size(),
        density.integral()
    );
    Ok(())
}

fn conjugate_plot_cmd(d: &DensityArgs) -> CliResult {
    let (pen, _, scenario) = density_source(d)?;
    let dir = d.common.out_dir(scenario.as_ref())?;
    write_plot_grids(&dir, &pen, d.points)?;
    println!("wrote penalty_grid.csv and conjugate_grid.csv to {}", dir.display());
    Ok(())
}
