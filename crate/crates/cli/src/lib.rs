//! The `reachflow` command line: run configs, solver subcommands and the
//! verification harnesses.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

pub mod config;
pub mod verify;

use config::Loaded;

/// Exit code for a failed verification.
pub const EXIT_FAILED: i32 = 1;
/// Exit code for malformed arguments or configs.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for solver and output failures.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Output(_) => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser, Debug)]
#[command(name = "reachflow", version, about = "Travel times and reachable sets of a swimmer in a flow")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Print the JSON report instead of the summary table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Divergence residual, sup-norm estimate and drift profile of the field.
    FieldInfo { config: PathBuf },
    /// Arrival-time field from the config source, written as a grid file.
    Solve {
        config: PathBuf,
        #[arg(long, default_value = "arrival.grid")]
        out: PathBuf,
    },
    /// Travel time between two points from the level-set and graph solvers.
    TravelTime {
        config: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        from: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        to: Point,
    },
    /// Steering control from the config source to a target, as CSV.
    Trajectory {
        config: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        to: Point,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Check a property of the configured flow.
    Verify {
        kind: VerifyKind,
        config: PathBuf,
        /// Travel-time baseline, recorded if the file does not exist (theorem2).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Repeat the travel-time fit at half the grid spacing (theorem2).
        #[arg(long)]
        refine: bool,
    },
    /// Graph-search arrival times, written as a grid file.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value = "oracle.grid")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VerifyKind {
    Theorem1,
    Theorem2,
    Trap,
    Flux,
    Lemma24,
}

/// Comma-separated coordinates, e.g. `0.5,-1`.
#[derive(Clone, Debug)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Point)
}

/// What a subcommand produced: a JSON report, a human-readable summary, and
/// for verifications the verdict.
pub struct Outcome {
    pub report: Value,
    pub summary: String,
    pub passed: Option<bool>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Config("--threads: must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(CliError::Solver(e.to_string())),
        },
        None => execute(&cli.command),
    };
    let outcome = match result.and_then(|o| emit(&cli, o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("reachflow: {e}");
            return e.exit_code();
        }
    };
    match outcome.passed {
        Some(false) => EXIT_FAILED,
        _ => 0,
    }
}

fn emit(cli: &Cli, outcome: Outcome) -> Result<Outcome, CliError> {
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
    text.push('\n');
    if let Some(path) = &cli.report {
        std::fs::write(path, &text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    if cli.json {
        print!("{text}");
    } else {
        print!("{}", outcome.summary);
    }
    Ok(outcome)
}

/// Executes one subcommand without printing.
fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::FieldInfo { config } => field_info(&Loaded::from_path(config)?),
        Command::Solve { config, out } => solve(&Loaded::from_path(config)?, out),
        Command::TravelTime { config, from, to } => travel_time(&Loaded::from_path(config)?, &from.0, &to.0),
        Command::Trajectory { config, to, out } => trajectory(&Loaded::from_path(config)?, &to.0, out),
        Command::Oracle { config, out } => oracle(&Loaded::from_path(config)?, out),
        Command::Verify {
            kind,
            config,
            baseline,
            refine,
        } => {
            let l = Loaded::from_path(config)?;
            match kind {
                VerifyKind::Theorem1 => {
                    let v = verify::theorem1(&l)?;
                    let mut s = String::new();
                    for c in &v.details {
                        s += &format!(
                            "source {:?}: {}/{} trusted nodes reached, max arrival {}\n",
                            c.source,
                            c.trusted_finite,
                            c.trusted_nodes,
                            show(c.max_arrival)
                        );
                        if let Some(p) = &c.unreached {
                            s += &format!("  unreached: {p:?}\n");
                        }
                    }
                    Ok(verdict_outcome(&v, s))
                }
                VerifyKind::Theorem2 => {
                    let opts = verify::Theorem2Options {
                        baseline: baseline.clone(),
                        refine: *refine,
                    };
                    let v = verify::theorem2(&l, &opts)?;
                    let d = &v.details;
                    let mut s = format!(
                        "{} pairs, separations in [{:.4}, {:.4}]\n",
                        d.pairs, d.separation[0], d.separation[1]
                    );
                    match (&d.fit, &d.failure) {
                        (Some(f), _) => {
                            s += &format!(
                                "tau <= {:.6} |x - y| + {:.6}  (max residual {:.4})\n",
                                f.c1, f.c2, f.max_residual
                            )
                        }
                        (None, Some(e)) => s += &format!("fit failed: {e}\n"),
                        (None, None) => {}
                    }
                    if let Some(b) = &d.baseline {
                        s += &format!(
                            "baseline {} {}: rel C1 {:.4}, rel C2 {:.4}\n",
                            b.path,
                            if b.written { "recorded" } else { "compared" },
                            b.comparison.rel_c1,
                            b.comparison.rel_c2
                        );
                    }
                    if let Some(r) = &d.refinement {
                        match &r.comparison {
                            Some(c) => {
                                s += &format!(
                                    "h = {}: C1 {:.6}, C2 {:.6}, rel {:.4} / {:.4}\n",
                                    r.h, c.c1, c.c2, c.rel_c1, c.rel_c2
                                )
                            }
                            None => s += &format!("h = {}: fit failed\n", r.h),
                        }
                    }
                    Ok(verdict_outcome(&v, s))
                }
                VerifyKind::Trap => {
                    let v = verify::trap(&l)?;
                    let d = &v.details;
                    let mut s = format!(
                        "delta {:.4}: {} of {} nodes outside reached, {} of {} inside\n",
                        d.delta,
                        d.report.outside_finite,
                        d.report.outside_nodes,
                        d.report.inside_finite,
                        d.report.inside_nodes
                    );
                    if d.horizon < d.recommended_horizon {
                        s += &format!(
                            "  horizon {} is below ten box crossings ({:.1}); slow leaks may be missed\n",
                            d.horizon, d.recommended_horizon
                        );
                    }
                    if let Some(w) = &d.report.witness {
                        s += &format!("  escaped to {w:?} at t = {}\n", show(d.report.witness_arrival));
                    }
                    s += &format!(
                        "coverage {:.4} ({} of {} trusted nodes in the region)\n",
                        d.coverage.fraction, d.coverage.reached, d.coverage.trusted_nodes
                    );
                    Ok(verdict_outcome(&v, s))
                }
                VerifyKind::Flux => {
                    let v = verify::flux(&l)?;
                    let mut s = format!("{:>8} {:>14} {:>14} {:>14}\n", "edge", "density", "oracle", "bound");
                    for f in &v.details.faces {
                        s += &format!(
                            "{:>8} {:>14.6e} {:>14.6e} {:>14.6e}\n",
                            f.edge, f.density, f.oracle_density, f.bound
                        );
                    }
                    Ok(verdict_outcome(&v, s))
                }
                VerifyKind::Lemma24 => {
                    let v = verify::lemma24(&l)?;
                    let d = &v.details;
                    let s = match &d.report.faces {
                        Some(f) => format!(
                            "tau {}: {} trusted faces, density p10 {:.4}, p50 {:.4}, min {:.4}{}\n",
                            d.tau,
                            f.trusted_faces,
                            f.p10_density,
                            f.p50_density,
                            f.min_density,
                            if d.vacuous { " (vacuous)" } else { "" }
                        ),
                        None => String::new(),
                    };
                    Ok(verdict_outcome(&v, s))
                }
            }
        }
    }
}

fn verdict_outcome<T: Serialize>(v: &verify::Verdict<T>, mut summary: String) -> Outcome {
    summary += &format!("{} {}\n", v.kind, if v.passed { "PASS" } else { "FAIL" });
    Outcome {
        report: serde_json::to_value(v).expect("reports serialize"),
        summary,
        passed: Some(v.passed),
    }
}

fn show(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), |v| format!("{v:.6}"))
}

fn solver(e: reachflow::Error) -> CliError {
    CliError::Solver(e.to_string())
}

fn point(l: &Loaded, p: &[f64], name: &str) -> Result<(), CliError> {
    if p.len() != l.grid.dim() {
        return Err(CliError::Config(format!(
            "{name}: expected {} coordinates, got {}",
            l.grid.dim(),
            p.len()
        )));
    }
    if !l.grid.contains(p) {
        return Err(CliError::Config(format!("{name}: {p:?} lies outside the grid")));
    }
    Ok(())
}

fn write_grid(field: &reachflow::ScalarGridField, out: &Path) -> Result<(), CliError> {
    reachflow::io::write_grid(field, out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))
}

fn field_info(l: &Loaded) -> Result<Outcome, CliError> {
    use reachflow::analysis::closed_cube_flux;
    use reachflow::flowfield::{divergence_residual, mean_drift_profile, sup_norm_estimate, BoxRegion, CenterLattice};

    const FD_STEP: f64 = 1e-4;
    const SUP_SAMPLES: usize = 10_000;
    let grid = &l.grid;
    let d = grid.dim();
    let region = BoxRegion {
        min: grid.min().to_vec(),
        max: (0..d).map(|k| grid.max(k)).collect(),
    };
    let divergence = divergence_residual(&l.field, grid, FD_STEP).map_err(solver)?;
    let sup_norm = sup_norm_estimate(&l.field, &region, SUP_SAMPLES).map_err(solver)?;
    let shortest = (0..d).map(|k| grid.max(k) - grid.min()[k]).fold(f64::INFINITY, f64::min);
    let lengths: Vec<f64> = [1.0, 2.0, 4.0, 8.0].into_iter().filter(|&a| a <= shortest).collect();
    let lengths = if lengths.is_empty() { vec![shortest] } else { lengths };
    let lattice = CenterLattice {
        origin: grid.min().to_vec(),
        spacing: shortest / 4.0,
        counts: vec![4; d],
    };
    let drift = mean_drift_profile(&l.field, &lengths, &lattice, 16.0).map_err(solver)?;
    let edge = lengths[0];
    let cube = closed_cube_flux(&l.field, grid.min(), edge, 64.0).map_err(solver)?;
    let mut summary = format!(
        "field {} (d = {d})\ndivergence residual {divergence:.3e} (fd step {FD_STEP})\nsup-norm estimate {sup_norm:.6} ({SUP_SAMPLES} samples)\nclosed cube flux {:.3e} over area {}\n",
        l.config.field.name, cube.flux, cube.area
    );
    summary += &format!("{:>8} {:>12}\n", "length", "drift");
    for e in &drift.entries {
        summary += &format!("{:>8} {:>12.6}\n", e.length, e.drift);
    }
    Ok(Outcome {
        report: json!({
            "kind": "field-info",
            "config_hash": l.hash,
            "field": l.config.field,
            "sup_bound": l.field.sup_bound(),
            "divergence_residual": divergence,
            "fd_step": FD_STEP,
            "sup_norm_estimate": sup_norm,
            "sup_samples": SUP_SAMPLES,
            "closed_cube_flux": cube,
            "drift_profile": drift,
        }),
        summary,
        passed: None,
    })
}

fn arrival_stats(kind: &str, l: &Loaded, source: &[f64], field: &reachflow::ScalarGridField, out: &Path) -> Outcome {
    let finite = field.count_finite();
    let max = field.max_finite();
    Outcome {
        report: json!({
            "kind": kind,
            "config_hash": l.hash,
            "source": source,
            "nodes": field.grid().len(),
            "reached": finite,
            "max_arrival": max,
            "output": out.display().to_string(),
        }),
        summary: format!(
            "{kind}: {finite} of {} nodes reached, max arrival {}, written to {}\n",
            field.grid().len(),
            show(max),
            out.display()
        ),
        passed: None,
    }
}

fn solve(l: &Loaded, out: &Path) -> Result<Outcome, CliError> {
    let s = &l.config.solver;
    let arrival =
        reachflow::levelset::solve_arrival(&l.field, &l.grid, &l.config.source, s.horizon, s.cfl).map_err(solver)?;
    write_grid(&arrival, out)?;
    Ok(arrival_stats("solve", l, &l.config.source, &arrival, out))
}

fn oracle(l: &Loaded, out: &Path) -> Result<Outcome, CliError> {
    let times = reachflow::oracle::dijkstra_times(&l.field, &l.grid, &l.config.source, l.config.verify.stencil)
        .map_err(solver)?;
    write_grid(&times, out)?;
    Ok(arrival_stats("oracle", l, &l.config.source, &times, out))
}

fn travel_time(l: &Loaded, from: &[f64], to: &[f64]) -> Result<Outcome, CliError> {
    point(l, from, "--from")?;
    point(l, to, "--to")?;
    let s = &l.config.solver;
    let arrival = reachflow::levelset::solve_arrival(&l.field, &l.grid, from, s.horizon, s.cfl).map_err(solver)?;
    let level_set = arrival.interpolate(to).expect("target checked inside the grid");
    let k = l.config.verify.stencil;
    let graph = reachflow::oracle::dijkstra_times(&l.field, &l.grid, from, k)
        .map_err(solver)?
        .interpolate(to)
        .expect("target checked inside the grid");
    let h = l.grid.h();
    Ok(Outcome {
        report: json!({
            "kind": "travel-time",
            "config_hash": l.hash,
            "from": from,
            "to": to,
            "h": h,
            "level_set": finite_or_null(level_set),
            "oracle": finite_or_null(graph),
            "stencil": k,
        }),
        summary: format!(
            "level set: {}\noracle (k = {k}): {}\n",
            show(Some(level_set).filter(|t| t.is_finite())),
            show(Some(graph).filter(|t| t.is_finite()))
        ),
        passed: None,
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn trajectory(l: &Loaded, to: &[f64], out: &Path) -> Result<Outcome, CliError> {
    point(l, to, "--to")?;
    let s = &l.config.solver;
    let source = &l.config.source;
    let arrival = reachflow::levelset::solve_arrival(&l.field, &l.grid, source, s.horizon, s.cfl).map_err(solver)?;
    let ex = reachflow::trajectory::extract(&l.field, &arrival, source, to, 0.5 * l.grid.h(), s.cfl)
        .map_err(solver)?;
    std::fs::write(out, ex.trajectory.to_csv()).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    let sm = &ex.summary;
    Ok(Outcome {
        report: json!({
            "kind": "trajectory",
            "config_hash": l.hash,
            "source": source,
            "target": to,
            "summary": sm,
            "samples": ex.trajectory.times.len(),
            "output": out.display().to_string(),
        }),
        summary: format!(
            "duration {:.6} (arrival {:.6}), replay error {:.3e}, written to {}\n",
            sm.duration,
            sm.arrival,
            sm.replay_error,
            out.display()
        ),
        passed: None,
    })
}

/// Runs one subcommand in-process and returns its outcome, as `run` would
/// before printing.
pub fn execute_args<I, T>(argv: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Config(e.to_string()))?;
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Solver(e.to_string()))?
            .install(|| execute(&cli.command)),
        None => execute(&cli.command),
    }
}
