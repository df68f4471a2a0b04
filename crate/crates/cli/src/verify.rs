//! Verification harnesses behind `reachflow verify`. Each returns a
//! [`Verdict`] whose details serialize into the JSON report.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachflow::analysis::{
    boundary_flux_check, fit_travel_times, flux_cube_face, trapping_check, CubeFace, FluxReport,
    Region, TrapReport, TravelSample, TravelTimeFit,
};
use reachflow::flowfield::{sup_norm_estimate, BoxRegion};
use reachflow::levelset::{reachable_mask, solve_arrival, untrusted_band};
use reachflow::{Error, Grid, ScalarGridField};
use serde::{Deserialize, Serialize};

use crate::config::Loaded;
use crate::CliError;

/// Relative drift allowed between a travel-time fit and its recorded baseline.
pub const BASELINE_TOLERANCE: f64 = 0.02;
/// Relative change allowed in the fit under grid refinement.
pub const REFINEMENT_TOLERANCE: f64 = 0.10;
/// Slack on monotonicity of cube-face flux densities.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Face flux densities may reach this multiple of `sup|V| / A`.
pub const FACE_BOUND_FACTOR: f64 = 1.5;
/// Agreement between quadrature and oracle face flux, relative to `sup|V|`.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict<T> {
    pub kind: &'static str,
    pub config_hash: String,
    pub passed: bool,
    pub details: T,
}

fn verdict<T>(l: &Loaded, kind: &'static str, passed: bool, details: T) -> Verdict<T> {
    Verdict {
        kind,
        config_hash: l.hash.clone(),
        passed,
        details,
    }
}

fn solver(e: Error) -> CliError {
    CliError::Solver(e.to_string())
}

fn solve(l: &Loaded, grid: &Grid, source: &[f64], horizon: f64) -> Result<ScalarGridField, CliError> {
    solve_arrival(&l.field, grid, source, horizon, l.config.solver.cfl).map_err(solver)
}

#[derive(Clone, Debug, Serialize)]
pub struct SourceCoverage {
    pub source: Vec<f64>,
    pub trusted_nodes: usize,
    pub trusted_finite: usize,
    pub max_arrival: Option<f64>,
    /// A trusted node left unreached, if any.
    pub unreached: Option<Vec<f64>>,
}

/// Every trusted node is reached from every source within the horizon.
pub fn theorem1(l: &Loaded) -> Result<Verdict<Vec<SourceCoverage>>, CliError> {
    let band = untrusted_band(&l.grid);
    let mut out = Vec::new();
    for source in l.sources() {
        let arrival = solve(l, &l.grid, &source, l.config.solver.horizon)?;
        let (mut trusted, mut finite, mut max, mut unreached) = (0, 0, None::<f64>, None);
        for (i, &t) in arrival.values().iter().enumerate() {
            if !l.grid.trusted(i, band) {
                continue;
            }
            trusted += 1;
            if t.is_finite() {
                finite += 1;
                max = Some(max.map_or(t, |m| m.max(t)));
            } else if unreached.is_none() {
                unreached = Some(l.grid.position(i));
            }
        }
        out.push(SourceCoverage {
            source,
            trusted_nodes: trusted,
            trusted_finite: finite,
            max_arrival: max,
            unreached,
        });
    }
    let passed = out.iter().all(|s| s.trusted_finite == s.trusted_nodes);
    Ok(verdict(l, "theorem1", passed, out))
}

#[derive(Clone, Debug, Default)]
pub struct Theorem2Options {
    /// Baseline file: written when absent, compared against otherwise.
    pub baseline: Option<PathBuf>,
    /// Repeat the fit on the grid refined by two.
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub config_hash: String,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub reference_c1: f64,
    pub reference_c2: f64,
    pub c1: f64,
    pub c2: f64,
    pub rel_c1: f64,
    pub rel_c2: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Comparison {
    fn new(reference: (f64, f64), fit: (f64, f64), tolerance: f64) -> Self {
        let rel = |r: f64, x: f64| (x - r).abs() / r.abs().max(f64::MIN_POSITIVE);
        let (rel_c1, rel_c2) = (rel(reference.0, fit.0), rel(reference.1, fit.1));
        Self {
            reference_c1: reference.0,
            reference_c2: reference.1,
            c1: fit.0,
            c2: fit.1,
            rel_c1,
            rel_c2,
            tolerance,
            passed: rel_c1 <= tolerance && rel_c2 <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineCheck {
    pub path: String,
    /// Set when this run recorded the baseline.
    pub written: bool,
    pub comparison: Comparison,
}

/// Largest finite arrival over trusted nodes of the middle half of the box,
/// at spacing `h` and `h/2`.
#[derive(Clone, Debug, Serialize)]
pub struct UniformBound {
    pub region: BoxRegion,
    pub coarse: f64,
    pub fine: f64,
    pub rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Refinement {
    pub h: f64,
    pub comparison: Option<Comparison>,
    pub failure: Option<String>,
    pub uniform_bound: Option<UniformBound>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Details {
    pub pairs: usize,
    pub separation: [f64; 2],
    pub fit: Option<TravelTimeFit>,
    /// Why the fit failed, e.g. an infinite travel time.
    pub failure: Option<String>,
    pub baseline: Option<BaselineCheck>,
    pub refinement: Option<Refinement>,
}

/// Target nodes for travel-time pairs, drawn from the config seed.
fn sample_targets(l: &Loaded, sources: &[Vec<f64>], separation: [f64; 2]) -> Result<Vec<Vec<f64>>, CliError> {
    let grid = &l.grid;
    let d = grid.dim();
    let band = untrusted_band(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(l.config.seed);
    let mut targets = Vec::new();
    for source in sources {
        let mut chosen: Vec<usize> = Vec::new();
        let mut attempts = 0;
        while chosen.len() < l.config.verify.pairs {
            attempts += 1;
            if attempts > 10_000 * l.config.verify.pairs {
                return Err(CliError::Config(format!(
                    "verify.separation: cannot place {} trusted targets around {source:?}",
                    l.config.verify.pairs
                )));
            }
            let dir = loop {
                let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break u.into_iter().map(|x| x / n).collect::<Vec<_>>();
                }
            };
            let r = rng.gen_range(separation[0]..=separation[1]);
            let p: Vec<f64> = source.iter().zip(&dir).map(|(s, u)| s + r * u).collect();
            let Some(idx) = grid.nearest_node(&p) else { continue };
            if !grid.trusted(idx, band) || chosen.contains(&idx) {
                continue;
            }
            let q = grid.position(idx);
            let sep = q.iter().zip(source).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if sep < separation[0] || sep > separation[1] {
                continue;
            }
            chosen.push(idx);
            targets.push(q);
        }
    }
    Ok(targets)
}

fn fit_on(
    l: &Loaded,
    grid: &Grid,
    sources: &[Vec<f64>],
    targets: &[Vec<f64>],
    compact: &BoxRegion,
) -> Result<(Result<TravelTimeFit, String>, f64), CliError> {
    let per = l.config.verify.pairs;
    let band = untrusted_band(grid);
    let mut samples = Vec::new();
    let mut bound = 0.0_f64;
    for (s, source) in sources.iter().enumerate() {
        let arrival = solve(l, grid, source, l.config.solver.horizon)?;
        for to in &targets[s * per..(s + 1) * per] {
            let idx = grid
                .node_at(to, 1e-6)
                .ok_or_else(|| CliError::Solver(format!("target {to:?} is not a grid node")))?;
            samples.push(TravelSample {
                from: source.clone(),
                to: to.clone(),
                tau: arrival.get(idx),
            });
        }
        for (i, &t) in arrival.values().iter().enumerate() {
            if t.is_finite() && grid.trusted(i, band) {
                let p = grid.position(i);
                if p.iter().enumerate().all(|(k, &x)| x >= compact.min[k] && x <= compact.max[k]) {
                    bound = bound.max(t);
                }
            }
        }
    }
    let fit = match fit_travel_times(samples) {
        Ok(fit) => Ok(fit),
        Err(e @ Error::InfiniteTravelTime { .. }) => Err(e.to_string()),
        Err(e) => return Err(solver(e)),
    };
    Ok((fit, bound))
}

/// Linear envelope of seeded travel times, optionally checked against a
/// recorded baseline and under refinement.
pub fn theorem2(l: &Loaded, opts: &Theorem2Options) -> Result<Verdict<Theorem2Details>, CliError> {
    let grid = &l.grid;
    let d = grid.dim();
    let v = &l.config.verify;
    let mut sources = l.sources();
    sources.truncate(v.pair_sources);
    let shortest = (0..d)
        .map(|k| grid.max(k) - grid.min()[k])
        .fold(f64::INFINITY, f64::min);
    let separation = v.separation.unwrap_or([2.0 * grid.h(), shortest / 2.0]);
    let targets = sample_targets(l, &sources, separation)?;
    let compact = BoxRegion {
        min: (0..d).map(|k| 0.75 * grid.min()[k] + 0.25 * grid.max(k)).collect(),
        max: (0..d).map(|k| 0.25 * grid.min()[k] + 0.75 * grid.max(k)).collect(),
    };
    let (fit, coarse_bound) = fit_on(l, grid, &sources, &targets, &compact)?;
    let (fit, failure) = match fit {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e)),
    };
    let mut passed = fit.as_ref().is_some_and(|f| f.covers_samples());

    let mut baseline = None;
    if let (Some(path), Some(f)) = (&opts.baseline, &fit) {
        let check = check_baseline(l, path, f)?;
        passed &= check.comparison.passed;
        baseline = Some(check);
    }

    let mut refinement = None;
    if opts.refine {
        let fine = grid.refined(2);
        let (fine_fit, fine_bound) = fit_on(l, &fine, &sources, &targets, &compact)?;
        let comparison = match (&fit, &fine_fit) {
            (Some(c), Ok(f)) => Some(Comparison::new((c.c1, c.c2), (f.c1, f.c2), REFINEMENT_TOLERANCE)),
            _ => None,
        };
        passed &= comparison.as_ref().is_some_and(|c| c.passed);
        refinement = Some(Refinement {
            h: fine.h(),
            comparison,
            failure: fine_fit.err(),
            uniform_bound: (coarse_bound > 0.0).then(|| UniformBound {
                region: compact.clone(),
                coarse: coarse_bound,
                fine: fine_bound,
                rel: (fine_bound - coarse_bound).abs() / coarse_bound,
            }),
        });
    }

    Ok(verdict(
        l,
        "theorem2",
        passed,
        Theorem2Details {
            pairs: targets.len(),
            separation,
            fit,
            failure,
            baseline,
            refinement,
        },
    ))
}

fn check_baseline(l: &Loaded, path: &Path, fit: &TravelTimeFit) -> Result<BaselineCheck, CliError> {
    let shown = path.display().to_string();
    if path.exists() {
        let text = std::fs::read(path).map_err(|e| CliError::Config(format!("{shown}: {e}")))?;
        let recorded: Baseline = serde_json::from_slice(&text)
            .map_err(|e| CliError::Config(format!("{shown}: {e}")))?;
        if recorded.config_hash != l.hash {
            return Err(CliError::Config(format!(
                "{shown}: baseline was recorded for config {}, not {}",
                recorded.config_hash, l.hash
            )));
        }
        Ok(BaselineCheck {
            path: shown,
            written: false,
            comparison: Comparison::new((recorded.c1, recorded.c2), (fit.c1, fit.c2), BASELINE_TOLERANCE),
        })
    } else {
        let b = Baseline {
            config_hash: l.hash.clone(),
            c1: fit.c1,
            c2: fit.c2,
        };
        let mut text = serde_json::to_string_pretty(&b).expect("baseline serializes");
        text.push('\n');
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{shown}: {e}")))?;
        }
        std::fs::write(path, text).map_err(|e| CliError::Output(format!("{shown}: {e}")))?;
        Ok(BaselineCheck {
            path: shown,
            written: true,
            comparison: Comparison::new((fit.c1, fit.c2), (fit.c1, fit.c2), BASELINE_TOLERANCE),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Coverage {
    pub trusted_nodes: usize,
    pub reached: usize,
    pub fraction: f64,
    pub required: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrapDetails {
    pub source: Vec<f64>,
    pub horizon: f64,
    /// Ten box crossings at unit speed; shorter horizons may miss slow leaks.
    pub recommended_horizon: f64,
    /// Widening of the region: mollification radius plus `2h`.
    pub delta: f64,
    pub region: Region,
    pub widened: Region,
    pub report: TrapReport,
    /// Reached share of the trusted nodes in the unwidened region.
    pub coverage: Coverage,
}

/// Nothing outside the configured region is ever reached.
pub fn trap(l: &Loaded) -> Result<Verdict<TrapDetails>, CliError> {
    let region = l
        .config
        .verify
        .region
        .clone()
        .ok_or_else(|| CliError::Config("verify.region: required by `verify trap`".into()))?;
    let delta = l.field.mollification_radius() + 2.0 * l.grid.h();
    let widen = |b: &Vec<Option<f64>>, s: f64| b.iter().map(|v| v.map(|v| v + s * delta)).collect();
    let widened = Region {
        lower: widen(&region.lower, -1.0),
        upper: widen(&region.upper, 1.0),
    };
    let source = l.config.source.clone();
    let arrival = solve(l, &l.grid, &source, l.config.solver.horizon)?;
    let report = trapping_check(&arrival, |x| widened.contains(x)).map_err(|e| CliError::Config(format!("verify.region: {e}")))?;

    let band = untrusted_band(&l.grid);
    let (mut trusted, mut reached) = (0, 0);
    for (i, &t) in arrival.values().iter().enumerate() {
        if l.grid.trusted(i, band) && region.contains(&l.grid.position(i)) {
            trusted += 1;
            reached += t.is_finite() as usize;
        }
    }
    let fraction = if trusted == 0 { 0.0 } else { reached as f64 / trusted as f64 };
    let diameter = (0..l.grid.dim())
        .map(|k| (l.grid.max(k) - l.grid.min()[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    let required = l.config.verify.min_coverage;
    let passed = report.passed && required.map_or(true, |r| fraction >= r);
    Ok(verdict(
        l,
        "trap",
        passed,
        TrapDetails {
            source,
            horizon: l.config.solver.horizon,
            recommended_horizon: 10.0 * diameter,
            delta,
            region,
            widened,
            report,
            coverage: Coverage {
                trusted_nodes: trusted,
                reached,
                fraction,
                required,
            },
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct FaceFlux {
    pub edge: f64,
    pub flux: f64,
    /// `|flux| / A^(d-1)`.
    pub density: f64,
    pub bound: f64,
    pub oracle_density: f64,
    pub oracle: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct FluxDetails {
    pub lower: Vec<f64>,
    pub sup_norm: f64,
    pub faces: Vec<FaceFlux>,
    pub monotone: bool,
    pub bounded: bool,
    pub oracle_agrees: bool,
}

/// Closed-form flux of a 2-D cellular flow through the face `x0 = lower[0]`,
/// `lower[1] <= x1 <= lower[1] + edge`, from its stream function.
fn cellular_face_flux(amp: f64, cell: f64, lower: &[f64], edge: f64) -> f64 {
    let a = std::f64::consts::PI / cell;
    amp / a * (a * lower[0]).sin() * ((a * (lower[1] + edge)).sin() - (a * lower[1]).sin())
}

/// Flux through cube faces normal to the first axis shrinks relative to the
/// face area as the cube grows.
pub fn flux(l: &Loaded) -> Result<Verdict<FluxDetails>, CliError> {
    let v = &l.config.verify;
    let d = l.grid.dim();
    let lower = v.cube_lower.clone().unwrap_or_else(|| l.grid.min().to_vec());
    let sup_norm = match l.field.sup_bound() {
        Some(m) => m,
        None => {
            let region = BoxRegion {
                min: l.grid.min().to_vec(),
                max: (0..d).map(|k| l.grid.max(k)).collect(),
            };
            sup_norm_estimate(&l.field, &region, 10_000).map_err(solver)?
        }
    };
    let closed_form = match (l.config.field.name.as_str(), d) {
        ("cellular", 2) => {
            let p = &l.config.field.params;
            let amp = p.get("amplitude").and_then(|x| x.as_f64());
            let cell = p.get("cell_size").and_then(|x| x.as_f64()).unwrap_or(1.0);
            amp.map(|a| (a, cell))
        }
        _ => None,
    };
    let mut faces = Vec::new();
    for &edge in &v.cube_edges {
        let face = CubeFace {
            lower: lower.clone(),
            axis: 0,
            edge,
            sign: 1.0,
        };
        let area = edge.powi(d as i32 - 1);
        let r = flux_cube_face(&l.field, &face, v.quad_res).map_err(solver)?;
        let (oracle_density, oracle) = match closed_form {
            Some((amp, cell)) => (cellular_face_flux(amp, cell, &lower, edge).abs() / area, "stream function"),
            None => {
                let fine = flux_cube_face(&l.field, &face, 4.0 * v.quad_res).map_err(solver)?;
                (fine.flux.abs() / area, "quadrature at 4x resolution")
            }
        };
        faces.push(FaceFlux {
            edge,
            flux: r.flux,
            density: r.flux.abs() / area,
            bound: FACE_BOUND_FACTOR * sup_norm / edge,
            oracle_density,
            oracle,
        });
    }
    let mut by_edge = faces.clone();
    by_edge.sort_by(|a, b| a.edge.total_cmp(&b.edge));
    let monotone = by_edge.windows(2).all(|w| w[1].density <= w[0].density + MONOTONE_SLACK);
    let bounded = faces.iter().all(|f| f.density <= f.bound);
    let oracle_agrees = faces
        .iter()
        .all(|f| (f.density - f.oracle_density).abs() <= ORACLE_TOLERANCE * sup_norm.max(1.0));
    Ok(verdict(
        l,
        "flux",
        monotone && bounded && oracle_agrees,
        FluxDetails {
            lower,
            sup_norm,
            faces,
            monotone,
            bounded,
            oracle_agrees,
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma24Details {
    pub source: Vec<f64>,
    pub tau: f64,
    pub report: FluxReport,
    /// Set when the flow is nowhere faster than the swimmer on the boundary,
    /// so the check asserts nothing.
    pub vacuous: bool,
}

/// Inward flux density across the boundary of the reachable set at `tau`.
pub fn lemma24(l: &Loaded) -> Result<Verdict<Lemma24Details>, CliError> {
    let tau = l
        .config
        .verify
        .tau
        .ok_or_else(|| CliError::Config("verify.tau: required by `verify lemma24`".into()))?;
    let source = l.config.source.clone();
    let arrival = solve(l, &l.grid, &source, tau)?;
    let mask = reachable_mask(&arrival, tau).map_err(solver)?;
    let report = boundary_flux_check(&l.field, &mask).map_err(solver)?;
    let stats = report.faces.as_ref().expect("boundary reports carry face statistics");
    let vacuous = stats.vacuous;
    let passed = stats.passed.unwrap_or(vacuous);
    Ok(verdict(
        l,
        "lemma24",
        passed,
        Lemma24Details {
            source,
            tau,
            report,
            vacuous,
        },
    ))
}
