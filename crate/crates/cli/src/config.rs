//! Run configurations: parsing with field paths in errors, validation, and the
//! objects a config describes.

use std::path::Path;

use reachflow::analysis::Region;
use reachflow::flowfield::from_descriptor;
use reachflow::levelset::DEFAULT_CFL;
use reachflow::{FieldDescriptor, Grid, VectorField};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub field: FieldDescriptor,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub source: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Cells per axis.
    pub resolution: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub horizon: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

/// Settings for the `verify` harnesses. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Sources for coverage and travel-time checks; the config source if empty.
    pub sources: Vec<Vec<f64>>,
    /// How many of `sources` seed travel-time pairs.
    pub pair_sources: usize,
    /// Pairs sampled per pair source.
    pub pairs: usize,
    /// Separation range of sampled pairs; `[2h, half the shortest box edge]`
    /// when absent.
    pub separation: Option<[f64; 2]>,
    /// Trapping region, widened by the mollification radius plus `2h`.
    pub region: Option<Region>,
    /// Smallest fraction of trusted nodes in the unwidened region that must
    /// be reached.
    pub min_coverage: Option<f64>,
    /// Arrival level of the reachable set whose boundary flux is checked.
    pub tau: Option<f64>,
    pub cube_edges: Vec<f64>,
    /// Lower corner of the flux cubes; the grid minimum when absent.
    pub cube_lower: Option<Vec<f64>>,
    /// Quadrature points per unit length.
    pub quad_res: f64,
    /// Dijkstra stencil radius.
    pub stencil: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            pair_sources: 1,
            pairs: 50,
            separation: None,
            region: None,
            min_coverage: None,
            tau: None,
            cube_edges: vec![4.0, 8.0, 16.0],
            cube_lower: None,
            quad_res: 16.0,
            stencil: 3,
        }
    }
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

/// A validated config with the field and grid it describes.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: Config,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
    pub field: VectorField,
    pub grid: Grid,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.inner()))
        })?;
        let hash = hex::encode(Sha256::digest(bytes));
        Self::new(config, hash)
    }

    /// Validates `config`; `hash` identifies it in reports.
    pub fn new(config: Config, hash: String) -> Result<Self, CliError> {
        let bad = |path: &str, msg: String| CliError::Config(format!("{path}: {msg}"));
        let field = from_descriptor(&config.field).map_err(|e| bad("field", e.to_string()))?;
        let g = &config.grid;
        let grid = Grid::new(&g.min, &g.max, &g.resolution).map_err(|e| bad("grid", e.to_string()))?;
        let d = grid.dim();
        if field.dim() != d {
            return Err(bad("grid", format!("dimension {d} does not match the field's {}", field.dim())));
        }
        if !(config.solver.horizon > 0.0) {
            return Err(bad("solver.horizon", "must be positive".into()));
        }
        if !(config.solver.cfl > 0.0 && config.solver.cfl <= 1.0) {
            return Err(bad("solver.cfl", "must lie in (0, 1]".into()));
        }
        check_point(&grid, &config.source, "source")?;
        let v = &config.verify;
        for (i, s) in v.sources.iter().enumerate() {
            check_point(&grid, s, &format!("verify.sources[{i}]"))?;
        }
        if v.pair_sources == 0 {
            return Err(bad("verify.pair_sources", "must be at least 1".into()));
        }
        if let Some([lo, hi]) = v.separation {
            if !(lo > 0.0 && hi > lo) {
                return Err(bad("verify.separation", format!("invalid range [{lo}, {hi}]")));
            }
        }
        if let Some(r) = &v.region {
            if r.lower.len() > d || r.upper.len() > d {
                return Err(bad("verify.region", format!("more bounds than dimensions ({d})")));
            }
        }
        if let Some(c) = v.min_coverage {
            if !(0.0..=1.0).contains(&c) {
                return Err(bad("verify.min_coverage", "must lie in [0, 1]".into()));
            }
        }
        if let Some(t) = v.tau {
            if !(t > 0.0) {
                return Err(bad("verify.tau", "must be positive".into()));
            }
        }
        if v.cube_edges.iter().any(|&a| !(a > 0.0)) {
            return Err(bad("verify.cube_edges", "edges must be positive".into()));
        }
        if let Some(l) = &v.cube_lower {
            if l.len() != d {
                return Err(bad("verify.cube_lower", format!("expected {d} coordinates")));
            }
        }
        if !(v.quad_res > 0.0) {
            return Err(bad("verify.quad_res", "must be positive".into()));
        }
        if v.stencil == 0 || v.stencil > reachflow::oracle::MAX_STENCIL {
            return Err(bad(
                "verify.stencil",
                format!("must lie in [1, {}]", reachflow::oracle::MAX_STENCIL),
            ));
        }
        Ok(Self {
            config,
            hash,
            field,
            grid,
        })
    }

    /// The configured verification sources, or the config source.
    pub fn sources(&self) -> Vec<Vec<f64>> {
        if self.config.verify.sources.is_empty() {
            vec![self.config.source.clone()]
        } else {
            self.config.verify.sources.clone()
        }
    }
}

fn check_point(grid: &Grid, p: &[f64], path: &str) -> Result<(), CliError> {
    if p.len() != grid.dim() {
        return Err(CliError::Config(format!(
            "{path}: expected {} coordinates, got {}",
            grid.dim(),
            p.len()
        )));
    }
    if !grid.contains(p) {
        return Err(CliError::Config(format!("{path}: {p:?} lies outside the grid")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO: &str = r#"{
        "field": {"name": "constant", "params": {"value": [0, 0]}, "dimension": 2},
        "grid": {"min": [-1, -1], "max": [1, 1], "resolution": [32, 32]},
        "solver": {"horizon": 3},
        "source": [0, 0],
        "seed": 7
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let l = Loaded::from_bytes(ZERO.as_bytes()).unwrap();
        assert_eq!(l.config.solver.cfl, DEFAULT_CFL);
        assert_eq!(l.config.verify.pairs, 50);
        assert_eq!(l.sources(), vec![vec![0.0, 0.0]]);
        assert_eq!(l.hash.len(), 64);
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let bad = ZERO.replace(r#""horizon": 3"#, r#""horizon": "long""#);
        match Loaded::from_bytes(bad.as_bytes()) {
            Err(CliError::Config(msg)) => assert!(msg.starts_with("solver.horizon"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_carry_the_field_path() {
        let bad = ZERO.replace(r#""source": [0, 0]"#, r#""source": [5, 0]"#);
        match Loaded::from_bytes(bad.as_bytes()) {
            Err(CliError::Config(msg)) => assert!(msg.starts_with("source"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let bad = ZERO.replace("constant", "whirlpool");
        match Loaded::from_bytes(bad.as_bytes()) {
            Err(CliError::Config(msg)) => assert!(msg.starts_with("field"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = ZERO.replace(r#""seed": 7"#, r#""seed": 7, "sede": 8"#);
        assert!(matches!(Loaded::from_bytes(bad.as_bytes()), Err(CliError::Config(_))));
    }
}
