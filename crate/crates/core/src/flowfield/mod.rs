//! Velocity fields, built-in test flows, and measurements of the hypotheses a
//! flow must satisfy for every point to be reachable: zero divergence, bounded
//! magnitude, and cube averages that vanish for large cubes.
//!
//! Every built-in with a flow structure is derived from a stream function
//! (`d = 2`) or a vector potential (`d = 3`), so its divergence is zero
//! analytically. The sign field is divergence free because each component
//! depends only on the other coordinate.

mod measure;
mod mollifier;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::ScalarGridField;

pub use measure::{
    divergence_residual, mean_drift_profile, sup_norm_estimate, BoxRegion, CenterLattice,
    DriftEntry, DriftProfile,
};
pub use mollifier::SmoothSign;

/// Largest supported dimension (matches the grid file format).
pub const MAX_DIM: usize = 8;

/// Serializable description of a field: `{"name", "params", "dimension"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    #[serde(default)]
    pub params: Value,
    pub dimension: usize,
}

type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

enum Kind {
    Constant(Vec<f64>),
    /// `amplitude * sin(k . x) * dir` with `dir` orthogonal to `k`.
    Shear {
        amplitude: f64,
        k: Vec<f64>,
        dir: Vec<f64>,
    },
    /// Stream function `(A / a) sin(a x0) sin(a x1)`, `a = pi / cell`.
    Cellular { amplitude: f64, a: f64 },
    MollifiedSign { amplitude: f64, sign: SmoothSign },
    /// `sum_j cos(k_j . x + phase_j) b_j` with `k_j . b_j = 0`.
    Modes(Vec<Mode>),
    Tabulated(Vec<ScalarGridField>),
    Custom(Arc<FieldFn>),
    Shifted { base: VectorField, offset: Vec<f64> },
    Negated(VectorField),
    Sum(VectorField, VectorField),
}

struct Mode {
    k: Vec<f64>,
    b: Vec<f64>,
    phase: f64,
}

/// A time-independent velocity field on `R^d`.
#[derive(Clone)]
pub struct VectorField {
    kind: Arc<Kind>,
    dim: usize,
    sup_bound: Option<f64>,
    period: Option<Vec<f64>>,
    feature_length: f64,
    descriptor: FieldDescriptor,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("descriptor", &self.descriptor)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl VectorField {
    fn build(kind: Kind, dim: usize, descriptor: FieldDescriptor) -> Self {
        Self {
            kind: Arc::new(kind),
            dim,
            sup_bound: None,
            period: None,
            feature_length: f64::INFINITY,
            descriptor,
        }
    }

    pub fn constant(value: &[f64]) -> Result<Self> {
        let d = value.len();
        if d < 2 || d > MAX_DIM {
            return Err(Error::param("constant", "value", format!("dimension {d} unsupported")));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("constant", "value", "non-finite component"));
        }
        let mut f = Self::build(
            Kind::Constant(value.to_vec()),
            d,
            FieldDescriptor {
                name: "constant".into(),
                params: json!({ "value": value }),
                dimension: d,
            },
        );
        f.sup_bound = Some(norm(value));
        f.period = Some(vec![1.0; d]);
        Ok(f)
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::constant(&vec![0.0; dim])
    }

    pub fn shear(amplitude: f64, wavevector: &[f64]) -> Result<Self> {
        positive("shear", "amplitude", amplitude)?;
        let d = wavevector.len();
        if d < 2 || d > MAX_DIM {
            return Err(Error::param("shear", "wavevector", format!("dimension {d} unsupported")));
        }
        let kn = norm(wavevector);
        positive("shear", "wavevector", kn)?;
        let dir = if d == 2 {
            vec![-wavevector[1] / kn, wavevector[0] / kn]
        } else {
            // Gram-Schmidt on the axis least aligned with k.
            let axis = (0..d)
                .min_by(|&a, &b| wavevector[a].abs().total_cmp(&wavevector[b].abs()))
                .unwrap();
            let mut u = vec![0.0; d];
            u[axis] = 1.0;
            let proj = wavevector[axis] / (kn * kn);
            for (ui, ki) in u.iter_mut().zip(wavevector) {
                *ui -= proj * ki;
            }
            let un = norm(&u);
            u.iter().map(|x| x / un).collect()
        };
        let mut f = Self::build(
            Kind::Shear {
                amplitude,
                k: wavevector.to_vec(),
                dir,
            },
            d,
            FieldDescriptor {
                name: "shear".into(),
                params: json!({ "amplitude": amplitude, "wavevector": wavevector }),
                dimension: d,
            },
        );
        f.sup_bound = Some(amplitude);
        f.feature_length = std::f64::consts::PI / kn;
        Ok(f)
    }

    /// Array of counter-rotating square cells of side `cell` in the first two
    /// coordinates; remaining coordinates carry no flow.
    pub fn cellular(amplitude: f64, cell: f64, dim: usize) -> Result<Self> {
        positive("cellular", "amplitude", amplitude)?;
        positive("cellular", "cell_size", cell)?;
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::param("cellular", "dimension", format!("{dim} unsupported")));
        }
        let mut f = Self::build(
            Kind::Cellular {
                amplitude,
                a: std::f64::consts::PI / cell,
            },
            dim,
            FieldDescriptor {
                name: "cellular".into(),
                params: json!({ "amplitude": amplitude, "cell_size": cell }),
                dimension: dim,
            },
        );
        f.sup_bound = Some(amplitude);
        f.period = Some(vec![2.0 * cell; dim]);
        f.feature_length = cell;
        Ok(f)
    }

    /// `amplitude * (s(x2), s(x1))` where `s` is `sign` mollified at `radius`.
    pub fn mollified_sign(amplitude: f64, radius: f64) -> Result<Self> {
        positive("mollified_sign", "amplitude", amplitude)?;
        positive("mollified_sign", "radius", radius)?;
        let mut f = Self::build(
            Kind::MollifiedSign {
                amplitude,
                sign: SmoothSign::new(radius),
            },
            2,
            FieldDescriptor {
                name: "mollified_sign".into(),
                params: json!({ "amplitude": amplitude, "radius": radius }),
                dimension: 2,
            },
        );
        f.sup_bound = Some(amplitude * std::f64::consts::SQRT_2);
        f.feature_length = radius;
        Ok(f)
    }

    /// Random superposition of Fourier modes drawn from `seed`, built from a
    /// stream function in 2-D and a vector potential in 3-D. All modes are
    /// `2 pi`-periodic; coefficients are scaled so that `amplitude` bounds the
    /// speed.
    pub fn stream_random(seed: u64, modes: usize, amplitude: f64, dim: usize) -> Result<Self> {
        const MAX_WAVENUMBER: i32 = 3;
        positive("stream_random", "amplitude", amplitude)?;
        if modes == 0 {
            return Err(Error::param("stream_random", "modes", "must be at least 1"));
        }
        if dim != 2 && dim != 3 {
            return Err(Error::param("stream_random", "dimension", "only 2 and 3 are supported"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut list = Vec::with_capacity(modes);
        while list.len() < modes {
            let k: Vec<f64> = (0..dim)
                .map(|_| rng.gen_range(-MAX_WAVENUMBER..=MAX_WAVENUMBER) as f64)
                .collect();
            if k.iter().all(|&c| c == 0.0) {
                continue;
            }
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let b = if dim == 2 {
                let c: f64 = rng.gen_range(-1.0..1.0);
                vec![c * k[1], -c * k[0]]
            } else {
                let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                cross(&k, &a)
            };
            if norm(&b) == 0.0 {
                continue;
            }
            list.push(Mode { k, b, phase });
        }
        let total: f64 = list.iter().map(|m| norm(&m.b)).sum();
        for m in &mut list {
            for b in &mut m.b {
                *b *= amplitude / total;
            }
        }
        let kmax = list.iter().map(|m| norm(&m.k)).fold(0.0, f64::max);
        let mut f = Self::build(
            Kind::Modes(list),
            dim,
            FieldDescriptor {
                name: "stream_random".into(),
                params: json!({ "seed": seed, "modes": modes, "amplitude": amplitude }),
                dimension: dim,
            },
        );
        f.sup_bound = Some(amplitude);
        f.period = Some(vec![std::f64::consts::TAU; dim]);
        f.feature_length = std::f64::consts::PI / kmax;
        Ok(f)
    }

    /// Field sampled on a grid, one persisted grid file per component, with
    /// multilinear interpolation. Points outside the table are clamped; the
    /// table box is the declared domain.
    pub fn tabulated(components: Vec<ScalarGridField>, paths: Option<Vec<String>>) -> Result<Self> {
        let d = components.len();
        if d < 2 || d > MAX_DIM {
            return Err(Error::param("tabulated", "components", format!("{d} components")));
        }
        let grid = components[0].grid().clone();
        if grid.dim() != d || components.iter().any(|c| c.grid() != &grid) {
            return Err(Error::param("tabulated", "components", "grids must match the dimension and each other"));
        }
        if components.iter().any(|c| c.values().iter().any(|v| !v.is_finite())) {
            return Err(Error::param("tabulated", "components", "non-finite samples"));
        }
        let sup = (0..grid.len())
            .map(|i| components.iter().map(|c| c.get(i).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let h = grid.h();
        let mut f = Self::build(
            Kind::Tabulated(components),
            d,
            FieldDescriptor {
                name: "tabulated".into(),
                params: json!({ "components": paths.unwrap_or_default() }),
                dimension: d,
            },
        );
        f.sup_bound = Some(sup);
        f.feature_length = 4.0 * h;
        Ok(f)
    }

    /// Field given by a closure. Not reconstructible from its descriptor.
    pub fn custom<F>(dim: usize, name: &str, sup_bound: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let mut v = Self::build(
            Kind::Custom(Arc::new(f)),
            dim,
            FieldDescriptor {
                name: "custom".into(),
                params: json!({ "label": name }),
                dimension: dim,
            },
        );
        v.sup_bound = sup_bound;
        v
    }

    /// `x -> self(x - offset)`.
    pub fn shifted(&self, offset: &[f64]) -> Self {
        let mut f = Self::build(
            Kind::Shifted {
                base: self.clone(),
                offset: offset.to_vec(),
            },
            self.dim,
            FieldDescriptor {
                name: "shifted".into(),
                params: json!({ "base": self.descriptor, "offset": offset }),
                dimension: self.dim,
            },
        );
        f.sup_bound = self.sup_bound;
        f.period = self.period.clone();
        f.feature_length = self.feature_length;
        f
    }

    /// The opposite field `-V`.
    pub fn negated(&self) -> Self {
        let mut f = Self::build(
            Kind::Negated(self.clone()),
            self.dim,
            FieldDescriptor {
                name: "negated".into(),
                params: json!({ "base": self.descriptor }),
                dimension: self.dim,
            },
        );
        f.sup_bound = self.sup_bound;
        f.period = self.period.clone();
        f.feature_length = self.feature_length;
        f
    }

    pub fn sum(&self, other: &VectorField) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut f = Self::build(
            Kind::Sum(self.clone(), other.clone()),
            self.dim,
            FieldDescriptor {
                name: "sum".into(),
                params: json!({ "terms": [self.descriptor, other.descriptor] }),
                dimension: self.dim,
            },
        );
        f.sup_bound = self.sup_bound.zip(other.sup_bound).map(|(a, b)| a + b);
        f.period = if self.period == other.period {
            self.period.clone()
        } else {
            None
        };
        f.feature_length = self.feature_length.min(other.feature_length);
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn period(&self) -> Option<&[f64]> {
        self.period.as_deref()
    }

    /// Shortest length over which the field changes appreciably.
    pub fn feature_length(&self) -> f64 {
        self.feature_length
    }

    pub fn descriptor(&self) -> &FieldDescriptor {
        &self.descriptor
    }

    /// Mollification radius for the sign field, zero otherwise.
    pub fn mollification_radius(&self) -> f64 {
        match &*self.kind {
            Kind::MollifiedSign { sign, .. } => sign.radius(),
            Kind::Shifted { base, .. } | Kind::Negated(base) => base.mollification_radius(),
            _ => 0.0,
        }
    }

    /// Whether `x` lies in the declared domain (all of `R^d` except for
    /// tabulated fields).
    pub fn in_domain(&self, x: &[f64]) -> bool {
        match &*self.kind {
            Kind::Tabulated(c) => c[0].grid().contains(x),
            Kind::Shifted { base, offset } => {
                let y: Vec<f64> = x.iter().zip(offset).map(|(a, b)| a - b).collect();
                base.in_domain(&y)
            }
            Kind::Negated(base) => base.in_domain(x),
            Kind::Sum(a, b) => a.in_domain(x) && b.in_domain(x),
            _ => true,
        }
    }

    /// Writes `V(x)` into `out`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match &*self.kind {
            Kind::Constant(v) => out.copy_from_slice(v),
            Kind::Shear { amplitude, k, dir } => {
                let s = amplitude * dot(k, x).sin();
                for (o, u) in out.iter_mut().zip(dir) {
                    *o = s * u;
                }
            }
            Kind::Cellular { amplitude, a } => {
                let (s0, c0) = (a * x[0]).sin_cos();
                let (s1, c1) = (a * x[1]).sin_cos();
                out[0] = amplitude * s0 * c1;
                out[1] = -amplitude * c0 * s1;
                for o in out.iter_mut().skip(2) {
                    *o = 0.0;
                }
            }
            Kind::MollifiedSign { amplitude, sign } => {
                out[0] = amplitude * sign.eval(x[1]);
                out[1] = amplitude * sign.eval(x[0]);
            }
            Kind::Modes(modes) => {
                out.fill(0.0);
                for m in modes {
                    let c = (dot(&m.k, x) + m.phase).cos();
                    for (o, b) in out.iter_mut().zip(&m.b) {
                        *o += c * b;
                    }
                }
            }
            Kind::Tabulated(comps) => {
                let grid = comps[0].grid();
                let y: Vec<f64> = (0..self.dim)
                    .map(|k| x[k].clamp(grid.min()[k], grid.max(k)))
                    .collect();
                for (o, c) in out.iter_mut().zip(comps) {
                    *o = c.interpolate(&y).unwrap_or(0.0);
                }
            }
            Kind::Custom(f) => f(x, out),
            Kind::Shifted { base, offset } => {
                let mut y = [0.0; MAX_DIM];
                for k in 0..self.dim {
                    y[k] = x[k] - offset[k];
                }
                base.eval_into(&y[..self.dim], out);
            }
            Kind::Negated(base) => {
                base.eval_into(x, out);
                for o in out.iter_mut() {
                    *o = -*o;
                }
            }
            Kind::Sum(a, b) => {
                let mut tmp = [0.0; MAX_DIM];
                a.eval_into(x, out);
                b.eval_into(x, &mut tmp[..self.dim]);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }
}

/// Constructs a built-in field by name. Recognized names and parameters:
///
/// - `constant`: `value: [f64]`
/// - `shear`: `amplitude`, `wavevector: [f64]`
/// - `cellular`: `amplitude`, `cell_size`, optional `dimension` (default 2)
/// - `mollified_sign`: `amplitude`, optional `radius` (default 0.5)
/// - `stream_random`: `seed`, `modes`, `amplitude`, optional `dimension`
/// - `tabulated`: `components: [path]`, one grid file per component
/// - `shifted`, `negated`, `sum`: compositions of other descriptors
pub fn make_builtin(name: &str, params: &Value) -> Result<VectorField> {
    match name {
        "constant" => VectorField::constant(&vec_param(name, params, "value")?),
        "shear" => VectorField::shear(
            f64_param(name, params, "amplitude", None)?,
            &vec_param(name, params, "wavevector")?,
        ),
        "cellular" => VectorField::cellular(
            f64_param(name, params, "amplitude", None)?,
            f64_param(name, params, "cell_size", Some(1.0))?,
            f64_param(name, params, "dimension", Some(2.0))? as usize,
        ),
        "mollified_sign" => VectorField::mollified_sign(
            f64_param(name, params, "amplitude", None)?,
            f64_param(name, params, "radius", Some(0.5))?,
        ),
        "stream_random" => VectorField::stream_random(
            f64_param(name, params, "seed", None)? as u64,
            f64_param(name, params, "modes", None)? as usize,
            f64_param(name, params, "amplitude", None)?,
            f64_param(name, params, "dimension", Some(2.0))? as usize,
        ),
        "tabulated" => {
            let paths: Vec<String> = params
                .get("components")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| Error::param(name, "components", "expected a list of paths"))?;
            let comps = paths
                .iter()
                .map(|p| crate::io::read_grid(Path::new(p)))
                .collect::<Result<Vec<_>>>()?;
            VectorField::tabulated(comps, Some(paths))
        }
        "shifted" => {
            let base = nested(name, params, "base")?;
            Ok(base.shifted(&vec_param(name, params, "offset")?))
        }
        "negated" => Ok(nested(name, params, "base")?.negated()),
        "sum" => {
            let terms: Vec<FieldDescriptor> = params
                .get("terms")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| Error::param(name, "terms", "expected two descriptors"))?;
            match terms.as_slice() {
                [a, b] => from_descriptor(a)?.sum(&from_descriptor(b)?),
                _ => Err(Error::param(name, "terms", "expected two descriptors")),
            }
        }
        other => Err(Error::UnknownField(other.to_string())),
    }
}

/// Rebuilds a field from its descriptor, checking the declared dimension.
pub fn from_descriptor(desc: &FieldDescriptor) -> Result<VectorField> {
    let mut params = desc.params.clone();
    if matches!(desc.name.as_str(), "cellular" | "stream_random") {
        if let Value::Object(map) = &mut params {
            map.entry("dimension").or_insert(json!(desc.dimension));
        } else if params.is_null() {
            params = json!({ "dimension": desc.dimension });
        }
    }
    let f = make_builtin(&desc.name, &params)?;
    if f.dim() != desc.dimension {
        return Err(Error::DimensionMismatch {
            expected: desc.dimension,
            got: f.dim(),
        });
    }
    Ok(f)
}

fn nested(field: &str, params: &Value, key: &str) -> Result<VectorField> {
    let d: FieldDescriptor = params
        .get(key)
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| Error::param(field, key, "expected a field descriptor"))?;
    from_descriptor(&d)
}

fn f64_param(field: &str, params: &Value, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::param(field, key, "expected a number")),
        None => default.ok_or_else(|| Error::param(field, key, "missing")),
    }
}

fn vec_param(field: &str, params: &Value, key: &str) -> Result<Vec<f64>> {
    params
        .get(key)
        .and_then(|v| v.as_array())
        .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| Error::param(field, key, "expected an array of numbers"))
}

fn positive(field: &str, param: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, param, format!("must be positive, got {v}")))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
