//! The declarative data model for one estimation / invalidation task:
//! dynamics, time grid, support sets, moment data, an optional spatial
//! partition of the initial set, reference distributions, and queries.
//!
//! Problems are written as JSON (see the schema in the README). Parameters
//! are ordinary states with zero dynamics; the horizon is always `[0, 1]`
//! (rescale time in the dynamics if needed).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::poly::{parse_polynomial, Polynomial};

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid problem:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

fn schema_err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ProblemError> {
    Err(ProblemError::Schema { path: path.into(), message: message.into() })
}

/// Polynomial ODE right-hand side over named states; time lives in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalSystem {
    state_names: Vec<String>,
    field: Vec<Polynomial>,
}

impl DynamicalSystem {
    pub fn new(state_names: Vec<String>, field: Vec<Polynomial>) -> Self {
        assert_eq!(state_names.len(), field.len());
        Self { state_names, field }
    }

    pub fn n_x(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn field(&self) -> &[Polynomial] {
        &self.field
    }

    /// max_i deg(f_i); 0 when the whole field vanishes.
    pub fn degree(&self) -> u32 {
        self.field.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn is_static(&self) -> bool {
        self.field.iter().all(Polynomial::is_zero)
    }
}

/// A semialgebraic support description `{ g_i >= 0 }`. Emptiness is not
/// checked statically: an empty consistency set is exactly what
/// invalidation detects.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupportSet {
    pub label: String,
    pub inequalities: Vec<Polynomial>,
}

/// Interval data `lower <= nu_k^(exponents) <= upper` on one raw moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBound {
    pub time_index: usize,
    pub exponents: Vec<u32>,
    pub lower: f64,
    pub upper: f64,
}

impl MomentBound {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Per-coordinate reference law; coordinates are independent.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Dirac(f64),
    Uniform(f64, f64),
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

impl Law {
    /// Exact raw moment `E[X^m]`.
    pub fn raw_moment(&self, m: u32) -> f64 {
        match self {
            Law::Dirac(c) => c.powi(m as i32),
            Law::Uniform(a, b) => {
                if m == 0 {
                    1.0
                } else {
                    let p = m as i32;
                    (b.powi(p + 1) - a.powi(p + 1)) / (f64::from(m + 1) * (b - a))
                }
            }
            Law::Beta { alpha, beta, lo, hi } => {
                // standard Beta moments by recurrence, then affine rescale
                let mut std = vec![1.0];
                for k in 1..=m {
                    let k = f64::from(k);
                    std.push(std.last().unwrap() * (alpha + k - 1.0) / (alpha + beta + k - 1.0));
                }
                let w = hi - lo;
                let mut acc = 0.0;
                let mut binom = 1.0;
                for j in 0..=m {
                    acc += binom * lo.powi((m - j) as i32) * w.powi(j as i32) * std[j as usize];
                    binom *= f64::from(m - j) / f64::from(j + 1);
                }
                acc
            }
            Law::Discrete { points, weights } => points
                .iter()
                .zip(weights)
                .map(|(p, w)| w * p.powi(m as i32))
                .sum(),
        }
    }

    /// Smallest interval carrying the full mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Law::Dirac(c) => (*c, *c),
            Law::Uniform(a, b) => (*a, *b),
            Law::Beta { lo, hi, .. } => (*lo, *hi),
            Law::Discrete { points, .. } => {
                let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }
}

/// One coordinate of the oracle block. `pin` asks the assembler to inject
/// the law's exact moments as equality data at the initial time.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    pub law: Law,
    pub pin: bool,
}

/// Reference distributions, one optional entry per state.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub entries: Vec<Option<OracleEntry>>,
}

impl OracleSpec {
    pub fn pinned_states(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                Some(e) if e.pin => Some(i),
                _ => None,
            })
            .collect()
    }
}

/// Axis-aligned box over the partition axes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBox {
    pub intervals: Vec<(f64, f64)>,
}

/// Uniform grid partition of the initial-set bounding box over selected axes.
/// Cells are indexed row-major with the first axis slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub time_index: usize,
    pub axes: Vec<usize>,
    pub grid: Vec<usize>,
    pub cells: Vec<CellBox>,
}

impl Partition {
    pub fn from_grid(
        time_index: usize,
        axes: Vec<usize>,
        grid: Vec<usize>,
        ranges: &[(f64, f64)],
    ) -> Self {
        assert_eq!(axes.len(), grid.len());
        assert_eq!(axes.len(), ranges.len());
        let n_cells: usize = grid.iter().product();
        let mut cells = Vec::with_capacity(n_cells);
        for j in 0..n_cells {
            let mut rem = j;
            let mut intervals = Vec::with_capacity(axes.len());
            // decode row-major index, first axis slowest
            let mut idx = vec![0usize; axes.len()];
            for a in (0..axes.len()).rev() {
                idx[a] = rem % grid[a];
                rem /= grid[a];
            }
            for a in 0..axes.len() {
                let (lo, hi) = ranges[a];
                let w = (hi - lo) / grid[a] as f64;
                intervals.push((lo + idx[a] as f64 * w, lo + (idx[a] + 1) as f64 * w));
            }
            cells.push(CellBox { intervals });
        }
        Self { time_index, axes, grid, cells }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, j: usize) -> &CellBox {
        &self.cells[j]
    }

    /// Cell holding `point` (coordinates over the partition axes); points on
    /// an interior boundary go to the higher cell, matching half-open bins.
    pub fn cell_containing(&self, point: &[f64]) -> Option<usize> {
        assert_eq!(point.len(), self.axes.len());
        let mut j = 0usize;
        for a in 0..self.axes.len() {
            let (lo, _) = self.cells[0].intervals[a];
            let (_, hi_last) = self.cells[self.n_cells() - 1].intervals[a];
            let full_lo = lo;
            let full_hi = {
                // first cell starts at the range low, last ends at range high
                let _ = hi_last;
                let (l0, h0) = self.cells[0].intervals[a];
                l0 + (h0 - l0) * self.grid[a] as f64
            };
            let p = point[a];
            if p < full_lo || p > full_hi {
                return None;
            }
            let w = (full_hi - full_lo) / self.grid[a] as f64;
            let mut i = ((p - full_lo) / w).floor() as usize;
            if i >= self.grid[a] {
                i = self.grid[a] - 1;
            }
            j = j * self.grid[a] + i;
        }
        Some(j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryKind {
    MomentBound { time_index: usize, exponents: Vec<u32> },
    MassBound { cell: usize },
    ConsistencyCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub kind: QueryKind,
    pub order: u32,
}

/// The full task: system + data + queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub system: DynamicalSystem,
    /// Global bounding box per state (`None` = unbounded, flagged by validate).
    pub box_bounds: Vec<Option<(f64, f64)>>,
    /// Strictly increasing grid within [0,1].
    pub times: Vec<f64>,
    /// Per-grid-point support sets, aligned with `times`.
    pub supports: Vec<SupportSet>,
    pub moments: Vec<MomentBound>,
    pub partition: Option<Partition>,
    pub oracle: Option<OracleSpec>,
    pub queries: Vec<Query>,
}

impl EstimationProblem {
    pub fn n_x(&self) -> usize {
        self.system.n_x()
    }

    /// Number of time intervals.
    pub fn m_t(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    /// Product-form box localizers `(x_i - lo)(hi - x_i)` for the global set.
    pub fn global_box_polys(&self) -> Vec<Polynomial> {
        let n = self.n_x();
        self.box_bounds
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|(lo, hi)| box_poly(i, lo, hi, n)))
            .collect()
    }

    pub fn max_query_order(&self) -> Option<u32> {
        self.queries.iter().map(|q| q.order).max()
    }
}

/// `(x_i - lo)(hi - x_i)` as a polynomial over `n_x` states.
pub fn box_poly(i: usize, lo: f64, hi: f64, n_x: usize) -> Polynomial {
    let xi = Polynomial::state(i, n_x);
    let a = xi.sub(&Polynomial::constant(lo, n_x)).unwrap();
    let b = Polynomial::constant(hi, n_x).sub(&xi).unwrap();
    a.mul(&b).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

/// One validation finding, addressed by a JSON-style field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

fn diag(severity: Severity, path: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { severity, path: path.into(), message: message.into() }
}

// ---------------------------------------------------------------------------
// JSON ingestion

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ProblemError> {
    v.as_object().ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: "expected an object".into(),
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ProblemError> {
    v.as_array().ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: "expected an array".into(),
    })
}

fn as_f64(v: &Value, path: &str) -> Result<f64, ProblemError> {
    v.as_f64().ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: "expected a number".into(),
    })
}

fn as_usize(v: &Value, path: &str) -> Result<usize, ProblemError> {
    v.as_u64().map(|u| u as usize).ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: "expected a nonnegative integer".into(),
    })
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, ProblemError> {
    v.as_str().ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: "expected a string".into(),
    })
}

fn get<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, ProblemError> {
    obj.get(key).ok_or(ProblemError::Schema {
        path: path.to_string(),
        message: format!("missing required field '{key}'"),
    })
}

fn parse_poly_field(text: &str, names: &[String], path: &str) -> Result<Polynomial, ProblemError> {
    parse_polynomial(text, names).map_err(|e| ProblemError::Schema {
        path: path.to_string(),
        message: e.to_string(),
    })
}

fn parse_law(obj: &Map<String, Value>, path: &str) -> Result<OracleEntry, ProblemError> {
    let pin = match obj.get("pin") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return schema_err(format!("{path}.pin"), "expected a boolean"),
    };
    let keys: Vec<&String> = obj.keys().filter(|k| *k != "pin" && *k != "scale").collect();
    if keys.len() != 1 {
        return schema_err(path, "expected exactly one of dirac/uniform/beta/discrete");
    }
    let law = match keys[0].as_str() {
        "dirac" => Law::Dirac(as_f64(&obj["dirac"], &format!("{path}.dirac"))?),
        "uniform" => {
            let arr = as_array(&obj["uniform"], &format!("{path}.uniform"))?;
            if arr.len() != 2 {
                return schema_err(format!("{path}.uniform"), "expected [a, b]");
            }
            Law::Uniform(
                as_f64(&arr[0], &format!("{path}.uniform[0]"))?,
                as_f64(&arr[1], &format!("{path}.uniform[1]"))?,
            )
        }
        "beta" => {
            let arr = as_array(&obj["beta"], &format!("{path}.beta"))?;
            if arr.len() != 2 {
                return schema_err(format!("{path}.beta"), "expected [alpha, beta]");
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            if let Some(scale) = obj.get("scale") {
                let s = as_array(scale, &format!("{path}.scale"))?;
                if s.len() != 2 {
                    return schema_err(format!("{path}.scale"), "expected [a, b]");
                }
                lo = as_f64(&s[0], &format!("{path}.scale[0]"))?;
                hi = as_f64(&s[1], &format!("{path}.scale[1]"))?;
            }
            Law::Beta {
                alpha: as_f64(&arr[0], &format!("{path}.beta[0]"))?,
                beta: as_f64(&arr[1], &format!("{path}.beta[1]"))?,
                lo,
                hi,
            }
        }
        "discrete" => {
            let d = as_obj(&obj["discrete"], &format!("{path}.discrete"))?;
            let pts = as_array(get(d, "points", &format!("{path}.discrete"))?, &format!("{path}.discrete.points"))?;
            let wts = as_array(get(d, "weights", &format!("{path}.discrete"))?, &format!("{path}.discrete.weights"))?;
            let points = pts
                .iter()
                .enumerate()
                .map(|(i, v)| as_f64(v, &format!("{path}.discrete.points[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let weights = wts
                .iter()
                .enumerate()
                .map(|(i, v)| as_f64(v, &format!("{path}.discrete.weights[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Law::Discrete { points, weights }
        }
        other => return schema_err(path, format!("unknown law '{other}'")),
    };
    Ok(OracleEntry { law, pin })
}

/// Parses the JSON problem text, then runs the hard-invariant checks.
pub fn parse_problem_json(text: &str) -> Result<EstimationProblem, ProblemError> {
    let root: Value = serde_json::from_str(text)?;
    let obj = as_obj(&root, "$")?;

    // states and field
    let states_v = as_array(get(obj, "states", "$")?, "$.states")?;
    let state_names: Vec<String> = states_v
        .iter()
        .enumerate()
        .map(|(i, v)| as_str(v, &format!("$.states[{i}]")).map(str::to_string))
        .collect::<Result<_, _>>()?;
    let n_x = state_names.len();

    let field_v = as_array(get(obj, "field", "$")?, "$.field")?;
    if field_v.len() != n_x {
        return schema_err("$.field", format!("expected {n_x} components, found {}", field_v.len()));
    }
    let field: Vec<Polynomial> = field_v
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let path = format!("$.field[{i}]");
            parse_poly_field(as_str(v, &path)?, &state_names, &path)
        })
        .collect::<Result<_, _>>()?;

    // box
    let mut box_bounds: Vec<Option<(f64, f64)>> = vec![None; n_x];
    if let Some(bx) = obj.get("box") {
        let bx = as_obj(bx, "$.box")?;
        for (name, v) in bx {
            let path = format!("$.box.{name}");
            let Some(i) = state_names.iter().position(|n| n == name) else {
                return schema_err(&path, "unknown state name");
            };
            let arr = as_array(v, &path)?;
            if arr.len() != 2 {
                return schema_err(&path, "expected [lo, hi]");
            }
            box_bounds[i] = Some((
                as_f64(&arr[0], &format!("{path}[0]"))?,
                as_f64(&arr[1], &format!("{path}[1]"))?,
            ));
        }
    }

    // times
    let times_v = as_array(get(obj, "times", "$")?, "$.times")?;
    let times: Vec<f64> = times_v
        .iter()
        .enumerate()
        .map(|(i, v)| as_f64(v, &format!("$.times[{i}]")))
        .collect::<Result<_, _>>()?;

    // supports
    let mut supports: Vec<SupportSet> = (0..times.len())
        .map(|k| SupportSet { label: format!("X_{k}"), inequalities: vec![] })
        .collect();
    if let Some(sup) = obj.get("support") {
        for (i, entry) in as_array(sup, "$.support")?.iter().enumerate() {
            let path = format!("$.support[{i}]");
            let e = as_obj(entry, &path)?;
            let k = as_usize(get(e, "time_index", &path)?, &format!("{path}.time_index"))?;
            if k >= times.len() {
                return schema_err(format!("{path}.time_index"), format!("time index {k} out of range (grid has {} points)", times.len()));
            }
            let ineqs = as_array(get(e, "inequalities", &path)?, &format!("{path}.inequalities"))?;
            for (j, g) in ineqs.iter().enumerate() {
                let gpath = format!("{path}.inequalities[{j}]");
                let poly = parse_poly_field(as_str(g, &gpath)?, &state_names, &gpath)?;
                supports[k].inequalities.push(poly);
            }
        }
    }

    // moments
    let mut moments = Vec::new();
    if let Some(ms) = obj.get("moments") {
        for (i, entry) in as_array(ms, "$.moments")?.iter().enumerate() {
            let path = format!("$.moments[{i}]");
            let e = as_obj(entry, &path)?;
            let time_index = as_usize(get(e, "time_index", &path)?, &format!("{path}.time_index"))?;
            let exps = as_array(get(e, "exponents", &path)?, &format!("{path}.exponents"))?;
            let exponents: Vec<u32> = exps
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    as_usize(v, &format!("{path}.exponents[{j}]")).map(|u| u as u32)
                })
                .collect::<Result<_, _>>()?;
            let lower = match e.get("lower") {
                Some(Value::Null) | None => f64::NEG_INFINITY,
                Some(v) => as_f64(v, &format!("{path}.lower"))?,
            };
            let upper = match e.get("upper") {
                Some(Value::Null) | None => f64::INFINITY,
                Some(v) => as_f64(v, &format!("{path}.upper"))?,
            };
            moments.push(MomentBound { time_index, exponents, lower, upper });
        }
    }

    // oracle (needed before partition for nothing; partition needs box)
    let oracle = match obj.get("oracle") {
        None => None,
        Some(v) => {
            let o = as_obj(v, "$.oracle")?;
            let mut entries: Vec<Option<OracleEntry>> = vec![None; n_x];
            for (name, law_v) in o {
                let path = format!("$.oracle.{name}");
                let Some(i) = state_names.iter().position(|n| n == name) else {
                    return schema_err(&path, "unknown state name");
                };
                entries[i] = Some(parse_law(as_obj(law_v, &path)?, &path)?);
            }
            Some(OracleSpec { entries })
        }
    };

    // partition
    let partition = match obj.get("partition") {
        None => None,
        Some(v) => {
            let p = as_obj(v, "$.partition")?;
            let time_index = as_usize(get(p, "time_index", "$.partition")?, "$.partition.time_index")?;
            let grid_v = as_array(get(p, "grid", "$.partition")?, "$.partition.grid")?;
            let grid: Vec<usize> = grid_v
                .iter()
                .enumerate()
                .map(|(i, v)| as_usize(v, &format!("$.partition.grid[{i}]")))
                .collect::<Result<_, _>>()?;
            let axes: Vec<usize> = match p.get("axes") {
                None => (0..n_x).collect(),
                Some(a) => as_array(a, "$.partition.axes")?
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let path = format!("$.partition.axes[{i}]");
                        let name = as_str(v, &path)?;
                        state_names
                            .iter()
                            .position(|n| n == name)
                            .ok_or(ProblemError::Schema { path, message: format!("unknown state name '{name}'") })
                    })
                    .collect::<Result<_, _>>()?,
            };
            if grid.len() != axes.len() {
                return schema_err("$.partition.grid", format!(
                    "grid has {} entries but there are {} partition axes",
                    grid.len(), axes.len()
                ));
            }
            if grid.iter().any(|&g| g == 0) {
                return schema_err("$.partition.grid", "grid entries must be positive");
            }
            let mut ranges = Vec::with_capacity(axes.len());
            for (slot, &a) in axes.iter().enumerate() {
                match box_bounds[a] {
                    Some(r) => ranges.push(r),
                    None => {
                        return schema_err(
                            format!("$.partition.axes[{slot}]"),
                            format!("state '{}' has no bounding box to partition", state_names[a]),
                        )
                    }
                }
            }
            Some(Partition::from_grid(time_index, axes, grid, &ranges))
        }
    };

    // queries
    let mut queries = Vec::new();
    if let Some(qs) = obj.get("queries") {
        for (i, entry) in as_array(qs, "$.queries")?.iter().enumerate() {
            let path = format!("$.queries[{i}]");
            let q = as_obj(entry, &path)?;
            let order = as_usize(get(q, "order", &path)?, &format!("{path}.order"))? as u32;
            let kind = match as_str(get(q, "kind", &path)?, &format!("{path}.kind"))? {
                "moment_bound" => {
                    let time_index =
                        as_usize(get(q, "time_index", &path)?, &format!("{path}.time_index"))?;
                    let exps = as_array(get(q, "exponents", &path)?, &format!("{path}.exponents"))?;
                    let exponents: Vec<u32> = exps
                        .iter()
                        .enumerate()
                        .map(|(j, v)| as_usize(v, &format!("{path}.exponents[{j}]")).map(|u| u as u32))
                        .collect::<Result<_, _>>()?;
                    QueryKind::MomentBound { time_index, exponents }
                }
                "mass_bound" => QueryKind::MassBound {
                    cell: as_usize(get(q, "cell", &path)?, &format!("{path}.cell"))?,
                },
                "consistency_check" => QueryKind::ConsistencyCheck,
                other => return schema_err(format!("{path}.kind"), format!("unknown query kind '{other}'")),
            };
            queries.push(Query { kind, order });
        }
    }

    let problem = EstimationProblem {
        system: DynamicalSystem::new(state_names, field),
        box_bounds,
        times,
        supports,
        moments,
        partition,
        oracle,
        queries,
    };

    let errors: Vec<Diagnostic> = validate(&problem)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(ProblemError::Invalid(errors));
    }
    Ok(problem)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<EstimationProblem, ProblemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_json(&text)
}

// ---------------------------------------------------------------------------
// Validation

/// Checks every invariant; returns an empty list iff the problem is sound.
/// Warnings flag legal-but-suspicious inputs (e.g. an unbounded state).
pub fn validate(problem: &EstimationProblem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n_x = problem.n_x();
    let names = problem.system.state_names();

    // states
    {
        let mut seen = std::collections::HashSet::new();
        for (i, name) in names.iter().enumerate() {
            if name == "t" {
                out.push(diag(Severity::Error, format!("$.states[{i}]"), "state may not be named 't'"));
            }
            if !seen.insert(name.clone()) {
                out.push(diag(Severity::Error, format!("$.states[{i}]"), format!("duplicate state name '{name}'")));
            }
        }
        if n_x == 0 {
            out.push(diag(Severity::Error, "$.states", "at least one state is required"));
        }
    }

    // times
    if problem.times.is_empty() {
        out.push(diag(Severity::Error, "$.times", "at least one grid point is required"));
    }
    for (i, &t) in problem.times.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            out.push(diag(Severity::Error, format!("$.times[{i}]"), format!("grid point {t} outside [0,1]")));
        }
        if i > 0 && t <= problem.times[i - 1] {
            out.push(diag(Severity::Error, format!("$.times[{i}]"), "grid not increasing"));
        }
    }

    // box
    for (i, b) in problem.box_bounds.iter().enumerate() {
        match b {
            None => out.push(diag(
                Severity::Warning,
                format!("$.box.{}", names.get(i).map(String::as_str).unwrap_or("?")),
                "unbounded support: no bounding box declared for this state",
            )),
            Some((lo, hi)) if lo > hi => out.push(diag(
                Severity::Error,
                format!("$.box.{}", names[i]),
                format!("empty box [{lo}, {hi}]"),
            )),
            _ => {}
        }
    }

    // supports
    for (k, s) in problem.supports.iter().enumerate() {
        for (j, g) in s.inequalities.iter().enumerate() {
            if g.n_x() != n_x {
                out.push(diag(
                    Severity::Error,
                    format!("$.support[{k}].inequalities[{j}]"),
                    format!("polynomial over {} states, expected {n_x}", g.n_x()),
                ));
            }
        }
    }

    // moments
    for (i, m) in problem.moments.iter().enumerate() {
        let path = format!("$.moments[{i}]");
        if m.time_index >= problem.times.len() {
            out.push(diag(Severity::Error, format!("{path}.time_index"), format!("time index {} out of range", m.time_index)));
        }
        if m.exponents.len() != n_x {
            out.push(diag(Severity::Error, format!("{path}.exponents"), format!("expected {n_x} exponents, found {}", m.exponents.len())));
        }
        if m.lower > m.upper {
            out.push(diag(Severity::Error, &path, format!("lower {} exceeds upper {}", m.lower, m.upper)));
        }
        if m.lower == f64::NEG_INFINITY && m.upper == f64::INFINITY {
            out.push(diag(Severity::Warning, &path, "vacuous moment bound (both ends infinite)"));
        }
    }
    if let Some(rmax) = problem.max_query_order() {
        let cap = 2 * rmax;
        if problem.moments.iter().any(|m| m.degree() > cap) {
            out.push(diag(
                Severity::Warning,
                "$.moments",
                format!("some moment bounds exceed degree {cap} and are inactive at every queried order"),
            ));
        }
    }

    // partition
    if let Some(p) = &problem.partition {
        if p.time_index != 0 {
            out.push(diag(Severity::Error, "$.partition.time_index", "partitions are only supported at time index 0"));
        }
        for (slot, &a) in p.axes.iter().enumerate() {
            if a >= n_x {
                out.push(diag(Severity::Error, format!("$.partition.axes[{slot}]"), "axis out of range"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &a in &p.axes {
            if !seen.insert(a) {
                out.push(diag(Severity::Error, "$.partition.axes", "duplicate partition axis"));
            }
        }
        // overlap / cover checks (grid construction satisfies them; explicit
        // cells built through the API are re-checked here)
        for j in 0..p.n_cells() {
            for l in (j + 1)..p.n_cells() {
                if boxes_overlap(&p.cells[j], &p.cells[l]) {
                    out.push(diag(Severity::Warning, "$.partition", format!("cells {j} and {l} overlap")));
                }
            }
        }
    }

    // oracle
    if let Some(o) = &problem.oracle {
        for (i, e) in o.entries.iter().enumerate() {
            let Some(e) = e else { continue };
            let path = format!("$.oracle.{}", names[i]);
            match &e.law {
                Law::Uniform(a, b) if a >= b => {
                    out.push(diag(Severity::Error, &path, format!("uniform requires a < b, got [{a}, {b}]")));
                }
                Law::Beta { alpha, beta, lo, hi } => {
                    if *alpha <= 0.0 || *beta <= 0.0 {
                        out.push(diag(Severity::Error, &path, "beta shape parameters must be positive"));
                    }
                    if lo >= hi {
                        out.push(diag(Severity::Error, &path, "beta scale requires a < b"));
                    }
                }
                Law::Discrete { points, weights } => {
                    if points.is_empty() || points.len() != weights.len() {
                        out.push(diag(Severity::Error, &path, "discrete law needs matching nonempty points and weights"));
                    }
                    if weights.iter().any(|w| *w < 0.0) {
                        out.push(diag(Severity::Error, &path, "discrete weights must be nonnegative"));
                    }
                    let s: f64 = weights.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        out.push(diag(Severity::Error, &path, format!("discrete weights sum to {s}, expected 1")));
                    }
                }
                _ => {}
            }
        }
    }

    // queries
    for (i, q) in problem.queries.iter().enumerate() {
        let path = format!("$.queries[{i}]");
        if q.order == 0 {
            out.push(diag(Severity::Error, format!("{path}.order"), "relaxation order must be >= 1"));
        }
        match &q.kind {
            QueryKind::MomentBound { time_index, exponents } => {
                if *time_index >= problem.times.len() {
                    out.push(diag(Severity::Error, format!("{path}.time_index"), format!("time index {time_index} out of range")));
                }
                if exponents.len() != n_x {
                    out.push(diag(Severity::Error, format!("{path}.exponents"), format!("expected {n_x} exponents")));
                }
                let deg: u32 = exponents.iter().sum();
                if deg > 2 * q.order {
                    out.push(diag(Severity::Error, format!("{path}.exponents"), format!("moment degree {deg} exceeds 2r = {}", 2 * q.order)));
                }
            }
            QueryKind::MassBound { cell } => match &problem.partition {
                None => out.push(diag(Severity::Error, &path, "mass query without a partition")),
                Some(p) if *cell >= p.n_cells() => {
                    out.push(diag(Severity::Error, format!("{path}.cell"), format!("cell {cell} out of range (partition has {})", p.n_cells())));
                }
                _ => {}
            },
            QueryKind::ConsistencyCheck => {}
        }
    }

    out
}

fn boxes_overlap(a: &CellBox, b: &CellBox) -> bool {
    a.intervals
        .iter()
        .zip(&b.intervals)
        .all(|((alo, ahi), (blo, bhi))| alo < bhi && blo < ahi)
}

// ---------------------------------------------------------------------------
// Serialization back to the schema

/// One `$.moments[i]` object; infinite ends are omitted, matching the loader.
pub fn moment_bound_to_json(m: &MomentBound) -> Value {
    let mut o = Map::new();
    o.insert("time_index".into(), json!(m.time_index));
    o.insert("exponents".into(), json!(m.exponents));
    if m.lower != f64::NEG_INFINITY {
        o.insert("lower".into(), json!(m.lower));
    }
    if m.upper != f64::INFINITY {
        o.insert("upper".into(), json!(m.upper));
    }
    Value::Object(o)
}

pub fn problem_to_json(problem: &EstimationProblem) -> Value {
    let names = problem.system.state_names();
    let mut root = Map::new();
    root.insert("states".into(), json!(names));
    root.insert(
        "field".into(),
        json!(problem
            .system
            .field()
            .iter()
            .map(|f| f.to_string_with(Some(names)))
            .collect::<Vec<_>>()),
    );
    let mut bx = Map::new();
    for (i, b) in problem.box_bounds.iter().enumerate() {
        if let Some((lo, hi)) = b {
            bx.insert(names[i].clone(), json!([lo, hi]));
        }
    }
    if !bx.is_empty() {
        root.insert("box".into(), Value::Object(bx));
    }
    root.insert("times".into(), json!(problem.times));

    let supports: Vec<Value> = problem
        .supports
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.inequalities.is_empty())
        .map(|(k, s)| {
            json!({
                "time_index": k,
                "inequalities": s.inequalities.iter().map(|g| g.to_string_with(Some(names))).collect::<Vec<_>>(),
            })
        })
        .collect();
    if !supports.is_empty() {
        root.insert("support".into(), Value::Array(supports));
    }

    if !problem.moments.is_empty() {
        root.insert(
            "moments".into(),
            Value::Array(problem.moments.iter().map(moment_bound_to_json).collect()),
        );
    }

    if let Some(p) = &problem.partition {
        root.insert(
            "partition".into(),
            json!({
                "time_index": p.time_index,
                "grid": p.grid,
                "axes": p.axes.iter().map(|&a| names[a].clone()).collect::<Vec<_>>(),
            }),
        );
    }

    if let Some(o) = &problem.oracle {
        let mut oj = Map::new();
        for (i, e) in o.entries.iter().enumerate() {
            let Some(e) = e else { continue };
            let mut law = match &e.law {
                Law::Dirac(c) => {
                    let mut m = Map::new();
                    m.insert("dirac".into(), json!(c));
                    m
                }
                Law::Uniform(a, b) => {
                    let mut m = Map::new();
                    m.insert("uniform".into(), json!([a, b]));
                    m
                }
                Law::Beta { alpha, beta, lo, hi } => {
                    let mut m = Map::new();
                    m.insert("beta".into(), json!([alpha, beta]));
                    if !(*lo == 0.0 && *hi == 1.0) {
                        m.insert("scale".into(), json!([lo, hi]));
                    }
                    m
                }
                Law::Discrete { points, weights } => {
                    let mut m = Map::new();
                    m.insert("discrete".into(), json!({"points": points, "weights": weights}));
                    m
                }
            };
            if e.pin {
                law.insert("pin".into(), json!(true));
            }
            oj.insert(names[i].clone(), Value::Object(law));
        }
        root.insert("oracle".into(), Value::Object(oj));
    }

    if !problem.queries.is_empty() {
        root.insert(
            "queries".into(),
            Value::Array(
                problem
                    .queries
                    .iter()
                    .map(|q| match &q.kind {
                        QueryKind::MomentBound { time_index, exponents } => json!({
                            "kind": "moment_bound",
                            "time_index": time_index,
                            "exponents": exponents,
                            "order": q.order,
                        }),
                        QueryKind::MassBound { cell } => json!({
                            "kind": "mass_bound",
                            "cell": cell,
                            "order": q.order,
                        }),
                        QueryKind::ConsistencyCheck => json!({
                            "kind": "consistency_check",
                            "order": q.order,
                        }),
                    })
                    .collect(),
            ),
        );
    }

    Value::Object(root)
}

pub fn save_problem(problem: &EstimationProblem, path: impl AsRef<Path>) -> Result<(), ProblemError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&problem_to_json(problem))?;
    std::fs::write(path, text).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Deterministic map from state name to index, used by a few callers that
/// address states by name.
pub fn state_map(system: &DynamicalSystem) -> BTreeMap<String, usize> {
    system
        .state_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect()
}
