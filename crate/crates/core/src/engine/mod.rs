//! Query execution. Each bound is a pair of independent SDP solves
//! (minimize/maximize one moment coordinate) over a shared assembly;
//! consistency checks climb the relaxation ladder until a certificate or the
//! order budget; batches run query-parallel with deterministic result order.

use crate::conic::{
    ClarabelBackend, InfeasibilityCertificate, SdpBackend, Sense, SolveReport, SolveSettings,
    SolveStatus,
};
use crate::problem::{EstimationProblem, Query, QueryKind};
use crate::relaxation::{assemble_skeleton, Assembly, AssemblyMode, ObjectiveCoord, RelaxError};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;


#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// A two-sided bound on one scalar: the echo of what was asked, the interval,
/// and the raw solver reports behind each side. A side whose solve produced
/// no usable value is the corresponding infinity.
#[derive(Debug, Clone)]
pub struct BoundResult {
    pub query: Query,
    pub lower: f64,
    pub upper: f64,
    pub order: u32,
    pub min_report: SolveReport,
    pub max_report: SolveReport,
}

impl BoundResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Both sides carry solver values (optimal or inaccurate).
    pub fn is_two_sided(&self) -> bool {
        self.min_report.status.is_usable() && self.max_report.status.is_usable()
    }

    /// The data admitted no consistent measure at all: either side certified
    /// primal infeasibility.
    pub fn found_infeasible(&self) -> bool {
        self.min_report.status == SolveStatus::Infeasible
            || self.max_report.status == SolveStatus::Infeasible
    }
}

/// Outcome of a consistency check. `Invalidated` is only produced with an
/// independently re-verified dual ray; `margin` is the normalized ray's
/// separation `-b.z`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsistencyVerdict {
    NotInvalidated { order: u32 },
    Invalidated { order: u32, margin: f64, certificate: InfeasibilityCertificate },
    Undecided { order: u32, detail: String },
}

impl ConsistencyVerdict {
    pub fn summary(&self) -> String {
        match self {
            ConsistencyVerdict::NotInvalidated { order } => {
                format!("not_invalidated up to order {order}")
            }
            ConsistencyVerdict::Invalidated { order, margin, .. } => {
                format!("invalidated at order {order} (margin {margin:.3e})")
            }
            ConsistencyVerdict::Undecided { order, detail } => {
                format!("undecided at order {order}: {detail}")
            }
        }
    }
}

fn solve_pair(
    assembly: &Assembly,
    column: usize,
    settings: &SolveSettings,
) -> (SolveReport, SolveReport) {
    let backend = ClarabelBackend;
    let min = backend.solve(&assembly.objective_program(column, Sense::Minimize), settings);
    let max = backend.solve(&assembly.objective_program(column, Sense::Maximize), settings);
    (min, max)
}

fn finish_bound(
    query: Query,
    order: u32,
    min: SolveReport,
    max: SolveReport,
    clamp: Option<(f64, f64)>,
) -> BoundResult {
    let mut lower = if min.status.is_usable() { min.objective } else { f64::NEG_INFINITY };
    let mut upper = if max.status.is_usable() { max.objective } else { f64::INFINITY };
    if let Some((lo, hi)) = clamp {
        if lower.is_finite() {
            lower = lower.clamp(lo, hi);
        }
        if upper.is_finite() {
            upper = upper.clamp(lo, hi);
        }
    }
    BoundResult { query, lower, upper, order, min_report: min, max_report: max }
}

/// Minimum and maximum of one raw moment `nu_k^(exponents)` over the order-r
/// relaxation; every consistent moment lies in the returned interval.
pub fn bound_moment(
    problem: &EstimationProblem,
    time_index: usize,
    exponents: &[u32],
    order: u32,
    settings: &SolveSettings,
) -> Result<BoundResult, EngineError> {
    let assembly = assemble_skeleton(problem, AssemblyMode::Pointwise, order)?;
    bound_moment_on(&assembly, time_index, exponents, settings)
}

/// Same as [`bound_moment`] on a pre-built assembly (batch path).
pub fn bound_moment_on(
    assembly: &Assembly,
    time_index: usize,
    exponents: &[u32],
    settings: &SolveSettings,
) -> Result<BoundResult, EngineError> {
    let coord = ObjectiveCoord::Moment { time_index, exponents: exponents.to_vec() };
    let column = assembly.objective_column(&coord)?;
    let (min, max) = solve_pair(assembly, column, settings);
    let query = Query {
        kind: QueryKind::MomentBound { time_index, exponents: exponents.to_vec() },
        order: assembly.order,
    };
    Ok(finish_bound(query, assembly.order, min, max, None))
}

/// `[F_lower, F_upper]` for the probability mass of one partition cell of the
/// initial measure, via the space-split relaxation. Finite ends are clamped
/// into [0, 1].
pub fn bound_mass(
    problem: &EstimationProblem,
    cell: usize,
    order: u32,
    settings: &SolveSettings,
) -> Result<BoundResult, EngineError> {
    let assembly = assemble_skeleton(problem, AssemblyMode::SpaceSplit, order)?;
    bound_mass_on(&assembly, cell, settings)
}

/// Same as [`bound_mass`] on a pre-built assembly; per-cell solves in a batch
/// share one skeleton and swap objectives.
pub fn bound_mass_on(
    assembly: &Assembly,
    cell: usize,
    settings: &SolveSettings,
) -> Result<BoundResult, EngineError> {
    let column = assembly.objective_column(&ObjectiveCoord::CellMass { cell })?;
    let (min, max) = solve_pair(assembly, column, settings);
    let query = Query { kind: QueryKind::MassBound { cell }, order: assembly.order };
    Ok(finish_bound(query, assembly.order, min, max, Some((0.0, 1.0))))
}

/// Climbs r = 1, 2, ..., max_order until some order certifies infeasibility.
/// Feasibility at the top order is only "not invalidated" -- the constraints
/// are necessary, never sufficient.
pub fn check_consistency(
    problem: &EstimationProblem,
    max_order: u32,
    settings: &SolveSettings,
) -> ConsistencyVerdict {
    let backend = ClarabelBackend;
    let mut last: Option<(u32, SolveStatus)> = None;
    for r in 1..=max_order {
        let assembly = match assemble_skeleton(problem, AssemblyMode::Pointwise, r) {
            Ok(a) => a,
            Err(RelaxError::OrderTooSmall { .. }) if r < max_order => continue,
            Err(e) => return ConsistencyVerdict::Undecided { order: r, detail: e.to_string() },
        };
        let report = backend.solve(&assembly.feasibility_program(), settings);
        if report.status == SolveStatus::Infeasible {
            let certificate = report.certificate.expect("infeasible status implies certificate");
            return ConsistencyVerdict::Invalidated {
                order: r,
                margin: -certificate.objective,
                certificate,
            };
        }
        last = Some((r, report.status));
    }
    match last {
        Some((order, status)) if status.is_usable() => ConsistencyVerdict::NotInvalidated { order },
        Some((order, status)) => {
            ConsistencyVerdict::Undecided { order, detail: status.to_string() }
        }
        None => ConsistencyVerdict::Undecided {
            order: max_order,
            detail: "no order admitted an assembly".into(),
        },
    }
}

// ---------------------------------------------------------------------------
// Batch execution

#[derive(Debug, Clone)]
pub enum QueryOutcome {
    Bound(BoundResult),
    Verdict(ConsistencyVerdict),
    Failed { error: String },
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub id: usize,
    pub query: Query,
    pub outcome: QueryOutcome,
    pub wall_ms: f64,
}

/// Runs every query of the problem. Assemblies are shared per (mode, order);
/// queries run in parallel (`jobs` caps the worker count; `None` uses the
/// global pool); results come back in query order and per-query failures do
/// not abort the batch.
pub fn run_queries(
    problem: &EstimationProblem,
    settings: &SolveSettings,
    jobs: Option<usize>,
) -> Vec<QueryResult> {
    // one assembly per (space_split, order) actually used by bound queries
    let mut cache: BTreeMap<(bool, u32), Result<Assembly, String>> = BTreeMap::new();
    for q in &problem.queries {
        let key = match q.kind {
            QueryKind::MomentBound { .. } => (false, q.order),
            QueryKind::MassBound { .. } => (true, q.order),
            QueryKind::ConsistencyCheck => continue,
        };
        cache.entry(key).or_insert_with(|| {
            let mode = if key.0 { AssemblyMode::SpaceSplit } else { AssemblyMode::Pointwise };
            assemble_skeleton(problem, mode, key.1).map_err(|e| e.to_string())
        });
    }

    let run_one = |(id, q): (usize, &Query)| -> QueryResult {
        let t0 = Instant::now();
        let outcome = match &q.kind {
            QueryKind::MomentBound { time_index, exponents } => {
                match &cache[&(false, q.order)] {
                    Err(e) => QueryOutcome::Failed { error: e.clone() },
                    Ok(asm) => match bound_moment_on(asm, *time_index, exponents, settings) {
                        Ok(b) => QueryOutcome::Bound(b),
                        Err(e) => QueryOutcome::Failed { error: e.to_string() },
                    },
                }
            }
            QueryKind::MassBound { cell } => match &cache[&(true, q.order)] {
                Err(e) => QueryOutcome::Failed { error: e.clone() },
                Ok(asm) => match bound_mass_on(asm, *cell, settings) {
                    Ok(b) => QueryOutcome::Bound(b),
                    Err(e) => QueryOutcome::Failed { error: e.to_string() },
                },
            },
            QueryKind::ConsistencyCheck => {
                QueryOutcome::Verdict(check_consistency(problem, q.order, settings))
            }
        };
        QueryResult {
            id,
            query: q.clone(),
            outcome,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        }
    };

    let exec = || problem.queries.par_iter().enumerate().map(run_one).collect::<Vec<_>>();
    match jobs {
        Some(j) if j >= 1 => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(exec),
            Err(_) => exec(),
        },
        _ => exec(),
    }
}

// ---------------------------------------------------------------------------
// Serialization

fn target_string(kind: &QueryKind) -> String {
    match kind {
        QueryKind::MomentBound { exponents, .. } => {
            exponents.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
        }
        QueryKind::MassBound { cell } => cell.to_string(),
        QueryKind::ConsistencyCheck => String::new(),
    }
}

fn time_of(kind: &QueryKind, problem: &EstimationProblem) -> Option<f64> {
    match kind {
        QueryKind::MomentBound { time_index, .. } => problem.times.get(*time_index).copied(),
        QueryKind::MassBound { .. } => {
            let k = problem.partition.as_ref().map_or(0, |p| p.time_index);
            problem.times.get(k).copied()
        }
        QueryKind::ConsistencyCheck => None,
    }
}

/// `id,kind,time,exponents/cell,lower,upper,order,status_min,status_max,wall_ms`
pub fn results_to_csv(results: &[QueryResult], problem: &EstimationProblem) -> String {
    let mut out =
        String::from("id,kind,time,exponents/cell,lower,upper,order,status_min,status_max,wall_ms\n");
    for r in results {
        let kind = match r.query.kind {
            QueryKind::MomentBound { .. } => "moment_bound",
            QueryKind::MassBound { .. } => "mass_bound",
            QueryKind::ConsistencyCheck => "consistency_check",
        };
        let time = time_of(&r.query.kind, problem).map(|t| t.to_string()).unwrap_or_default();
        let target = target_string(&r.query.kind);
        let (lower, upper, status_min, status_max) = match &r.outcome {
            QueryOutcome::Bound(b) => (
                b.lower.to_string(),
                b.upper.to_string(),
                b.min_report.status.as_str().to_string(),
                b.max_report.status.as_str().to_string(),
            ),
            QueryOutcome::Verdict(v) => {
                (String::new(), String::new(), v.summary().replace(',', ";"), String::new())
            }
            QueryOutcome::Failed { error } => {
                (String::new(), String::new(), format!("failed: {}", error.replace(',', ";")), String::new())
            }
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.3}\n",
            r.id, kind, time, target, lower, upper, r.query.order, status_min, status_max,
            r.wall_ms
        ));
    }
    out
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// JSON form of a result batch; infinite interval ends become null.
pub fn results_to_json(results: &[QueryResult], problem: &EstimationProblem) -> Value {
    let rows: Vec<Value> = results
        .iter()
        .map(|r| {
            let mut o = Map::new();
            o.insert("id".into(), json!(r.id));
            o.insert("order".into(), json!(r.query.order));
            if let Some(t) = time_of(&r.query.kind, problem) {
                o.insert("time".into(), json!(t));
            }
            match &r.query.kind {
                QueryKind::MomentBound { exponents, time_index } => {
                    o.insert("kind".into(), json!("moment_bound"));
                    o.insert("time_index".into(), json!(time_index));
                    o.insert("exponents".into(), json!(exponents));
                }
                QueryKind::MassBound { cell } => {
                    o.insert("kind".into(), json!("mass_bound"));
                    o.insert("cell".into(), json!(cell));
                    if let Some(p) = &problem.partition {
                        let b = p.cell(*cell);
                        o.insert(
                            "cell_box".into(),
                            json!(b.intervals.iter().map(|(l, h)| json!([l, h])).collect::<Vec<_>>()),
                        );
                    }
                }
                QueryKind::ConsistencyCheck => {
                    o.insert("kind".into(), json!("consistency_check"));
                }
            }
            match &r.outcome {
                QueryOutcome::Bound(b) => {
                    o.insert("lower".into(), finite_or_null(b.lower));
                    o.insert("upper".into(), finite_or_null(b.upper));
                    o.insert("status_min".into(), json!(b.min_report.status.as_str()));
                    o.insert("status_max".into(), json!(b.max_report.status.as_str()));
                    if b.found_infeasible() {
                        o.insert("invalidated".into(), json!(true));
                    }
                }
                QueryOutcome::Verdict(v) => {
                    let (verdict, extra): (&str, Value) = match v {
                        ConsistencyVerdict::NotInvalidated { order } => {
                            ("not_invalidated", json!({ "order": order }))
                        }
                        ConsistencyVerdict::Invalidated { order, margin, .. } => {
                            ("invalidated", json!({ "order": order, "margin": margin }))
                        }
                        ConsistencyVerdict::Undecided { order, detail } => {
                            ("undecided", json!({ "order": order, "detail": detail }))
                        }
                    };
                    o.insert("verdict".into(), json!(verdict));
                    o.insert("verdict_detail".into(), extra);
                }
                QueryOutcome::Failed { error } => {
                    o.insert("error".into(), json!(error));
                }
            }
            o.insert("wall_ms".into(), json!(r.wall_ms));
            Value::Object(o)
        })
        .collect();
    json!({ "results": rows })
}
