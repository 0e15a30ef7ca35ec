//! Command-line front end for the momentbound library.
//!
//! Every subcommand takes a problem file (JSON) and an output directory:
//!
//! * `bound-moments` — solve the moment queries, write `results.csv` and
//!   `results.json`;
//! * `bound-mass` — solve the per-cell mass queries (synthesizing one per
//!   partition cell when the file declares none), additionally writing the
//!   `mass_grid.csv` heatmap table;
//! * `validate` — run the consistency ladder and turn the verdict into an
//!   exit code, writing the certified dual ray on invalidation;
//! * `oracle` — sample reference trajectories, writing Monte-Carlo moment
//!   tables and fabricated moment-interval data;
//! * `export-sdpa` — dump each relaxation in SDPA sparse format.
//!
//! Exit codes are the machine contract: 0 success (including invalidation
//! that surfaced while bounding, which is reported in the JSON), 1 invalid
//! input, 2 solver failure, 3 invalidated, 4 undecided. Stdout is for
//! humans. Every flag can also be set through an environment variable with
//! the `MOMENTBOUND_` prefix (`--tol-feas` becomes `MOMENTBOUND_TOL_FEAS`,
//! and so on); flags win over the environment.
//!
//! Plots are produced as generated matplotlib scripts next to the raw CSV
//! they read, never as rendered images, so results stay inspectable and
//! re-renderable.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use momentbound::conic::{sdpa, Sense, SolveSettings};
use momentbound::engine::{self, ConsistencyVerdict, QueryOutcome, QueryResult};
use momentbound::oracle::{
    self, InitialDistribution, MomentTable, SampleRun,
};
use momentbound::problem::{
    load_problem, moment_bound_to_json, validate, EstimationProblem, Query, QueryKind, Severity,
};
use momentbound::relaxation::{assemble_skeleton, AssemblyMode, ObjectiveCoord};

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_INVALIDATED: u8 = 3;
const EXIT_UNDECIDED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "momentbound",
    version,
    about = "Guaranteed moment and probability-mass bounds for polynomial ODE systems",
    after_help = "Exit codes: 0 success, 1 invalid input, 2 solver failure, \
                  3 invalidated, 4 undecided.\n\
                  Every flag can be set via the MOMENTBOUND_* environment \
                  (e.g. MOMENTBOUND_TOL_FEAS); explicit flags win."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Problem file (JSON).
    problem: PathBuf,

    /// Override the relaxation order of every query (>= 1).
    #[arg(long, env = "MOMENTBOUND_ORDER")]
    order: Option<u32>,

    /// Feasibility tolerance handed to the conic solver.
    #[arg(long, env = "MOMENTBOUND_TOL_FEAS")]
    tol_feas: Option<f64>,

    /// Duality-gap tolerance handed to the conic solver.
    #[arg(long, env = "MOMENTBOUND_TOL_GAP")]
    tol_gap: Option<f64>,

    /// Worker threads for independent solves (default: one per core).
    #[arg(long, env = "MOMENTBOUND_JOBS")]
    jobs: Option<usize>,

    /// Seed for any Monte-Carlo sampling the command performs.
    #[arg(long, env = "MOMENTBOUND_SEED", default_value_t = 0)]
    seed: u64,

    /// Directory for result files (created if missing).
    #[arg(long, env = "MOMENTBOUND_OUT", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Bound raw moments at the declared grid times.
    BoundMoments {
        #[command(flatten)]
        common: CommonArgs,
        /// Write a plot script; with an oracle block, also a sampled overlay.
        #[arg(long)]
        plot: bool,
        /// Monte-Carlo sample count for the oracle overlay.
        #[arg(long, env = "MOMENTBOUND_SAMPLES", default_value_t = 10_000)]
        samples: usize,
    },
    /// Bound the initial probability mass of every partition cell.
    BoundMass {
        #[command(flatten)]
        common: CommonArgs,
        /// Write a heatmap plot script next to the grid table.
        #[arg(long)]
        plot: bool,
    },
    /// Decide whether the data invalidate the model.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample reference trajectories; fabricate moment and mass data.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectories to sample.
        #[arg(long, env = "MOMENTBOUND_SAMPLES", default_value_t = 10_000)]
        samples: usize,
        /// Relative half-width of the fabricated moment intervals.
        #[arg(long, env = "MOMENTBOUND_SLACK", default_value_t = 0.01)]
        slack: f64,
        /// RK4 step size.
        #[arg(long, env = "MOMENTBOUND_STEP", default_value_t = 1e-3)]
        step: f64,
        /// Highest total degree to tabulate (default: inferred from the
        /// problem's data and queries).
        #[arg(long, env = "MOMENTBOUND_DEGREE_CAP")]
        degree_cap: Option<u32>,
    },
    /// Write each (query, direction) relaxation as an SDPA sparse file.
    ExportSdpa {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// An error already mapped to its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::BoundMoments { common, plot, samples } => {
            cmd_bound_moments(&common, plot, samples)
        }
        Command::BoundMass { common, plot } => cmd_bound_mass(&common, plot),
        Command::Validate { common } => cmd_validate(&common),
        Command::Oracle { common, samples, slack, step, degree_cap } => {
            cmd_oracle(&common, samples, slack, step, degree_cap)
        }
        Command::ExportSdpa { common } => cmd_export_sdpa(&common),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

/// Loads, validates and (optionally) re-orders the problem. Diagnostics go
/// to stderr; any `Error`-severity finding aborts with exit code 1.
fn load(common: &CommonArgs) -> Result<EstimationProblem, Failure> {
    if let Some(r) = common.order {
        if r == 0 {
            return Err(Failure::validation("--order must be >= 1"));
        }
    }
    let mut problem = load_problem(&common.problem).map_err(|e| Failure::validation(e.to_string()))?;
    let diagnostics = validate(&problem);
    let mut fatal = false;
    for d in &diagnostics {
        eprintln!("{d}");
        fatal |= d.severity == Severity::Error;
    }
    if fatal {
        return Err(Failure::validation(format!(
            "{}: problem failed validation",
            common.problem.display()
        )));
    }
    if let Some(r) = common.order {
        for q in &mut problem.queries {
            q.order = r;
        }
    }
    Ok(problem)
}

fn solve_settings(common: &CommonArgs) -> SolveSettings {
    let mut s = SolveSettings::default();
    if let Some(t) = common.tol_feas {
        s.tol_feas = t;
    }
    if let Some(t) = common.tol_gap {
        s.tol_gap = t;
    }
    s
}

/// The full run configuration, embedded in JSON outputs for provenance.
fn config_json(
    subcommand: &str,
    common: &CommonArgs,
    settings: &SolveSettings,
    extras: &[(&str, Value)],
) -> Value {
    let mut o = Map::new();
    o.insert("subcommand".into(), json!(subcommand));
    o.insert("problem".into(), json!(common.problem.display().to_string()));
    o.insert("out".into(), json!(common.out.display().to_string()));
    o.insert("order".into(), common.order.map_or(Value::Null, |r| json!(r)));
    o.insert("tol_feas".into(), json!(settings.tol_feas));
    o.insert("tol_gap".into(), json!(settings.tol_gap));
    o.insert("jobs".into(), common.jobs.map_or(Value::Null, |j| json!(j)));
    o.insert("seed".into(), json!(common.seed));
    for (k, v) in extras {
        o.insert((*k).into(), v.clone());
    }
    Value::Object(o)
}

fn ensure_out_dir(common: &CommonArgs) -> Result<(), Failure> {
    fs::create_dir_all(&common.out)
        .map_err(|e| Failure::validation(format!("{}: {e}", common.out.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Batch exit code: per-query failures and unusable two-sided solves are
/// solver errors; certified infeasibility during bounding is *not* (the
/// invalidation is the answer, reported in the JSON).
fn batch_exit_code(results: &[QueryResult]) -> u8 {
    for r in results {
        match &r.outcome {
            QueryOutcome::Failed { .. } => return EXIT_SOLVER,
            QueryOutcome::Bound(b) => {
                let dead =
                    !b.min_report.status.is_usable() && !b.max_report.status.is_usable();
                if dead && !b.found_infeasible() {
                    return EXIT_SOLVER;
                }
            }
            QueryOutcome::Verdict(_) => {}
        }
    }
    EXIT_OK
}

fn print_results(results: &[QueryResult], problem: &EstimationProblem) {
    for r in results {
        let label = match &r.query.kind {
            QueryKind::MomentBound { time_index, exponents } => format!(
                "moment t={} x^{exponents:?}",
                problem.times.get(*time_index).copied().unwrap_or(f64::NAN)
            ),
            QueryKind::MassBound { cell } => format!("mass cell {cell}"),
            QueryKind::ConsistencyCheck => "consistency".into(),
        };
        match &r.outcome {
            QueryOutcome::Bound(b) => println!(
                "#{} {label} r={}: [{:.6}, {:.6}] ({}/{}, {:.0} ms)",
                r.id, b.order, b.lower, b.upper, b.min_report.status, b.max_report.status,
                r.wall_ms
            ),
            QueryOutcome::Verdict(v) => println!("#{} {label}: {}", r.id, v.summary()),
            QueryOutcome::Failed { error } => println!("#{} {label}: failed: {error}", r.id),
        }
    }
}

fn run_bound_queries(
    problem: &EstimationProblem,
    queries: Vec<Query>,
    common: &CommonArgs,
    subcommand: &str,
    extras: &[(&str, Value)],
) -> Result<(Vec<QueryResult>, u8), Failure> {
    let settings = solve_settings(common);
    let mut scoped = problem.clone();
    scoped.queries = queries;
    let results = engine::run_queries(&scoped, &settings, common.jobs);
    print_results(&results, problem);

    let csv = engine::results_to_csv(&results, problem);
    write_file(&common.out.join("results.csv"), &csv)?;

    let mut doc = match engine::results_to_json(&results, problem) {
        Value::Object(o) => o,
        other => {
            let mut o = Map::new();
            o.insert("results".into(), other);
            o
        }
    };
    doc.insert("config".into(), config_json(subcommand, common, &settings, extras));
    let json_text = serde_json::to_string_pretty(&Value::Object(doc)).expect("serializable");
    write_file(&common.out.join("results.json"), &json_text)?;

    let code = batch_exit_code(&results);
    Ok((results, code))
}

// ---------------------------------------------------------------------------
// bound-moments

fn cmd_bound_moments(common: &CommonArgs, plot: bool, samples: usize) -> Result<u8, Failure> {
    let problem = load(common)?;
    ensure_out_dir(common)?;
    let queries: Vec<Query> = problem
        .queries
        .iter()
        .filter(|q| matches!(q.kind, QueryKind::MomentBound { .. }))
        .cloned()
        .collect();
    if queries.is_empty() {
        eprintln!("warning: problem declares no moment queries; results will be empty");
    }

    let extras = [("plot", json!(plot)), ("samples", json!(samples))];
    let (_, code) = run_bound_queries(&problem, queries.clone(), common, "bound-moments", &extras)?;

    if plot {
        if problem.oracle.is_some() {
            let cap = queries
                .iter()
                .filter_map(|q| match &q.kind {
                    QueryKind::MomentBound { exponents, .. } => {
                        Some(exponents.iter().sum::<u32>())
                    }
                    _ => None,
                })
                .max()
                .unwrap_or(2)
                .max(1);
            let run = SampleRun { seed: common.seed, n_samples: samples, step: 1e-3 };
            let table = sample_table(&problem, cap, &run)?;
            write_file(&common.out.join("oracle_moments.csv"), &moment_table_csv(&table))?;
        }
        write_file(&common.out.join("plot_moments.py"), PLOT_MOMENTS_PY)?;
    }
    Ok(code)
}

// ---------------------------------------------------------------------------
// bound-mass

fn cmd_bound_mass(common: &CommonArgs, plot: bool) -> Result<u8, Failure> {
    let problem = load(common)?;
    let partition = problem
        .partition
        .as_ref()
        .ok_or_else(|| Failure::validation("bound-mass needs a problem with a partition"))?;
    ensure_out_dir(common)?;

    let mut queries: Vec<Query> = problem
        .queries
        .iter()
        .filter(|q| matches!(q.kind, QueryKind::MassBound { .. }))
        .cloned()
        .collect();
    if queries.is_empty() {
        // Files that only declare the partition get the full grid by default.
        let order = common.order.unwrap_or(2);
        queries = (0..partition.n_cells())
            .map(|cell| Query { kind: QueryKind::MassBound { cell }, order })
            .collect();
        eprintln!(
            "note: no mass queries declared; bounding all {} cells at order {order}",
            partition.n_cells()
        );
    }

    let extras = [("plot", json!(plot))];
    let (results, code) = run_bound_queries(&problem, queries, common, "bound-mass", &extras)?;

    write_file(&common.out.join("mass_grid.csv"), &mass_grid_csv(&results, &problem))?;
    if plot {
        write_file(&common.out.join("plot_mass.py"), PLOT_MASS_PY)?;
    }
    Ok(code)
}

/// Per-cell `[lower, upper]` table keyed by the cell boxes, one row per
/// mass query, ready for the heatmap script.
fn mass_grid_csv(results: &[QueryResult], problem: &EstimationProblem) -> String {
    let partition = problem.partition.as_ref().expect("caller checked");
    let names = problem.system.state_names();
    let mut out = String::from("cell");
    for &axis in &partition.axes {
        out.push_str(&format!(",{0}_lo,{0}_hi", names[axis]));
    }
    out.push_str(",lower,upper\n");
    for r in results {
        let QueryKind::MassBound { cell } = r.query.kind else { continue };
        out.push_str(&cell.to_string());
        for &(lo, hi) in &partition.cell(cell).intervals {
            out.push_str(&format!(",{lo},{hi}"));
        }
        match &r.outcome {
            QueryOutcome::Bound(b) => out.push_str(&format!(",{},{}\n", b.lower, b.upper)),
            _ => out.push_str(",,\n"),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(common: &CommonArgs) -> Result<u8, Failure> {
    let problem = load(common)?;
    ensure_out_dir(common)?;
    // Precedence: explicit override, declared consistency queries, then 3.
    let order = common.order.unwrap_or_else(|| {
        problem
            .queries
            .iter()
            .filter(|q| matches!(q.kind, QueryKind::ConsistencyCheck))
            .map(|q| q.order)
            .max()
            .unwrap_or(3)
    });
    let settings = solve_settings(common);
    let verdict = engine::check_consistency(&problem, order, &settings);
    println!("{}", verdict.summary());

    let (name, detail, code) = match &verdict {
        ConsistencyVerdict::NotInvalidated { order } => {
            ("not_invalidated", json!({ "order": order }), EXIT_OK)
        }
        ConsistencyVerdict::Invalidated { order, margin, certificate } => {
            let cert = json!({
                "order": order,
                "margin": margin,
                "ray": certificate.ray,
                "residual": certificate.residual,
                "objective": certificate.objective,
            });
            let text = serde_json::to_string_pretty(&cert).expect("serializable");
            write_file(&common.out.join("certificate.json"), &text)?;
            ("invalidated", json!({ "order": order, "margin": margin }), EXIT_INVALIDATED)
        }
        ConsistencyVerdict::Undecided { order, detail } => {
            ("undecided", json!({ "order": order, "detail": detail }), EXIT_UNDECIDED)
        }
    };
    let doc = json!({
        "config": config_json("validate", common, &settings, &[("max_order", json!(order))]),
        "verdict": name,
        "verdict_detail": detail,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    write_file(&common.out.join("verdict.json"), &text)?;
    Ok(code)
}

// ---------------------------------------------------------------------------
// oracle

fn cmd_oracle(
    common: &CommonArgs,
    samples: usize,
    slack: f64,
    step: f64,
    degree_cap: Option<u32>,
) -> Result<u8, Failure> {
    let problem = load(common)?;
    if problem.oracle.is_none() {
        return Err(Failure::validation("oracle needs a problem with an oracle block"));
    }
    ensure_out_dir(common)?;

    let cap = degree_cap.unwrap_or_else(|| inferred_degree_cap(&problem));
    let run = SampleRun { seed: common.seed, n_samples: samples, step };
    let table = sample_table(&problem, cap, &run)?;
    let dist = InitialDistribution::from_problem(&problem)
        .map_err(|e| Failure::validation(e.to_string()))?;

    let exited = box_exit_fraction(&problem, &dist, &run)?;
    if let Some((exited, checked)) = exited {
        if exited > 0 {
            eprintln!(
                "warning: {exited} of {checked} sampled trajectories left the declared \
                 state box; support constraints do not hold for this oracle"
            );
        }
    }

    write_file(&common.out.join("oracle_moments.csv"), &moment_table_csv(&table))?;

    let settings = solve_settings(common);
    let extras = [
        ("samples", json!(samples)),
        ("slack", json!(slack)),
        ("step", json!(step)),
        ("degree_cap", json!(cap)),
    ];
    let fabricated: Vec<Value> =
        oracle::fabricate_moment_data(&table, slack).iter().map(moment_bound_to_json).collect();
    let mut doc = Map::new();
    doc.insert("config".into(), config_json("oracle", common, &settings, &extras));
    doc.insert("n_samples".into(), json!(table.n_samples));
    doc.insert("moments".into(), Value::Array(fabricated));

    if let Some(partition) = &problem.partition {
        let masses = oracle::cell_masses(&dist, partition, &run);
        let names = problem.system.state_names();
        let mut csv = String::from("cell");
        for &axis in &partition.axes {
            csv.push_str(&format!(",{0}_lo,{0}_hi", names[axis]));
        }
        csv.push_str(",mass,std_err\n");
        let mut rows = Vec::with_capacity(masses.len());
        for (cell, &mass) in masses.iter().enumerate() {
            let se = oracle::binomial_std_err(mass, run.n_samples);
            csv.push_str(&cell.to_string());
            for &(lo, hi) in &partition.cell(cell).intervals {
                csv.push_str(&format!(",{lo},{hi}"));
            }
            csv.push_str(&format!(",{mass},{se}\n"));
            rows.push(json!({ "cell": cell, "mass": mass, "std_err": se }));
        }
        write_file(&common.out.join("oracle_masses.csv"), &csv)?;
        doc.insert("masses".into(), Value::Array(rows));
    }

    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("serializable");
    write_file(&common.out.join("oracle_moments.json"), &text)?;
    Ok(EXIT_OK)
}

/// Degree cap when none is given: whatever the problem's own data and
/// queries need, floored at 2.
fn inferred_degree_cap(problem: &EstimationProblem) -> u32 {
    let data = problem.moments.iter().map(|m| m.degree()).max().unwrap_or(0);
    let queries = problem
        .queries
        .iter()
        .filter_map(|q| match &q.kind {
            QueryKind::MomentBound { exponents, .. } => Some(exponents.iter().sum()),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    data.max(queries).max(2)
}

fn sample_table(
    problem: &EstimationProblem,
    cap: u32,
    run: &SampleRun,
) -> Result<MomentTable, Failure> {
    let dist = InitialDistribution::from_problem(problem)
        .map_err(|e| Failure::validation(e.to_string()))?;
    oracle::sample_moments(problem.system.field(), &dist, &problem.times, cap, run)
        .map_err(|e| Failure::validation(format!("sampling failed: {e}")))
}

fn moment_table_csv(table: &MomentTable) -> String {
    let mut out = String::from("time,exponents,mean,std_err\n");
    for (k, &t) in table.times.iter().enumerate() {
        for (e, exps) in table.exponents.iter().enumerate() {
            let label =
                exps.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            out.push_str(&format!(
                "{t},{label},{},{}\n",
                table.mean[k][e], table.std_err[k][e]
            ));
        }
    }
    out
}

/// Integrates a small subsample and counts trajectories that leave the
/// declared box at some grid time. `None` when no box is declared.
fn box_exit_fraction(
    problem: &EstimationProblem,
    dist: &InitialDistribution,
    run: &SampleRun,
) -> Result<Option<(usize, usize)>, Failure> {
    if problem.box_bounds.iter().all(Option::is_none) {
        return Ok(None);
    }
    let checked = run.n_samples.min(500).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut x0 = vec![0.0; problem.n_x()];
    let mut exited = 0;
    for _ in 0..checked {
        dist.sample_into(&mut rng, &mut x0);
        let points = oracle::integrate(problem.system.field(), &x0, &problem.times, run.step)
            .map_err(|e| Failure::validation(format!("sampling failed: {e}")))?;
        if oracle::count_box_exits(&points, &problem.box_bounds, 1e-9) > 0 {
            exited += 1;
        }
    }
    Ok(Some((exited, checked)))
}

// ---------------------------------------------------------------------------
// export-sdpa

fn cmd_export_sdpa(common: &CommonArgs) -> Result<u8, Failure> {
    let problem = load(common)?;
    ensure_out_dir(common)?;
    let bounds: Vec<(usize, &Query)> = problem
        .queries
        .iter()
        .enumerate()
        .filter(|(_, q)| !matches!(q.kind, QueryKind::ConsistencyCheck))
        .collect();
    if bounds.is_empty() {
        eprintln!("warning: no bound queries to export; nothing written");
        return Ok(EXIT_OK);
    }

    let mut written = 0usize;
    for (id, query) in bounds {
        let (mode, objective) = match &query.kind {
            QueryKind::MomentBound { time_index, exponents } => (
                AssemblyMode::Pointwise,
                ObjectiveCoord::Moment {
                    time_index: *time_index,
                    exponents: exponents.clone(),
                },
            ),
            QueryKind::MassBound { cell } => {
                (AssemblyMode::SpaceSplit, ObjectiveCoord::CellMass { cell: *cell })
            }
            QueryKind::ConsistencyCheck => unreachable!("filtered above"),
        };
        let assembly = assemble_skeleton(&problem, mode, query.order)
            .map_err(|e| Failure::validation(format!("query {id}: {e}")))?;
        let column = assembly
            .objective_column(&objective)
            .map_err(|e| Failure::validation(format!("query {id}: {e}")))?;
        for (sense, tag) in [(Sense::Minimize, "min"), (Sense::Maximize, "max")] {
            let prog = assembly.objective_program(column, sense);
            let path = common.out.join(format!("query_{id:03}_{tag}.dat-s"));
            sdpa::write_sdpa(&prog, &path)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
            written += 1;
        }
    }
    println!("{written} files");
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// Generated plot scripts

const PLOT_MOMENTS_PY: &str = r#"#!/usr/bin/env python3
"""Render moment-bound corridors from results.csv.

Usage: python3 plot_moments.py [RESULTS_CSV [ORACLE_CSV]]

Each distinct exponent vector becomes one corridor (lower and upper bounds
against time, connected by lines). When an oracle table exists next to the
results (or is named explicitly), its sample means are overlaid as crosses.
Writes moments.png beside the input.
"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load_results(path):
    corridors = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row["kind"] != "moment_bound" or not row["lower"] or not row["upper"]:
                continue
            corridors[row["exponents/cell"]].append(
                (float(row["time"]), float(row["lower"]), float(row["upper"]))
            )
    return {key: sorted(pts) for key, pts in corridors.items()}


def load_oracle(path):
    overlay = defaultdict(list)
    if not os.path.exists(path):
        return overlay
    with open(path) as fh:
        for row in csv.DictReader(fh):
            overlay[row["exponents"]].append((float(row["time"]), float(row["mean"])))
    for pts in overlay.values():
        pts.sort()
    return overlay


def main():
    results = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
    default_oracle = os.path.join(os.path.dirname(results) or ".", "oracle_moments.csv")
    oracle = sys.argv[2] if len(sys.argv) > 2 else default_oracle
    corridors = load_results(results)
    overlay = load_oracle(oracle)
    if not corridors:
        raise SystemExit("no two-sided moment_bound rows in " + results)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for idx, (key, pts) in enumerate(sorted(corridors.items())):
        color = "C%d" % (idx % 10)
        ts = [p[0] for p in pts]
        los = [p[1] for p in pts]
        his = [p[2] for p in pts]
        ax.plot(ts, los, color=color, marker=".", label="x^(%s) bounds" % key)
        ax.plot(ts, his, color=color, marker=".")
        ax.fill_between(ts, los, his, color=color, alpha=0.15)
        if key in overlay:
            ax.plot(
                [p[0] for p in overlay[key]],
                [p[1] for p in overlay[key]],
                color=color,
                linestyle="none",
                marker="x",
                label="x^(%s) oracle" % key,
            )
    ax.set_xlabel("t")
    ax.set_ylabel("raw moment")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = os.path.join(os.path.dirname(results) or ".", "moments.png")
    fig.savefig(out, dpi=150)
    print("wrote", out)


if __name__ == "__main__":
    main()
"#;

const PLOT_MASS_PY: &str = r#"#!/usr/bin/env python3
"""Render the upper-bound mass heatmap from mass_grid.csv.

Usage: python3 plot_mass.py [MASS_GRID_CSV]

Two partitioned axes give an imshow heatmap of the upper bounds; a single
axis gives a bar chart. Writes mass_upper.png beside the input.
"""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "mass_grid.csv"
    with open(path) as fh:
        rows = [r for r in csv.DictReader(fh) if r["upper"]]
    if not rows:
        raise SystemExit("no bounded cells in " + path)
    axes = [name[:-3] for name in rows[0] if name.endswith("_lo")]

    if len(axes) == 2:
        a0, a1 = axes
        los0 = sorted({float(r[a0 + "_lo"]) for r in rows})
        los1 = sorted({float(r[a1 + "_lo"]) for r in rows})
        grid = [[float("nan")] * len(los0) for _ in los1]
        for r in rows:
            i = los0.index(float(r[a0 + "_lo"]))
            j = los1.index(float(r[a1 + "_lo"]))
            grid[j][i] = float(r["upper"])
        extent = [
            los0[0],
            max(float(r[a0 + "_hi"]) for r in rows),
            los1[0],
            max(float(r[a1 + "_hi"]) for r in rows),
        ]
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        im = ax.imshow(grid, origin="lower", extent=extent, aspect="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, label="upper bound on cell mass")
        ax.set_xlabel(a0)
        ax.set_ylabel(a1)
    else:
        a0 = axes[0]
        centers = [(float(r[a0 + "_lo"]) + float(r[a0 + "_hi"])) / 2 for r in rows]
        widths = [float(r[a0 + "_hi"]) - float(r[a0 + "_lo"]) for r in rows]
        uppers = [float(r["upper"]) for r in rows]
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.bar(centers, uppers, width=[w * 0.95 for w in widths], color="C0", alpha=0.8)
        ax.set_xlabel(a0)
        ax.set_ylabel("upper bound on cell mass")

    fig.tight_layout()
    out = os.path.join(os.path.dirname(path) or ".", "mass_upper.png")
    fig.savefig(out, dpi=150)
    print("wrote", out)


if __name__ == "__main__":
    main()
"#;
