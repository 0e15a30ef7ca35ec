//! Clarabel interior-point backend.
//!
//! Translation into Clarabel's geometry `min q'x  s.t.  Ax + s = b, s in K`:
//! equality rows become a zero cone, inequality rows and variable bounds a
//! nonnegative cone, and each PSD block a scaled-triangle cone (`svec` with
//! sqrt(2) off-diagonals). Solver claims are not taken at face value: optima
//! are re-checked for primal feasibility and infeasibility rays are
//! re-verified before either is reported upward.
//!
//! Interior-point runs on marginally-conditioned relaxations sometimes stall
//! with a small but nonzero gap. Those exits are accepted at Clarabel's
//! reduced tolerances and reported as [`SolveStatus::Inaccurate`] with the
//! *dual* objective, which errs on the outer side for a bound.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{
    evaluate_residuals, svec_index, svec_len, ConicProgram, InfeasibilityCertificate,
    SdpBackend, Sense, SolveReport, SolveSettings, SolveStatus,
};

/// Margin used when re-verifying an infeasibility certificate.
const CERT_MARGIN: f64 = 1e-6;

#[derive(Debug, Default, Clone, Copy)]
pub struct ClarabelBackend;

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    n_eq: usize,
    n_nonneg: usize,
    /// triplets kept for certificate verification
    trips: Vec<(usize, usize, f64)>,
}

fn assemble(prog: &ConicProgram) -> Assembled {
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0usize;

    let n_eq = prog.eq_rows.len();
    if n_eq > 0 {
        for r in &prog.eq_rows {
            for &(j, a) in &r.coeffs {
                trips.push((row, j, a));
            }
            b.push(r.rhs);
            row += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }

    let n_nonneg = prog.ineq_rows.len() + prog.n_active_bounds();
    if n_nonneg > 0 {
        for r in &prog.ineq_rows {
            for &(j, a) in &r.coeffs {
                trips.push((row, j, a));
            }
            b.push(r.rhs);
            row += 1;
        }
        for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
            if lo.is_finite() {
                // lo <= y_j  <=>  -y_j <= -lo
                trips.push((row, j, -1.0));
                b.push(-lo);
                row += 1;
            }
            if hi.is_finite() {
                trips.push((row, j, 1.0));
                b.push(hi);
                row += 1;
            }
        }
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }

    for blk in &prog.psd_blocks {
        let base = row;
        b.extend(std::iter::repeat(0.0).take(svec_len(blk.dim)));
        let scale = |r: usize, c: usize| if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
        for &(r, c, v) in &blk.constants {
            b[base + svec_index(r, c)] += scale(r, c) * v;
        }
        // s = svec(S(y)) = b - A y  =>  A entries are the negated linear part
        for &(r, c, j, coeff) in &blk.terms {
            trips.push((base + svec_index(r, c), j, -scale(r, c) * coeff));
        }
        row += svec_len(blk.dim);
        cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
    }

    let mut is = Vec::with_capacity(trips.len());
    let mut js = Vec::with_capacity(trips.len());
    let mut vs = Vec::with_capacity(trips.len());
    for &(i, j, v) in &trips {
        is.push(i);
        js.push(j);
        vs.push(v);
    }
    let a = CscMatrix::new_from_triplets(row, prog.n_vars, is, js, vs);
    Assembled { a, b, cones, n_eq, n_nonneg, trips }
}

/// Checks that `z` is a genuine improving ray for the primal: `A'z ~ 0`,
/// `b'z < 0`, and `z` lies in the dual cone. Works on the normalized ray so
/// the margins are scale-free.
fn verify_certificate(
    prog: &ConicProgram,
    asm: &Assembled,
    z: &[f64],
) -> Option<InfeasibilityCertificate> {
    let norm = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let zn: Vec<f64> = z.iter().map(|v| v / norm).collect();

    let mut atz = vec![0.0; prog.n_vars];
    for &(i, j, v) in &asm.trips {
        atz[j] += v * zn[i];
    }
    let residual = atz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let objective: f64 = asm.b.iter().zip(&zn).map(|(b, z)| b * z).sum();

    // dual-cone membership: free on the zero cone, nonnegative on the
    // nonnegative cone, PSD on the triangle cones
    let mut cone_viol = 0.0f64;
    for i in 0..asm.n_nonneg {
        cone_viol = cone_viol.max(-zn[asm.n_eq + i]);
    }
    let mut row = asm.n_eq + asm.n_nonneg;
    for blk in &prog.psd_blocks {
        let mut m = nalgebra::DMatrix::zeros(blk.dim, blk.dim);
        for r in 0..blk.dim {
            for c in 0..=r {
                let v = zn[row + svec_index(r, c)];
                let v = if r == c { v } else { v / std::f64::consts::SQRT_2 };
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        row += svec_len(blk.dim);
        let eig_min = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        cone_viol = cone_viol.max(-eig_min);
    }

    let ok = residual <= CERT_MARGIN && objective <= -CERT_MARGIN && cone_viol <= CERT_MARGIN;
    ok.then_some(InfeasibilityCertificate { ray: zn, residual, objective })
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram, settings: &SolveSettings) -> SolveReport {
        let asm = assemble(prog);
        let p = CscMatrix::zeros((prog.n_vars, prog.n_vars));
        let q: Vec<f64> = match prog.sense {
            Sense::Minimize => prog.objective.clone(),
            Sense::Maximize => prog.objective.iter().map(|c| -c).collect(),
        };

        let cfg = DefaultSettings {
            verbose: settings.verbose,
            max_iter: settings.max_iter,
            tol_feas: settings.tol_feas,
            tol_gap_abs: settings.tol_gap,
            tol_gap_rel: settings.tol_gap,
            // stall-acceptance thresholds; anything worse stays an error
            reduced_tol_gap_abs: settings.tol_gap.max(5e-3),
            reduced_tol_gap_rel: settings.tol_gap.max(5e-3),
            reduced_tol_feas: settings.tol_feas.max(1e-4),
            ..DefaultSettings::default()
        };

        let mut solver = match DefaultSolver::new(&p, &q, &asm.a, &asm.b, &asm.cones, cfg) {
            Ok(s) => s,
            Err(e) => {
                return SolveReport::error(format!("solver rejected problem: {e:?}"), *settings)
            }
        };
        solver.solve();
        let sol = &solver.solution;

        let mut report = SolveReport {
            status: SolveStatus::Error(String::new()),
            objective: f64::NAN,
            y: sol.x.clone(),
            certificate: None,
            iterations: sol.iterations,
            solve_time_s: sol.solve_time,
            settings: *settings,
        };

        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let res = evaluate_residuals(prog, &sol.x);
                let scale = 1.0 + sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let sloppy = res.worst() > 10.0 * settings.tol_feas * scale;
                let clean = sol.status == SolverStatus::Solved && !sloppy;
                report.status =
                    if clean { SolveStatus::Optimal } else { SolveStatus::Inaccurate };
                // at reduced accuracy the primal value can sit on the wrong
                // side of the optimum; the dual value is the outer-safe one
                let raw = if clean || !sol.obj_val_dual.is_finite() {
                    sol.obj_val
                } else {
                    sol.obj_val_dual
                };
                report.objective = match prog.sense {
                    Sense::Minimize => raw,
                    Sense::Maximize => -raw,
                };
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                match verify_certificate(prog, &asm, &sol.z) {
                    Some(cert) => {
                        report.certificate = Some(cert);
                        report.status = SolveStatus::Infeasible;
                    }
                    None => {
                        report.status = SolveStatus::Error(
                            "solver claimed infeasibility but the certificate did not verify"
                                .into(),
                        );
                    }
                }
            }
            SolverStatus::DualInfeasible => {
                report.status = SolveStatus::Unbounded;
            }
            other => {
                report.status = SolveStatus::Error(format!("solver stopped: {other:?}"));
            }
        }
        report
    }
}
