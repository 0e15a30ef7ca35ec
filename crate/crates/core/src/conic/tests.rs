use super::sdpa::sdpa_string;
use super::*;
use approx::assert_abs_diff_eq;

fn settings() -> SolveSettings {
    SolveSettings::default()
}

/// min y2  s.t.  [[1, 0.5], [0.5, y2]] >= 0; the optimum is the squared
/// mean, 0.25.
fn toy_moment_sdp() -> ConicProgram {
    let mut prog = ConicProgram::new(1);
    prog.objective = vec![1.0];
    let mut blk = PsdBlock::new(2, "M(nu)");
    blk.push_constant(0, 0, 1.0);
    blk.push_constant(1, 0, 0.5);
    blk.push_term(1, 1, 0, 1.0);
    prog.psd_blocks.push(blk);
    prog.var_names = vec!["y2".into()];
    prog
}

#[test]
fn svec_indexing_is_row_major_lower() {
    assert_eq!(svec_index(0, 0), 0);
    assert_eq!(svec_index(1, 0), 1);
    assert_eq!(svec_index(1, 1), 2);
    assert_eq!(svec_index(2, 0), 3);
    assert_eq!(svec_index(2, 1), 4);
    assert_eq!(svec_index(2, 2), 5);
    assert_eq!(svec_len(4), 10);
}

#[test]
fn solves_second_moment_sdp() {
    let prog = toy_moment_sdp();
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Optimal, "{:?}", report.status);
    assert_abs_diff_eq!(report.objective, 0.25, epsilon = 1e-6);
    let res = evaluate_residuals(&prog, &report.y);
    assert!(res.psd_min_eig > -1e-6);
}

#[test]
fn equality_rows_pin_variables() {
    // min y2 s.t. y1 = 2, [[1, y1], [y1, y2]] >= 0  =>  y2 = 4
    let mut prog = ConicProgram::new(2);
    prog.objective = vec![0.0, 1.0];
    prog.eq_rows.push(LinRow::new(vec![(0, 1.0)], 2.0, "pin y1"));
    let mut blk = PsdBlock::new(2, "M");
    blk.push_constant(0, 0, 1.0);
    blk.push_term(1, 0, 0, 1.0);
    blk.push_term(1, 1, 1, 1.0);
    prog.psd_blocks.push(blk);
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(report.y[0], 2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(report.objective, 4.0, epsilon = 1e-5);
}

#[test]
fn variable_bounds_act_as_box_cone() {
    // min y s.t. 1 <= y <= 3, then max over the same box
    let mut prog = ConicProgram::new(1);
    prog.objective = vec![1.0];
    prog.tighten_bound(0, 1.0, 3.0);
    let lo = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(lo.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(lo.objective, 1.0, epsilon = 1e-7);

    prog.sense = Sense::Maximize;
    let hi = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(hi.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(hi.objective, 3.0, epsilon = 1e-7);
}

#[test]
fn infeasible_box_yields_verified_certificate() {
    // y <= 0 and y >= 1 through two bound intersections
    let mut prog = ConicProgram::new(1);
    prog.objective = vec![1.0];
    prog.tighten_bound(0, f64::NEG_INFINITY, 0.0);
    prog.tighten_bound(0, 1.0, f64::INFINITY);
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Infeasible, "{:?}", report.status);
    let cert = report.certificate.expect("certificate");
    assert!(cert.residual <= 1e-6);
    assert!(cert.objective <= -1e-6);
}

#[test]
fn contradictory_equality_is_infeasible() {
    // injected row 0 . y = 1
    let mut prog = toy_moment_sdp();
    prog.eq_rows.push(LinRow::new(vec![], 1.0, "1 = 0"));
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Infeasible, "{:?}", report.status);
    assert!(report.certificate.is_some());
}

#[test]
fn infeasible_sdp_certificate_uses_psd_dual_cone() {
    // [[1, 3], [3, y]] >= 0 forces y >= 9, but also y <= 1
    let mut prog = ConicProgram::new(1);
    prog.objective = vec![0.0];
    prog.tighten_bound(0, f64::NEG_INFINITY, 1.0);
    let mut blk = PsdBlock::new(2, "M");
    blk.push_constant(0, 0, 1.0);
    blk.push_constant(1, 0, 3.0);
    blk.push_term(1, 1, 0, 1.0);
    prog.psd_blocks.push(blk);
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Infeasible, "{:?}", report.status);
    assert!(report.certificate.is_some());
}

#[test]
fn unbounded_maximization_is_reported() {
    // max y s.t. y >= 0
    let mut prog = ConicProgram::new(1);
    prog.sense = Sense::Maximize;
    prog.objective = vec![1.0];
    prog.tighten_bound(0, 0.0, f64::INFINITY);
    let report = ClarabelBackend.solve(&prog, &settings());
    assert_eq!(report.status, SolveStatus::Unbounded, "{:?}", report.status);
}

#[test]
fn nested_programs_have_ordered_optima() {
    // adding constraints can only raise a minimum
    let relaxed = toy_moment_sdp();
    let mut tightened = relaxed.clone();
    tightened.tighten_bound(0, 0.3, f64::INFINITY);
    let a = ClarabelBackend.solve(&relaxed, &settings());
    let b = ClarabelBackend.solve(&tightened, &settings());
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!(b.objective >= a.objective - 1e-6);
    assert_abs_diff_eq!(b.objective, 0.3, epsilon = 1e-6);
}

#[test]
fn residual_evaluation_flags_violations() {
    let mut prog = toy_moment_sdp();
    prog.tighten_bound(0, 0.0, 1.0);
    let ok = evaluate_residuals(&prog, &[0.30]);
    assert!(ok.psd_min_eig > 0.0);
    assert_eq!(ok.ineq, 0.0);
    let bad = evaluate_residuals(&prog, &[0.10]);
    assert!(bad.psd_min_eig < 0.0);
    let out_of_box = evaluate_residuals(&prog, &[1.5]);
    assert_abs_diff_eq!(out_of_box.ineq, 0.5, epsilon = 1e-15);
}

// ---------------------------------------------------------------------------
// SDPA round trip

struct ParsedSdpa {
    n_vars: usize,
    block_sizes: Vec<i64>,
    c: Vec<f64>,
    /// entries[(mat, blk, i, j)] with 1-based indices as written
    entries: std::collections::BTreeMap<(usize, usize, usize, usize), f64>,
}

/// Minimal reader for the sparse SDPA format, used as an independent oracle
/// for the writer.
fn parse_sdpa(text: &str) -> ParsedSdpa {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('*') && !l.trim_start().starts_with('"'))
        .filter(|l| !l.trim().is_empty());
    let n_vars: usize = lines.next().unwrap().trim().parse().unwrap();
    let n_blocks: usize = lines.next().unwrap().trim().parse().unwrap();
    let block_sizes: Vec<i64> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(block_sizes.len(), n_blocks);
    let c: Vec<f64> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(c.len(), n_vars);
    let mut entries = std::collections::BTreeMap::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(toks.len(), 5, "bad entry line: {line}");
        let (i, j) = (toks[2].parse::<usize>().unwrap(), toks[3].parse::<usize>().unwrap());
        assert!(i <= j, "upper-triangle violation: {line}");
        let key = (toks[0].parse().unwrap(), toks[1].parse().unwrap(), i, j);
        let prev = entries.insert(key, toks[4].parse::<f64>().unwrap());
        assert!(prev.is_none(), "duplicate entry {key:?}");
    }
    ParsedSdpa { n_vars, block_sizes, c, entries }
}

/// Evaluates `sum_j x_j F_j - F_0` for one block of a parsed file.
fn eval_sdpa_block(p: &ParsedSdpa, blk: usize, dim: usize, x: &[f64]) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(dim, dim);
    for (&(mat, b, i, j), &v) in &p.entries {
        if b != blk {
            continue;
        }
        let contrib = if mat == 0 { -v } else { x[mat - 1] * v };
        m[(i - 1, j - 1)] += contrib;
        if i != j {
            m[(j - 1, i - 1)] += contrib;
        }
    }
    m
}

#[test]
fn sdpa_export_round_trips_through_independent_reader() {
    let mut prog = toy_moment_sdp();
    prog.eq_rows.push(LinRow::new(vec![(0, 2.0)], 0.5, "2 y2 = 0.5"));
    prog.tighten_bound(0, f64::NEG_INFINITY, 3.0);
    let text = sdpa_string(&prog);
    let parsed = parse_sdpa(&text);

    assert_eq!(parsed.n_vars, 1);
    // one diagonal block (1 bound + 2 from the equality pair) + one PSD block
    assert_eq!(parsed.block_sizes, vec![-3, 2]);
    assert_eq!(parsed.c, vec![1.0]);

    // the feasible point of the equality: y2 = 0.25
    let x = [0.25];
    let lin = eval_sdpa_block(&parsed, 1, 3, &x);
    // slot 1: 3 - y2 = 2.75; slots 2-3: +-(2 y2 - 0.5) = 0
    assert_abs_diff_eq!(lin[(0, 0)], 2.75, epsilon = 1e-15);
    assert_abs_diff_eq!(lin[(1, 1)], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(lin[(2, 2)], 0.0, epsilon = 1e-15);

    let psd = eval_sdpa_block(&parsed, 2, 2, &x);
    let direct = prog.psd_blocks[0].eval(&x);
    assert_eq!(psd, direct, "exported block must reproduce S(y) exactly");
}

#[test]
fn sdpa_values_survive_the_text_format_exactly() {
    let mut prog = ConicProgram::new(1);
    prog.objective = vec![0.1 + 0.2]; // deliberately non-representable decimal
    let mut blk = PsdBlock::new(1, "M");
    blk.push_constant(0, 0, std::f64::consts::PI);
    blk.push_term(0, 0, 0, 1.0 / 3.0);
    prog.psd_blocks.push(blk);
    let parsed = parse_sdpa(&sdpa_string(&prog));
    assert_eq!(parsed.c[0], 0.1 + 0.2);
    assert_eq!(parsed.entries[&(0, 1, 1, 1)], -std::f64::consts::PI);
    assert_eq!(parsed.entries[&(1, 1, 1, 1)], 1.0 / 3.0);
}

#[test]
fn sdpa_negates_maximization_objectives() {
    let mut prog = ConicProgram::new(1);
    prog.sense = Sense::Maximize;
    prog.objective = vec![2.0];
    prog.tighten_bound(0, 0.0, 1.0);
    let parsed = parse_sdpa(&sdpa_string(&prog));
    assert_eq!(parsed.c, vec![-2.0]);
    assert_eq!(parsed.block_sizes, vec![-2]);
}
