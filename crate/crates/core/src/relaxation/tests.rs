use super::*;
use crate::poly::binomial;
use crate::problem::parse_problem_json;
use approx::assert_abs_diff_eq;

fn example1_json(times: &str) -> String {
    format!(
        r#"{{
            "states": ["x1", "x2"],
            "field": ["-x1*x2", "0"],
            "box": {{"x1": [0, 1], "x2": [0, 1]}},
            "times": {times},
            "oracle": {{"x1": {{"dirac": 0.5, "pin": true}}, "x2": {{"uniform": [0, 1], "pin": true}}}},
            "queries": [{{"kind": "moment_bound", "time_index": 1, "exponents": [1, 0], "order": 3}}]
        }}"#
    )
}

fn free_measure(n_x: usize, order: u32) -> MeasureVar {
    MeasureVar {
        kind: MeasureKind::Endpoint(0),
        offset: 0,
        index: crate::poly::MonomialIndex::new(n_x, 2 * order, false),
        supports: vec![],
        label: "nu".into(),
    }
}

#[test]
fn test_monomial_budget_matches_field_degree() {
    // Example 1: deg f = 2, r = 2 -> ceiling 2r+1-2 = 3, over (t, x1, x2)
    let v = test_monomials(2, 2, 2).unwrap();
    assert_eq!(v.len(), binomial(3 + 3, 3)); // 20
    assert!(v.iter().all(|m| m.degree() <= 3));
    assert!(v.iter().any(|m| m.degree() == 0), "v = 1 must be present");

    // zero field is treated as degree 1: budget 2r
    let v0 = test_monomials(1, 1, 0).unwrap();
    assert_eq!(v0.len(), binomial(2 + 2, 2)); // 6: 1, t, x, t^2, tx, x^2
}

#[test]
fn order_too_small_for_cubic_field() {
    let err = test_monomials(1, 1, 3).unwrap_err();
    assert!(matches!(err, RelaxError::OrderTooSmall { .. }), "{err}");
}

#[test]
fn moment_matrix_shape_and_psdness() {
    let m = free_measure(1, 1);
    let blk = moment_matrix(&m, 1);
    assert_eq!(blk.dim, 2);
    // uniform[0,1] moments (1, 1/2, 1/3): PSD with positive eigenvalues
    let uniform = [1.0, 0.5, 1.0 / 3.0];
    assert!(blk.min_eigenvalue(&uniform) > 0.0);
    // dirac(0.5) moments: rank-1 PSD
    let dirac = [1.0, 0.5, 0.25];
    let mat = blk.eval(&dirac);
    assert!(blk.min_eigenvalue(&dirac) > -1e-12);
    assert_abs_diff_eq!(mat.determinant(), 0.0, epsilon = 1e-12);
    assert_eq!(mat[(0, 1)], 0.5);
    assert_eq!(mat[(1, 1)], 0.25);
}

#[test]
fn localizing_matrix_of_box_polynomial() {
    // g = x(1-x) on uniform[0,1] at r=1: scalar block <x - x^2> = 1/6
    let m = free_measure(1, 1);
    let g = crate::poly::parse_polynomial("x*(1 - x)", &["x".into()]).unwrap();
    let blk = localizing_matrix(&m, &g, 1);
    assert_eq!(blk.dim, 1);
    let val = blk.eval(&[1.0, 0.5, 1.0 / 3.0])[(0, 0)];
    assert_abs_diff_eq!(val, 1.0 / 6.0, epsilon = 1e-15);
}

#[test]
fn constant_localizer_equals_moment_matrix() {
    let m = free_measure(2, 2);
    let one = Polynomial::constant(1.0, 2);
    let loc = localizing_matrix(&m, &one, 2);
    let mom = moment_matrix(&m, 2);
    assert_eq!(loc.dim, mom.dim);
    assert_eq!(loc.terms, mom.terms);
}

#[test]
fn example1_assembly_inventory() {
    let text = example1_json("[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 3).unwrap();

    let endpoints = asm
        .measures
        .iter()
        .filter(|m| matches!(m.kind, MeasureKind::Endpoint(_)))
        .count();
    let occupations = asm
        .measures
        .iter()
        .filter(|m| matches!(m.kind, MeasureKind::Occupation(_)))
        .count();
    assert_eq!(endpoints, 11);
    assert_eq!(occupations, 10);

    // deg f = 2, r = 3: test monomials of degree <= 5 over (t, x1, x2)
    assert_eq!(asm.n_test_monomials, binomial(5 + 3, 3)); // 56
    assert_eq!(asm.n_liouville_rows, 56 * 10);
    assert_eq!(asm.n_normalization_rows, 11);

    // pins: both initial coordinates known, all multi-indices up to 2r = 6
    let pin_rows = asm
        .program
        .eq_rows
        .iter()
        .filter(|r| r.label.starts_with("pin"))
        .count();
    assert_eq!(pin_rows, binomial(6 + 2, 2) - 1); // 27

    assert_eq!(
        asm.program.eq_rows.len(),
        asm.n_liouville_rows + asm.n_normalization_rows + pin_rows
    );

    // moment matrix + localizers per measure: endpoints have the global box
    // (2 gs); mu_0 adds the dirac pin box for x1 (the uniform pin box for x2
    // coincides with the global box and is deduplicated); occupations have
    // the box plus their time window (3 gs)
    let blocks = asm.program.psd_blocks.len();
    let expected = (1 + 2) * 10 + (1 + 3) + (1 + 3) * 10;
    assert_eq!(blocks, expected);
}

#[test]
fn assembly_is_deterministic() {
    let text = example1_json("[0.0, 0.5, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let a = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    let b = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    assert_eq!(a.program, b.program);
    assert_eq!(a.n_liouville_rows, b.n_liouville_rows);
}

#[test]
fn liouville_rows_have_the_documented_shape() {
    let text = example1_json("[0.0, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    let mu0 = asm.measure(MeasureKind::Endpoint(0)).unwrap();
    let mu1 = asm.measure(MeasureKind::Endpoint(1)).unwrap();
    let occ = asm.measure(MeasureKind::Occupation(0)).unwrap();
    let one = Monomial::one(2);

    let row = |label: &str| {
        asm.program
            .eq_rows
            .iter()
            .find(|r| r.label == label)
            .unwrap_or_else(|| panic!("missing row {label}"))
    };

    // v = 1: mass(mu_1) - mass(mu_0) = 0
    let r1 = row("liouville[k=0] v=1");
    let mut coeffs = r1.coeffs.clone();
    coeffs.sort_by_key(|c| c.0);
    let mut expected = vec![(mu0.column(&one).unwrap(), 1.0), (mu1.column(&one).unwrap(), -1.0)];
    expected.sort_by_key(|c| c.0);
    assert_eq!(coeffs, expected);

    // v = t: <1, occ> - t_1 mass(mu_1) = 0 (t_0 = 0 kills the third term)
    let rt = row("liouville[k=0] v=t");
    let mut coeffs = rt.coeffs.clone();
    coeffs.sort_by_key(|c| c.0);
    let mut expected = vec![(occ.column(&one).unwrap(), 1.0), (mu1.column(&one).unwrap(), -1.0)];
    expected.sort_by_key(|c| c.0);
    assert_eq!(coeffs, expected);

    // v = x1: -<x1 x2, occ> - <x1, mu_1> + <x1, mu_0> = 0
    let rx = row("liouville[k=0] v=x1");
    let x1 = Monomial::new(0, vec![1, 0]);
    let x1x2 = Monomial::new(0, vec![1, 1]);
    let mut coeffs = rx.coeffs.clone();
    coeffs.sort_by_key(|c| c.0);
    let mut expected = vec![
        (occ.column(&x1x2).unwrap(), -1.0),
        (mu1.column(&x1).unwrap(), -1.0),
        (mu0.column(&x1).unwrap(), 1.0),
    ];
    expected.sort_by_key(|c| c.0);
    assert_eq!(coeffs, expected);
    assert_eq!(rx.rhs, 0.0);
}

#[test]
fn pin_rows_carry_product_moments() {
    let text = example1_json("[0.0, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    let pin = |label_frag: &str| {
        asm.program
            .eq_rows
            .iter()
            .find(|r| r.label.starts_with("pin") && r.label.contains(label_frag))
            .unwrap_or_else(|| panic!("missing pin {label_frag}"))
    };
    // dirac(0.5) x uniform[0,1]: E[x1 x2] = 0.5 * 0.5
    assert_abs_diff_eq!(pin("x1*x2]").rhs, 0.25, epsilon = 1e-15);
    // E[x2^2] = 1/3
    assert_abs_diff_eq!(pin("x2^2]").rhs, 1.0 / 3.0, epsilon = 1e-15);
    // E[x1^2] = 0.25 (dirac)
    assert_abs_diff_eq!(pin("x1^2]").rhs, 0.25, epsilon = 1e-15);
}

#[test]
fn space_split_replaces_the_initial_marginal() {
    let text = r#"{
        "states": ["x1", "x2"],
        "field": ["0", "0"],
        "box": {"x1": [0, 1], "x2": [0, 1]},
        "times": [0.0, 1.0],
        "partition": {"time_index": 0, "grid": [2, 1]},
        "moments": [{"time_index": 0, "exponents": [1, 0], "lower": 0.4, "upper": 0.6}],
        "queries": [{"kind": "mass_bound", "cell": 0, "order": 2}]
    }"#;
    let problem = parse_problem_json(text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::SpaceSplit, 2).unwrap();

    assert!(asm.measure(MeasureKind::Endpoint(0)).is_none());
    assert!(asm.measure(MeasureKind::Cell(0)).is_some());
    assert!(asm.measure(MeasureKind::Cell(1)).is_some());
    assert!(asm.measure(MeasureKind::Endpoint(1)).is_some());

    // cell masses bounded in [0,1] and summing to one
    let c0 = asm.mass_column(0).unwrap();
    let c1 = asm.mass_column(1).unwrap();
    assert_eq!(asm.program.var_bounds[c0], (0.0, 1.0));
    let sum_row = asm
        .program
        .eq_rows
        .iter()
        .find(|r| r.label.starts_with("sum_j"))
        .expect("sum row");
    let mut cols: Vec<usize> = sum_row.coeffs.iter().map(|&(c, _)| c).collect();
    cols.sort();
    assert_eq!(cols, vec![c0, c1]);
    assert_eq!(sum_row.rhs, 1.0);

    // moment data at the split time turned into two inequality rows over
    // the cell sum
    assert_eq!(asm.program.ineq_rows.len(), 2);
    for r in &asm.program.ineq_rows {
        assert_eq!(r.coeffs.len(), 2);
    }
}

#[test]
fn overweight_data_is_dropped_with_a_note() {
    let text = r#"{
        "states": ["x1"],
        "field": ["0"],
        "box": {"x1": [0, 1]},
        "times": [0.0],
        "moments": [{"time_index": 0, "exponents": [5], "lower": 0.0, "upper": 0.1}],
        "queries": [{"kind": "moment_bound", "time_index": 0, "exponents": [1], "order": 2}]
    }"#;
    let problem = parse_problem_json(text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    assert_eq!(asm.notes.len(), 1);
    assert!(asm.notes[0].contains("degree 5"));
    // no bound was applied anywhere
    assert_eq!(asm.program.n_active_bounds(), 0);
}

#[test]
fn objective_lookup_and_errors() {
    let text = example1_json("[0.0, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();

    let col = asm
        .objective_column(&ObjectiveCoord::Moment { time_index: 1, exponents: vec![1, 0] })
        .unwrap();
    let prog = asm.objective_program(col, crate::conic::Sense::Maximize);
    assert_eq!(prog.objective.iter().filter(|&&c| c != 0.0).count(), 1);
    assert_eq!(prog.objective[col], 1.0);

    let err = asm
        .objective_column(&ObjectiveCoord::Moment { time_index: 1, exponents: vec![9, 0] })
        .unwrap_err();
    assert!(matches!(err, RelaxError::ObjectiveDegree { .. }));

    let err = asm.objective_column(&ObjectiveCoord::CellMass { cell: 0 }).unwrap_err();
    assert!(matches!(err, RelaxError::UnknownObjective(_)));
}

#[test]
fn describe_lists_measures_and_blocks() {
    let text = example1_json("[0.0, 1.0]");
    let problem = parse_problem_json(&text).unwrap();
    let asm = assemble_skeleton(&problem, AssemblyMode::Pointwise, 2).unwrap();
    let dump = describe(&asm);
    assert!(dump.contains("mu_0"));
    assert!(dump.contains("M(mu_0)"));
    assert!(dump.contains("liouville[k=0]"));
}
