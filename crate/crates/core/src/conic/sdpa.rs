//! Export to the SDPA sparse format (`.dat-s`), the lingua franca of
//! external SDP solvers.
//!
//! The file encodes `min c'x  s.t.  sum_i x_i F_i - F_0 >= 0` with a block
//! diagonal constraint matrix. Variable bounds and inequality rows are
//! gathered into one diagonal block (negative size, by convention); each
//! equality row is exported as an opposed pair of inequalities since the
//! format has no zero cone. Maximization problems are exported with the
//! objective negated (noted in a comment). Values are printed with 17
//! significant digits so the export is bit-faithful for all practical
//! purposes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ConicProgram, Sense};

/// Renders the program as the text of a `.dat-s` file.
pub fn sdpa_string(prog: &ConicProgram) -> String {
    let n_lin = prog.ineq_rows.len() + prog.n_active_bounds() + 2 * prog.eq_rows.len();
    let mut block_sizes: Vec<i64> = Vec::new();
    if n_lin > 0 {
        block_sizes.push(-(n_lin as i64));
    }
    block_sizes.extend(prog.psd_blocks.iter().map(|b| b.dim as i64));

    let mut out = String::new();
    let _ = writeln!(out, "* conic program export ({} variables)", prog.n_vars);
    if prog.sense == Sense::Maximize {
        let _ = writeln!(out, "* objective negated: source program maximizes");
    }
    if n_lin > 0 {
        let _ = writeln!(
            out,
            "* block 1: linear rows ({} inequalities, {} variable bounds, {} equality pairs)",
            prog.ineq_rows.len(),
            prog.n_active_bounds(),
            prog.eq_rows.len()
        );
    }
    let psd_base = if n_lin > 0 { 2 } else { 1 };
    for (k, blk) in prog.psd_blocks.iter().enumerate() {
        let _ = writeln!(out, "* block {}: {}", psd_base + k, blk.label);
    }
    let _ = writeln!(out, "{}", prog.n_vars);
    let _ = writeln!(out, "{}", block_sizes.len());
    let sizes: Vec<String> = block_sizes.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let sign = if prog.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let cs: Vec<String> = prog.objective.iter().map(|c| format!("{:.16e}", sign * c)).collect();
    let _ = writeln!(out, "{}", cs.join(" "));

    // (matno, blkno, i, j) -> value, with duplicates accumulated and
    // deterministic output order
    let mut entries: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut add = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            *entries.entry((mat, blk, i, j)).or_insert(0.0) += v;
        }
    };

    // slack of row `a.y <= rhs` occupies one diagonal slot:
    //   F_j = -a_j, F_0 = -rhs  =>  sum y_j F_j - F_0 = rhs - a.y >= 0
    let mut slot = 1usize;
    for r in &prog.ineq_rows {
        for &(j, a) in &r.coeffs {
            add(j + 1, 1, slot, slot, -a);
        }
        add(0, 1, slot, slot, -r.rhs);
        slot += 1;
    }
    for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
        if lo.is_finite() {
            add(j + 1, 1, slot, slot, 1.0);
            add(0, 1, slot, slot, lo);
            slot += 1;
        }
        if hi.is_finite() {
            add(j + 1, 1, slot, slot, -1.0);
            add(0, 1, slot, slot, -hi);
            slot += 1;
        }
    }
    for r in &prog.eq_rows {
        for &(j, a) in &r.coeffs {
            add(j + 1, 1, slot, slot, -a);
            add(j + 1, 1, slot + 1, slot + 1, a);
        }
        add(0, 1, slot, slot, -r.rhs);
        add(0, 1, slot + 1, slot + 1, r.rhs);
        slot += 2;
    }

    for (k, b) in prog.psd_blocks.iter().enumerate() {
        let blk = psd_base + k;
        // entries are stored lower-triangular; SDPA wants i <= j
        for &(r, c, v) in &b.constants {
            add(0, blk, c + 1, r + 1, -v);
        }
        for &(r, c, j, coeff) in &b.terms {
            add(j + 1, blk, c + 1, r + 1, coeff);
        }
    }

    for (&(mat, blk, i, j), &v) in &entries {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {i} {j} {v:.16e}");
        }
    }
    out
}

pub fn write_sdpa(prog: &ConicProgram, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, sdpa_string(prog))
}
