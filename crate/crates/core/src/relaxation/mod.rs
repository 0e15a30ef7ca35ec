//! Assembly of the order-`r` semidefinite relaxation.
//!
//! Each unknown measure (endpoint marginals, per-interval occupation
//! measures, spatial cells of the initial measure) becomes a truncated
//! moment sequence occupying a contiguous slice of one global variable
//! vector. The relaxation then consists of
//!
//! - Liouville equality rows, one per test monomial `v = t^a x^b` per time
//!   interval, coupling the occupation measure to its endpoint measures;
//! - normalization rows fixing endpoint masses to one (cell masses sum to
//!   one and live in `[0, 1]`);
//! - interval moment data as variable bounds (or as inequality rows over
//!   cell sums at the split time);
//! - one moment matrix per measure and one localizing matrix per support
//!   polynomial, all positive semidefinite.
//!
//! Assembly is pure and deterministic: the same problem and order produce
//! an identical program, byte for byte.

#[cfg(test)]
mod tests;

use crate::conic::{ConicProgram, LinRow, PsdBlock, Sense};
use crate::poly::{monomial_basis, Monomial, MonomialIndex, Polynomial};
use crate::problem::{box_poly, EstimationProblem};

#[derive(Debug, thiserror::Error)]
pub enum RelaxError {
    #[error("order {order} admits no non-constant test monomial for a field of degree {field_degree}; raise the order")]
    OrderTooSmall { order: u32, field_degree: u32 },
    #[error("objective moment of degree {degree} exceeds the truncation 2r = {cap}")]
    ObjectiveDegree { degree: u32, cap: u32 },
    #[error("no measure carries the requested objective ({0})")]
    UnknownObjective(String),
    #[error("mass objectives need a partition at time index 0")]
    MissingPartition,
}

/// Which measure a variable slice belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Marginal at grid point `k`, variables `x`.
    Endpoint(usize),
    /// Occupation measure of `[t_k, t_{k+1}]`, variables `(t, x)`.
    Occupation(usize),
    /// Spatial cell `j` of the initial measure, variables `x`.
    Cell(usize),
}

/// One unknown measure: a truncated moment sequence plus its support
/// description.
#[derive(Debug, Clone)]
pub struct MeasureVar {
    pub kind: MeasureKind,
    /// First global column of this measure's slice.
    pub offset: usize,
    /// Graded monomial basis up to degree `2r` over the measure's variables.
    pub index: MonomialIndex,
    /// Localizer polynomials `g >= 0` describing the support (the time
    /// window of an occupation measure is one of them).
    pub supports: Vec<Polynomial>,
    pub label: String,
}

impl MeasureVar {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Global column of a monomial, if it is within the truncation.
    pub fn column(&self, m: &Monomial) -> Option<usize> {
        self.index.position(m).map(|p| p + self.offset)
    }

    /// Number of basis monomials of degree at most `d` (a prefix, since the
    /// basis is graded).
    fn len_upto(&self, d: u32) -> usize {
        self.index.basis().partition_point(|m| m.degree() <= d)
    }
}

/// Test monomials `v = t^a x^b` for the Liouville rows at order `r`: every
/// `v` with `deg v <= 2r + 1 - max(1, deg f)`, so that both `L_f v` and the
/// endpoint restrictions stay within the truncation.
pub fn test_monomials(
    order: u32,
    n_x: usize,
    field_degree: u32,
) -> Result<Vec<Monomial>, RelaxError> {
    let budget = (2 * order + 1).saturating_sub(field_degree.max(1));
    if budget < 1 {
        return Err(RelaxError::OrderTooSmall { order, field_degree });
    }
    Ok(monomial_basis(n_x, budget, true))
}

/// Moment matrix `M(nu)`: rows and columns indexed by the basis monomials of
/// degree at most `r`, entry `(i, j) = <m_i m_j, nu>`.
pub fn moment_matrix(measure: &MeasureVar, order: u32) -> PsdBlock {
    localizing_matrix(measure, &Polynomial::constant(1.0, measure.index.n_x()), order)
}

/// Localizing matrix `L(g nu)`: like the moment matrix but with every entry
/// twisted by `g`, over the basis of degree at most `r - ceil(deg g / 2)`.
pub fn localizing_matrix(measure: &MeasureVar, g: &Polynomial, order: u32) -> PsdBlock {
    let dg = g.degree();
    debug_assert!(dg <= 2 * order, "localizer degree exceeds truncation");
    let sub_order = order - dg.div_ceil(2);
    let dim = measure.len_upto(sub_order);
    let label = if g.degree() == 0 && g.coefficient(&Monomial::one(g.n_x())) == 1.0 {
        format!("M({})", measure.label)
    } else {
        format!("L({} {})", g.to_string_with(None), measure.label)
    };
    let mut blk = PsdBlock::new(dim, label);
    let basis = measure.index.basis();
    for i in 0..dim {
        for j in 0..=i {
            let mij = basis[i].mul(&basis[j]);
            for (gm, gc) in g.terms() {
                let mono = mij.mul(gm);
                let col = measure
                    .column(&mono)
                    .expect("degree overflow in localizing matrix");
                blk.push_term(i, j, col, gc);
            }
        }
    }
    blk
}

/// How the initial measure is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMode {
    /// One marginal per grid point (Problem 1 / consistency).
    Pointwise,
    /// The initial marginal is split into one measure per partition cell
    /// (Problem 2); every Liouville row sees their sum.
    SpaceSplit,
}

/// What a bound query optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveCoord {
    Moment { time_index: usize, exponents: Vec<u32> },
    CellMass { cell: usize },
}

/// The assembled relaxation before an objective is chosen. The engine clones
/// the program once per (objective, direction) pair.
#[derive(Debug, Clone)]
pub struct Assembly {
    /// Full constraint set with a zero objective.
    pub program: ConicProgram,
    pub measures: Vec<MeasureVar>,
    pub order: u32,
    pub mode: AssemblyMode,
    /// Diagnostics produced during assembly (e.g. data dropped for degree).
    pub notes: Vec<String>,
    pub n_test_monomials: usize,
    pub n_liouville_rows: usize,
    pub n_normalization_rows: usize,
}

impl Assembly {
    pub fn measure(&self, kind: MeasureKind) -> Option<&MeasureVar> {
        self.measures.iter().find(|m| m.kind == kind)
    }

    /// Global column of `nu_k^(exponents)` (endpoint measures only).
    pub fn moment_column(&self, time_index: usize, exponents: &[u32]) -> Option<usize> {
        let m = self.measure(MeasureKind::Endpoint(time_index))?;
        m.column(&Monomial::new(0, exponents.to_vec()))
    }

    /// Global column of the mass of cell `j`.
    pub fn mass_column(&self, cell: usize) -> Option<usize> {
        let m = self.measure(MeasureKind::Cell(cell))?;
        m.column(&Monomial::one(m.index.n_x()))
    }

    /// The constraint set as a feasibility program (zero objective).
    pub fn feasibility_program(&self) -> ConicProgram {
        self.program.clone()
    }

    /// Clone of the program optimizing the given column.
    pub fn objective_program(&self, column: usize, sense: Sense) -> ConicProgram {
        let mut prog = self.program.clone();
        prog.sense = sense;
        prog.objective[column] = 1.0;
        prog
    }

    pub fn objective_column(&self, objective: &ObjectiveCoord) -> Result<usize, RelaxError> {
        match objective {
            ObjectiveCoord::Moment { time_index, exponents } => {
                let degree: u32 = exponents.iter().sum();
                if degree > 2 * self.order {
                    return Err(RelaxError::ObjectiveDegree { degree, cap: 2 * self.order });
                }
                self.moment_column(*time_index, exponents).ok_or_else(|| {
                    RelaxError::UnknownObjective(format!(
                        "moment at time index {time_index}, exponents {exponents:?}"
                    ))
                })
            }
            ObjectiveCoord::CellMass { cell } => self
                .mass_column(*cell)
                .ok_or_else(|| RelaxError::UnknownObjective(format!("mass of cell {cell}"))),
        }
    }
}

/// Assembles the order-`r` relaxation of `problem` optimizing `objective`.
/// Convenience wrapper over [`assemble_skeleton`]; batch callers should use
/// the skeleton directly and swap objectives.
pub fn assemble(
    problem: &EstimationProblem,
    objective: &ObjectiveCoord,
    sense: Sense,
    order: u32,
) -> Result<ConicProgram, RelaxError> {
    let mode = match objective {
        ObjectiveCoord::Moment { .. } => AssemblyMode::Pointwise,
        ObjectiveCoord::CellMass { .. } => AssemblyMode::SpaceSplit,
    };
    let skeleton = assemble_skeleton(problem, mode, order)?;
    let column = skeleton.objective_column(objective)?;
    Ok(skeleton.objective_program(column, sense))
}

/// Assembles the constraint skeleton shared by every objective.
pub fn assemble_skeleton(
    problem: &EstimationProblem,
    mode: AssemblyMode,
    order: u32,
) -> Result<Assembly, RelaxError> {
    Assembler::new(problem, mode, order)?.run()
}

struct Assembler<'p> {
    problem: &'p EstimationProblem,
    mode: AssemblyMode,
    order: u32,
    cap: u32,
    n_x: usize,
    tests: Vec<Monomial>,
    measures: Vec<MeasureVar>,
    notes: Vec<String>,
}

impl<'p> Assembler<'p> {
    fn new(
        problem: &'p EstimationProblem,
        mode: AssemblyMode,
        order: u32,
    ) -> Result<Self, RelaxError> {
        if mode == AssemblyMode::SpaceSplit && problem.partition.is_none() {
            return Err(RelaxError::MissingPartition);
        }
        let tests = if problem.m_t() > 0 {
            test_monomials(order, problem.n_x(), problem.system.degree())?
        } else {
            vec![]
        };
        Ok(Self {
            problem,
            mode,
            order,
            cap: 2 * order,
            n_x: problem.n_x(),
            tests,
            measures: vec![],
            notes: vec![],
        })
    }

    /// Localizers shared by every measure: the global box.
    fn global_supports(&self) -> Vec<Polynomial> {
        self.problem.global_box_polys()
    }

    /// Support polynomials contributed by pinned oracle coordinates at the
    /// initial time (degenerate or exact boxes of the known laws).
    fn pin_supports(&self) -> Vec<Polynomial> {
        let Some(oracle) = &self.problem.oracle else { return vec![] };
        oracle
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                Some(e) if e.pin => {
                    let (lo, hi) = e.law.support();
                    Some(box_poly(i, lo, hi, self.n_x))
                }
                _ => None,
            })
            .collect()
    }

    fn push_measure(
        &mut self,
        kind: MeasureKind,
        include_t: bool,
        supports: Vec<Polynomial>,
        label: String,
        next_offset: &mut usize,
    ) {
        let index = MonomialIndex::new(self.n_x, self.cap, include_t);
        let offset = *next_offset;
        *next_offset += index.len();
        self.measures.push(MeasureVar { kind, offset, index, supports, label });
    }

    fn build_measures(&mut self) {
        let problem = self.problem;
        let m_t = problem.m_t();
        let global = self.global_supports();
        let pins = self.pin_supports();
        let mut offset = 0usize;

        // endpoint marginals (mu_0 only in pointwise mode)
        for k in 0..=m_t {
            if k == 0 && self.mode == AssemblyMode::SpaceSplit {
                continue;
            }
            let mut supports = global.clone();
            supports.extend(problem.supports[k].inequalities.iter().cloned());
            if k == 0 {
                for g in &pins {
                    if !supports.contains(g) {
                        supports.push(g.clone());
                    }
                }
            }
            self.push_measure(
                MeasureKind::Endpoint(k),
                false,
                supports,
                format!("mu_{k}"),
                &mut offset,
            );
        }

        // spatial cells of the initial measure
        if self.mode == AssemblyMode::SpaceSplit {
            let partition = problem.partition.as_ref().expect("checked in new");
            for j in 0..partition.n_cells() {
                let cell = partition.cell(j);
                let mut supports: Vec<Polynomial> = Vec::new();
                // cell box on partition axes, global box elsewhere
                for (slot, &axis) in partition.axes.iter().enumerate() {
                    let (lo, hi) = cell.intervals[slot];
                    supports.push(box_poly(axis, lo, hi, self.n_x));
                }
                for (i, b) in problem.box_bounds.iter().enumerate() {
                    if partition.axes.contains(&i) {
                        continue;
                    }
                    if let Some((lo, hi)) = b {
                        supports.push(box_poly(i, *lo, *hi, self.n_x));
                    }
                }
                supports.extend(problem.supports[0].inequalities.iter().cloned());
                for g in &pins {
                    if !supports.contains(g) {
                        supports.push(g.clone());
                    }
                }
                self.push_measure(
                    MeasureKind::Cell(j),
                    false,
                    supports,
                    format!("mu_{{0,{j}}}"),
                    &mut offset,
                );
            }
        }

        // occupation measures with their time windows
        for k in 0..m_t {
            let (t0, t1) = (problem.times[k], problem.times[k + 1]);
            let t = Polynomial::time(self.n_x);
            let window = t
                .sub(&Polynomial::constant(t0, self.n_x))
                .unwrap()
                .mul(&Polynomial::constant(t1, self.n_x).sub(&t).unwrap())
                .unwrap();
            let mut supports = global.clone();
            supports.push(window);
            self.push_measure(
                MeasureKind::Occupation(k),
                true,
                supports,
                format!("mu_{{{},{}}}", k, k + 1),
                &mut offset,
            );
        }
    }

    /// Columns carrying the initial marginal's moment of `x^beta`
    /// (one column in pointwise mode, one per cell in split mode).
    fn initial_moment_columns(&self, beta: &Monomial) -> Vec<usize> {
        match self.mode {
            AssemblyMode::Pointwise => {
                let m = self
                    .measures
                    .iter()
                    .find(|m| m.kind == MeasureKind::Endpoint(0))
                    .expect("endpoint 0");
                vec![m.column(beta).expect("degree overflow at endpoint 0")]
            }
            AssemblyMode::SpaceSplit => self
                .measures
                .iter()
                .filter(|m| matches!(m.kind, MeasureKind::Cell(_)))
                .map(|m| m.column(beta).expect("degree overflow in cell"))
                .collect(),
        }
    }

    fn liouville_rows(&self, prog: &mut ConicProgram) -> usize {
        let problem = self.problem;
        let field = problem.system.field();
        let mut count = 0usize;
        for k in 0..problem.m_t() {
            let occ = self
                .measures
                .iter()
                .find(|m| m.kind == MeasureKind::Occupation(k))
                .expect("occupation measure");
            let (t0, t1) = (problem.times[k], problem.times[k + 1]);
            for v in &self.tests {
                let vpoly = Polynomial::from_monomial(v.clone(), 1.0);
                let lfv = vpoly.lie_derivative(field).expect("dimension agreement");
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for (m, c) in lfv.terms() {
                    coeffs.push((occ.column(m).expect("degree overflow in L_f v"), c));
                }
                let alpha = v.t_exp() as i32;
                let beta = v.state_part();
                // -t_{k+1}^a <x^b, mu_{k+1}>
                let w1 = t1.powi(alpha);
                if w1 != 0.0 {
                    let m1 = self
                        .measures
                        .iter()
                        .find(|m| m.kind == MeasureKind::Endpoint(k + 1))
                        .expect("endpoint k+1");
                    coeffs.push((m1.column(&beta).expect("degree overflow"), -w1));
                }
                // +t_k^a <x^b, mu_k> (split into cells at the partitioned time)
                let w0 = t0.powi(alpha);
                if w0 != 0.0 {
                    if k == 0 {
                        for col in self.initial_moment_columns(&beta) {
                            coeffs.push((col, w0));
                        }
                    } else {
                        let m0 = self
                            .measures
                            .iter()
                            .find(|m| m.kind == MeasureKind::Endpoint(k))
                            .expect("endpoint k");
                        coeffs.push((m0.column(&beta).expect("degree overflow"), w0));
                    }
                }
                prog.eq_rows.push(LinRow::new(coeffs, 0.0, format!("liouville[k={k}] v={v}")));
                count += 1;
            }
        }
        count
    }

    fn normalization_rows(&self, prog: &mut ConicProgram) -> usize {
        let mut count = 0usize;
        let one = Monomial::one(self.n_x);
        let mut cell_mass_cols = Vec::new();
        for m in &self.measures {
            match m.kind {
                MeasureKind::Endpoint(_) => {
                    let col = m.column(&one).expect("mass column");
                    prog.eq_rows.push(LinRow::new(
                        vec![(col, 1.0)],
                        1.0,
                        format!("mass({}) = 1", m.label),
                    ));
                    count += 1;
                }
                MeasureKind::Cell(_) => {
                    let col = m.column(&one).expect("mass column");
                    prog.tighten_bound(col, 0.0, 1.0);
                    cell_mass_cols.push(col);
                }
                MeasureKind::Occupation(_) => {}
            }
        }
        if !cell_mass_cols.is_empty() {
            prog.eq_rows.push(LinRow::new(
                cell_mass_cols.iter().map(|&c| (c, 1.0)).collect(),
                1.0,
                "sum_j mass(mu_{0,j}) = 1",
            ));
            count += 1;
        }
        count
    }

    /// Exact moment equalities for the pinned initial coordinates: every
    /// multi-index supported on the pinned set, up to the truncation.
    fn pin_rows(&self, prog: &mut ConicProgram) {
        let Some(oracle) = &self.problem.oracle else { return };
        let pinned = oracle.pinned_states();
        if pinned.is_empty() {
            return;
        }
        for beta in monomial_basis(self.n_x, self.cap, false) {
            if beta.degree() == 0 {
                continue; // normalization already fixes the mass
            }
            let outside = beta
                .x_exps()
                .iter()
                .enumerate()
                .any(|(i, &e)| e > 0 && !pinned.contains(&i));
            if outside {
                continue;
            }
            let value: f64 = beta
                .x_exps()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    let entry = oracle.entries[i].as_ref().expect("pinned entry");
                    entry.law.raw_moment(e)
                })
                .product();
            let cols = self.initial_moment_columns(&beta);
            let label = format!(
                "pin nu_0[{}] = {value}",
                Polynomial::from_monomial(beta.clone(), 1.0)
                    .to_string_with(Some(self.problem.system.state_names()))
            );
            prog.eq_rows.push(LinRow::new(
                cols.iter().map(|&c| (c, 1.0)).collect(),
                value,
                label,
            ));
        }
    }

    fn data_rows(&mut self, prog: &mut ConicProgram) {
        for (i, mb) in self.problem.moments.iter().enumerate() {
            if mb.degree() > self.cap {
                self.notes.push(format!(
                    "moments[{i}]: degree {} exceeds truncation {}; dropped at order {}",
                    mb.degree(),
                    self.cap,
                    self.order
                ));
                continue;
            }
            let beta = Monomial::new(0, mb.exponents.clone());
            if self.mode == AssemblyMode::SpaceSplit && mb.time_index == 0 {
                let cols = self.initial_moment_columns(&beta);
                let coeffs: Vec<(usize, f64)> = cols.iter().map(|&c| (c, 1.0)).collect();
                if mb.upper.is_finite() {
                    prog.ineq_rows.push(LinRow::new(
                        coeffs.clone(),
                        mb.upper,
                        format!("data[{i}] upper"),
                    ));
                }
                if mb.lower.is_finite() {
                    prog.ineq_rows.push(LinRow::new(
                        coeffs.iter().map(|&(c, a)| (c, -a)).collect(),
                        -mb.lower,
                        format!("data[{i}] lower"),
                    ));
                }
            } else {
                let m = self
                    .measures
                    .iter()
                    .find(|m| m.kind == MeasureKind::Endpoint(mb.time_index))
                    .expect("validated time index");
                let col = m.column(&beta).expect("degree within truncation");
                prog.tighten_bound(col, mb.lower, mb.upper);
            }
        }
    }

    fn psd_blocks(&mut self, prog: &mut ConicProgram) {
        for m in &self.measures {
            prog.psd_blocks.push(moment_matrix(m, self.order));
            for g in &m.supports {
                if g.degree() > self.cap {
                    self.notes.push(format!(
                        "support localizer {} on {} has degree {} > {}; dropped",
                        g.to_string_with(None),
                        m.label,
                        g.degree(),
                        self.cap
                    ));
                    continue;
                }
                prog.psd_blocks.push(localizing_matrix(m, g, self.order));
            }
        }
    }

    fn var_names(&self) -> Vec<String> {
        let names = self.problem.system.state_names();
        let mut out = Vec::new();
        for m in &self.measures {
            for mono in m.index.basis() {
                let mono_str =
                    Polynomial::from_monomial(mono.clone(), 1.0).to_string_with(Some(names));
                out.push(format!("{}[{}]", m.label, mono_str));
            }
        }
        out
    }

    fn run(mut self) -> Result<Assembly, RelaxError> {
        self.build_measures();
        let n_vars = self.measures.iter().map(MeasureVar::len).sum();
        let mut prog = ConicProgram::new(n_vars);
        let n_liouville_rows = self.liouville_rows(&mut prog);
        let n_normalization_rows = self.normalization_rows(&mut prog);
        self.pin_rows(&mut prog);
        self.data_rows(&mut prog);
        self.psd_blocks(&mut prog);
        prog.var_names = self.var_names();
        Ok(Assembly {
            program: prog,
            measures: self.measures,
            order: self.order,
            mode: self.mode,
            notes: self.notes,
            n_test_monomials: self.tests.len(),
            n_liouville_rows,
            n_normalization_rows,
        })
    }
}

/// Human-readable dump of an assembled program (rows with labels, block
/// inventory); used by the CLI debug flag.
pub fn describe(assembly: &Assembly) -> String {
    use std::fmt::Write as _;
    let prog = &assembly.program;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "order {} ({} mode), {} variables, {} measures",
        assembly.order,
        match assembly.mode {
            AssemblyMode::Pointwise => "pointwise",
            AssemblyMode::SpaceSplit => "space-split",
        },
        prog.n_vars,
        assembly.measures.len()
    );
    for m in &assembly.measures {
        let _ = writeln!(
            out,
            "  measure {} @ cols {}..{} ({} localizers)",
            m.label,
            m.offset,
            m.offset + m.len(),
            m.supports.len()
        );
    }
    let _ = writeln!(out, "equality rows ({}):", prog.eq_rows.len());
    for r in &prog.eq_rows {
        let terms: Vec<String> = r
            .coeffs
            .iter()
            .map(|&(j, a)| format!("{a:+.4}*{}", prog.var_names.get(j).map(String::as_str).unwrap_or("?")))
            .collect();
        let _ = writeln!(out, "  {} : {} = {}", r.label, terms.join(" "), r.rhs);
    }
    let bounded = prog
        .var_bounds
        .iter()
        .enumerate()
        .filter(|(_, (lo, hi))| lo.is_finite() || hi.is_finite());
    let _ = writeln!(out, "variable bounds ({} active):", prog.n_active_bounds());
    for (j, (lo, hi)) in bounded {
        let _ = writeln!(out, "  {} in [{lo}, {hi}]", prog.var_names[j]);
    }
    if !prog.ineq_rows.is_empty() {
        let _ = writeln!(out, "inequality rows ({}):", prog.ineq_rows.len());
        for r in &prog.ineq_rows {
            let _ = writeln!(out, "  {} (rhs {})", r.label, r.rhs);
        }
    }
    let _ = writeln!(out, "psd blocks ({}):", prog.psd_blocks.len());
    for b in &prog.psd_blocks {
        let _ = writeln!(out, "  {} ({}x{})", b.label, b.dim, b.dim);
    }
    for n in &assembly.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
