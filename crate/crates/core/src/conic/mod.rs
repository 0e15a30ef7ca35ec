//! Solver-facing representation of one semidefinite relaxation.
//!
//! A [`ConicProgram`] optimizes a linear functional of a real vector `y`
//! (the stacked moment sequences) subject to linear equalities, per-variable
//! box bounds, general linear inequalities, and affine positive-semidefinite
//! blocks. Backends translate this into their native geometry;
//! [`ClarabelBackend`] is the built-in interior-point solver, and [`sdpa`]
//! writes the program in the portable SDPA sparse format for external
//! solvers.

mod clarabel_backend;
pub mod sdpa;
#[cfg(test)]
mod tests;

pub use clarabel_backend::ClarabelBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

/// One linear row `coeffs . y (= | <=) rhs`; the containing list decides
/// which relation applies.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: String,
}

impl LinRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64, label: impl Into<String>) -> Self {
        Self { coeffs, rhs, label: label.into() }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * y[j]).sum()
    }
}

/// Affine symmetric matrix constraint `S(y) = C + sum_j y_j G_j >= 0`,
/// stored entrywise on the lower triangle (`c <= r`).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    /// `(r, c, value)` contributions to the constant part `C`.
    pub constants: Vec<(usize, usize, f64)>,
    /// `(r, c, var, coeff)` contributions to the linear part.
    pub terms: Vec<(usize, usize, usize, f64)>,
    /// Provenance tag, e.g. `M(nu_2)` or `L(g1 mu_[1,2])`.
    pub label: String,
}

impl PsdBlock {
    pub fn new(dim: usize, label: impl Into<String>) -> Self {
        Self { dim, constants: vec![], terms: vec![], label: label.into() }
    }

    pub fn push_constant(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c <= r && r < self.dim);
        if v != 0.0 {
            self.constants.push((r, c, v));
        }
    }

    pub fn push_term(&mut self, r: usize, c: usize, var: usize, coeff: f64) {
        debug_assert!(c <= r && r < self.dim);
        if coeff != 0.0 {
            self.terms.push((r, c, var, coeff));
        }
    }

    /// Dense symmetric evaluation at `y`.
    pub fn eval(&self, y: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.constants {
            m[(r, c)] += v;
        }
        for &(r, c, j, a) in &self.terms {
            m[(r, c)] += a * y[j];
        }
        for r in 0..self.dim {
            for c in 0..r {
                m[(c, r)] = m[(r, c)];
            }
        }
        m
    }

    pub fn min_eigenvalue(&self, y: &[f64]) -> f64 {
        self.eval(y)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `optimize objective . y` subject to the listed cones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub sense: Sense,
    pub objective: Vec<f64>,
    /// Rows constrained to equality.
    pub eq_rows: Vec<LinRow>,
    /// Per-variable bounds `lo <= y_j <= hi`; infinite ends are inactive.
    pub var_bounds: Vec<(f64, f64)>,
    /// General rows constrained as `coeffs . y <= rhs`.
    pub ineq_rows: Vec<LinRow>,
    pub psd_blocks: Vec<PsdBlock>,
    /// Human-readable names for the variables (monomial labels).
    pub var_names: Vec<String>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            var_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n_vars],
            ..Default::default()
        }
    }

    /// Intersects the box of variable `j` with `[lo, hi]`.
    pub fn tighten_bound(&mut self, j: usize, lo: f64, hi: f64) {
        let b = &mut self.var_bounds[j];
        b.0 = b.0.max(lo);
        b.1 = b.1.min(hi);
    }

    /// Number of active (finite) variable-bound facets.
    pub fn n_active_bounds(&self) -> usize {
        self.var_bounds
            .iter()
            .map(|(lo, hi)| (lo.is_finite() as usize) + (hi.is_finite() as usize))
            .sum()
    }
}

/// Length of the stacked triangle of a `d x d` symmetric matrix.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of lower-triangle entry `(r, c)`, `c <= r`, in the stacked
/// triangle (row-stacked lower = column-stacked upper, Clarabel's order).
pub fn svec_index(r: usize, c: usize) -> usize {
    debug_assert!(c <= r);
    r * (r + 1) / 2 + c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { tol_feas: 1e-8, tol_gap: 1e-8, max_iter: 200, verbose: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    /// Solved to the requested tolerances.
    Optimal,
    /// A solution was returned at reduced accuracy; bounds derived from it
    /// should be quoted with that caveat.
    Inaccurate,
    /// Primal infeasible with an independently verified improving ray.
    Infeasible,
    /// The objective is unbounded on the feasible set.
    Unbounded,
    /// No usable answer (iteration limit, numerical failure, or an
    /// infeasibility claim whose certificate did not verify).
    Error(String),
}

impl SolveStatus {
    pub fn is_usable(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }

    pub fn as_str(&self) -> &str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error(_) => "error",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Error(msg) => write!(f, "error: {msg}"),
            other => f.write_str(other.as_str()),
        }
    }
}

/// A primal-infeasibility certificate as re-verified by this crate, not
/// merely as claimed by the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    /// Dual ray `z`, normalized to unit max-norm.
    pub ray: Vec<f64>,
    /// Max-norm of `A' z` after normalization (should be ~0).
    pub residual: f64,
    /// `b . z` after normalization; the certificate requires it < 0, and its
    /// magnitude is the margin by which infeasibility is certified.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Optimal value in the program's own sense; `NaN` unless the status is
    /// optimal or inaccurate.
    pub objective: f64,
    pub y: Vec<f64>,
    pub certificate: Option<InfeasibilityCertificate>,
    pub iterations: u32,
    pub solve_time_s: f64,
    /// Tolerances the solve actually used.
    pub settings: SolveSettings,
}

impl SolveReport {
    pub fn error(msg: impl Into<String>, settings: SolveSettings) -> Self {
        Self {
            status: SolveStatus::Error(msg.into()),
            objective: f64::NAN,
            y: vec![],
            certificate: None,
            iterations: 0,
            solve_time_s: 0.0,
            settings,
        }
    }
}

/// Feasibility of a candidate point, in the exact (unscaled) geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `max |a.y - b|` over equality rows.
    pub eq: f64,
    /// Worst violation of inequality rows and variable bounds.
    pub ineq: f64,
    /// Smallest eigenvalue across PSD blocks (`+inf` when there are none).
    pub psd_min_eig: f64,
}

impl Residuals {
    pub fn worst(&self) -> f64 {
        self.eq.max(self.ineq).max((-self.psd_min_eig).max(0.0))
    }
}

pub fn evaluate_residuals(prog: &ConicProgram, y: &[f64]) -> Residuals {
    let eq = prog
        .eq_rows
        .iter()
        .map(|r| (r.eval(y) - r.rhs).abs())
        .fold(0.0, f64::max);
    let mut ineq = prog
        .ineq_rows
        .iter()
        .map(|r| (r.eval(y) - r.rhs).max(0.0))
        .fold(0.0, f64::max);
    for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
        if lo.is_finite() {
            ineq = ineq.max(lo - y[j]);
        }
        if hi.is_finite() {
            ineq = ineq.max(y[j] - hi);
        }
    }
    let psd_min_eig = prog
        .psd_blocks
        .iter()
        .map(|b| b.min_eigenvalue(y))
        .fold(f64::INFINITY, f64::min);
    Residuals { eq, ineq: ineq.max(0.0), psd_min_eig }
}

/// Abstraction over SDP solvers so the relaxation layer stays
/// backend-agnostic.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, settings: &SolveSettings) -> SolveReport;
}
