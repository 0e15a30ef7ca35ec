//! Ground-truth generation: a reference RK4 integrator, seeded sampling of
//! initial distributions, empirical moments and cell masses with standard
//! errors, and the closed-form Example-1 solution used throughout the test
//! suite.
//!
//! Everything is deterministic given a [`SampleRun`]: samples are drawn in
//! fixed-size chunks, each chunk from its own counter-derived RNG stream, and
//! chunk partials are reduced in index order, so results are byte-identical
//! regardless of thread count.

use crate::poly::{monomial_basis, Monomial, Polynomial};
use crate::problem::{EstimationProblem, Law, MomentBound, Partition};
use crate::relaxation::{Assembly, MeasureKind};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use thiserror::Error;


#[derive(Debug, Error)]
pub enum OracleError {
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("sample {sample}: non-finite state at t = {time}")]
    SampleFailed { sample: usize, time: f64 },
    #[error("state {0} has no oracle law")]
    MissingLaw(String),
}

impl OracleError {
    /// Attach the sample index when an integration failure surfaces inside a
    /// Monte Carlo sweep.
    fn for_sample(self, sample: usize) -> Self {
        match self {
            OracleError::NonFinite(time) => OracleError::SampleFailed { sample, time },
            other => other,
        }
    }
}

/// Reproducibility contract for every Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub seed: u64,
    pub n_samples: usize,
    /// RK4 step; intervals shorter than this still take one step.
    pub step: f64,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self { seed: 0, n_samples: 10_000, step: 1e-3 }
    }
}

// ---------------------------------------------------------------------------
// Initial distributions

/// Product distribution over the states: one independent law per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    laws: Vec<Law>,
}

impl InitialDistribution {
    pub fn new(laws: Vec<Law>) -> Self {
        Self { laws }
    }

    /// Reads the problem's oracle block; every state needs a law (the `pin`
    /// flags are irrelevant here).
    pub fn from_problem(problem: &EstimationProblem) -> Result<Self, OracleError> {
        let spec = problem
            .oracle
            .as_ref()
            .ok_or_else(|| OracleError::MissingLaw(problem.system.state_names()[0].clone()))?;
        let mut laws = Vec::with_capacity(problem.n_x());
        for (i, entry) in spec.entries.iter().enumerate() {
            match entry {
                Some(e) => laws.push(e.law.clone()),
                None => {
                    return Err(OracleError::MissingLaw(
                        problem.system.state_names()[i].clone(),
                    ))
                }
            }
        }
        Ok(Self { laws })
    }

    pub fn laws(&self) -> &[Law] {
        &self.laws
    }

    pub fn n_x(&self) -> usize {
        self.laws.len()
    }

    /// Exact raw moment `E[x^exponents]`; factorizes by independence.
    pub fn raw_moment(&self, exponents: &[u32]) -> f64 {
        assert_eq!(exponents.len(), self.laws.len());
        self.laws
            .iter()
            .zip(exponents)
            .map(|(law, &e)| law.raw_moment(e))
            .product()
    }

    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (slot, law) in out.iter_mut().zip(&self.laws) {
            *slot = sample_law(law, rng);
        }
    }
}

/// One draw from a single law. Beta uses the gamma-ratio construction
/// (rand_distr's Gamma is squeeze-accepted and handles shapes below 1).
fn sample_law(law: &Law, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        Law::Dirac(c) => *c,
        Law::Uniform(a, b) => rng.gen_range(*a..*b),
        Law::Beta { alpha, beta, lo, hi } => {
            let g1 = Gamma::new(*alpha, 1.0).expect("alpha > 0").sample(rng);
            let g2 = Gamma::new(*beta, 1.0).expect("beta > 0").sample(rng);
            lo + (hi - lo) * g1 / (g1 + g2)
        }
        Law::Discrete { points, weights } => {
            let ix = WeightedIndex::new(weights).expect("valid weights").sample(rng);
            points[ix]
        }
    }
}

// ---------------------------------------------------------------------------
// Reference integration

fn eval_field(field: &[Polynomial], t: f64, x: &[f64], out: &mut [f64]) {
    for (o, p) in out.iter_mut().zip(field) {
        *o = p.terms().map(|(m, c)| c * m.eval(t, x)).sum();
    }
}

fn eval_monomials(ms: &[Monomial], t: f64, x: &[f64], out: &mut [f64]) {
    for (o, m) in out.iter_mut().zip(ms) {
        *o = m.eval(t, x);
    }
}

/// Classical fixed-step RK4 for `x' = f(t, x)`, evaluated at the grid times.
/// Each interval takes `ceil(len/h)` equal steps, so grid times are hit
/// exactly; global error is O(h^4).
pub fn integrate(
    field: &[Polynomial],
    x0: &[f64],
    times: &[f64],
    h: f64,
) -> Result<Vec<Vec<f64>>, OracleError> {
    integrate_with_occupation(field, x0, times, &[], h).map(|(points, _)| points)
}

/// RK4 with per-interval monomial quadrature: alongside the state it carries
/// `z_m' = v_m(t, x)` for each requested monomial, restarting z at every grid
/// time. Returns the grid points and, per interval, the integrals
/// `int_{t_k}^{t_{k+1}} v_m(t, x(t)) dt` -- single-trajectory occupation
/// moments.
pub fn integrate_with_occupation(
    field: &[Polynomial],
    x0: &[f64],
    times: &[f64],
    monomials: &[Monomial],
    h: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), OracleError> {
    assert_eq!(x0.len(), field.len(), "state/field arity mismatch");
    assert!(h > 0.0 && !times.is_empty());
    let n = x0.len();
    let m = monomials.len();
    let mut x = x0.to_vec();
    let mut points = Vec::with_capacity(times.len());
    points.push(x.clone());
    let mut occupation = Vec::with_capacity(times.len().saturating_sub(1));

    // stage scratch
    let mut k = vec![vec![0.0; n]; 4];
    let mut zk = vec![vec![0.0; m]; 4];
    let mut xs = vec![0.0; n];

    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let steps = (((b - a) / h).ceil() as usize).max(1);
        let dt = (b - a) / steps as f64;
        let mut z = vec![0.0; m];
        for s in 0..steps {
            let t = a + s as f64 * dt;
            eval_field(field, t, &x, &mut k[0]);
            eval_monomials(monomials, t, &x, &mut zk[0]);
            for i in 0..n {
                xs[i] = x[i] + 0.5 * dt * k[0][i];
            }
            eval_field(field, t + 0.5 * dt, &xs, &mut k[1]);
            eval_monomials(monomials, t + 0.5 * dt, &xs, &mut zk[1]);
            for i in 0..n {
                xs[i] = x[i] + 0.5 * dt * k[1][i];
            }
            eval_field(field, t + 0.5 * dt, &xs, &mut k[2]);
            eval_monomials(monomials, t + 0.5 * dt, &xs, &mut zk[2]);
            for i in 0..n {
                xs[i] = x[i] + dt * k[2][i];
            }
            eval_field(field, t + dt, &xs, &mut k[3]);
            eval_monomials(monomials, t + dt, &xs, &mut zk[3]);
            for i in 0..n {
                x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            for j in 0..m {
                z[j] += dt / 6.0 * (zk[0][j] + 2.0 * zk[1][j] + 2.0 * zk[2][j] + zk[3][j]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(OracleError::NonFinite(t + dt));
            }
        }
        points.push(x.clone());
        occupation.push(z);
    }
    Ok((points, occupation))
}

/// How many of the given points leave the declared box by more than `tol`
/// (diagnostic; `None` bounds never trip).
pub fn count_box_exits(points: &[Vec<f64>], bounds: &[Option<(f64, f64)>], tol: f64) -> usize {
    points
        .iter()
        .filter(|p| {
            p.iter().zip(bounds).any(|(v, b)| match b {
                Some((lo, hi)) => *v < lo - tol || *v > hi + tol,
                None => false,
            })
        })
        .count()
}

// ---------------------------------------------------------------------------
// Monte Carlo sweeps

const CHUNK: usize = 256;

/// Mean and standard error of a per-sample vector, accumulated chunk-wise.
fn accumulate<F>(run: &SampleRun, dim: usize, eval: F) -> Result<(Vec<f64>, Vec<f64>), OracleError>
where
    F: Fn(usize, &mut ChaCha8Rng, &mut [f64]) -> Result<(), OracleError> + Sync,
{
    let n = run.n_samples;
    assert!(n > 0, "empty sample run");
    let n_chunks = n.div_ceil(CHUNK);
    let partials = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            rng.set_stream(c as u64 + 1);
            let mut buf = vec![0.0; dim];
            let mut sum = vec![0.0; dim];
            let mut sumsq = vec![0.0; dim];
            for s in c * CHUNK..((c + 1) * CHUNK).min(n) {
                eval(s, &mut rng, &mut buf)?;
                for (j, v) in buf.iter().enumerate() {
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
            }
            Ok((sum, sumsq))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;

    let mut sum = vec![0.0; dim];
    let mut sumsq = vec![0.0; dim];
    for (s, q) in partials {
        for j in 0..dim {
            sum[j] += s[j];
            sumsq[j] += q[j];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_err = (0..dim)
        .map(|j| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sumsq[j] - nf * mean[j] * mean[j]) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    Ok((mean, std_err))
}

/// Empirical raw moments per grid time with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub times: Vec<f64>,
    /// State multi-indices in graded order, degrees 1..=cap.
    pub exponents: Vec<Vec<u32>>,
    /// `mean[k][e]` pairs with `times[k]` and `exponents[e]`.
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub n_samples: usize,
}

impl MomentTable {
    pub fn entry(&self, time_index: usize, exponents: &[u32]) -> Option<(f64, f64)> {
        let e = self.exponents.iter().position(|x| x == exponents)?;
        Some((self.mean[time_index][e], self.std_err[time_index][e]))
    }
}

/// Monte Carlo raw moments of all state monomials up to `degree_cap` at every
/// grid time. Trajectories that blow up abort the sweep with their sample
/// index.
pub fn sample_moments(
    field: &[Polynomial],
    dist: &InitialDistribution,
    times: &[f64],
    degree_cap: u32,
    run: &SampleRun,
) -> Result<MomentTable, OracleError> {
    assert!(degree_cap >= 1);
    let n_x = field.len();
    assert_eq!(dist.n_x(), n_x);
    let monomials: Vec<Monomial> = monomial_basis(n_x, degree_cap, false)
        .into_iter()
        .skip(1) // drop the constant; its moment is always 1
        .collect();
    let width = monomials.len();
    let dim = times.len() * width;

    let (flat_mean, flat_se) = accumulate(run, dim, |s, rng, buf| {
        let mut x0 = vec![0.0; n_x];
        dist.sample_into(rng, &mut x0);
        let points = integrate(field, &x0, times, run.step).map_err(|e| e.for_sample(s))?;
        for (k, p) in points.iter().enumerate() {
            eval_monomials(&monomials, times[k], p, &mut buf[k * width..(k + 1) * width]);
        }
        Ok(())
    })?;

    let chunk_rows = |flat: Vec<f64>| -> Vec<Vec<f64>> {
        flat.chunks(width).map(|c| c.to_vec()).collect()
    };
    Ok(MomentTable {
        times: times.to_vec(),
        exponents: monomials.iter().map(|m| m.x_exps().to_vec()).collect(),
        mean: chunk_rows(flat_mean),
        std_err: chunk_rows(flat_se),
        n_samples: run.n_samples,
    })
}

/// Empirical histogram of the initial distribution over the partition cells
/// (projection onto the partition axes). Masses sum to 1 when the partition
/// covers the sampled support.
pub fn cell_masses(dist: &InitialDistribution, partition: &Partition, run: &SampleRun) -> Vec<f64> {
    let (mean, _) = accumulate(run, partition.n_cells(), |_, rng, buf| {
        let mut x0 = vec![0.0; dist.n_x()];
        dist.sample_into(rng, &mut x0);
        buf.fill(0.0);
        let proj: Vec<f64> = partition.axes.iter().map(|&a| x0[a]).collect();
        if let Some(j) = partition.cell_containing(&proj) {
            buf[j] = 1.0;
        }
        Ok(())
    })
    .expect("histogram sweep cannot fail");
    mean
}

/// Standard error of an empirical probability `p` from `n` draws.
pub fn binomial_std_err(p: f64, n: usize) -> f64 {
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Closed forms and data fabrication

/// First and second raw moments of x1 for Example 1 (x1' = -x1 x2 with
/// x1(0) = 1/2 and x2 ~ U[0,1]): nu1 = (1 - e^-t)/(2t), nu2 = (1 - e^-2t)/(8t),
/// with their limits at t = 0.
pub fn analytic_example1(t: f64) -> (f64, f64) {
    let x0 = 0.5;
    if t == 0.0 {
        return (x0, x0 * x0);
    }
    let nu1 = x0 * (-(-t).exp_m1()) / t;
    let nu2 = x0 * x0 * (-(-2.0 * t).exp_m1()) / (2.0 * t);
    (nu1, nu2)
}

/// Wraps each table entry in the interval `[m(1-slack), m(1+slack)]`, ends
/// ordered so negative moments still give `lower <= upper`. Table row k maps
/// to problem time index k, so the output drops straight into the `moments`
/// block of a problem file.
pub fn fabricate_moment_data(table: &MomentTable, slack: f64) -> Vec<MomentBound> {
    assert!(slack >= 0.0);
    let mut out = Vec::new();
    for (k, row) in table.mean.iter().enumerate() {
        for (e, &m) in row.iter().enumerate() {
            let (mut lo, mut hi) = (m * (1.0 - slack), m * (1.0 + slack));
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            out.push(MomentBound {
                time_index: k,
                exponents: table.exponents[e].clone(),
                lower: lo,
                upper: hi,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Empirical check of assembled equality rows

/// Monte Carlo statistics for one equality row of an assembly.
#[derive(Debug, Clone)]
pub struct RowStat {
    pub label: String,
    pub mean: f64,
    pub std_err: f64,
}

/// Evaluates every equality row of `assembly` on reference trajectories:
/// endpoint columns become `x(t_k)^b`, occupation columns the trajectory
/// integrals `int t^a x^b dt`, and cell columns `x(0)^b` gated on the initial
/// point's cell. Rows that hold measure-wise -- Liouville, pins,
/// normalization -- come out as zero within a few standard errors.
pub fn empirical_row_stats(
    assembly: &Assembly,
    problem: &EstimationProblem,
    dist: &InitialDistribution,
    run: &SampleRun,
) -> Result<Vec<RowStat>, OracleError> {
    let field = problem.system.field();
    let times = &problem.times;
    let rows = &assembly.program.eq_rows;
    let n_vars = assembly.program.n_vars;
    let occ_basis: Vec<Monomial> = assembly
        .measures
        .iter()
        .find(|m| matches!(m.kind, MeasureKind::Occupation(_)))
        .map(|m| m.index.basis().to_vec())
        .unwrap_or_default();

    let (mean, std_err) = accumulate(run, rows.len(), |s, rng, buf| {
        let mut x0 = vec![0.0; dist.n_x()];
        dist.sample_into(rng, &mut x0);
        let (points, occ) =
            integrate_with_occupation(field, &x0, times, &occ_basis, run.step)
                .map_err(|e| e.for_sample(s))?;
        let mut y = vec![0.0; n_vars];
        for mv in &assembly.measures {
            let cols = &mut y[mv.offset..mv.offset + mv.len()];
            match mv.kind {
                MeasureKind::Endpoint(k) => {
                    eval_monomials(mv.index.basis(), times[k], &points[k], cols);
                }
                MeasureKind::Occupation(k) => cols.copy_from_slice(&occ[k]),
                MeasureKind::Cell(j) => {
                    let p = problem.partition.as_ref().expect("cells imply a partition");
                    let proj: Vec<f64> = p.axes.iter().map(|&a| x0[a]).collect();
                    if p.cell_containing(&proj) == Some(j) {
                        eval_monomials(mv.index.basis(), times[0], &x0, cols);
                    } else {
                        cols.fill(0.0);
                    }
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            buf[i] = row.eval(&y) - row.rhs;
        }
        Ok(())
    })?;

    Ok(rows
        .iter()
        .zip(mean.iter().zip(&std_err))
        .map(|(row, (&m, &se))| RowStat { label: row.label.clone(), mean: m, std_err: se })
        .collect())
}
