//! Sparse multivariate polynomial algebra over the variables `(t, x_1, .., x_n)`.
//!
//! Everything downstream (Liouville rows, moment matrices, localizing
//! matrices) is indexed by monomials `t^a * x^b` in graded-lexicographic
//! order with `t` ordered before the states. The ordering doubles as the
//! canonical basis enumeration, so moment vectors and matrix rows have a
//! reproducible layout across runs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

mod parse;

pub use parse::{parse_polynomial, ParseError};

/// Errors from polynomial operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    #[error("state dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector field has {found} components but the system has {expected} states")]
    FieldLengthMismatch { expected: usize, found: usize },
}

/// A power product `t^a * x_1^{b_1} * ... * x_n^{b_n}` with cached total degree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    t_exp: u32,
    x_exps: Vec<u32>,
    degree: u32,
}

impl Monomial {
    pub fn new(t_exp: u32, x_exps: Vec<u32>) -> Self {
        let degree = t_exp + x_exps.iter().sum::<u32>();
        Self { t_exp, x_exps, degree }
    }

    /// The constant monomial `1` over `n_x` states.
    pub fn one(n_x: usize) -> Self {
        Self::new(0, vec![0; n_x])
    }

    /// The monomial `t`.
    pub fn time(n_x: usize) -> Self {
        Self::new(1, vec![0; n_x])
    }

    /// The monomial `x_i` (zero-based state index).
    pub fn state(i: usize, n_x: usize) -> Self {
        let mut exps = vec![0; n_x];
        exps[i] = 1;
        Self::new(0, exps)
    }

    pub fn t_exp(&self) -> u32 {
        self.t_exp
    }

    pub fn x_exps(&self) -> &[u32] {
        &self.x_exps
    }

    pub fn n_x(&self) -> usize {
        self.x_exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Total degree in the states only.
    pub fn x_degree(&self) -> u32 {
        self.degree - self.t_exp
    }

    pub fn is_constant(&self) -> bool {
        self.degree == 0
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n_x(), other.n_x());
        let x_exps = self
            .x_exps
            .iter()
            .zip(&other.x_exps)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.t_exp + other.t_exp, x_exps)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_x());
        let mut v = powi(t, self.t_exp);
        for (xi, &e) in x.iter().zip(&self.x_exps) {
            if e > 0 {
                v *= powi(*xi, e);
            }
        }
        v
    }

    /// Drops the time exponent, keeping the state part `x^b`.
    pub fn state_part(&self) -> Monomial {
        Monomial::new(0, self.x_exps.clone())
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, names: Option<&[String]>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        let mut put = |f: &mut fmt::Formatter<'_>, name: &str, e: u32| -> fmt::Result {
            if e == 0 {
                return Ok(());
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{name}")
            } else {
                write!(f, "{name}^{e}")
            }
        };
        put(f, "t", self.t_exp)?;
        for (i, &e) in self.x_exps.iter().enumerate() {
            match names {
                Some(names) => put(f, &names[i], e)?,
                None => put(f, &format!("x{}", i + 1), e)?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, None)
    }
}

/// Graded-lexicographic basis order: lower total degree first, ties broken
/// lexicographically on the exponent tuple `(t, x_1, .., x_n)` with the
/// larger leading exponent first. Index 0 is the constant monomial, so e.g.
/// for two states the order starts `1, x1, x2, x1^2, x1*x2, x2^2, ...`.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.t_exp.cmp(&self.t_exp))
            .then_with(|| other.x_exps.cmp(&self.x_exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn powi(base: f64, exp: u32) -> f64 {
    match exp {
        0 => 1.0,
        1 => base,
        _ => base.powi(exp as i32),
    }
}

/// Binomial coefficient as f64-safe usize arithmetic.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All monomials over `n_vars` states (plus `t` when `include_t`) of total
/// degree at most `max_deg`, in canonical graded-lex order. The count is
/// `C(n_vars [+1] + max_deg, max_deg)`.
pub fn monomial_basis(n_vars: usize, max_deg: u32, include_t: bool) -> Vec<Monomial> {
    let width = n_vars + usize::from(include_t);
    let mut out = Vec::with_capacity(binomial(width + max_deg as usize, max_deg as usize));
    let mut exps = vec![0u32; width];
    for deg in 0..=max_deg {
        fill_degree(&mut out, &mut exps, 0, deg, include_t);
    }
    out
}

fn fill_degree(out: &mut Vec<Monomial>, exps: &mut Vec<u32>, pos: usize, remaining: u32, include_t: bool) {
    if pos == exps.len() {
        if remaining == 0 {
            let (t_exp, x_exps) = if include_t {
                (exps[0], exps[1..].to_vec())
            } else {
                (0, exps.clone())
            };
            out.push(Monomial::new(t_exp, x_exps));
        }
        return;
    }
    if pos + 1 == exps.len() {
        exps[pos] = remaining;
        fill_degree(out, exps, pos + 1, 0, include_t);
        exps[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        fill_degree(out, exps, pos + 1, remaining - e, include_t);
    }
    exps[pos] = 0;
}

/// Bijective map between the monomials of degree <= `cap` and `0..len`,
/// following the canonical graded-lex order.
#[derive(Debug, Clone)]
pub struct MonomialIndex {
    basis: Vec<Monomial>,
    positions: HashMap<Monomial, usize>,
    n_x: usize,
    include_t: bool,
    cap: u32,
}

impl MonomialIndex {
    pub fn new(n_x: usize, cap: u32, include_t: bool) -> Self {
        let basis = monomial_basis(n_x, cap, include_t);
        let positions = basis
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        Self { basis, positions, n_x, include_t, cap }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn include_t(&self) -> bool {
        self.include_t
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.positions.get(m).copied()
    }

    pub fn monomial(&self, idx: usize) -> &Monomial {
        &self.basis[idx]
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }
}

/// Sparse multivariate polynomial in `(t, x_1, .., x_n)` with f64
/// coefficients. Canonical form: no stored coefficient is exactly zero and
/// all monomials share the declared state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_x: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(n_x: usize) -> Self {
        Self { n_x, terms: BTreeMap::new() }
    }

    pub fn constant(c: f64, n_x: usize) -> Self {
        let mut p = Self::zero(n_x);
        p.add_term(Monomial::one(n_x), c);
        p
    }

    pub fn from_monomial(m: Monomial, coeff: f64) -> Self {
        let mut p = Self::zero(m.n_x());
        p.add_term(m, coeff);
        p
    }

    /// The state variable `x_i` as a polynomial.
    pub fn state(i: usize, n_x: usize) -> Self {
        Self::from_monomial(Monomial::state(i, n_x), 1.0)
    }

    /// The time variable `t` as a polynomial.
    pub fn time(n_x: usize) -> Self {
        Self::from_monomial(Monomial::time(n_x), 1.0)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest state-only degree over the terms.
    pub fn x_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::x_degree).max().unwrap_or(0)
    }

    /// True if no term involves `t`.
    pub fn is_time_free(&self) -> bool {
        self.terms.keys().all(|m| m.t_exp() == 0)
    }

    /// Terms in canonical graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.n_x(), self.n_x);
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let v = e.get() + c;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    fn check_dims(&self, other: &Self) -> Result<(), PolyError> {
        if self.n_x != other.n_x {
            return Err(PolyError::DimensionMismatch { expected: self.n_x, found: other.n_x });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.n_x);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.n_x);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    /// Multiplies by a single monomial.
    pub fn mul_monomial(&self, m: &Monomial) -> Self {
        let mut out = Self::zero(self.n_x);
        for (mm, c) in self.terms() {
            out.add_term(mm.mul(m), c);
        }
        out
    }

    pub fn partial_t(&self) -> Self {
        let mut out = Self::zero(self.n_x);
        for (m, c) in self.terms() {
            let a = m.t_exp();
            if a > 0 {
                out.add_term(Monomial::new(a - 1, m.x_exps().to_vec()), c * f64::from(a));
            }
        }
        out
    }

    pub fn partial_x(&self, i: usize) -> Self {
        let mut out = Self::zero(self.n_x);
        for (m, c) in self.terms() {
            let b = m.x_exps()[i];
            if b > 0 {
                let mut exps = m.x_exps().to_vec();
                exps[i] = b - 1;
                out.add_term(Monomial::new(m.t_exp(), exps), c * f64::from(b));
            }
        }
        out
    }

    /// Substitutes a fixed time value, leaving a polynomial in the states.
    pub fn substitute_t(&self, t: f64) -> Self {
        let mut out = Self::zero(self.n_x);
        for (m, c) in self.terms() {
            out.add_term(Monomial::new(0, m.x_exps().to_vec()), c * powi(t, m.t_exp()));
        }
        out
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n_x {
            return Err(PolyError::DimensionMismatch { expected: self.n_x, found: x.len() });
        }
        Ok(self.terms().map(|(m, c)| c * m.eval(t, x)).sum())
    }

    /// The Liouville generator `L_f v = dv/dt + grad_x v . f` along the
    /// vector field `f` (one polynomial per state).
    pub fn lie_derivative(&self, f: &[Polynomial]) -> Result<Self, PolyError> {
        if f.len() != self.n_x {
            return Err(PolyError::FieldLengthMismatch { expected: self.n_x, found: f.len() });
        }
        let mut out = self.partial_t();
        for (i, fi) in f.iter().enumerate() {
            self.check_dims(fi)?;
            out = out.add(&self.partial_x(i).mul(fi)?)?;
        }
        Ok(out)
    }

    /// Canonical printer; output re-parses to an identical polynomial.
    pub fn to_string_with(&self, names: Option<&[String]>) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, (m, c)) in self.terms().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else if c < 0.0 {
                s.push_str(" - ");
            } else {
                s.push_str(" + ");
            }
            let mono = match names {
                Some(names) => format_mono(m, Some(names)),
                None => format_mono(m, None),
            };
            if m.is_constant() {
                s.push_str(&format!("{mag:?}"));
            } else if mag == 1.0 {
                s.push_str(&mono);
            } else {
                s.push_str(&format!("{mag:?}*{mono}"));
            }
        }
        s
    }
}

fn format_mono(m: &Monomial, names: Option<&[String]>) -> String {
    struct W<'a>(&'a Monomial, Option<&'a [String]>);
    impl fmt::Display for W<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            self.0.fmt_with(f, self.1)
        }
    }
    W(m, names).to_string()
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_string_with(None))
    }
}

#[cfg(test)]
mod tests;
