//! Sparse multivariate polynomials with real coefficients.
//!
//! Monomials are kept in graded-lexicographic order: total degree ascending,
//! and within one degree the exponent vectors are ordered so that `x1` comes
//! before `x2`, `x1^2` before `x1*x2`, and so on. Every map keyed by
//! [`Monomial`] therefore iterates in the same deterministic order, which is
//! what makes the coefficient-matching rows of the linear programs
//! reproducible.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Coefficients with magnitude below this are dropped after arithmetic.
pub const PRUNE_TOL: f64 = 1e-14;

/// Largest exponent a single variable may carry.
pub const MAX_EXPONENT: u32 = u16::MAX as u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("ring dimension mismatch: {left} vs {right} variables")]
    NvarsMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for a ring with {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("exponent {0} exceeds the per-variable cap of {MAX_EXPONENT}")]
    ExponentOverflow(u64),
}

/// A power product `x1^e1 * ... * xn^en`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Box<[u16]>,
    degree: u32,
}

impl Monomial {
    /// The constant monomial `1` in a ring with `nvars` variables.
    pub fn one(nvars: usize) -> Self {
        Monomial {
            exps: vec![0; nvars].into_boxed_slice(),
            degree: 0,
        }
    }

    /// The monomial `x_index` (zero-based index).
    pub fn var(nvars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= nvars {
            return Err(PolyError::VariableOutOfRange { index, nvars });
        }
        let mut exps = vec![0u16; nvars];
        exps[index] = 1;
        Ok(Monomial {
            exps: exps.into_boxed_slice(),
            degree: 1,
        })
    }

    pub fn new(exponents: &[u32]) -> Result<Self, PolyError> {
        let mut exps = Vec::with_capacity(exponents.len());
        for &e in exponents {
            if e > MAX_EXPONENT {
                return Err(PolyError::ExponentOverflow(u64::from(e)));
            }
            exps.push(e as u16);
        }
        Ok(Self::from_u16(exps))
    }

    fn from_u16(exps: Vec<u16>) -> Self {
        let degree = exps.iter().map(|&e| u32::from(e)).sum();
        Monomial {
            exps: exps.into_boxed_slice(),
            degree,
        }
    }

    pub fn exponents(&self) -> &[u16] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn is_one(&self) -> bool {
        self.degree == 0
    }

    pub fn mul(&self, other: &Monomial) -> Result<Monomial, PolyError> {
        if self.nvars() != other.nvars() {
            return Err(PolyError::NvarsMismatch {
                left: self.nvars(),
                right: other.nvars(),
            });
        }
        let mut exps = Vec::with_capacity(self.exps.len());
        for (&a, &b) in self.exps.iter().zip(other.exps.iter()) {
            let e = u32::from(a) + u32::from(b);
            if e > MAX_EXPONENT {
                return Err(PolyError::ExponentOverflow(u64::from(e)));
            }
            exps.push(e as u16);
        }
        Ok(Monomial {
            exps: exps.into_boxed_slice(),
            degree: self.degree + other.degree,
        })
    }

    /// Value of the power product at `point`; the caller checks the length.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(point)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &x)| x.powi(i32::from(e)))
            .product()
    }

    /// Indices of the variables with a positive exponent.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.exps
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, _)| i)
    }

    /// Renders the monomial with the given variable names, e.g. `x^2*y`.
    pub fn display_with(&self, names: &[String]) -> String {
        let mut parts = Vec::new();
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let name = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
            if e == 1 {
                parts.push(name);
            } else {
                parts.push(format!("{name}^{e}"));
            }
        }
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(&[]))
    }
}

/// All monomials of total degree at most `maxdeg`, in ascending graded-lex order.
///
/// The result has `C(nvars + maxdeg, nvars)` entries and starts with `1`.
pub fn monomial_basis(nvars: usize, maxdeg: u32) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(binomial(nvars + maxdeg as usize, nvars));
    let mut scratch = vec![0u16; nvars];
    for d in 0..=maxdeg {
        push_compositions(0, d, &mut scratch, &mut out);
    }
    out
}

fn push_compositions(pos: usize, remaining: u32, scratch: &mut [u16], out: &mut Vec<Monomial>) {
    let n = scratch.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Monomial::one(0));
        }
        return;
    }
    if pos == n - 1 {
        scratch[pos] = remaining as u16;
        out.push(Monomial::from_u16(scratch.to_vec()));
        scratch[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[pos] = e as u16;
        push_compositions(pos + 1, remaining - e, scratch, out);
    }
    scratch[pos] = 0;
}

/// Binomial coefficient `C(n, k)`, saturating on overflow.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).unwrap_or(usize::MAX)
}

/// A polynomial in `nvars` indeterminates with `f64` coefficients.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(Monomial::one(nvars), c)
    }

    pub fn var(nvars: usize, index: usize) -> Result<Self, PolyError> {
        Ok(Self::monomial(Monomial::var(nvars, index)?, 1.0))
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut p = Polynomial::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, merging repeats.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(PolyError::NvarsMismatch {
                    left: nvars,
                    right: m.nvars(),
                });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                if c.abs() >= PRUNE_TOL {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.abs() < PRUNE_TOL {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    fn check_same_ring(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::NvarsMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_ring(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_ring(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_ring(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb)?, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    /// `self^k`, with `p^0 = 1` for every `p` including the zero polynomial.
    pub fn pow(&self, k: u32) -> Result<Polynomial, PolyError> {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.try_mul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(acc)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                what: "evaluation point length",
                expected: self.nvars,
                found: point.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|(m, &c)| c * m.eval_unchecked(point))
            .sum())
    }

    /// Formal partial derivative with respect to `x_index` (zero-based).
    pub fn partial_derivative(&self, index: usize) -> Result<Polynomial, PolyError> {
        if index >= self.nvars {
            return Err(PolyError::VariableOutOfRange {
                index,
                nvars: self.nvars,
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            let e = m.exps[index];
            if e == 0 {
                continue;
            }
            let mut exps = m.exps.to_vec();
            exps[index] = e - 1;
            out.add_term(Monomial::from_u16(exps), c * f64::from(e));
        }
        Ok(out)
    }

    /// Sorted indices of the variables that occur in some term.
    pub fn support_vars(&self) -> Vec<usize> {
        let mut used = vec![false; self.nvars];
        for m in self.terms.keys() {
            for i in m.support() {
                used[i] = true;
            }
        }
        used.iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(i, _)| i)
            .collect()
    }

    /// Re-expresses the polynomial in the ring spanned by `vars` (sorted,
    /// zero-based indices into this ring). Fails if a term uses any other
    /// variable.
    pub fn restrict_to(&self, vars: &[usize]) -> Result<Polynomial, PolyError> {
        let mut out = Polynomial::zero(vars.len());
        for (m, &c) in &self.terms {
            let mut exps = vec![0u16; vars.len()];
            let mut matched = 0u32;
            for (slot, &v) in vars.iter().enumerate() {
                let e = *m.exps.get(v).ok_or(PolyError::VariableOutOfRange {
                    index: v,
                    nvars: self.nvars,
                })?;
                exps[slot] = e;
                matched += u32::from(e);
            }
            if matched != m.degree {
                let index = m.support().find(|i| !vars.contains(i)).unwrap_or(0);
                return Err(PolyError::VariableOutOfRange {
                    index,
                    nvars: vars.len(),
                });
            }
            out.add_term(Monomial::from_u16(exps), c);
        }
        Ok(out)
    }

    /// Inverse of [`Polynomial::restrict_to`]: maps this ring's variable `k`
    /// onto variable `vars[k]` of a ring with `nvars` variables.
    pub fn embed(&self, nvars: usize, vars: &[usize]) -> Result<Polynomial, PolyError> {
        if vars.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                what: "embedding map length",
                expected: self.nvars,
                found: vars.len(),
            });
        }
        let mut out = Polynomial::zero(nvars);
        for (m, &c) in &self.terms {
            out.add_term(embed_monomial(m, nvars, vars)?, c);
        }
        Ok(out)
    }

    /// Human-readable form using `names` for the variables; `parse_polynomial`
    /// reads this format back.
    pub fn display_with(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (idx, (m, &c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if idx == 0 {
                if sign == "-" {
                    out.push('-');
                }
            } else {
                out.push(' ');
                out.push_str(sign);
                out.push(' ');
            }
            if m.is_one() {
                out.push_str(&format_coefficient(mag));
            } else if mag == 1.0 {
                out.push_str(&m.display_with(names));
            } else {
                out.push_str(&format_coefficient(mag));
                out.push('*');
                out.push_str(&m.display_with(names));
            }
        }
        out
    }
}

/// Maps a monomial of a sub-ring into a larger ring.
pub fn embed_monomial(m: &Monomial, nvars: usize, vars: &[usize]) -> Result<Monomial, PolyError> {
    let mut exps = vec![0u16; nvars];
    for (k, &e) in m.exps.iter().enumerate() {
        let v = *vars.get(k).ok_or(PolyError::DimensionMismatch {
            what: "embedding map length",
            expected: m.nvars(),
            found: vars.len(),
        })?;
        if v >= nvars {
            return Err(PolyError::VariableOutOfRange { index: v, nvars });
        }
        exps[v] = e;
    }
    Ok(Monomial::from_u16(exps))
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn format_coefficient(c: f64) -> String {
    let a = c.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{c:e}")
    } else {
        format!("{c}")
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(&[]))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(&[]))
    }
}

// Operator impls treat a ring mismatch as a programming error.
impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial addition across rings")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial subtraction across rings")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial multiplication across rings")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Dense `rows x cols` grid of polynomials sharing one ring.
#[derive(Clone, PartialEq, Debug)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    /// `entries` are row-major.
    pub fn new(rows: usize, cols: usize, nvars: usize, entries: Vec<Polynomial>) -> Result<Self, PolyError> {
        if entries.len() != rows * cols {
            return Err(PolyError::DimensionMismatch {
                what: "matrix entry count",
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if let Some(p) = entries.iter().find(|p| p.nvars() != nvars) {
            return Err(PolyError::NvarsMismatch {
                left: nvars,
                right: p.nvars(),
            });
        }
        Ok(PolyMatrix {
            rows,
            cols,
            nvars,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    pub fn column(entries: Vec<Polynomial>, nvars: usize) -> Result<Self, PolyError> {
        let rows = entries.len();
        PolyMatrix::new(rows, 1, nvars, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) -> Result<(), PolyError> {
        if p.nvars() != self.nvars {
            return Err(PolyError::NvarsMismatch {
                left: self.nvars,
                right: p.nvars(),
            });
        }
        self.entries[i * self.cols + j] = p;
        Ok(())
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[Polynomial] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

/// `L_f b = sum_i (db/dx_i) f_i` for a drift column `f` (n x 1).
pub fn lie_derivative_drift(b: &Polynomial, f: &PolyMatrix) -> Result<Polynomial, PolyError> {
    check_field(b, f)?;
    if f.cols() != 1 {
        return Err(PolyError::DimensionMismatch {
            what: "drift column count",
            expected: 1,
            found: f.cols(),
        });
    }
    let mut acc = Polynomial::zero(b.nvars());
    for i in 0..b.nvars() {
        let fi = f.get(i, 0);
        if fi.is_zero() {
            continue;
        }
        let db = b.partial_derivative(i)?;
        acc = acc.try_add(&db.try_mul(fi)?)?;
    }
    Ok(acc)
}

/// `L_g b` as a `1 x m` row: entry `j` is `sum_i (db/dx_i) g_ij`.
pub fn lie_derivative_input(b: &Polynomial, g: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
    check_field(b, g)?;
    let grads = (0..b.nvars())
        .map(|i| b.partial_derivative(i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(g.cols());
    for j in 0..g.cols() {
        let mut acc = Polynomial::zero(b.nvars());
        for (i, db) in grads.iter().enumerate() {
            let gij = g.get(i, j);
            if gij.is_zero() || db.is_zero() {
                continue;
            }
            acc = acc.try_add(&db.try_mul(gij)?)?;
        }
        out.push(acc);
    }
    PolyMatrix::new(1, g.cols(), b.nvars(), out)
}

fn check_field(b: &Polynomial, field: &PolyMatrix) -> Result<(), PolyError> {
    if field.nvars() != b.nvars() {
        return Err(PolyError::NvarsMismatch {
            left: b.nvars(),
            right: field.nvars(),
        });
    }
    if field.rows() != b.nvars() {
        return Err(PolyError::DimensionMismatch {
            what: "vector field row count",
            expected: b.nvars(),
            found: field.rows(),
        });
    }
    Ok(())
}
