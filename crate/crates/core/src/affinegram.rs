//! Polynomials whose coefficients are affine in an LP decision vector.
//!
//! This is where polynomial identities become linear constraints: free
//! multipliers `c^T m(x)`, DSOS multipliers `m(x)^T Q m(x)` with their
//! diagonal-dominance rows, and coefficient matching (`e(x) == 0` as one
//! equality per monomial of `e`).

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::polyring::{monomial_basis, Monomial, PolyError, Polynomial, PRUNE_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GramError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("decision space exhausted: {requested} more variables after {allocated}")]
    AllocatorExhausted { allocated: usize, requested: usize },
    #[error("matrix is not square: row {row} has {found} entries, expected {expected}")]
    NotSquare {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not diagonally dominant at row {row} (deficit {deficit:e})")]
    NotDiagonallyDominant { row: usize, deficit: f64 },
    #[error("basis has {basis} monomials but the matrix is {dim}x{dim}")]
    BasisMismatch { basis: usize, dim: usize },
}

/// A named contiguous range of decision variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Sequential allocator for decision-variable indices.
///
/// Blocks are handed out in call order, so the layout of an assembled
/// program depends only on the order of the `fresh_*` calls.
#[derive(Debug, Clone)]
pub struct DecisionAllocator {
    next: usize,
    limit: usize,
    blocks: Vec<VarBlock>,
}

impl Default for DecisionAllocator {
    fn default() -> Self {
        Self::new()
    }
}

impl DecisionAllocator {
    pub fn new() -> Self {
        Self::with_limit(usize::MAX)
    }

    pub fn with_limit(limit: usize) -> Self {
        DecisionAllocator {
            next: 0,
            limit,
            blocks: Vec::new(),
        }
    }

    pub fn allocate(&mut self, name: impl Into<String>, len: usize) -> Result<Range<usize>, GramError> {
        let end = self
            .next
            .checked_add(len)
            .filter(|&e| e <= self.limit)
            .ok_or(GramError::AllocatorExhausted {
                allocated: self.next,
                requested: len,
            })?;
        let start = self.next;
        self.next = end;
        self.blocks.push(VarBlock {
            name: name.into(),
            start,
            len,
        });
        Ok(start..end)
    }

    /// Number of variables handed out so far.
    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<VarBlock> {
        self.blocks
    }
}

/// `constant + sum_k linear[k] * z_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    linear: BTreeMap<usize, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            linear: BTreeMap::new(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coeff: f64) -> Self {
        let mut e = AffineExpr::default();
        e.add_term(index, coeff);
        e
    }

    pub fn add_term(&mut self, index: usize, coeff: f64) {
        use std::collections::btree_map::Entry;
        match self.linear.entry(index) {
            Entry::Vacant(v) => {
                if coeff.abs() >= PRUNE_TOL {
                    v.insert(coeff);
                }
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + coeff;
                if s.abs() < PRUNE_TOL {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        self.constant += scale * other.constant;
        for (&k, &v) in &other.linear {
            self.add_term(k, scale * v);
        }
    }

    pub fn scaled(&self, s: f64) -> AffineExpr {
        let mut out = AffineExpr::constant(0.0);
        out.add_scaled(self, s);
        out
    }

    pub fn linear(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.linear.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_linear(&self) -> usize {
        self.linear.len()
    }

    pub fn is_constant(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.linear.is_empty() && self.constant.abs() < PRUNE_TOL
    }

    pub fn coefficient(&self, index: usize) -> f64 {
        self.linear.get(&index).copied().unwrap_or(0.0)
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.constant + self.linear.iter().map(|(&k, &v)| v * z[k]).sum::<f64>()
    }
}

/// A polynomial in `x` whose coefficients are [`AffineExpr`]s in `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl AffinePolynomial {
    pub fn zero(nvars: usize) -> Self {
        AffinePolynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// Lifts a polynomial with fixed coefficients.
    pub fn from_fixed(p: &Polynomial) -> Self {
        let mut out = AffinePolynomial::zero(p.nvars());
        for (m, c) in p.terms() {
            out.add_expr(m.clone(), &AffineExpr::constant(c), 1.0);
        }
        out
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> + '_ {
        self.terms.iter()
    }

    pub fn term(&self, m: &Monomial) -> Option<&AffineExpr> {
        self.terms.get(m)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn add_expr(&mut self, m: Monomial, e: &AffineExpr, scale: f64) {
        let slot = self.terms.entry(m.clone()).or_default();
        slot.add_scaled(e, scale);
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    fn check_ring(&self, nvars: usize) -> Result<(), GramError> {
        if self.nvars != nvars {
            return Err(PolyError::NvarsMismatch {
                left: self.nvars,
                right: nvars,
            }
            .into());
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &AffinePolynomial, scale: f64) -> Result<(), GramError> {
        self.check_ring(other.nvars)?;
        for (m, e) in &other.terms {
            self.add_expr(m.clone(), e, scale);
        }
        Ok(())
    }

    /// `self += scale * p` for a fixed polynomial.
    pub fn add_fixed(&mut self, p: &Polynomial, scale: f64) -> Result<(), GramError> {
        self.check_ring(p.nvars())?;
        for (m, c) in p.terms() {
            self.add_expr(m.clone(), &AffineExpr::constant(c), scale);
        }
        Ok(())
    }

    /// Product with a fixed polynomial; the result stays affine in `z`.
    pub fn mul_fixed(&self, p: &Polynomial) -> Result<AffinePolynomial, GramError> {
        self.check_ring(p.nvars())?;
        let mut out = AffinePolynomial::zero(self.nvars);
        for (ma, e) in &self.terms {
            for (mb, c) in p.terms() {
                out.add_expr(ma.mul(mb)?, e, c);
            }
        }
        Ok(out)
    }

    /// Substitutes a decision vector.
    pub fn instantiate(&self, z: &[f64]) -> Polynomial {
        let terms = self.terms.iter().map(|(m, e)| (m.clone(), e.evaluate(z)));
        Polynomial::from_terms(self.nvars, terms).expect("monomials share the ring")
    }

    /// One affine expression per monomial present, in monomial order.
    /// Requiring all of them to vanish is the polynomial identity `self == 0`.
    pub fn coefficient_system(&self) -> Vec<AffineExpr> {
        self.terms.values().cloned().collect()
    }

    /// Like [`AffinePolynomial::coefficient_system`] but keeps the monomial keys.
    pub fn coefficient_rows(&self) -> Vec<(Monomial, AffineExpr)> {
        self.terms.iter().map(|(m, e)| (m.clone(), e.clone())).collect()
    }
}

/// Free polynomial `c^T m(x)` over all monomials of degree `<= degree`,
/// one fresh decision variable per monomial in basis order.
pub fn fresh_free_poly(
    alloc: &mut DecisionAllocator,
    name: &str,
    nvars: usize,
    degree: u32,
) -> Result<AffinePolynomial, GramError> {
    let basis = monomial_basis(nvars, degree);
    let vars = alloc.allocate(name, basis.len())?;
    let mut out = AffinePolynomial::zero(nvars);
    for (m, k) in basis.into_iter().zip(vars) {
        out.add_expr(m, &AffineExpr::var(k), 1.0);
    }
    Ok(out)
}

/// Symmetric matrix of decision variables stored as its upper triangle,
/// row by row: `(0,0), (0,1), ..., (0,k-1), (1,1), ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVarMatrix {
    dim: usize,
    start: usize,
}

impl SymVarMatrix {
    pub fn allocate(alloc: &mut DecisionAllocator, name: &str, dim: usize) -> Result<Self, GramError> {
        let vars = alloc.allocate(name, dim * (dim + 1) / 2)?;
        Ok(SymVarMatrix {
            dim,
            start: vars.start,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vars(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn vars(&self) -> Range<usize> {
        self.start..self.start + self.num_vars()
    }

    /// Decision index of entry `(i, j)`; symmetric in its arguments.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j < self.dim);
        self.start + i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    /// Reads the matrix out of a decision vector.
    pub fn values(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = z[self.index(i, j)];
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }
}

/// DSOS multiplier `m(x)^T Q m(x)` with its bounding matrix `tau`.
#[derive(Debug, Clone)]
pub struct DsosVar {
    pub basis: Vec<Monomial>,
    pub gram: SymVarMatrix,
    pub bound: SymVarMatrix,
    pub expansion: AffinePolynomial,
}

impl DsosVar {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// DSOS multiplier over the full basis of degree `halfdeg`.
pub fn fresh_dsos_poly(
    alloc: &mut DecisionAllocator,
    name: &str,
    nvars: usize,
    halfdeg: u32,
) -> Result<DsosVar, GramError> {
    fresh_dsos_poly_with_basis(alloc, name, nvars, monomial_basis(nvars, halfdeg))
}

/// DSOS multiplier over an explicit monomial basis. Allocates `uTri(Q)`
/// followed by `uTri(tau)`.
pub fn fresh_dsos_poly_with_basis(
    alloc: &mut DecisionAllocator,
    name: &str,
    nvars: usize,
    basis: Vec<Monomial>,
) -> Result<DsosVar, GramError> {
    if let Some(m) = basis.iter().find(|m| m.nvars() != nvars) {
        return Err(PolyError::NvarsMismatch {
            left: nvars,
            right: m.nvars(),
        }
        .into());
    }
    let k = basis.len();
    let gram = SymVarMatrix::allocate(alloc, &format!("{name}.Q"), k)?;
    let bound = SymVarMatrix::allocate(alloc, &format!("{name}.tau"), k)?;
    let mut expansion = AffinePolynomial::zero(nvars);
    for i in 0..k {
        for j in i..k {
            let weight = if i == j { 1.0 } else { 2.0 };
            let m = basis[i].mul(&basis[j])?;
            expansion.add_expr(m, &AffineExpr::var(gram.index(i, j)), weight);
        }
    }
    Ok(DsosVar {
        basis,
        gram,
        bound,
        expansion,
    })
}

/// Linearized diagonal dominance of `Q`, as rows `expr <= 0`:
///
/// * `-Q_ii + sum_{j != i} tau_ij <= 0` for each `i`,
/// * `Q_ij - tau_ij <= 0` and `-Q_ij - tau_ij <= 0` for each pair `i < j`.
///
/// `Q` and `tau` are symmetric with shared variables, so the pair rows are
/// emitted once per unordered pair: `k + k(k-1)` rows in total.
pub fn dd_linear_constraints(v: &DsosVar) -> Vec<AffineExpr> {
    let k = v.dim();
    let mut rows = Vec::with_capacity(k + k * k.saturating_sub(1));
    for i in 0..k {
        let mut row = AffineExpr::term(v.gram.index(i, i), -1.0);
        for j in (0..k).filter(|&j| j != i) {
            row.add_term(v.bound.index(i, j), 1.0);
        }
        rows.push(row);
    }
    for i in 0..k {
        for j in i + 1..k {
            let mut up = AffineExpr::term(v.gram.index(i, j), 1.0);
            up.add_term(v.bound.index(i, j), -1.0);
            rows.push(up);
            let mut down = AffineExpr::term(v.gram.index(i, j), -1.0);
            down.add_term(v.bound.index(i, j), -1.0);
            rows.push(down);
        }
    }
    rows
}

fn check_square(m: &[Vec<f64>]) -> Result<(), GramError> {
    for (row, r) in m.iter().enumerate() {
        if r.len() != m.len() {
            return Err(GramError::NotSquare {
                row,
                expected: m.len(),
                found: r.len(),
            });
        }
    }
    Ok(())
}

/// Per-row slack `M_ii - sum_{j != i} |M_ij|`.
pub fn dominance_margins(m: &[Vec<f64>]) -> Result<Vec<f64>, GramError> {
    check_square(m)?;
    Ok(m.iter()
        .enumerate()
        .map(|(i, row)| {
            let off: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v.abs())
                .sum();
            row[i] - off
        })
        .collect())
}

/// `M_ii + tol >= sum_{j != i} |M_ij|` for every row.
pub fn is_diagonally_dominant(m: &[Vec<f64>], tol: f64) -> Result<bool, GramError> {
    Ok(dominance_margins(m)?.iter().all(|&d| d + tol >= 0.0))
}

/// One weighted square in a DSOS decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DsosSquare {
    /// `m_i^2`
    Single(usize),
    /// `(m_i + m_j)^2`
    Sum(usize, usize),
    /// `(m_i - m_j)^2`
    Difference(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsosTerm {
    pub weight: f64,
    pub square: DsosSquare,
}

/// Writes `m^T M m` as a nonnegative combination of `m_i^2` and
/// `(m_i +- m_j)^2`. Zero-weight terms are omitted.
pub fn dsos_decomposition(m: &[Vec<f64>], tol: f64) -> Result<Vec<DsosTerm>, GramError> {
    let margins = dominance_margins(m)?;
    if let Some((row, &deficit)) = margins.iter().enumerate().find(|(_, &d)| d + tol < 0.0) {
        return Err(GramError::NotDiagonallyDominant { row, deficit });
    }
    let k = m.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let v = m[i][j];
            if v > 0.0 {
                out.push(DsosTerm {
                    weight: v,
                    square: DsosSquare::Sum(i, j),
                });
            } else if v < 0.0 {
                out.push(DsosTerm {
                    weight: -v,
                    square: DsosSquare::Difference(i, j),
                });
            }
        }
    }
    for (i, &d) in margins.iter().enumerate() {
        if d > 0.0 {
            out.push(DsosTerm {
                weight: d,
                square: DsosSquare::Single(i),
            });
        }
    }
    Ok(out)
}

/// Expands a decomposition back into a polynomial over `basis`.
pub fn expand_dsos_terms(terms: &[DsosTerm], basis: &[Monomial], nvars: usize) -> Result<Polynomial, GramError> {
    let mono = |i: usize| Polynomial::monomial(basis[i].clone(), 1.0);
    let mut acc = Polynomial::zero(nvars);
    for t in terms {
        let base = match t.square {
            DsosSquare::Single(i) => mono(i),
            DsosSquare::Sum(i, j) => mono(i).try_add(&mono(j))?,
            DsosSquare::Difference(i, j) => mono(i).try_sub(&mono(j))?,
        };
        acc = acc.try_add(&base.try_mul(&base)?.scale(t.weight))?;
    }
    Ok(acc)
}

/// `m(x)^T M m(x)` for a numeric symmetric `M`.
pub fn gram_expansion(m: &[Vec<f64>], basis: &[Monomial], nvars: usize) -> Result<Polynomial, GramError> {
    check_square(m)?;
    if basis.len() != m.len() {
        return Err(GramError::BasisMismatch {
            basis: basis.len(),
            dim: m.len(),
        });
    }
    let mut terms = Vec::new();
    for i in 0..m.len() {
        for j in i..m.len() {
            let w = if i == j { m[i][i] } else { m[i][j] + m[j][i] };
            terms.push((basis[i].mul(&basis[j])?, w));
        }
    }
    Ok(Polynomial::from_terms(nvars, terms)?)
}
