//! Oracles and fixtures shared by the integration tests.
//!
//! Everything here is computed without going through the code under test,
//! except for building inputs (parsing a polynomial, assembling a system).
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use dsos_cbf::lpsolve::{LinearRow, LpProblem};
use dsos_cbf::polyring::{PolyMatrix, Polynomial};
use dsos_cbf::specio::parse_polynomial;
use dsos_cbf::{CandidateCbf, ControlAffineSystem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(vars: &[&str]) -> Vec<String> {
    vars.iter().map(|s| s.to_string()).collect()
}

pub fn poly(text: &str, vars: &[&str]) -> Polynomial {
    parse_polynomial(text, &names(vars)).unwrap_or_else(|e| panic!("{text}: {e}"))
}

/// `x' = f(x) + g(x) u` from strings; `g` is row-major with `m` columns.
pub fn system(vars: &[&str], f: &[&str], g: &[&str], m: usize) -> ControlAffineSystem {
    let n = vars.len();
    let f = PolyMatrix::column(f.iter().map(|s| poly(s, vars)).collect(), n).unwrap();
    let g = PolyMatrix::new(n, m, n, g.iter().map(|s| poly(s, vars)).collect()).unwrap();
    ControlAffineSystem::new(f, g).unwrap()
}

/// `x' = u` on the line.
pub fn integrator() -> ControlAffineSystem {
    system(&["x"], &["0"], &["1"], 1)
}

pub fn candidate(sys: &ControlAffineSystem, b: &str, vars: &[&str]) -> CandidateCbf {
    CandidateCbf::new(sys, poly(b, vars)).unwrap()
}

/// Dense matrix and right-hand side.
type Dense = (Vec<Vec<f64>>, Vec<f64>);

/// Dense copy of the rows of `lp`: `((A_eq, b_eq), (A_ub, b_ub))`.
pub fn dense_rows(lp: &LpProblem) -> (Dense, Dense) {
    let dense = |rows: &[LinearRow]| {
        let a = rows
            .iter()
            .map(|r| {
                let mut v = vec![0.0; lp.nvars];
                for &(k, c) in &r.coeffs {
                    v[k] += c;
                }
                v
            })
            .collect::<Vec<_>>();
        (a, rows.iter().map(|r| r.rhs).collect::<Vec<_>>())
    };
    (dense(&lp.eq_rows), dense(&lp.ub_rows))
}

/// Brute-force feasibility by enumerating active sets.
///
/// A nonempty polyhedron has a minimal face, and a minimal face is the
/// affine set cut out by the equalities plus the inequalities active on it.
/// Every point of that affine set is feasible, so trying the minimum-norm
/// solution for every subset of inequalities decides feasibility.
pub fn oracle_feasible(lp: &LpProblem, tol: f64) -> bool {
    let ((ae, be), (au, bu)) = dense_rows(lp);
    let n = lp.nvars;
    assert!(au.len() <= 16, "oracle is exponential in the inequality count");
    for mask in 0u32..(1 << au.len()) {
        let mut rows: Vec<&Vec<f64>> = ae.iter().collect();
        let mut rhs: Vec<f64> = be.clone();
        for (j, (a, b)) in au.iter().zip(&bu).enumerate() {
            if mask & (1 << j) != 0 {
                rows.push(a);
                rhs.push(*b);
            }
        }
        let z = if rows.is_empty() {
            vec![0.0; n]
        } else {
            let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
            let b = DVector::from_vec(rhs.clone());
            match a.svd(true, true).solve(&b, 1e-12) {
                Ok(z) => z.iter().copied().collect(),
                Err(_) => continue,
            }
        };
        let dot = |a: &[f64]| a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
        let eq_ok = rows.iter().zip(&rhs).all(|(a, b)| (dot(a) - b).abs() <= tol);
        let ub_ok = au.iter().zip(&bu).all(|(a, b)| dot(a) - b <= tol);
        if eq_ok && ub_ok {
            return true;
        }
    }
    false
}

/// Combines rows with the given multipliers: `(coefficients, rhs)`.
pub fn combine(lp: &LpProblem, eq: &[f64], ub: &[f64]) -> (Vec<f64>, f64) {
    let ((ae, be), (au, bu)) = dense_rows(lp);
    let mut coeffs = vec![0.0; lp.nvars];
    let mut rhs = 0.0;
    for ((a, b), mu) in ae.iter().zip(&be).zip(eq).chain(au.iter().zip(&bu).zip(ub)) {
        for (c, x) in coeffs.iter_mut().zip(a) {
            *c += mu * x;
        }
        rhs += mu * b;
    }
    (coeffs, rhs)
}

/// Small integer LP: up to 6 variables and 10 rows.
pub fn random_lp(rng: &mut impl Rng) -> LpProblem {
    let nvars = rng.gen_range(1..=6);
    let nrows = rng.gen_range(1..=10);
    let mut lp = LpProblem::new(nvars);
    for _ in 0..nrows {
        let mut coeffs = Vec::new();
        for k in 0..nvars {
            if rng.gen_bool(0.7) {
                coeffs.push((k, rng.gen_range(-3i32..=3) as f64));
            }
        }
        let row = LinearRow::new(coeffs, rng.gen_range(-4i32..=4) as f64);
        if rng.gen_bool(0.3) {
            lp.add_eq(row);
        } else {
            lp.add_ub(row);
        }
    }
    lp
}

/// Symmetric matrix with off-diagonal entries in `[-1, 1]`. The diagonal is
/// the absolute off-diagonal row sum plus a random shift in `[-1, 1]`, so
/// about half the matrices are diagonally dominant.
pub fn random_symmetric(rng: &mut impl Rng, k: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = rng.gen_range(-1.0..=1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
        m[i][i] = off + rng.gen_range(-1.0..=1.0);
    }
    m
}

/// Diagonally dominant matrix, including exact-boundary rows when `tight`.
pub fn random_dd(rng: &mut impl Rng, k: usize, tight: bool) -> Vec<Vec<f64>> {
    let mut m = random_symmetric(rng, k);
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
        m[i][i] = if tight { off } else { off + rng.gen_range(0.0..=1.0) };
    }
    m
}

/// Diagonal dominance straight from the definition.
pub fn oracle_dd(m: &[Vec<f64>], tol: f64) -> bool {
    (0..m.len()).all(|i| {
        let off: f64 = (0..m.len()).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
        m[i][i] - off >= -tol
    })
}

/// Coefficients of `m(x)^T M m(x)`, keyed by exponent vector.
pub fn quadratic_form(m: &[Vec<f64>], basis: &[Vec<u32>]) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate() {
            let e: Vec<u32> = bi.iter().zip(bj).map(|(a, b)| a + b).collect();
            *out.entry(e).or_insert(0.0) += m[i][j];
        }
    }
    out
}

/// Coefficients of a polynomial keyed by exponent vector.
pub fn coefficient_map(p: &Polynomial) -> BTreeMap<Vec<u32>, f64> {
    p.terms()
        .map(|(m, c)| (m.exponents().iter().map(|&e| e as u32).collect(), c))
        .collect()
}

/// Largest coefficient-wise difference of two sparse coefficient maps.
pub fn max_difference(a: &BTreeMap<Vec<u32>, f64>, b: &BTreeMap<Vec<u32>, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

/// Exponent vectors of every monomial of degree at most `d` in `n`
/// variables, in no particular order.
pub fn all_exponents(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..=d {
        for mut rest in all_exponents(n - 1, d - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}
