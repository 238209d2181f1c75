//! Pure feasibility linear programs.
//!
//! Problems have free variables, equality rows `a^T z = beta` and
//! inequality rows `a^T z <= beta`, and a zero objective. They are solved by
//! the phase-1 simplex in [`simplex`] and can be written to and read from
//! the CPLEX LP text format with [`lpformat`].

use std::ops::Range;
use std::time::Duration;

use thiserror::Error;

use crate::affinegram::AffineExpr;

pub mod lpformat;
pub mod simplex;

pub use lpformat::{export_lp_text, parse_lp_text, write_lp_file};
pub use simplex::solve_feasibility;

/// Problems with more decision variables than this are refused by the
/// dense solver.
pub const MAX_DENSE_VARS: usize = 5000;
/// Upper bound on dense tableau entries (rows times columns).
pub const MAX_TABLEAU_ENTRIES: usize = 80_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("{kind} row {row} has a non-finite coefficient or right-hand side")]
    NonFinite { kind: RowKind, row: usize },
    #[error("{kind} row {row} references variable {index} but the problem has {nvars}")]
    IndexOutOfRange {
        kind: RowKind,
        row: usize,
        index: usize,
        nvars: usize,
    },
    #[error("{kind} row {row} is not sorted or repeats a variable")]
    UnsortedRow { kind: RowKind, row: usize },
    #[error("problem with {nvars} variables and {rows} rows exceeds the dense solver capacity ({limit} variables)")]
    Capacity { nvars: usize, rows: usize, limit: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Ub,
}

impl std::fmt::Display for RowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RowKind::Eq => "equality",
            RowKind::Ub => "inequality",
        })
    }
}

/// Sparse row: strictly increasing variable indices, no zero coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    /// Builds a row from arbitrary `(index, coefficient)` pairs, merging
    /// repeats and dropping zeros.
    pub fn new(coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Self {
        let mut v: Vec<(usize, f64)> = coeffs.into_iter().collect();
        v.sort_by_key(|&(k, _)| k);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(v.len());
        for (k, c) in v {
            match merged.last_mut() {
                Some((lk, lc)) if *lk == k => *lc += c,
                _ => merged.push((k, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        LinearRow { coeffs: merged, rhs }
    }

    /// Row for `expr <op> 0`, i.e. `linear(expr) <op> -constant(expr)`.
    pub fn from_affine(expr: &AffineExpr) -> Self {
        LinearRow::new(expr.linear(), 0.0 - expr.constant)
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, c)| c * z[k]).sum()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, &(_, c)| m.max(c.abs()))
    }

    fn scale(&self) -> f64 {
        let s = self.max_abs_coefficient();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Feasibility problem `{ z : eq rows, ub rows }` with free variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub nvars: usize,
    pub eq_rows: Vec<LinearRow>,
    pub ub_rows: Vec<LinearRow>,
    /// Named variable ranges, written as comments on export.
    pub blocks: Vec<(String, Range<usize>)>,
}

impl LpProblem {
    pub fn new(nvars: usize) -> Self {
        LpProblem {
            nvars,
            ..Default::default()
        }
    }

    pub fn add_eq(&mut self, row: LinearRow) {
        self.eq_rows.push(row);
    }

    pub fn add_ub(&mut self, row: LinearRow) {
        self.ub_rows.push(row);
    }

    pub fn num_rows(&self) -> usize {
        self.eq_rows.len() + self.ub_rows.len()
    }

    /// Deterministic export name of variable `j` (zero-based): `z{j+1}`.
    pub fn var_name(j: usize) -> String {
        format!("z{}", j + 1)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (kind, rows) in [(RowKind::Eq, &self.eq_rows), (RowKind::Ub, &self.ub_rows)] {
            for (row, r) in rows.iter().enumerate() {
                if !r.rhs.is_finite() || r.coeffs.iter().any(|&(_, c)| !c.is_finite()) {
                    return Err(LpError::NonFinite { kind, row });
                }
                if let Some(&(index, _)) = r.coeffs.iter().find(|&&(k, _)| k >= self.nvars) {
                    return Err(LpError::IndexOutOfRange {
                        kind,
                        row,
                        index,
                        nvars: self.nvars,
                    });
                }
                if r.coeffs.windows(2).any(|w| w[0].0 >= w[1].0) || r.coeffs.iter().any(|&(_, c)| c == 0.0) {
                    return Err(LpError::UnsortedRow { kind, row });
                }
            }
        }
        Ok(())
    }

    /// Largest violation of any row at `z`, in the units of the rows.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.violations(z, false)
    }

    /// Largest violation with each row divided by its max-abs coefficient.
    pub fn max_scaled_violation(&self, z: &[f64]) -> f64 {
        self.violations(z, true)
    }

    fn violations(&self, z: &[f64], scaled: bool) -> f64 {
        let s = |r: &LinearRow| if scaled { r.scale() } else { 1.0 };
        let eq = self.eq_rows.iter().map(|r| (r.dot(z) - r.rhs).abs() / s(r));
        let ub = self.ub_rows.iter().map(|r| (r.dot(z) - r.rhs).max(0.0) / s(r));
        eq.chain(ub).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub feas_tol: f64,
    pub pivot_tol: f64,
    pub infeas_margin: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_switch: usize,
    pub max_vars: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 50_000,
            feas_tol: 1e-8,
            pivot_tol: 1e-9,
            infeas_margin: 1e-9,
            degenerate_switch: 50,
            max_vars: MAX_DENSE_VARS,
        }
    }
}

/// Multipliers proving infeasibility: `ub >= 0`, and
/// `sum eq_i * eq_row_i + sum ub_j * ub_row_j` has (numerically) zero
/// coefficients and a negative right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub eq_multipliers: Vec<f64>,
    pub ub_multipliers: Vec<f64>,
    /// Optimal phase-1 objective on the scaled problem.
    pub phase1_optimum: f64,
}

/// Result of combining a certificate's multipliers with the rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarkasCheck {
    /// Right-hand side of the combined row (negative for a valid certificate).
    pub combined_rhs: f64,
    /// Max-abs coefficient of the combined row.
    pub combined_coeff: f64,
    /// Most negative inequality multiplier (0 when all are nonnegative).
    pub min_ub_multiplier: f64,
    /// No point with `max |z_j| < radius` is feasible.
    pub radius: f64,
}

impl FarkasCheck {
    /// Right-hand side below `-margin`, nonnegative inequality weights, and
    /// a combined coefficient vector small enough to exclude every point
    /// with `max |z_j| < 1e6`.
    pub fn is_valid(&self, margin: f64) -> bool {
        self.combined_rhs <= -margin && self.min_ub_multiplier >= 0.0 && self.radius >= 1e6
    }
}

impl FarkasCertificate {
    pub fn check(&self, lp: &LpProblem) -> FarkasCheck {
        let mut combined = vec![0.0; lp.nvars];
        let mut rhs = 0.0;
        let rows = lp
            .eq_rows
            .iter()
            .zip(&self.eq_multipliers)
            .chain(lp.ub_rows.iter().zip(&self.ub_multipliers));
        for (row, &mu) in rows {
            if mu == 0.0 {
                continue;
            }
            for &(k, c) in &row.coeffs {
                combined[k] += mu * c;
            }
            rhs += mu * row.rhs;
        }
        let l1: f64 = combined.iter().map(|c| c.abs()).sum();
        let combined_coeff = combined.iter().fold(0.0, |m: f64, c| m.max(c.abs()));
        let radius = if l1 == 0.0 {
            f64::INFINITY
        } else {
            (-rhs).max(0.0) / l1
        };
        FarkasCheck {
            combined_rhs: rhs,
            combined_coeff,
            min_ub_multiplier: self.ub_multipliers.iter().fold(0.0, |m: f64, &v| m.min(v)),
            radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Feasible { point: Vec<f64>, max_violation: f64 },
    Infeasible(FarkasCertificate),
    IterationLimit,
}

impl LpStatus {
    pub fn label(&self) -> &'static str {
        match self {
            LpStatus::Feasible { .. } => "feasible",
            LpStatus::Infeasible(_) => "infeasible",
            LpStatus::IterationLimit => "iteration_limit",
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, LpStatus::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpStatus::Infeasible(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub iterations: usize,
    pub wall_time: Duration,
}
