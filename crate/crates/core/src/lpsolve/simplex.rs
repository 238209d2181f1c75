//! Dense phase-1 simplex.
//!
//! Rows are scaled by their max-abs coefficient and sign-flipped so the
//! right-hand side is nonnegative. Inequality rows get a slack; rows whose
//! slack cannot start basic get an artificial. Structural variables are
//! free: a free variable enters in whichever direction improves the
//! objective and, once basic, never leaves.
//!
//! Pricing is Dantzig's largest reduced cost with lowest-index ties. After
//! a run of degenerate pivots the solver switches to Bland's rule until the
//! next nondegenerate pivot, which rules out cycling.

use std::time::Instant;

use super::{
    FarkasCertificate, LpError, LpOutcome, LpProblem, LpStatus, SolveOptions, MAX_TABLEAU_ENTRIES,
};

const DROP_TOL: f64 = 1e-13;
const OPT_TOL: f64 = 1e-9;

/// Decides feasibility of `lp`.
///
/// Returns `Feasible` with a point, `Infeasible` with Farkas multipliers
/// when the phase-1 optimum exceeds `feas_tol`, or `IterationLimit`.
pub fn solve_feasibility(lp: &LpProblem, opts: &SolveOptions) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let start = Instant::now();
    let mut t = Tableau::build(lp, opts)?;
    let run = t.run(opts);
    let status = match run {
        Run::IterationLimit => LpStatus::IterationLimit,
        Run::Optimal if t.objective() <= opts.feas_tol => {
            let point = t.point();
            let max_violation = lp.max_violation(&point);
            LpStatus::Feasible { point, max_violation }
        }
        Run::Optimal => LpStatus::Infeasible(t.farkas()),
    };
    log::debug!(
        "lp {}x{}: {} after {} pivots",
        lp.num_rows(),
        lp.nvars,
        status.label(),
        t.iterations
    );
    Ok(LpOutcome {
        status,
        iterations: t.iterations,
        wall_time: start.elapsed(),
    })
}

enum Run {
    Optimal,
    IterationLimit,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Number of structural (free) columns.
    n: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    /// Phase-1 reduced costs.
    d: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Artificials that have left the basis; they never re-enter.
    retired: Vec<bool>,
    art_start: usize,
    flipped: Vec<bool>,
    row_scale: Vec<f64>,
    row_sign: Vec<f64>,
    row_art: Vec<Option<usize>>,
    row_slack: Vec<Option<usize>>,
    neq: usize,
    iterations: usize,
    nz: Vec<usize>,
    vals: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LpProblem, opts: &SolveOptions) -> Result<Self, LpError> {
        let n = lp.nvars;
        let neq = lp.eq_rows.len();
        let nub = lp.ub_rows.len();
        let m = neq + nub;
        let capacity = LpError::Capacity {
            nvars: n,
            rows: m,
            limit: opts.max_vars,
        };
        if n > opts.max_vars {
            return Err(capacity);
        }

        let rows: Vec<_> = lp.eq_rows.iter().chain(&lp.ub_rows).collect();
        let row_scale: Vec<f64> = rows.iter().map(|r| r.scale()).collect();
        let mut row_sign = vec![1.0; m];
        let mut row_art = vec![None; m];
        let mut row_slack = vec![None; m];
        let art_start = n + nub;
        let mut nart = 0;
        for (i, r) in rows.iter().enumerate() {
            let beta = r.rhs / row_scale[i];
            if i >= neq {
                row_slack[i] = Some(n + i - neq);
            }
            if beta < 0.0 {
                row_sign[i] = -1.0;
            }
            if i < neq || beta < 0.0 {
                row_art[i] = Some(art_start + nart);
                nart += 1;
            }
        }
        let ncols = art_start + nart;
        if m.saturating_mul(ncols) > MAX_TABLEAU_ENTRIES {
            return Err(capacity);
        }

        let mut a = vec![0.0; m * ncols];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut is_basic = vec![false; ncols];
        for (i, r) in rows.iter().enumerate() {
            let f = row_sign[i] / row_scale[i];
            let row = &mut a[i * ncols..(i + 1) * ncols];
            for &(k, c) in &r.coeffs {
                row[k] = c * f;
            }
            rhs[i] = r.rhs * f;
            if let Some(s) = row_slack[i] {
                row[s] = row_sign[i];
            }
            let b = match row_art[i] {
                Some(art) => {
                    row[art] = 1.0;
                    art
                }
                None => row_slack[i].expect("inequality row"),
            };
            basis[i] = b;
            is_basic[b] = true;
        }

        let mut d = vec![0.0; ncols];
        for i in (0..m).filter(|&i| row_art[i].is_some()) {
            let row = &a[i * ncols..(i + 1) * ncols];
            for (dj, &v) in d[..art_start].iter_mut().zip(row) {
                *dj -= v;
            }
        }

        Ok(Tableau {
            m,
            ncols,
            n,
            a,
            rhs,
            d,
            basis,
            is_basic,
            retired: vec![false; ncols],
            art_start,
            flipped: vec![false; n],
            row_scale,
            row_sign,
            row_art,
            row_slack,
            neq,
            iterations: 0,
            nz: Vec::with_capacity(ncols),
            vals: Vec::with_capacity(ncols),
        })
    }

    fn objective(&self) -> f64 {
        (0..self.m)
            .filter(|&i| self.basis[i] >= self.art_start)
            .map(|i| self.rhs[i])
            .sum()
    }

    fn run(&mut self, opts: &SolveOptions) -> Run {
        let early_stop = opts.feas_tol * 1e-3;
        let mut degenerate = 0;
        let mut bland = false;
        let mut rejected: Vec<usize> = Vec::new();
        loop {
            if self.objective() <= early_stop {
                return Run::Optimal;
            }
            let Some(j) = self.entering(bland, &rejected) else {
                return Run::Optimal;
            };
            if self.iterations >= opts.max_iters {
                return Run::IterationLimit;
            }
            if j < self.n && self.d[j] > 0.0 {
                self.flip(j);
            }
            let Some(p) = self.leaving(j, bland, opts.pivot_tol) else {
                // No usable pivot in this column; try the others.
                rejected.push(j);
                continue;
            };
            rejected.clear();
            let step = self.rhs[p] / self.a[p * self.ncols + j];
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate >= opts.degenerate_switch {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            self.pivot(p, j);
            self.iterations += 1;
        }
    }

    fn eligible(&self, j: usize) -> Option<f64> {
        if self.is_basic[j] || self.retired[j] {
            return None;
        }
        let dj = self.d[j];
        if j < self.n {
            (dj.abs() > OPT_TOL).then_some(dj.abs())
        } else {
            (dj < -OPT_TOL).then_some(-dj)
        }
    }

    fn entering(&self, bland: bool, rejected: &[usize]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            let Some(score) = self.eligible(j) else { continue };
            if rejected.contains(&j) {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, j: usize, bland: bool, pivot_tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            let v = self.a[i * self.ncols + j];
            if v <= pivot_tol {
                continue;
            }
            let ratio = self.rhs[i].max(0.0) / v;
            let Some((bi, br, bv)) = best else {
                best = Some((i, ratio, v));
                continue;
            };
            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br);
            let better = if ratio < br && !tie {
                true
            } else if tie {
                if bland {
                    self.basis[i] < self.basis[bi]
                } else {
                    let art_i = self.basis[i] >= self.art_start;
                    let art_b = self.basis[bi] >= self.art_start;
                    (art_i && !art_b) || (art_i == art_b && v > bv)
                }
            } else {
                false
            };
            if better {
                best = Some((i, ratio, v));
            }
        }
        best.map(|(i, _, _)| i)
    }

    fn flip(&mut self, j: usize) {
        for i in 0..self.m {
            let v = &mut self.a[i * self.ncols + j];
            *v = -*v;
        }
        self.d[j] = -self.d[j];
        self.flipped[j] = !self.flipped[j];
    }

    fn pivot(&mut self, p: usize, j: usize) {
        let nc = self.ncols;
        let inv = 1.0 / self.a[p * nc + j];
        self.nz.clear();
        self.vals.clear();
        {
            let row = &mut self.a[p * nc..(p + 1) * nc];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    self.nz.push(k);
                    self.vals.push(*v);
                }
            }
            row[j] = 1.0;
        }
        self.rhs[p] *= inv;
        let rp = self.rhs[p];

        let (before, rest) = self.a.split_at_mut(p * nc);
        let after = &mut rest[nc..];
        for (offset, chunk) in [(0, before), (p + 1, after)] {
            for (ii, row) in chunk.chunks_exact_mut(nc).enumerate() {
                let f = row[j];
                if f == 0.0 {
                    continue;
                }
                for (&k, &v) in self.nz.iter().zip(&self.vals) {
                    let x = row[k] - f * v;
                    row[k] = if x.abs() < DROP_TOL { 0.0 } else { x };
                }
                row[j] = 0.0;
                let i = offset + ii;
                let r = self.rhs[i] - f * rp;
                self.rhs[i] = if r.abs() < DROP_TOL { 0.0 } else { r };
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (&k, &v) in self.nz.iter().zip(&self.vals) {
                let x = self.d[k] - f * v;
                self.d[k] = if x.abs() < DROP_TOL { 0.0 } else { x };
            }
            self.d[j] = 0.0;
        }

        let old = self.basis[p];
        self.is_basic[old] = false;
        if old >= self.art_start {
            self.retired[old] = true;
        }
        self.basis[p] = j;
        self.is_basic[j] = true;
    }

    fn point(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                z[b] = if self.flipped[b] { -self.rhs[i] } else { self.rhs[i] };
            }
        }
        z
    }

    /// Dual of the scaled phase-1 problem mapped back to the original rows.
    fn farkas(&self) -> FarkasCertificate {
        let mut eq = Vec::with_capacity(self.neq);
        let mut ub = Vec::with_capacity(self.m - self.neq);
        for i in 0..self.m {
            let y = match (self.row_art[i], self.row_slack[i]) {
                (Some(art), _) => 1.0 - self.d[art],
                (None, Some(s)) => -self.d[s],
                (None, None) => unreachable!("every row has a slack or an artificial"),
            };
            let mu = -self.row_sign[i] * y / self.row_scale[i];
            if i < self.neq {
                eq.push(mu);
            } else {
                // Roundoff can leave tiny negative weights; projecting them
                // to zero keeps a valid combination, and `check` measures
                // what the projection costs.
                ub.push(mu.max(0.0));
            }
        }
        FarkasCertificate {
            eq_multipliers: eq,
            ub_multipliers: ub,
            phase1_optimum: self.objective(),
        }
    }
}
