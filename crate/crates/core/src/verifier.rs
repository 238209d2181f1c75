//! Barrier-function verification by DSOS linear programs.
//!
//! A candidate `b` for `x' = f(x) + g(x) u` is certified by the polynomial
//! identity
//!
//! ```text
//! (s1 + b p10 + L_g b p1) L_f b - s2 - b p20 - L_g b p2 - (L_f b)^(2a) = 0
//! ```
//!
//! with `s1, s2` DSOS and the `p`'s free. It shows that `L_f b` cannot be
//! negative where `b` and `L_g b` vanish together. Several candidates are
//! certified jointly when each one verifies on its own and
//! `1 + s0 + sum_i s_i b_i = 0` has no DSOS solution, i.e. the intersection
//! of the safe sets is not certified empty.
//!
//! An LP solution is never trusted directly: the Gram matrices are read
//! back, checked for diagonal dominance, and the identity is re-expanded
//! with the numeric values before a verdict is issued.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::affinegram::{
    dd_linear_constraints, fresh_dsos_poly, fresh_free_poly, gram_expansion, is_diagonally_dominant,
    AffinePolynomial, DecisionAllocator, DsosVar, GramError,
};
use crate::lpsolve::{
    solve_feasibility, write_lp_file, LinearRow, LpError, LpProblem, LpStatus, SolveOptions,
};
use crate::polyring::{
    embed_monomial, lie_derivative_drift, lie_derivative_input, Monomial, PolyError, PolyMatrix,
    Polynomial,
};

/// Environment variable naming the directory for exported LP files.
pub const REPORT_DIR_ENV: &str = "DSOS_CBF_REPORT_DIR";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Gram(#[from] GramError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("{context}: {source}")]
    Lp {
        context: String,
        #[source]
        source: LpError,
    },
    #[error("{context}: LP with {nvars} variables and {rows} rows exceeds the solver capacity{}",
        .path.as_ref().map(|p| format!("; exported to {}", p.display())).unwrap_or_default())]
    Capacity {
        context: String,
        nvars: usize,
        rows: usize,
        path: Option<PathBuf>,
    },
    #[error("certificate shape mismatch: {0}")]
    Shape(String),
    #[error("at least one candidate is required")]
    NoCandidates,
}

/// `x' = f(x) + g(x) u` with `f` an `n x 1` and `g` an `n x m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAffineSystem {
    f: PolyMatrix,
    g: PolyMatrix,
}

impl ControlAffineSystem {
    pub fn new(f: PolyMatrix, g: PolyMatrix) -> Result<Self, VerifyError> {
        let n = f.rows();
        let dims = [
            ("drift columns", 1, f.cols()),
            ("drift ring", n, f.nvars()),
            ("input matrix rows", n, g.rows()),
            ("input matrix ring", n, g.nvars()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(PolyError::DimensionMismatch { what, expected, found }.into());
            }
        }
        Ok(ControlAffineSystem { f, g })
    }

    pub fn nstates(&self) -> usize {
        self.f.rows()
    }

    pub fn ninputs(&self) -> usize {
        self.g.cols()
    }

    pub fn f(&self) -> &PolyMatrix {
        &self.f
    }

    pub fn g(&self) -> &PolyMatrix {
        &self.g
    }
}

/// Candidate barrier function with its Lie derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCbf {
    b: Polynomial,
    lf_b: Polynomial,
    lg_b: PolyMatrix,
}

impl CandidateCbf {
    pub fn new(sys: &ControlAffineSystem, b: Polynomial) -> Result<Self, VerifyError> {
        let lf_b = lie_derivative_drift(&b, sys.f())?;
        let lg_b = lie_derivative_input(&b, sys.g())?;
        Ok(CandidateCbf { b, lf_b, lg_b })
    }

    pub fn b(&self) -> &Polynomial {
        &self.b
    }

    pub fn lf_b(&self) -> &Polynomial {
        &self.lf_b
    }

    /// `1 x m` row of input Lie derivatives.
    pub fn lg_b(&self) -> &PolyMatrix {
        &self.lg_b
    }

    pub fn nvars(&self) -> usize {
        self.b.nvars()
    }

    pub fn ninputs(&self) -> usize {
        self.lg_b.cols()
    }

    fn check(&self, sys: &ControlAffineSystem) -> Result<(), VerifyError> {
        if self.nvars() != sys.nstates() || self.ninputs() != sys.ninputs() {
            return Err(VerifyError::Shape(format!(
                "candidate over {} variables and {} inputs, system has {} and {}",
                self.nvars(),
                self.ninputs(),
                sys.nstates(),
                sys.ninputs()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierOptions {
    /// Exponents `a` in `(L_f b)^(2a)`.
    pub a_values: Vec<u32>,
    /// DSOS half-degrees; `None` means `0..=ceil(deg b / 2)` per candidate.
    pub deg_s: Option<Vec<u32>>,
    /// Free-multiplier degrees; `None` picks one degree per `(a, deg_s)`
    /// that lets every term reach the degree of the highest one.
    pub deg_p: Option<Vec<u32>>,
    /// Adds `C - sum x_i^2` to the emptiness generators.
    pub archimedean_c: Option<u32>,
    pub lp: SolveOptions,
    pub parallel: bool,
    /// Restrict each program to the variables and input channels it uses.
    pub reduce_support: bool,
    pub gram_tol: f64,
    pub residual_tol: f64,
    /// Directory for LPs that exceed solver capacity.
    pub export_dir: Option<PathBuf>,
}

impl Default for VerifierOptions {
    fn default() -> Self {
        VerifierOptions {
            a_values: vec![0, 1],
            deg_s: None,
            deg_p: None,
            archimedean_c: None,
            lp: SolveOptions::default(),
            parallel: true,
            reduce_support: true,
            gram_tol: 1e-7,
            residual_tol: 1e-6,
            export_dir: None,
        }
    }
}

fn check_schedule(name: &str, values: &[u32]) -> Result<(), VerifyError> {
    if values.is_empty() {
        return Err(VerifyError::InvalidOptions(format!("{name} schedule is empty")));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(VerifyError::InvalidOptions(format!("{name} schedule must be non-decreasing")));
    }
    Ok(())
}

impl VerifierOptions {
    pub fn validate(&self) -> Result<(), VerifyError> {
        check_schedule("a", &self.a_values)?;
        if let Some(s) = &self.deg_s {
            check_schedule("deg_s", s)?;
        }
        if let Some(p) = &self.deg_p {
            check_schedule("deg_p", p)?;
        }
        if self.archimedean_c == Some(0) {
            return Err(VerifyError::InvalidOptions("archimedean C must be positive".into()));
        }
        if !(self.gram_tol >= 0.0 && self.residual_tol >= 0.0) {
            return Err(VerifyError::InvalidOptions("tolerances must be nonnegative".into()));
        }
        Ok(())
    }

    fn deg_s_for(&self, gens: &[&Polynomial]) -> Vec<u32> {
        self.deg_s.clone().unwrap_or_else(|| {
            let d = gens.iter().filter_map(|p| p.degree()).max().unwrap_or(0);
            (0..=d.div_ceil(2)).collect()
        })
    }
}

/// Numeric Gram matrix over a monomial basis of the full ring.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCertificate {
    pub basis: Vec<Monomial>,
    pub gram: Vec<Vec<f64>>,
}

impl GramCertificate {
    pub fn empty() -> Self {
        GramCertificate {
            basis: Vec::new(),
            gram: Vec::new(),
        }
    }

    /// `m(x)^T Q m(x)`.
    pub fn expansion(&self, nvars: usize) -> Result<Polynomial, VerifyError> {
        Ok(gram_expansion(&self.gram, &self.basis, nvars)?)
    }

    pub fn is_diagonally_dominant(&self, tol: f64) -> bool {
        is_diagonally_dominant(&self.gram, tol).unwrap_or(false)
    }
}

/// Multipliers of the single-candidate identity, in the full ring.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleCertificate {
    pub a: u32,
    pub deg_s: u32,
    pub deg_p: u32,
    pub s1: GramCertificate,
    pub s2: GramCertificate,
    pub p10: Polynomial,
    pub p20: Polynomial,
    pub p1: Vec<Polynomial>,
    pub p2: Vec<Polynomial>,
    pub residual: f64,
}

/// Multipliers `s0, s1, ...` of `1 + s0 + sum s_i g_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmptinessCertificate {
    pub deg_s: u32,
    pub generators: Vec<Polynomial>,
    pub multipliers: Vec<GramCertificate>,
    pub residual: f64,
}

impl EmptinessCertificate {
    pub fn grams(&self) -> impl Iterator<Item = &GramCertificate> {
        self.multipliers.iter()
    }
}

impl SingleCertificate {
    pub fn grams(&self) -> impl Iterator<Item = &GramCertificate> {
        [&self.s1, &self.s2].into_iter()
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), VerifyError> {
    if expected != found {
        return Err(VerifyError::Shape(format!("{what}: expected {expected}, found {found}")));
    }
    Ok(())
}

fn combination(p0: &Polynomial, b: &Polynomial, p: &Polynomial, lg: &PolyMatrix, ps: &[Polynomial]) -> Result<Polynomial, VerifyError> {
    let mut h = p0.try_add(&b.try_mul(p)?)?;
    for (j, pj) in ps.iter().enumerate() {
        h = h.try_add(&lg.get(0, j).try_mul(pj)?)?;
    }
    Ok(h)
}

/// Max-abs coefficient of `h1 L_f b - h2 - (L_f b)^(2a)` with
/// `h_i = s_i + b p_i0 + L_g b p_i` rebuilt from the numeric certificate.
pub fn certificate_residual(cert: &SingleCertificate, cand: &CandidateCbf) -> Result<f64, VerifyError> {
    let n = cand.nvars();
    let m = cand.ninputs();
    check_len("p1 entries", m, cert.p1.len())?;
    check_len("p2 entries", m, cert.p2.len())?;
    for p in [&cert.p10, &cert.p20].into_iter().chain(&cert.p1).chain(&cert.p2) {
        check_len("multiplier ring", n, p.nvars())?;
    }
    let h1 = combination(&cert.s1.expansion(n)?, cand.b(), &cert.p10, cand.lg_b(), &cert.p1)?;
    let h2 = combination(&cert.s2.expansion(n)?, cand.b(), &cert.p20, cand.lg_b(), &cert.p2)?;
    let e = h1
        .try_mul(cand.lf_b())?
        .try_sub(&h2)?
        .try_sub(&cand.lf_b().pow(2 * cert.a)?)?;
    Ok(e.max_abs_coefficient())
}

/// Max-abs coefficient of `1 + s0 + sum_i s_i g_i`.
pub fn emptiness_residual(multipliers: &[GramCertificate], generators: &[Polynomial], nvars: usize) -> Result<f64, VerifyError> {
    check_len("emptiness multipliers", generators.len() + 1, multipliers.len())?;
    let mut e = Polynomial::constant(nvars, 1.0).try_add(&multipliers[0].expansion(nvars)?)?;
    for (s, g) in multipliers[1..].iter().zip(generators) {
        e = e.try_add(&s.expansion(nvars)?.try_mul(g)?)?;
    }
    Ok(e.max_abs_coefficient())
}

/// Appends `C - sum_i x_i^2` to the generators.
pub fn augment_archimedean(generators: &[Polynomial], nvars: usize, c: u32) -> Result<Vec<Polynomial>, VerifyError> {
    if c == 0 {
        return Err(VerifyError::InvalidOptions("archimedean C must be positive".into()));
    }
    let mut ball = Polynomial::constant(nvars, f64::from(c));
    for i in 0..nvars {
        let x = Polynomial::var(nvars, i)?;
        ball = ball.try_sub(&x.try_mul(&x)?)?;
    }
    let mut out = generators.to_vec();
    out.push(ball);
    Ok(out)
}

/// Index and radius bound `C` of a generator that already has the form
/// `C - sum_i x_i^2` with `C > 0`.
pub fn native_archimedean(generators: &[Polynomial], nvars: usize) -> Option<(usize, f64)> {
    generators.iter().enumerate().find_map(|(idx, g)| {
        if g.nvars() != nvars || g.num_terms() != nvars + 1 {
            return None;
        }
        let c = g.coefficient(&Monomial::one(nvars));
        let squares = (0..nvars).all(|i| {
            let mut e = vec![0u32; nvars];
            e[i] = 2;
            Monomial::new(&e).is_ok_and(|m| g.coefficient(&m) == -1.0)
        });
        (c > 0.0 && squares).then_some((idx, c))
    })
}

fn union_support<'a>(polys: impl IntoIterator<Item = &'a Polynomial>) -> Vec<usize> {
    let set: BTreeSet<usize> = polys.into_iter().flat_map(|p| p.support_vars()).collect();
    set.into_iter().collect()
}

fn embed_gram(dsos: &DsosVar, z: &[f64], nvars: usize, ring: &[usize]) -> Result<GramCertificate, VerifyError> {
    let basis = dsos
        .basis
        .iter()
        .map(|m| embed_monomial(m, nvars, ring))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GramCertificate {
        basis,
        gram: dsos.gram.values(z),
    })
}

fn named_blocks(alloc: &DecisionAllocator) -> Vec<(String, std::ops::Range<usize>)> {
    alloc.blocks().iter().map(|b| (b.name.clone(), b.range())).collect()
}

/// Decision-vector layout of a single-candidate program.
#[derive(Debug, Clone)]
pub struct SingleLayout {
    pub a: u32,
    pub deg_s: u32,
    pub deg_p: u32,
    /// Full-ring indices of the variables kept in the program.
    pub ring: Vec<usize>,
    /// Input channels kept in the program.
    pub channels: Vec<usize>,
    /// Whether the `s1 + b p10 + L_g b p1` block is present; it is dropped
    /// when `L_f b` is identically zero under support reduction.
    pub has_h1: bool,
    pub nvars_full: usize,
    pub ninputs: usize,
    pub decision_count: usize,
    /// Set when the top-degree terms of `(L_f b)^(2a)` cannot cancel.
    pub degree_warning: Option<String>,
    p10: Option<AffinePolynomial>,
    p20: AffinePolynomial,
    p1: Vec<AffinePolynomial>,
    p2: Vec<AffinePolynomial>,
    s1: Option<DsosVar>,
    s2: DsosVar,
}

impl SingleLayout {
    /// Reads a certificate out of a decision vector; `residual` is left 0.
    pub fn extract(&self, z: &[f64]) -> Result<SingleCertificate, VerifyError> {
        let n = self.nvars_full;
        let lift = |p: &AffinePolynomial| p.instantiate(z).embed(n, &self.ring);
        let zero = Polynomial::zero(n);
        let mut p1 = vec![zero.clone(); self.ninputs];
        let mut p2 = vec![zero.clone(); self.ninputs];
        for (slot, &j) in self.channels.iter().enumerate() {
            if self.has_h1 {
                p1[j] = lift(&self.p1[slot])?;
            }
            p2[j] = lift(&self.p2[slot])?;
        }
        Ok(SingleCertificate {
            a: self.a,
            deg_s: self.deg_s,
            deg_p: self.deg_p,
            s1: match &self.s1 {
                Some(s) => embed_gram(s, z, n, &self.ring)?,
                None => GramCertificate::empty(),
            },
            s2: embed_gram(&self.s2, z, n, &self.ring)?,
            p10: match &self.p10 {
                Some(p) => lift(p)?,
                None => zero,
            },
            p20: lift(&self.p20)?,
            p1,
            p2,
            residual: 0.0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SingleLp {
    pub lp: LpProblem,
    pub layout: SingleLayout,
}

/// Builds the single-candidate program for one `(a, deg_s, deg_p)`.
///
/// Variables are allocated as `p10, p20, p1[..], p2[..], Q1, tau1, Q2,
/// tau2`. Equality rows match every coefficient of the identity; inequality
/// rows are the diagonal-dominance rows of both Gram matrices.
pub fn assemble_single_lp(
    sys: &ControlAffineSystem,
    cand: &CandidateCbf,
    a: u32,
    deg_s: u32,
    deg_p: u32,
    reduce: bool,
) -> Result<SingleLp, VerifyError> {
    cand.check(sys)?;
    let n = sys.nstates();
    let m = sys.ninputs();
    let lg: Vec<&Polynomial> = (0..m).map(|j| cand.lg_b().get(0, j)).collect();
    let (ring, channels, has_h1) = if reduce {
        let ring = union_support([cand.b(), cand.lf_b()].into_iter().chain(lg.iter().copied()));
        let channels: Vec<usize> = (0..m).filter(|&j| !lg[j].is_zero()).collect();
        (ring, channels, !cand.lf_b().is_zero())
    } else {
        ((0..n).collect(), (0..m).collect(), true)
    };
    let nr = ring.len();
    let b = cand.b().restrict_to(&ring)?;
    let lf = cand.lf_b().restrict_to(&ring)?;
    let lgr = channels
        .iter()
        .map(|&j| lg[j].restrict_to(&ring))
        .collect::<Result<Vec<_>, _>>()?;

    let mut alloc = DecisionAllocator::new();
    let p10 = has_h1
        .then(|| fresh_free_poly(&mut alloc, "p10", nr, deg_p))
        .transpose()?;
    let p20 = fresh_free_poly(&mut alloc, "p20", nr, deg_p)?;
    let mut p1 = Vec::new();
    if has_h1 {
        for &j in &channels {
            p1.push(fresh_free_poly(&mut alloc, &format!("p1[{}]", j + 1), nr, deg_p)?);
        }
    }
    let mut p2 = Vec::new();
    for &j in &channels {
        p2.push(fresh_free_poly(&mut alloc, &format!("p2[{}]", j + 1), nr, deg_p)?);
    }
    let s1 = has_h1
        .then(|| fresh_dsos_poly(&mut alloc, "s1", nr, deg_s))
        .transpose()?;
    let s2 = fresh_dsos_poly(&mut alloc, "s2", nr, deg_s)?;

    let half = |s: &DsosVar, p0: &AffinePolynomial, ps: &[AffinePolynomial]| -> Result<AffinePolynomial, VerifyError> {
        let mut h = s.expansion.clone();
        h.add_scaled(&p0.mul_fixed(&b)?, 1.0)?;
        for (pj, lgj) in ps.iter().zip(&lgr) {
            h.add_scaled(&pj.mul_fixed(lgj)?, 1.0)?;
        }
        Ok(h)
    };
    let mut e = match (&s1, &p10) {
        (Some(s1), Some(p10)) => half(s1, p10, &p1)?.mul_fixed(&lf)?,
        _ => AffinePolynomial::zero(nr),
    };
    e.add_scaled(&half(&s2, &p20, &p2)?, -1.0)?;
    let target = lf.pow(2 * a)?;
    e.add_fixed(&target, -1.0)?;

    let degree_warning = degree_warning(&b, &lf, &lgr, has_h1, a, deg_s, deg_p);
    if let Some(w) = &degree_warning {
        log::warn!("{w}");
    }

    let decision_count = alloc.len();
    let mut lp = LpProblem::new(decision_count);
    for expr in e.coefficient_system() {
        lp.add_eq(LinearRow::from_affine(&expr));
    }
    for s in s1.iter().chain([&s2]) {
        for row in dd_linear_constraints(s) {
            lp.add_ub(LinearRow::from_affine(&row));
        }
    }
    lp.blocks = named_blocks(&alloc);

    Ok(SingleLp {
        lp,
        layout: SingleLayout {
            a,
            deg_s,
            deg_p,
            ring,
            channels,
            has_h1,
            nvars_full: n,
            ninputs: m,
            decision_count,
            degree_warning,
            p10,
            p20,
            p1,
            p2,
            s1,
            s2,
        },
    })
}

fn degree_warning(
    b: &Polynomial,
    lf: &Polynomial,
    lg: &[Polynomial],
    has_h1: bool,
    a: u32,
    deg_s: u32,
    deg_p: u32,
) -> Option<String> {
    let target = if lf.is_zero() { 0 } else { 2 * a * lf.degree().unwrap_or(0) };
    let mut h = 2 * deg_s;
    if let Some(db) = b.degree() {
        h = h.max(db + deg_p);
    }
    for d in lg.iter().filter_map(Polynomial::degree) {
        h = h.max(d + deg_p);
    }
    let reach = match (has_h1, lf.degree()) {
        (true, Some(dl)) => h + dl,
        _ => h,
    };
    (target > reach).then(|| {
        format!("a={a} deg_s={deg_s} deg_p={deg_p}: (L_f b)^(2a) has degree {target} but other terms reach only {reach}")
    })
}

/// Free-multiplier degree that lets the multiplier terms reach the largest
/// degree among `s1 L_f b`, `s2` and `(L_f b)^(2a)`.
pub fn balanced_deg_p(cand: &CandidateCbf, a: u32, deg_s: u32) -> u32 {
    let lf = cand.lf_b().degree();
    let mut top = 2 * deg_s;
    if let Some(dl) = lf {
        top = top.max(2 * deg_s + dl).max(2 * a * dl);
    }
    let lowest = cand
        .lg_b()
        .entries()
        .iter()
        .filter_map(Polynomial::degree)
        .chain(cand.b().degree())
        .min()
        .unwrap_or(0);
    top.saturating_sub(lowest)
}

/// Decision-vector layout of an emptiness program.
#[derive(Debug, Clone)]
pub struct EmptinessLayout {
    pub deg_s: u32,
    pub ring: Vec<usize>,
    pub nvars_full: usize,
    pub decision_count: usize,
    multipliers: Vec<DsosVar>,
}

impl EmptinessLayout {
    pub fn extract(&self, z: &[f64]) -> Result<Vec<GramCertificate>, VerifyError> {
        self.multipliers
            .iter()
            .map(|s| embed_gram(s, z, self.nvars_full, &self.ring))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EmptinessLp {
    pub lp: LpProblem,
    pub layout: EmptinessLayout,
}

/// Builds `1 + s0 + sum_i s_i g_i = 0` with DSOS multipliers of half-degree
/// `deg_s`, allocated in the order `Q0, tau0, Q1, tau1, ...`.
pub fn assemble_emptiness_lp(generators: &[Polynomial], nvars: usize, deg_s: u32, reduce: bool) -> Result<EmptinessLp, VerifyError> {
    if generators.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    for g in generators {
        check_len("generator ring", nvars, g.nvars())?;
    }
    let ring = if reduce {
        union_support(generators)
    } else {
        (0..nvars).collect()
    };
    let nr = ring.len();
    let mut alloc = DecisionAllocator::new();
    let mut multipliers = vec![fresh_dsos_poly(&mut alloc, "s0", nr, deg_s)?];
    let mut e = AffinePolynomial::from_fixed(&Polynomial::constant(nr, 1.0));
    e.add_scaled(&multipliers[0].expansion, 1.0)?;
    for (i, g) in generators.iter().enumerate() {
        let s = fresh_dsos_poly(&mut alloc, &format!("s{}", i + 1), nr, deg_s)?;
        e.add_scaled(&s.expansion.mul_fixed(&g.restrict_to(&ring)?)?, 1.0)?;
        multipliers.push(s);
    }
    let decision_count = alloc.len();
    let mut lp = LpProblem::new(decision_count);
    for expr in e.coefficient_system() {
        lp.add_eq(LinearRow::from_affine(&expr));
    }
    for s in &multipliers {
        for row in dd_linear_constraints(s) {
            lp.add_ub(LinearRow::from_affine(&row));
        }
    }
    lp.blocks = named_blocks(&alloc);
    Ok(EmptinessLp {
        lp,
        layout: EmptinessLayout {
            deg_s,
            ring,
            nvars_full: nvars,
            decision_count,
            multipliers,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Verified,
    Inconclusive,
    EmptinessCertified,
    MultiVerified,
    MultiInconclusive,
    /// Emptiness check alone found no certificate at any scheduled degree.
    NoEmptinessCertificate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Verified => "Verified",
            Verdict::Inconclusive => "Inconclusive",
            Verdict::EmptinessCertified => "EmptinessCertified",
            Verdict::MultiVerified => "MultiVerified",
            Verdict::MultiInconclusive => "MultiInconclusive",
            Verdict::NoEmptinessCertificate => "NoEmptinessCertificate",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpKind {
    Single { candidate: usize, a: u32, deg_s: u32, deg_p: u32 },
    Emptiness { deg_s: u32 },
}

impl LpKind {
    pub fn label(&self) -> String {
        match *self {
            LpKind::Single { candidate, a, deg_s, deg_p } => {
                format!("single[{candidate}] a={a} deg_s={deg_s} deg_p={deg_p}")
            }
            LpKind::Emptiness { deg_s } => format!("emptiness deg_s={deg_s}"),
        }
    }

    fn file_stem(&self) -> String {
        match *self {
            LpKind::Single { candidate, a, deg_s, deg_p } => {
                format!("single-c{candidate}-a{a}-s{deg_s}-p{deg_p}")
            }
            LpKind::Emptiness { deg_s } => format!("emptiness-s{deg_s}"),
        }
    }
}

/// One solved program.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRun {
    pub kind: LpKind,
    pub status: &'static str,
    pub eq_rows: usize,
    pub ub_rows: usize,
    pub cols: usize,
    pub iterations: usize,
    pub seconds: f64,
    /// `-(combined right-hand side)` of the Farkas certificate.
    pub farkas_margin: Option<f64>,
    pub farkas_valid: Option<bool>,
    /// Residual of the extracted certificate for feasible programs.
    pub residual: Option<f64>,
    /// Whether the extracted certificate passed the soundness gate.
    pub accepted: Option<bool>,
}

impl LpRun {
    pub fn rows(&self) -> usize {
        self.eq_rows + self.ub_rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub runs: Vec<LpRun>,
    /// One entry per candidate; `Some` for candidates that verified.
    pub certificates: Vec<Option<SingleCertificate>>,
    pub emptiness: Option<EmptinessCertificate>,
    pub diagnostics: Vec<String>,
    pub elapsed: Duration,
}

impl VerificationOutcome {
    /// Largest program solved, by rows then columns.
    pub fn largest_lp(&self) -> Option<&LpRun> {
        self.runs.iter().max_by_key(|r| (r.rows(), r.cols))
    }
}

enum Solved {
    Feasible(Vec<f64>),
    Infeasible { margin: f64, valid: bool },
    Limit,
}

fn export_for_capacity(lp: &LpProblem, kind: &LpKind, opts: &VerifierOptions) -> Option<PathBuf> {
    let dir = opts
        .export_dir
        .clone()
        .or_else(|| std::env::var_os(REPORT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(std::env::temp_dir);
    let path = dir.join(format!("{}.lp", kind.file_stem()));
    match write_lp_file(lp, &path) {
        Ok(()) => Some(path),
        Err(e) => {
            log::warn!("could not export oversized LP: {e}");
            None
        }
    }
}

fn run_lp(lp: &LpProblem, kind: LpKind, opts: &VerifierOptions) -> Result<(Solved, LpRun), VerifyError> {
    let context = kind.label();
    let outcome = match solve_feasibility(lp, &opts.lp) {
        Ok(o) => o,
        Err(LpError::Capacity { nvars, rows, .. }) => {
            let path = export_for_capacity(lp, &kind, opts);
            return Err(VerifyError::Capacity { context, nvars, rows, path });
        }
        Err(source) => return Err(VerifyError::Lp { context, source }),
    };
    let mut run = LpRun {
        kind,
        status: outcome.status.label(),
        eq_rows: lp.eq_rows.len(),
        ub_rows: lp.ub_rows.len(),
        cols: lp.nvars,
        iterations: outcome.iterations,
        seconds: outcome.wall_time.as_secs_f64(),
        farkas_margin: None,
        farkas_valid: None,
        residual: None,
        accepted: None,
    };
    let solved = match outcome.status {
        LpStatus::Feasible { point, .. } => Solved::Feasible(point),
        LpStatus::Infeasible(cert) => {
            let check = cert.check(lp);
            let valid = check.is_valid(opts.lp.infeas_margin);
            run.farkas_margin = Some(-check.combined_rhs);
            run.farkas_valid = Some(valid);
            Solved::Infeasible {
                margin: -check.combined_rhs,
                valid,
            }
        }
        LpStatus::IterationLimit => Solved::Limit,
    };
    log::info!("{context}: {} ({} rows, {} cols, {:.3}s)", run.status, run.rows(), run.cols, run.seconds);
    Ok((solved, run))
}

/// Why a certificate was rejected, if it was.
fn gate<'a>(grams: impl IntoIterator<Item = &'a GramCertificate>, residual: f64, opts: &VerifierOptions) -> Option<String> {
    if let Some(i) = grams.into_iter().position(|g| !g.is_diagonally_dominant(opts.gram_tol)) {
        return Some(format!("Gram matrix {i} is not diagonally dominant"));
    }
    // Written so that a NaN residual is rejected.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(residual <= opts.residual_tol) {
        return Some(format!("residual {residual:e} exceeds {:e}", opts.residual_tol));
    }
    None
}

struct SingleSweep {
    certificate: Option<SingleCertificate>,
    runs: Vec<LpRun>,
    diagnostics: Vec<String>,
}

fn single_schedule(cand: &CandidateCbf, opts: &VerifierOptions) -> Vec<(u32, u32, u32)> {
    let deg_s = opts.deg_s_for(&[cand.b()]);
    let mut out = Vec::new();
    for &a in &opts.a_values {
        for &ds in &deg_s {
            match &opts.deg_p {
                Some(ps) => out.extend(ps.iter().map(|&dp| (a, ds, dp))),
                None => out.push((a, ds, balanced_deg_p(cand, a, ds))),
            }
        }
    }
    out
}

fn sweep_single(sys: &ControlAffineSystem, cand: &CandidateCbf, index: usize, opts: &VerifierOptions) -> Result<SingleSweep, VerifyError> {
    let mut sweep = SingleSweep {
        certificate: None,
        runs: Vec::new(),
        diagnostics: Vec::new(),
    };
    let schedule = single_schedule(cand, opts);
    for &(a, ds, dp) in &schedule {
        let kind = LpKind::Single { candidate: index, a, deg_s: ds, deg_p: dp };
        let built = assemble_single_lp(sys, cand, a, ds, dp, opts.reduce_support)?;
        if let Some(w) = &built.layout.degree_warning {
            sweep.diagnostics.push(format!("candidate {index}: {w}"));
        }
        let (solved, mut run) = run_lp(&built.lp, kind, opts)?;
        match solved {
            Solved::Feasible(z) => {
                let mut cert = built.layout.extract(&z)?;
                cert.residual = certificate_residual(&cert, cand)?;
                run.residual = Some(cert.residual);
                let rejection = gate(cert.grams(), cert.residual, opts);
                run.accepted = Some(rejection.is_none());
                sweep.runs.push(run);
                match rejection {
                    None => {
                        sweep.certificate = Some(cert);
                        return Ok(sweep);
                    }
                    Some(why) => sweep.diagnostics.push(format!("{}: LP feasible but certificate rejected: {why}", kind.label())),
                }
            }
            Solved::Infeasible { .. } => sweep.runs.push(run),
            Solved::Limit => {
                sweep.runs.push(run);
                sweep.diagnostics.push(format!("{}: iteration limit reached", kind.label()));
            }
        }
    }
    let tried: Vec<String> = schedule.iter().map(|(a, s, p)| format!("(a={a}, deg_s={s}, deg_p={p})")).collect();
    sweep.diagnostics.push(format!(
        "candidate {index}: schedule exhausted without a certificate; tried {}",
        tried.join(", ")
    ));
    Ok(sweep)
}

/// Tries the `(a, deg_s, deg_p)` schedule in lexicographic order and stops
/// at the first program whose certificate passes the gate.
pub fn verify_single(sys: &ControlAffineSystem, cand: &CandidateCbf, opts: &VerifierOptions) -> Result<VerificationOutcome, VerifyError> {
    opts.validate()?;
    let start = Instant::now();
    let sweep = sweep_single(sys, cand, 0, opts)?;
    let verdict = if sweep.certificate.is_some() {
        Verdict::Verified
    } else {
        Verdict::Inconclusive
    };
    Ok(VerificationOutcome {
        verdict,
        runs: sweep.runs,
        certificates: vec![sweep.certificate],
        emptiness: None,
        diagnostics: sweep.diagnostics,
        elapsed: start.elapsed(),
    })
}

struct EmptinessSweep {
    certificate: Option<EmptinessCertificate>,
    /// Every scheduled program was infeasible with a valid Farkas certificate.
    all_refuted: bool,
    runs: Vec<LpRun>,
    diagnostics: Vec<String>,
}

fn sweep_emptiness(generators: &[Polynomial], nvars: usize, opts: &VerifierOptions) -> Result<EmptinessSweep, VerifyError> {
    let degrees = opts.deg_s_for(&generators.iter().collect::<Vec<_>>());
    let mut sweep = EmptinessSweep {
        certificate: None,
        all_refuted: true,
        runs: Vec::new(),
        diagnostics: Vec::new(),
    };
    for &ds in &degrees {
        let kind = LpKind::Emptiness { deg_s: ds };
        let built = assemble_emptiness_lp(generators, nvars, ds, opts.reduce_support)?;
        let (solved, mut run) = run_lp(&built.lp, kind, opts)?;
        match solved {
            Solved::Feasible(z) => {
                sweep.all_refuted = false;
                let multipliers = built.layout.extract(&z)?;
                let residual = emptiness_residual(&multipliers, generators, nvars)?;
                run.residual = Some(residual);
                let rejection = gate(&multipliers, residual, opts);
                run.accepted = Some(rejection.is_none());
                sweep.runs.push(run);
                match rejection {
                    None => {
                        sweep.certificate = Some(EmptinessCertificate {
                            deg_s: ds,
                            generators: generators.to_vec(),
                            multipliers,
                            residual,
                        });
                        return Ok(sweep);
                    }
                    Some(why) => sweep.diagnostics.push(format!("{}: LP feasible but certificate rejected: {why}", kind.label())),
                }
            }
            Solved::Infeasible { margin, valid } => {
                sweep.runs.push(run);
                if !valid {
                    sweep.all_refuted = false;
                    sweep.diagnostics.push(format!(
                        "{}: infeasibility certificate failed validation (margin {margin:e})",
                        kind.label()
                    ));
                }
            }
            Solved::Limit => {
                sweep.all_refuted = false;
                sweep.runs.push(run);
                sweep.diagnostics.push(format!("{}: iteration limit reached", kind.label()));
            }
        }
    }
    if sweep.all_refuted {
        let cap = degrees.last().copied().unwrap_or(0);
        sweep.diagnostics.push(format!(
            "emptiness programs infeasible for deg_s in {degrees:?}; intersection emptiness is excluded only up to multiplier half-degree {cap}"
        ));
    }
    Ok(sweep)
}

fn emptiness_generators(cands: &[CandidateCbf], nvars: usize, opts: &VerifierOptions, diagnostics: &mut Vec<String>) -> Result<Vec<Polynomial>, VerifyError> {
    let gens: Vec<Polynomial> = cands.iter().map(|c| c.b().clone()).collect();
    match opts.archimedean_c {
        Some(c) => augment_archimedean(&gens, nvars, c),
        None => {
            match native_archimedean(&gens, nvars) {
                Some((i, c)) => diagnostics.push(format!(
                    "candidate {i} has the form C - |x|^2 with C = {c}; the module is Archimedean without augmentation"
                )),
                None => {
                    let msg = "no archimedean C given: the Archimedean property of the DSOS module is assumed, not checked";
                    log::warn!("{msg}");
                    diagnostics.push(msg.to_string());
                }
            }
            Ok(gens)
        }
    }
}

/// Checks only whether the intersection of the safe sets `{b_i >= 0}` is
/// certified empty.
pub fn emptiness_check(cands: &[CandidateCbf], nvars: usize, opts: &VerifierOptions) -> Result<VerificationOutcome, VerifyError> {
    opts.validate()?;
    if cands.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    let start = Instant::now();
    let mut diagnostics = Vec::new();
    let gens = emptiness_generators(cands, nvars, opts, &mut diagnostics)?;
    let sweep = sweep_emptiness(&gens, nvars, opts)?;
    diagnostics.extend(sweep.diagnostics);
    Ok(VerificationOutcome {
        verdict: if sweep.certificate.is_some() {
            Verdict::EmptinessCertified
        } else {
            Verdict::NoEmptinessCertificate
        },
        runs: sweep.runs,
        certificates: vec![None; cands.len()],
        emptiness: sweep.certificate,
        diagnostics,
        elapsed: start.elapsed(),
    })
}

/// Verifies several candidates jointly: each must verify on its own and
/// the emptiness program must be infeasible at every scheduled degree.
pub fn verify_multi(sys: &ControlAffineSystem, cands: &[CandidateCbf], opts: &VerifierOptions) -> Result<VerificationOutcome, VerifyError> {
    opts.validate()?;
    if cands.is_empty() {
        return Err(VerifyError::NoCandidates);
    }
    for c in cands {
        c.check(sys)?;
    }
    let start = Instant::now();
    let n = sys.nstates();
    let mut diagnostics = Vec::new();
    let gens = emptiness_generators(cands, n, opts, &mut diagnostics)?;

    let singles = || -> Vec<Result<SingleSweep, VerifyError>> {
        if opts.parallel {
            use rayon::prelude::*;
            cands.par_iter().enumerate().map(|(i, c)| sweep_single(sys, c, i, opts)).collect()
        } else {
            cands.iter().enumerate().map(|(i, c)| sweep_single(sys, c, i, opts)).collect()
        }
    };
    let empty = || sweep_emptiness(&gens, n, opts);
    let (singles, empty) = if opts.parallel {
        rayon::join(singles, empty)
    } else {
        (singles(), empty())
    };

    let mut runs = Vec::new();
    let mut certificates = Vec::with_capacity(cands.len());
    for s in singles {
        let s = s?;
        runs.extend(s.runs);
        diagnostics.extend(s.diagnostics);
        certificates.push(s.certificate);
    }
    let empty = empty?;
    runs.extend(empty.runs);
    diagnostics.extend(empty.diagnostics);

    let verdict = if empty.certificate.is_some() {
        Verdict::EmptinessCertified
    } else if certificates.iter().all(Option::is_some) && empty.all_refuted {
        Verdict::MultiVerified
    } else {
        Verdict::MultiInconclusive
    };
    Ok(VerificationOutcome {
        verdict,
        runs,
        certificates,
        emptiness: empty.certificate,
        diagnostics,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyring::monomial_basis;

    fn poly1(coeffs: &[f64]) -> Polynomial {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(e, &c)| (Monomial::new(&[e as u32]).unwrap(), c));
        Polynomial::from_terms(1, terms).unwrap()
    }

    fn scalar_system(f: Polynomial, g: Polynomial) -> ControlAffineSystem {
        ControlAffineSystem::new(PolyMatrix::column(vec![f], 1).unwrap(), PolyMatrix::new(1, 1, 1, vec![g]).unwrap()).unwrap()
    }

    #[test]
    fn candidate_caches_lie_derivatives() {
        let sys = scalar_system(poly1(&[0.0, 1.0]), poly1(&[1.0]));
        let c = CandidateCbf::new(&sys, poly1(&[1.0, 0.0, -1.0])).unwrap();
        assert_eq!(c.lf_b(), &poly1(&[0.0, 0.0, -2.0]));
        assert_eq!(c.lg_b().get(0, 0), &poly1(&[0.0, -2.0]));
    }

    #[test]
    fn system_dimension_checks() {
        let f = PolyMatrix::column(vec![Polynomial::zero(2)], 2).unwrap();
        let g = PolyMatrix::zeros(1, 1, 2);
        assert!(ControlAffineSystem::new(f, g).is_err());
    }

    #[test]
    fn full_layout_size() {
        let sys = scalar_system(poly1(&[0.0, 1.0]), poly1(&[1.0]));
        let c = CandidateCbf::new(&sys, poly1(&[1.0, 0.0, -1.0])).unwrap();
        let built = assemble_single_lp(&sys, &c, 1, 2, 2, false).unwrap();
        assert_eq!(built.layout.decision_count, 36);
        let names: Vec<&str> = built.lp.blocks.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["p10", "p20", "p1[1]", "p2[1]", "s1.Q", "s1.tau", "s2.Q", "s2.tau"]);
    }

    #[test]
    fn zero_power_convention() {
        let sys = scalar_system(Polynomial::zero(1), poly1(&[1.0]));
        let c = CandidateCbf::new(&sys, poly1(&[1.0, 0.0, -1.0])).unwrap();
        let cert = SingleCertificate {
            a: 0,
            deg_s: 0,
            deg_p: 1,
            s1: GramCertificate::empty(),
            s2: GramCertificate {
                basis: monomial_basis(1, 0),
                gram: vec![vec![1.0]],
            },
            p10: Polynomial::zero(1),
            p20: Polynomial::constant(1, -2.0),
            p1: vec![Polynomial::zero(1)],
            p2: vec![poly1(&[0.0, 1.0])],
            residual: 0.0,
        };
        // -(1 + (1 - x^2)(-2) + (-2x)(x)) - 1 = 0
        assert_eq!(certificate_residual(&cert, &c).unwrap(), 0.0);
        // With a = 1 the target term is 0^2 = 0 and h2 = -1 is left over.
        let one = SingleCertificate { a: 1, ..cert };
        assert_eq!(certificate_residual(&one, &c).unwrap(), 1.0);
    }

    #[test]
    fn archimedean_augmentation_and_detection() {
        let gens = augment_archimedean(&[], 1, 4).unwrap();
        assert_eq!(gens, vec![poly1(&[4.0, 0.0, -1.0])]);
        assert_eq!(native_archimedean(&[poly1(&[1.0, 0.0, -1.0])], 1), Some((0, 1.0)));
        assert_eq!(native_archimedean(&[poly1(&[-1.0, 0.0, 1.0])], 1), None);
        assert!(augment_archimedean(&[], 1, 0).is_err());
    }

    #[test]
    fn emptiness_residual_of_hand_certificate() {
        let gens = [poly1(&[1.0, 0.0, -1.0]), poly1(&[-4.0, 0.0, 1.0])];
        let scalar = |v: f64| GramCertificate {
            basis: monomial_basis(1, 0),
            gram: vec![vec![v]],
        };
        let r = emptiness_residual(&[scalar(2.0), scalar(1.0), scalar(1.0)], &gens, 1).unwrap();
        assert_eq!(r, 0.0);
        assert!(emptiness_residual(&[scalar(2.0)], &gens, 1).is_err());
    }

    #[test]
    fn balanced_degrees() {
        let sys = scalar_system(Polynomial::zero(1), poly1(&[1.0]));
        let c = CandidateCbf::new(&sys, poly1(&[1.0, 0.0, -1.0])).unwrap();
        assert_eq!(balanced_deg_p(&c, 0, 1), 1);
        let sys = scalar_system(poly1(&[-1.0]), Polynomial::zero(1));
        let c = CandidateCbf::new(&sys, poly1(&[0.0, 1.0])).unwrap();
        assert_eq!(balanced_deg_p(&c, 1, 0), 0);
    }
}
