//! Satellite-inspection benchmark.
//!
//! `L` chasers move about a target under the linearized Clohessy-Wiltshire
//! equations. Chaser `i` has state `[x, y, z, vx, vy, vz]` at indices
//! `6i..6i+6` and thrust inputs `[Fx, Fy, Fz]` at `3i..3i+3`. Its candidate
//! keeps it outside a sphere of radius `R_t`, with a velocity margin
//! weighted by mass over thrust:
//!
//! ```text
//! b_i = |r_i|^2 + (m_i / T_i) |v_i|^2 - R_t^2
//! ```
//!
//! Units are taken as given (km, kg, N, rad/s) and mixed without
//! normalization, so `b_i` is not dimensionally consistent.

use std::time::Instant;

use thiserror::Error;

use crate::polyring::{Monomial, PolyError, PolyMatrix, Polynomial};
use crate::verifier::{
    verify_multi, verify_single, CandidateCbf, ControlAffineSystem, VerificationOutcome, VerifierOptions,
    Verdict, VerifyError,
};

#[derive(Debug, Error)]
pub enum SatError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("chaser {index} out of range 1..={chasers}")]
    IndexOutOfRange { index: usize, chasers: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwParams {
    /// rad/s
    pub mean_motion: f64,
    /// kg, one per chaser.
    pub masses: Vec<f64>,
    /// N, one per chaser.
    pub thrusts: Vec<f64>,
    /// km
    pub r_t: f64,
}

impl CwParams {
    /// 3U cubesats (2 kg, 0.5 N) in low earth orbit (n = 0.001 rad/s)
    /// inspecting at 0.5 km.
    pub fn cubesat(chasers: usize) -> Self {
        CwParams {
            mean_motion: 0.001,
            masses: vec![2.0; chasers],
            thrusts: vec![0.5; chasers],
            r_t: 0.5,
        }
    }

    pub fn chasers(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<(), SatError> {
        let bad = |what: &str| Err(SatError::InvalidParams(what.to_string()));
        if self.masses.len() != self.thrusts.len() {
            return bad("masses and thrusts differ in length");
        }
        if self.masses.is_empty() {
            return bad("at least one chaser is required");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.mean_motion) || !positive(self.r_t) {
            return bad("mean motion and R_t must be positive");
        }
        if !self.masses.iter().chain(&self.thrusts).all(|&v| positive(v)) {
            return bad("masses and thrusts must be positive");
        }
        Ok(())
    }

    /// Same orbit and radius with `chasers` chasers; chasers past the end
    /// of the lists reuse the last mass and thrust.
    pub fn with_chasers(&self, chasers: usize) -> Self {
        let pick = |v: &[f64], i: usize| v.get(i).or(v.last()).copied().unwrap_or(f64::NAN);
        CwParams {
            mean_motion: self.mean_motion,
            masses: (0..chasers).map(|i| pick(&self.masses, i)).collect(),
            thrusts: (0..chasers).map(|i| pick(&self.thrusts, i)).collect(),
            r_t: self.r_t,
        }
    }
}

/// `x1, y1, z1, vx1, vy1, vz1, x2, ...`
pub fn state_names(chasers: usize) -> Vec<String> {
    (1..=chasers)
        .flat_map(|i| ["x", "y", "z", "vx", "vy", "vz"].map(|s| format!("{s}{i}")))
        .collect()
}

fn linear(nvars: usize, terms: &[(usize, f64)], constant: f64) -> Result<Polynomial, PolyError> {
    let mut all = vec![(Monomial::one(nvars), constant)];
    for &(k, c) in terms {
        all.push((Monomial::var(nvars, k)?, c));
    }
    Polynomial::from_terms(nvars, all)
}

/// Drift and input matrix of `L` chasers:
///
/// ```text
/// x'' = 2n y' + 3n^2 + Fx/m    y'' = -2n x' + Fy/m    z'' = -n^2 z + Fz/m
/// ```
pub fn build_cw_system(p: &CwParams) -> Result<ControlAffineSystem, SatError> {
    p.validate()?;
    let l = p.chasers();
    let nv = 6 * l;
    let n = p.mean_motion;
    let mut f = Vec::with_capacity(nv);
    let mut g = PolyMatrix::zeros(nv, 3 * l, nv);
    for i in 0..l {
        let s = 6 * i;
        for k in 0..3 {
            f.push(linear(nv, &[(s + 3 + k, 1.0)], 0.0)?);
        }
        f.push(linear(nv, &[(s + 4, 2.0 * n)], 3.0 * n * n)?);
        f.push(linear(nv, &[(s + 3, -2.0 * n)], 0.0)?);
        f.push(linear(nv, &[(s + 2, -n * n)], 0.0)?);
        for k in 0..3 {
            g.set(s + 3 + k, 3 * i + k, Polynomial::constant(nv, 1.0 / p.masses[i]))?;
        }
    }
    Ok(ControlAffineSystem::new(PolyMatrix::column(f, nv)?, g)?)
}

/// `b_i` for chaser `index` (1-based).
pub fn inspection_barrier(p: &CwParams, index: usize) -> Result<Polynomial, SatError> {
    p.validate()?;
    let l = p.chasers();
    if index == 0 || index > l {
        return Err(SatError::IndexOutOfRange { index, chasers: l });
    }
    let nv = 6 * l;
    let s = 6 * (index - 1);
    let w = p.masses[index - 1] / p.thrusts[index - 1];
    let mut terms = vec![(Monomial::one(nv), -p.r_t * p.r_t)];
    for k in 0..6 {
        let mut e = vec![0u32; nv];
        e[s + k] = 2;
        terms.push((Monomial::new(&e)?, if k < 3 { 1.0 } else { w }));
    }
    Ok(Polynomial::from_terms(nv, terms)?)
}

pub fn build_inspection_cbf(p: &CwParams, sys: &ControlAffineSystem, index: usize) -> Result<CandidateCbf, SatError> {
    Ok(CandidateCbf::new(sys, inspection_barrier(p, index)?)?)
}

/// One row of the scaling study.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub chasers: usize,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub seconds: f64,
    /// Size of the largest program solved.
    pub lp_rows: usize,
    pub lp_cols: usize,
    /// Programs solved, in order.
    pub schedule: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub params: CwParams,
    pub a_values: Vec<u32>,
    pub rows: Vec<BenchRow>,
}

/// Verifies one configuration. A single chaser needs only its own
/// program; several chasers also need the joint emptiness check.
pub fn verify_chasers(p: &CwParams, opts: &VerifierOptions) -> Result<VerificationOutcome, SatError> {
    let sys = build_cw_system(p)?;
    let cands = (1..=p.chasers())
        .map(|i| build_inspection_cbf(p, &sys, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if cands.len() == 1 {
        verify_single(&sys, &cands[0], opts)?
    } else {
        verify_multi(&sys, &cands, opts)?
    })
}

/// Runs `L = 1..=max_chasers` in order. Errors are recorded in their row
/// and do not stop the sweep.
pub fn run_benchmark(template: &CwParams, max_chasers: usize, opts: &VerifierOptions) -> Result<BenchReport, SatError> {
    if max_chasers == 0 {
        return Err(SatError::InvalidParams("the number of chasers must be at least 1".into()));
    }
    template.validate()?;
    let mut rows = Vec::with_capacity(max_chasers);
    for l in 1..=max_chasers {
        let p = template.with_chasers(l);
        let start = Instant::now();
        let row = match verify_chasers(&p, opts) {
            Ok(out) => {
                let (lp_rows, lp_cols) = out.largest_lp().map_or((0, 0), |r| (r.rows(), r.cols));
                BenchRow {
                    chasers: l,
                    verdict: Some(out.verdict),
                    error: None,
                    seconds: start.elapsed().as_secs_f64(),
                    lp_rows,
                    lp_cols,
                    schedule: out.runs.iter().map(|r| r.kind.label()).collect(),
                }
            }
            Err(e) => BenchRow {
                chasers: l,
                verdict: None,
                error: Some(e.to_string()),
                seconds: start.elapsed().as_secs_f64(),
                lp_rows: 0,
                lp_cols: 0,
                schedule: Vec::new(),
            },
        };
        log::info!("L={l}: {:?} in {:.2}s", row.verdict, row.seconds);
        rows.push(row);
    }
    Ok(BenchReport {
        params: template.clone(),
        a_values: opts.a_values.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_at_origin() {
        let p = CwParams::cubesat(2);
        let sys = build_cw_system(&p).unwrap();
        let zero = vec![0.0; 12];
        let f: Vec<f64> = sys.f().entries().iter().map(|e| e.evaluate(&zero).unwrap()).collect();
        let n2 = 0.001f64 * 0.001;
        assert_eq!(f, [0.0, 0.0, 0.0, 3.0 * n2, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0 * n2, 0.0, 0.0]);
    }

    #[test]
    fn input_matrix_structure() {
        let sys = build_cw_system(&CwParams::cubesat(3)).unwrap();
        let nonzero: Vec<_> = sys.g().entries().iter().filter(|e| !e.is_zero()).collect();
        assert_eq!(nonzero.len(), 9);
        assert!(nonzero.iter().all(|e| e.degree() == Some(0) && e.coefficient(&Monomial::one(18)) == 0.5));
    }

    #[test]
    fn barrier_coefficients() {
        let p = CwParams::cubesat(1);
        let b = inspection_barrier(&p, 1).unwrap();
        assert_eq!(b.evaluate(&[0.0; 6]).unwrap(), -0.25);
        assert_eq!(b.evaluate(&[0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(b.evaluate(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), 3.75);
        assert!(matches!(inspection_barrier(&p, 2), Err(SatError::IndexOutOfRange { index: 2, chasers: 1 })));
    }

    #[test]
    fn params_validation() {
        assert!(CwParams::cubesat(0).validate().is_err());
        let mut p = CwParams::cubesat(1);
        p.r_t = -1.0;
        assert!(p.validate().is_err());
        let q = CwParams::cubesat(1).with_chasers(3);
        assert_eq!(q.masses, [2.0; 3]);
    }
}
