//! Certifying control barrier functions of polynomial control-affine
//! systems with diagonally-dominant sum-of-squares (DSOS) programs.
//!
//! Every certificate search is a linear program, solved by the built-in
//! simplex or exported in CPLEX LP format.
//!
//! * [`polyring`]: sparse multivariate polynomials and Lie derivatives.
//! * [`affinegram`]: polynomials with LP-variable coefficients, DSOS Gram
//!   matrices and their linear constraints.
//! * [`lpsolve`]: feasibility LPs, phase-1 simplex, LP text format.
//! * [`verifier`]: single- and multi-candidate verification.
//! * [`satbench`]: satellite-inspection benchmark.
//! * [`specio`]: problem files and reports.

pub mod affinegram;
pub mod lpsolve;
pub mod polyring;
pub mod satbench;
pub mod specio;
pub mod verifier;

pub use polyring::{Monomial, PolyMatrix, Polynomial};
pub use verifier::{
    emptiness_check, verify_multi, verify_single, CandidateCbf, ControlAffineSystem, Verdict, VerificationOutcome,
    VerifierOptions,
};
