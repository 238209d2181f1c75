//! Problem files and reports.
//!
//! A problem file is JSON:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "variables": ["x"],
//!   "inputs": 1,
//!   "f": ["0"],
//!   "g": [["1"]],
//!   "candidates": ["1 - x^2"],
//!   "options": { "a_values": [0, 1], "archimedean_c": 4 }
//! }
//! ```
//!
//! Polynomials are written as signed sums of terms; a term is a product of
//! numbers and powers `name^k` joined by `*`. Multiplication is always
//! explicit.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::polyring::{Monomial, PolyError, PolyMatrix, Polynomial, MAX_EXPONENT};
use crate::satbench::{build_cw_system, inspection_barrier, state_names, BenchReport, CwParams, SatError};
use crate::verifier::{
    CandidateCbf, ControlAffineSystem, GramCertificate, LpKind, SingleCertificate, VerificationOutcome, VerifierOptions,
    VerifyError,
};

pub const PROBLEM_SCHEMA: u32 = 1;
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid JSON at '{path}': {message}")]
    Json { path: String, message: String },
    #[error("'{path}': {message}")]
    Schema { path: String, message: String },
    #[error("'{path}': {source}")]
    Polynomial {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Satellite(#[from] SatError),
}

fn schema_error(path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
}

struct Lexed {
    token: Token,
    line: usize,
    column: usize,
    /// Whitespace separates this token from the previous one.
    spaced: bool,
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    let mut spaced = false;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, column);
        let err = |message: String| ParseError {
            line: tl,
            column: tc,
            message,
        };
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            spaced = true;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            spaced = true;
            continue;
        }
        let start = i;
        let token = match c {
            '+' => {
                i += 1;
                Token::Plus
            }
            '-' => {
                i += 1;
                Token::Minus
            }
            '*' => {
                i += 1;
                Token::Star
            }
            '^' => {
                i += 1;
                Token::Caret
            }
            _ if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| err(format!("malformed number '{s}'")))?;
                Token::Num(v)
            }
            _ if c.is_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Token::Ident(chars[start..i].iter().collect())
            }
            _ => return Err(err(format!("unexpected character '{c}'"))),
        };
        column += i - start;
        out.push(Lexed {
            token,
            line: tl,
            column: tc,
            spaced,
        });
        spaced = false;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Lexed>,
    pos: usize,
    vars: &'a [String],
    end: (usize, usize),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Lexed> {
        self.tokens.get(self.pos)
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = self.peek().map_or(self.end, |t| (t.line, t.column));
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.vars.len();
        if self.tokens.is_empty() {
            return Err(self.error_here("empty polynomial"));
        }
        let mut acc = Polynomial::zero(n);
        let mut first = true;
        loop {
            let sign = match self.peek().map(|t| &t.token) {
                Some(Token::Plus) => {
                    self.pos += 1;
                    1.0
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    -1.0
                }
                None if first => return Err(self.error_here("empty polynomial")),
                None => return Ok(acc),
                _ if first => 1.0,
                Some(_) => return Err(self.error_here("expected '+' or '-'")),
            };
            first = false;
            let term = self.term()?;
            acc = acc.try_add(&term.scale(sign)).expect("same ring");
        }
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.vars.len();
        let mut coeff = 1.0;
        let mut exps = vec![0u32; n];
        loop {
            self.factor(&mut coeff, &mut exps)?;
            match self.peek() {
                Some(t) if t.token == Token::Star => self.pos += 1,
                Some(t) if matches!(t.token, Token::Num(_) | Token::Ident(_)) => {
                    let message = if t.spaced {
                        "expected an operator between factors"
                    } else {
                        "implicit multiplication is not supported; write '*'"
                    };
                    return Err(self.error_here(message));
                }
                _ => break,
            }
        }
        let m = Monomial::new(&exps).map_err(|e| self.error_here(e.to_string()))?;
        Ok(Polynomial::monomial(m, coeff))
    }

    fn factor(&mut self, coeff: &mut f64, exps: &mut [u32]) -> Result<(), ParseError> {
        let Some(t) = self.peek() else {
            return Err(self.error_here("expected a number or a variable"));
        };
        match &t.token {
            Token::Num(v) => {
                *coeff *= v;
                self.pos += 1;
            }
            Token::Ident(name) => {
                let Some(k) = self.vars.iter().position(|v| v == name) else {
                    return Err(self.error_here(format!("unknown variable {name}")));
                };
                self.pos += 1;
                let mut e = 1u32;
                if self.peek().map(|t| &t.token) == Some(&Token::Caret) {
                    self.pos += 1;
                    e = self.exponent()?;
                }
                exps[k] = exps[k].saturating_add(e).min(MAX_EXPONENT + 1);
            }
            _ => return Err(self.error_here("expected a number or a variable")),
        }
        Ok(())
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        let malformed = |p: &Self| p.error_here("malformed exponent: expected an integer >= 1");
        let Some(Lexed {
            token: Token::Num(v), ..
        }) = self.peek()
        else {
            return Err(malformed(self));
        };
        let v = *v;
        if v.fract() != 0.0 || v < 1.0 {
            return Err(malformed(self));
        }
        if v > f64::from(MAX_EXPONENT) {
            return Err(self.error_here(format!("exponent {v} exceeds {MAX_EXPONENT}")));
        }
        self.pos += 1;
        Ok(v as u32)
    }
}

/// Parses a polynomial over the variables `vars` (index order).
pub fn parse_polynomial(text: &str, vars: &[String]) -> Result<Polynomial, ParseError> {
    let tokens = lex(text)?;
    let end = text
        .lines()
        .enumerate()
        .last()
        .map_or((1, 1), |(i, l)| (i + 1, l.chars().count() + 1));
    let mut p = Parser {
        tokens,
        pos: 0,
        vars,
        end,
    };
    p.expr()
}

/// Inverse of [`parse_polynomial`].
pub fn print_polynomial(p: &Polynomial, vars: &[String]) -> String {
    p.display_with(vars)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_values: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deg_s: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deg_p: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archimedean_c: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feas_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_support: Option<bool>,
}

impl OptionsDocument {
    /// Verifier defaults overridden by the fields that are present.
    pub fn to_options(&self) -> VerifierOptions {
        let mut o = VerifierOptions::default();
        if let Some(v) = &self.a_values {
            o.a_values = v.clone();
        }
        if self.deg_s.is_some() {
            o.deg_s = self.deg_s.clone();
        }
        if self.deg_p.is_some() {
            o.deg_p = self.deg_p.clone();
        }
        o.archimedean_c = self.archimedean_c;
        if let Some(v) = self.max_iters {
            o.lp.max_iters = v;
        }
        if let Some(v) = self.feas_tol {
            o.lp.feas_tol = v;
        }
        if let Some(v) = self.pivot_tol {
            o.lp.pivot_tol = v;
        }
        if let Some(v) = self.parallel {
            o.parallel = v;
        }
        if let Some(v) = self.reduce_support {
            o.reduce_support = v;
        }
        o
    }
}

/// Problem file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub schema: u32,
    pub variables: Vec<String>,
    pub inputs: usize,
    pub f: Vec<String>,
    pub g: Vec<Vec<String>>,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub options: OptionsDocument,
}

impl ProblemDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

/// Fully parsed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub variables: Vec<String>,
    pub system: ControlAffineSystem,
    pub candidates: Vec<Polynomial>,
    pub options: VerifierOptions,
}

impl ProblemSpec {
    pub fn nstates(&self) -> usize {
        self.variables.len()
    }

    pub fn cbfs(&self) -> Result<Vec<CandidateCbf>, VerifyError> {
        self.candidates
            .iter()
            .map(|b| CandidateCbf::new(&self.system, b.clone()))
            .collect()
    }

    /// Document that loads back to this problem.
    pub fn to_document(&self) -> ProblemDocument {
        let vars = &self.variables;
        let print = |p: &Polynomial| print_polynomial(p, vars);
        let g = self.system.g();
        let o = &self.options;
        let d = VerifierOptions::default();
        ProblemDocument {
            schema: PROBLEM_SCHEMA,
            variables: vars.clone(),
            inputs: self.system.ninputs(),
            f: self.system.f().entries().iter().map(print).collect(),
            g: (0..g.rows()).map(|i| g.row(i).iter().map(print).collect()).collect(),
            candidates: self.candidates.iter().map(print).collect(),
            options: OptionsDocument {
                a_values: (o.a_values != d.a_values).then(|| o.a_values.clone()),
                deg_s: o.deg_s.clone(),
                deg_p: o.deg_p.clone(),
                archimedean_c: o.archimedean_c,
                max_iters: (o.lp.max_iters != d.lp.max_iters).then_some(o.lp.max_iters),
                feas_tol: (o.lp.feas_tol != d.lp.feas_tol).then_some(o.lp.feas_tol),
                pivot_tol: (o.lp.pivot_tol != d.lp.pivot_tol).then_some(o.lp.pivot_tol),
                parallel: (o.parallel != d.parallel).then_some(o.parallel),
                reduce_support: (o.reduce_support != d.reduce_support).then_some(o.reduce_support),
            },
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn parse_at(text: &str, vars: &[String], path: String) -> Result<Polynomial, SpecError> {
    parse_polynomial(text, vars).map_err(|source| SpecError::Polynomial { path, source })
}

/// Parses and checks a problem document.
pub fn load_problem(text: &str) -> Result<ProblemSpec, SpecError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ProblemDocument = serde_path_to_error::deserialize(de).map_err(|e| SpecError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    problem_from_document(&doc)
}

pub fn problem_from_document(doc: &ProblemDocument) -> Result<ProblemSpec, SpecError> {
    if doc.schema != PROBLEM_SCHEMA {
        return Err(schema_error("schema", format!("unsupported schema version {}; expected {PROBLEM_SCHEMA}", doc.schema)));
    }
    let vars = &doc.variables;
    for (i, v) in vars.iter().enumerate() {
        if !is_identifier(v) {
            return Err(schema_error(format!("variables[{i}]"), format!("'{v}' is not an identifier")));
        }
        if vars[..i].contains(v) {
            return Err(schema_error(format!("variables[{i}]"), format!("duplicate variable '{v}'")));
        }
    }
    let n = vars.len();
    let m = doc.inputs;
    if doc.f.len() != n {
        return Err(schema_error("f", format!("expected {n} entries (one per variable), found {}", doc.f.len())));
    }
    if doc.g.len() != n {
        return Err(schema_error("g", format!("expected {n} rows, found {}", doc.g.len())));
    }
    if let Some((i, row)) = doc.g.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(schema_error(format!("g[{i}]"), format!("expected {m} entries, found {}", row.len())));
    }
    if doc.candidates.is_empty() {
        return Err(schema_error("candidates", "at least one candidate is required"));
    }
    let f = doc
        .f
        .iter()
        .enumerate()
        .map(|(i, s)| parse_at(s, vars, format!("f[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut g = Vec::with_capacity(n * m);
    for (i, row) in doc.g.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            g.push(parse_at(s, vars, format!("g[{i}][{j}]"))?);
        }
    }
    let candidates = doc
        .candidates
        .iter()
        .enumerate()
        .map(|(i, s)| parse_at(s, vars, format!("candidates[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let options = doc.options.to_options();
    options.validate().map_err(|e| schema_error("options", e.to_string()))?;
    let system = ControlAffineSystem::new(PolyMatrix::column(f, n)?, PolyMatrix::new(n, m, n, g)?)?;
    Ok(ProblemSpec {
        variables: vars.clone(),
        system,
        candidates,
        options,
    })
}

/// Problem document for the satellite benchmark with `params`.
pub fn satellite_problem(params: &CwParams) -> Result<ProblemDocument, SpecError> {
    let sys = build_cw_system(params)?;
    let candidates = (1..=params.chasers())
        .map(|i| inspection_barrier(params, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProblemSpec {
        variables: state_names(params.chasers()),
        system: sys,
        candidates,
        options: VerifierOptions::default(),
    }
    .to_document())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

fn var_names(names: &[String], nvars: usize) -> Vec<String> {
    (0..nvars)
        .map(|i| names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1)))
        .collect()
}

fn poly_json(p: &Polynomial, names: &[String]) -> Value {
    let terms: Vec<Value> = p
        .terms()
        .map(|(m, c)| {
            json!({
                "monomial": m.display_with(names),
                "exponents": m.exponents(),
                "coefficient": c,
            })
        })
        .collect();
    json!({ "text": p.display_with(names), "terms": terms })
}

fn gram_json(g: &GramCertificate, names: &[String]) -> Value {
    json!({
        "basis": g.basis.iter().map(|m| m.display_with(names)).collect::<Vec<_>>(),
        "gram": g.gram,
    })
}

fn single_json(idx: usize, c: &SingleCertificate, names: &[String]) -> Value {
    let polys = |ps: &[Polynomial]| ps.iter().map(|p| poly_json(p, names)).collect::<Vec<_>>();
    json!({
        "candidate": idx,
        "a": c.a,
        "deg_s": c.deg_s,
        "deg_p": c.deg_p,
        "s1": gram_json(&c.s1, names),
        "s2": gram_json(&c.s2, names),
        "p10": poly_json(&c.p10, names),
        "p20": poly_json(&c.p20, names),
        "p1": polys(&c.p1),
        "p2": polys(&c.p2),
        "residual": c.residual,
    })
}

fn certificate_json(out: &VerificationOutcome, names: &[String]) -> Value {
    let singles: Vec<Value> = out
        .certificates
        .iter()
        .enumerate()
        .map(|(i, c)| c.as_ref().map_or(Value::Null, |c| single_json(i, c, names)))
        .collect();
    let emptiness = out.emptiness.as_ref().map_or(Value::Null, |e| {
        json!({
            "deg_s": e.deg_s,
            "generators": e.generators.iter().map(|g| poly_json(g, names)).collect::<Vec<_>>(),
            "multipliers": e.multipliers.iter().map(|g| gram_json(g, names)).collect::<Vec<_>>(),
            "residual": e.residual,
        })
    });
    if emptiness.is_null() && singles.iter().all(Value::is_null) {
        return Value::Null;
    }
    json!({ "candidates": singles, "emptiness": emptiness })
}

/// Largest residual among attached certificates.
pub fn max_residual(out: &VerificationOutcome) -> Option<f64> {
    out.certificates
        .iter()
        .flatten()
        .map(|c| c.residual)
        .chain(out.emptiness.as_ref().map(|e| e.residual))
        .reduce(f64::max)
}

/// JSON report. Object keys are sorted, so equal outcomes give equal text.
pub fn report_json(out: &VerificationOutcome, names: &[String]) -> Value {
    let nvars = out
        .certificates
        .iter()
        .flatten()
        .map(|c| c.p20.nvars())
        .chain(out.emptiness.as_ref().and_then(|e| e.generators.first()).map(Polynomial::nvars))
        .next()
        .unwrap_or(names.len());
    let names = var_names(names, nvars);
    let runs: Vec<Value> = out
        .runs
        .iter()
        .map(|r| {
            let mut v = json!({
                "lp": r.kind.label(),
                "status": r.status,
                "eq_rows": r.eq_rows,
                "ub_rows": r.ub_rows,
                "rows": r.rows(),
                "cols": r.cols,
                "iterations": r.iterations,
                "seconds": r.seconds,
                "farkas_margin": r.farkas_margin,
                "farkas_valid": r.farkas_valid,
                "residual": r.residual,
                "accepted": r.accepted,
            });
            let extra = match r.kind {
                LpKind::Single { candidate, a, deg_s, deg_p } => {
                    json!({"kind": "single", "candidate": candidate, "a": a, "deg_s": deg_s, "deg_p": deg_p})
                }
                LpKind::Emptiness { deg_s } => json!({"kind": "emptiness", "deg_s": deg_s}),
            };
            if let (Value::Object(base), Value::Object(extra)) = (&mut v, extra) {
                base.extend(extra);
            }
            v
        })
        .collect();
    json!({
        "report_schema": REPORT_SCHEMA,
        "verdict": out.verdict.as_str(),
        "elapsed_seconds": out.elapsed.as_secs_f64(),
        "runs": runs,
        "certificate": certificate_json(out, &names),
        "residual": max_residual(out),
        "diagnostics": out.diagnostics,
    })
}

pub fn report_text(out: &VerificationOutcome) -> String {
    let mut s = format!("verdict: {}\nelapsed: {:.3} s\nprograms:\n", out.verdict, out.elapsed.as_secs_f64());
    for r in &out.runs {
        s.push_str(&format!(
            "  {:<40} {:<16} rows {:>6}  cols {:>6}  pivots {:>6}  {:>8.3} s",
            r.kind.label(),
            r.status,
            r.rows(),
            r.cols,
            r.iterations,
            r.seconds
        ));
        if let Some(res) = r.residual {
            s.push_str(&format!("  residual {res:.3e}"));
        }
        s.push('\n');
    }
    match max_residual(out) {
        Some(r) => s.push_str(&format!("certificate residual: {r:.3e}\n")),
        None => s.push_str("certificate: none\n"),
    }
    if !out.diagnostics.is_empty() {
        s.push_str("diagnostics:\n");
        for d in &out.diagnostics {
            s.push_str(&format!("  {d}\n"));
        }
    }
    s
}

pub fn write_report(out: &VerificationOutcome, names: &[String], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report_json(out, names)).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => report_text(out),
    }
}

/// Sets every timing field to zero.
pub fn zero_timings(out: &mut VerificationOutcome) {
    out.elapsed = std::time::Duration::ZERO;
    for r in &mut out.runs {
        r.seconds = 0.0;
    }
}

pub fn bench_report_json(report: &BenchReport) -> Value {
    let p = &report.params;
    json!({
        "report_schema": REPORT_SCHEMA,
        "benchmark": "satellite",
        "params": {
            "mean_motion": p.mean_motion,
            "masses": p.masses,
            "thrusts": p.thrusts,
            "r_t": p.r_t,
        },
        "a_values": report.a_values,
        "rows": report.rows.iter().map(|r| json!({
            "L": r.chasers,
            "verdict": r.verdict.map(|v| v.as_str()),
            "error": r.error,
            "seconds": r.seconds,
            "lp_rows": r.lp_rows,
            "lp_cols": r.lp_cols,
            "schedule": r.schedule,
        })).collect::<Vec<_>>(),
    })
}

pub fn bench_report_text(report: &BenchReport) -> String {
    let mut s = format!("{:>3}  {:<18} {:>10}  {:>8}  {:>8}\n", "L", "verdict", "seconds", "lp_rows", "lp_cols");
    for r in &report.rows {
        let verdict = r.verdict.map_or("error", |v| v.as_str());
        s.push_str(&format!(
            "{:>3}  {:<18} {:>10.3}  {:>8}  {:>8}\n",
            r.chasers, verdict, r.seconds, r.lp_rows, r.lp_cols
        ));
        if let Some(e) = &r.error {
            s.push_str(&format!("     {e}\n"));
        }
    }
    s
}

pub fn write_bench_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&bench_report_json(report)).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => bench_report_text(report),
    }
}

pub fn zero_bench_timings(report: &mut BenchReport) {
    for r in &mut report.rows {
        r.seconds = 0.0;
    }
}
