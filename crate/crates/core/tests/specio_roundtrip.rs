mod common;

use std::path::Path;

use dsos_cbf::polyring::{Monomial, Polynomial};
use dsos_cbf::satbench::CwParams;
use dsos_cbf::specio::{
    load_problem, parse_polynomial, print_polynomial, report_json, satellite_problem, write_report, zero_timings,
    ReportFormat, SpecError,
};
use dsos_cbf::{verify_multi, verify_single, Verdict};
use proptest::prelude::*;

use common::names;

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-20i32..=20).prop_map(f64::from),
        -1e3f64..1e3,
        (-9i32..=9, -12i32..=12).prop_map(|(m, e)| m as f64 * 10f64.powi(e)),
    ]
}

fn polynomial() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::array::uniform3(0u32..=4), coefficient()), 0..8)
        .prop_map(|terms| Polynomial::from_terms(3, terms.into_iter().map(|(e, c)| (Monomial::new(&e).unwrap(), c))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_then_parse_is_identity(p in polynomial()) {
        let vars = names(&["x", "y", "z"]);
        let text = print_polynomial(&p, &vars);
        let back = parse_polynomial(&text, &vars).unwrap();
        prop_assert_eq!(back, p, "text {}", text);
    }
}

#[test]
fn parse_errors_point_at_the_problem() {
    let vars = names(&["x", "y"]);
    let cases = [
        ("2x", "implicit multiplication"),
        ("x + w", "unknown variable w"),
        ("x^", "exponent"),
        ("x^1.5", "exponent"),
        ("", "empty"),
        ("x + * y", ""),
    ];
    for (text, needle) in cases {
        let err = parse_polynomial(text, &vars).unwrap_err();
        assert!(err.to_string().contains(needle), "{text:?}: {err}");
        assert!(err.line == 1);
    }
    let err = parse_polynomial("x +\n  2y", &vars).unwrap_err();
    assert_eq!((err.line, err.column), (2, 4));
}

#[test]
fn whitespace_and_signs() {
    let vars = names(&["x", "y"]);
    let a = parse_polynomial("  -x^2*y +3 + 2 * y ", &vars).unwrap();
    let b = parse_polynomial("3 + 2*y - x^2*y", &vars).unwrap();
    assert_eq!(a, b);
    assert_eq!(parse_polynomial("x^1", &vars).unwrap(), parse_polynomial("x", &vars).unwrap());
    // One sign per term.
    assert!(parse_polynomial("3 - -2*y", &vars).is_err());
}

#[test]
fn satellite_document_round_trip() {
    let doc = satellite_problem(&CwParams::cubesat(2)).unwrap();
    let spec = load_problem(&doc.to_json()).unwrap();
    assert_eq!(spec.nstates(), 12);
    assert_eq!(spec.candidates.len(), 2);
    assert_eq!(spec.to_document(), doc);
    let again = load_problem(&spec.to_document().to_json()).unwrap();
    assert_eq!(again, spec);
}

#[test]
fn schema_errors_name_the_field() {
    let bad_field = r#"{"schema": 1, "variables": ["x"], "inputs": 1, "f": ["0"], "g": [["1"]], "candidates": ["x"], "extra": 1}"#;
    assert!(matches!(load_problem(bad_field), Err(SpecError::Json { .. })));
    let wrong_f = r#"{"schema": 1, "variables": ["x", "y"], "inputs": 1, "f": ["0"], "g": [["1"], ["0"]], "candidates": ["x"]}"#;
    let err = load_problem(wrong_f).unwrap_err();
    assert!(err.to_string().contains('f'), "{err}");
    let bad_poly = r#"{"schema": 1, "variables": ["x"], "inputs": 1, "f": ["0"], "g": [["1"]], "candidates": ["2x"]}"#;
    match load_problem(bad_poly) {
        Err(SpecError::Polynomial { path, .. }) => assert_eq!(path, "candidates[0]"),
        other => panic!("expected a polynomial error, got {other:?}"),
    }
    let nested = r#"{"schema": 1, "variables": ["x"], "inputs": 1, "f": ["0"], "g": [["1"]], "candidates": ["x"], "options": {"deg_s": "one"}}"#;
    match load_problem(nested) {
        Err(SpecError::Json { path, .. }) => assert_eq!(path, "options.deg_s"),
        other => panic!("expected a json error, got {other:?}"),
    }
}

#[test]
fn sample_problems_load_and_verify() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems");
    let expected = [
        ("single_interval.json", Verdict::Verified),
        ("disjoint_pair.json", Verdict::EmptinessCertified),
        ("overlapping_pair.json", Verdict::MultiVerified),
        ("drifting_half_line.json", Verdict::Inconclusive),
    ];
    for (file, verdict) in expected {
        let spec = load_problem(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap();
        let cands = spec.cbfs().unwrap();
        let out = if cands.len() == 1 {
            verify_single(&spec.system, &cands[0], &spec.options)
        } else {
            verify_multi(&spec.system, &cands, &spec.options)
        }
        .unwrap();
        assert_eq!(out.verdict, verdict, "{file}");
    }
}

#[test]
fn report_json_is_deterministic_and_complete() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems/overlapping_pair.json")).unwrap();
    let spec = load_problem(&text).unwrap();
    let cands = spec.cbfs().unwrap();
    let run = || {
        let mut out = verify_multi(&spec.system, &cands, &spec.options).unwrap();
        zero_timings(&mut out);
        write_report(&out, &spec.variables, ReportFormat::Json)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["certificate", "diagnostics", "elapsed_seconds", "report_schema", "residual", "runs", "verdict"]
    );
    assert_eq!(v["verdict"], "MultiVerified");
    assert_eq!(v["elapsed_seconds"], 0.0);
    let candidates = v["certificate"]["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 2);
    assert!(v["runs"].as_array().unwrap().iter().any(|r| r["kind"] == "emptiness"));
}

#[test]
fn report_without_certificate_has_null() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems/drifting_half_line.json")).unwrap();
    let spec = load_problem(&text).unwrap();
    let cands = spec.cbfs().unwrap();
    let out = verify_single(&spec.system, &cands[0], &spec.options).unwrap();
    let v = report_json(&out, &spec.variables);
    assert!(v["certificate"].is_null());
    assert!(v["residual"].is_null());
    assert_eq!(v["verdict"], "Inconclusive");
}
