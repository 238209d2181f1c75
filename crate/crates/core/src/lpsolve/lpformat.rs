//! CPLEX LP text format.
//!
//! The writer emits a zero objective, equality rows `e1..` then inequality
//! rows `u1..`, and declares every variable free. Coefficients are printed
//! with the shortest representation that parses back to the same `f64`, so
//! [`parse_lp_text`] reproduces the problem exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{LinearRow, LpError, LpProblem};

const WRAP: usize = 200;

fn number(v: f64) -> String {
    format!("{v:?}")
}

fn write_row(out: &mut String, name: &str, row: &LinearRow, op: &str, nvars: usize) {
    let mut line = format!(" {name}:");
    let mut push = |line: &mut String, piece: String| {
        if line.len() + piece.len() > WRAP {
            out.push_str(line);
            out.push('\n');
            line.clear();
            line.push(' ');
        }
        line.push_str(&piece);
    };
    if row.coeffs.is_empty() && nvars > 0 {
        push(&mut line, format!(" 0 {}", LpProblem::var_name(0)));
    }
    for (i, &(k, c)) in row.coeffs.iter().enumerate() {
        let sign = match (i, c < 0.0) {
            (0, false) => "",
            (0, true) => " -",
            (_, false) => " +",
            (_, true) => " -",
        };
        push(&mut line, format!("{sign} {} {}", number(c.abs()), LpProblem::var_name(k)));
    }
    push(&mut line, format!(" {op} {}", number(row.rhs)));
    out.push_str(&line);
    out.push('\n');
}

/// Renders `lp` as CPLEX LP text.
pub fn export_lp_text(lp: &LpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {} variables, {} equality rows, {} inequality rows", lp.nvars, lp.eq_rows.len(), lp.ub_rows.len());
    for (name, range) in &lp.blocks {
        if !range.is_empty() {
            let _ = writeln!(
                out,
                "\\ {name}: {}..{}",
                LpProblem::var_name(range.start),
                LpProblem::var_name(range.end - 1)
            );
        }
    }
    out.push_str("Minimize\n");
    if lp.nvars > 0 {
        let _ = writeln!(out, " obj: 0 {}", LpProblem::var_name(0));
    } else {
        out.push_str(" obj:\n");
    }
    out.push_str("Subject To\n");
    for (i, row) in lp.eq_rows.iter().enumerate() {
        write_row(&mut out, &format!("e{}", i + 1), row, "=", lp.nvars);
    }
    for (i, row) in lp.ub_rows.iter().enumerate() {
        write_row(&mut out, &format!("u{}", i + 1), row, "<=", lp.nvars);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.nvars {
        let _ = writeln!(out, " {} free", LpProblem::var_name(j));
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_file(lp: &LpProblem, path: &Path) -> Result<(), LpError> {
    std::fs::write(path, export_lp_text(lp)).map_err(|e| LpError::Io(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    End,
}

fn parse_error(line: usize, message: impl Into<String>) -> LpError {
    LpError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_var(tok: &str, line: usize) -> Result<usize, LpError> {
    tok.strip_prefix('z')
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .map(|k| k - 1)
        .ok_or_else(|| parse_error(line, format!("expected a variable z<k>, found '{tok}'")))
}

fn parse_num(tok: &str, line: usize) -> Result<f64, LpError> {
    tok.parse::<f64>()
        .map_err(|_| parse_error(line, format!("expected a number, found '{tok}'")))
}

#[derive(Default)]
struct PendingRow {
    name: String,
    line: usize,
    tokens: Vec<String>,
}

/// Parses text written by [`export_lp_text`] (a subset of CPLEX LP: zero
/// objective, `=`/`<=` rows over `z<k>`, free bounds).
pub fn parse_lp_text(text: &str) -> Result<LpProblem, LpError> {
    let mut section = Section::Preamble;
    let mut pending: Vec<PendingRow> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('\\').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        match body.to_ascii_lowercase().as_str() {
            "minimize" => {
                section = Section::Objective;
                continue;
            }
            "subject to" => {
                section = Section::Constraints;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "end" => {
                section = Section::End;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble | Section::End => {
                return Err(parse_error(line, format!("unexpected text '{body}'")));
            }
            Section::Objective => {
                let expr = body.strip_prefix("obj:").map(str::trim).unwrap_or(body);
                let tokens: Vec<&str> = expr.split_whitespace().collect();
                if !(tokens.is_empty() || (tokens.len() == 2 && parse_num(tokens[0], line)? == 0.0)) {
                    return Err(parse_error(line, "only the zero objective is supported"));
                }
            }
            Section::Constraints => {
                let rest = match body.split_once(':') {
                    Some((name, rest)) => {
                        pending.push(PendingRow {
                            name: name.trim().to_string(),
                            line,
                            tokens: Vec::new(),
                        });
                        rest
                    }
                    None => body,
                };
                let row = pending
                    .last_mut()
                    .ok_or_else(|| parse_error(line, "constraint without a name"))?;
                row.tokens.extend(rest.split_whitespace().map(str::to_string));
            }
            Section::Bounds => {
                let tokens: Vec<&str> = body.split_whitespace().collect();
                if tokens.len() != 2 || !tokens[1].eq_ignore_ascii_case("free") {
                    return Err(parse_error(line, "expected '<var> free'"));
                }
                free.push(parse_var(tokens[0], line)?);
            }
        }
    }
    if section != Section::End {
        return Err(parse_error(text.lines().count(), "missing End"));
    }

    let nvars = free.len();
    if free.iter().enumerate().any(|(j, &k)| j != k) {
        return Err(parse_error(0, "bounds must list z1..zN in order"));
    }
    let mut lp = LpProblem::new(nvars);
    for row in pending {
        let (parsed, op) = parse_row(&row)?;
        let kind_ok = match op {
            "=" => row.name.starts_with('e'),
            _ => row.name.starts_with('u'),
        };
        if !kind_ok {
            return Err(parse_error(row.line, format!("row '{}' does not match its relation", row.name)));
        }
        if op == "=" {
            lp.add_eq(parsed);
        } else {
            lp.add_ub(parsed);
        }
    }
    lp.validate().map_err(|e| parse_error(0, e.to_string()))?;
    Ok(lp)
}

fn parse_row(row: &PendingRow) -> Result<(LinearRow, &'static str), LpError> {
    let line = row.line;
    let mut coeffs = Vec::new();
    let mut it = row.tokens.iter().map(String::as_str).peekable();
    let mut first = true;
    loop {
        let tok = it.next().ok_or_else(|| parse_error(line, "unterminated constraint"))?;
        let op = match tok {
            "=" => Some("="),
            "<=" => Some("<="),
            _ => None,
        };
        if let Some(op) = op {
            let rhs = parse_num(it.next().ok_or_else(|| parse_error(line, "missing right-hand side"))?, line)?;
            if let Some(extra) = it.next() {
                return Err(parse_error(line, format!("unexpected '{extra}' after right-hand side")));
            }
            return Ok((LinearRow::new(coeffs, rhs), op));
        }
        let (sign, mag) = match tok {
            "+" if !first => (1.0, it.next()),
            "-" => (-1.0, it.next()),
            _ if first => (1.0, Some(tok)),
            _ => return Err(parse_error(line, format!("expected '+' or '-', found '{tok}'"))),
        };
        let mag = parse_num(mag.ok_or_else(|| parse_error(line, "missing coefficient"))?, line)?;
        let var = parse_var(it.next().ok_or_else(|| parse_error(line, "missing variable"))?, line)?;
        coeffs.push((var, sign * mag));
        first = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_problem() {
        let text = export_lp_text(&LpProblem::new(0));
        assert_eq!(text.lines().filter(|l| !l.starts_with('\\')).collect::<Vec<_>>(), [
            "Minimize", " obj:", "Subject To", "Bounds", "End"
        ]);
        assert_eq!(parse_lp_text(&text).unwrap(), LpProblem::new(0));
    }

    #[test]
    fn single_row() {
        let mut lp = LpProblem::new(2);
        lp.add_ub(LinearRow::new([(0, 1.0), (1, 2.0)], 3.0));
        let text = export_lp_text(&lp);
        assert!(text.contains(" u1: 1.0 z1 + 2.0 z2 <= 3.0\n"), "{text}");
        assert!(text.contains(" z2 free\n"));
        assert_eq!(parse_lp_text(&text).unwrap(), lp);
    }

    #[test]
    fn negative_and_awkward_numbers_round_trip() {
        let mut lp = LpProblem::new(3);
        lp.add_eq(LinearRow::new([(0, -0.1), (2, 1e-300)], -7.25e19));
        lp.add_eq(LinearRow::new([], 0.0));
        lp.add_ub(LinearRow::new([(1, 1.0 / 3.0)], 0.0));
        let back = parse_lp_text(&export_lp_text(&lp)).unwrap();
        assert_eq!(back, lp);
    }

    #[test]
    fn long_rows_wrap() {
        let mut lp = LpProblem::new(200);
        lp.add_eq(LinearRow::new((0..200).map(|k| (k, k as f64 + 0.5)), 1.0));
        let text = export_lp_text(&lp);
        assert!(text.lines().all(|l| l.len() <= WRAP + 40));
        assert_eq!(parse_lp_text(&text).unwrap(), lp);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(parse_lp_text("Minimize\n obj:\nSubject To\n e1: 1 q = 2\nBounds\nEnd\n"), Err(LpError::Parse { line: 4, .. })));
        assert!(parse_lp_text("Minimize\n obj:\n").is_err());
    }
}
