//! Text interchange formats.
//!
//! A Hermitian matrix file starts with `hermitian_matrix n=<n>` followed by
//! `n` lines of `n` entries, each written as `re im` with 17 significant
//! digits. General complex matrices (snapshot sets) use the header
//! `complex_matrix rows=<r> cols=<c>` with the same entry layout. Blank
//! lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, HermitianMatrix, C64};

const HERMITIAN_TOL: f64 = 1e-12;

fn write_entries(out: &mut String, rows: usize, cols: usize, entry: impl Fn(usize, usize) -> C64) {
    for i in 0..rows {
        let line: Vec<String> = (0..cols)
            .map(|j| {
                let z = entry(i, j);
                format!("{:.16e} {:.16e}", z.re, z.im)
            })
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
}

pub fn format_hermitian(m: &HermitianMatrix) -> String {
    let n = m.dim();
    let mut out = String::new();
    writeln!(out, "hermitian_matrix n={n}").expect("writing to a String");
    write_entries(&mut out, n, n, |i, j| m.get(i, j));
    out
}

pub fn format_complex(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    writeln!(out, "complex_matrix rows={} cols={}", m.nrows(), m.ncols()).expect("writing to a String");
    write_entries(&mut out, m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    out
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn header_value(tok: Option<&str>, key: &str, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(line, key, "missing"))?;
    let value = tok
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, key, format!("expected `{key}=<value>`, found `{tok}`")))?;
    let v: usize = value
        .parse()
        .map_err(|_| Error::parse(line, key, format!("not a non-negative integer: `{value}`")))?;
    if v == 0 {
        return Err(Error::parse(line, key, "must be positive"));
    }
    Ok(v)
}

fn parse_entries<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
    last_header_line: usize,
) -> Result<ComplexMatrix> {
    let mut m = ComplexMatrix::zeros(rows, cols);
    let mut last = last_header_line;
    for i in 0..rows {
        let (line_no, line) = lines.next().ok_or_else(|| {
            Error::parse(last + 1, "rows", format!("expected {rows} rows, found {i}"))
        })?;
        last = line_no;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 * cols {
            return Err(Error::parse(
                line_no,
                format!("row {i}"),
                format!("expected {cols} entries ({} numbers), found {} numbers", 2 * cols, toks.len()),
            ));
        }
        for j in 0..cols {
            let num = |k: usize, part: &str| -> Result<f64> {
                let v: f64 = toks[k].parse().map_err(|_| {
                    Error::parse(line_no, format!("entry ({i}, {j}) {part}"), format!("not a number: `{}`", toks[k]))
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(line_no, format!("entry ({i}, {j}) {part}"), "non-finite value"));
                }
                Ok(v)
            };
            m[(i, j)] = C64::new(num(2 * j, "re")?, num(2 * j + 1, "im")?);
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::parse(line_no, "rows", format!("more than {rows} rows")));
    }
    Ok(m)
}

pub fn parse_hermitian(text: &str) -> Result<HermitianMatrix> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "header", "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("hermitian_matrix") {
        return Err(Error::parse(line_no, "header", "expected `hermitian_matrix n=<n>`"));
    }
    let n = header_value(toks.next(), "n", line_no)?;
    let m = parse_entries(&mut lines, n, n, line_no)?;
    let scale = m.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::parse(
                    line_no + 1 + i,
                    format!("entry ({i}, {j})"),
                    "matrix is not Hermitian",
                ));
            }
        }
    }
    HermitianMatrix::from_matrix(m)
}

pub fn parse_complex(text: &str) -> Result<ComplexMatrix> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "header", "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("complex_matrix") {
        return Err(Error::parse(line_no, "header", "expected `complex_matrix rows=<r> cols=<c>`"));
    }
    let rows = header_value(toks.next(), "rows", line_no)?;
    let cols = header_value(toks.next(), "cols", line_no)?;
    parse_entries(&mut lines, rows, cols, line_no)
}

pub fn write_matrix(path: &Path, m: &HermitianMatrix) -> Result<()> {
    fs::write(path, format_hermitian(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<HermitianMatrix> {
    parse_hermitian(&fs::read_to_string(path)?)
}

pub fn write_complex_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    fs::write(path, format_complex(m))?;
    Ok(())
}

pub fn read_complex_matrix(path: &Path) -> Result<ComplexMatrix> {
    parse_complex(&fs::read_to_string(path)?)
}
