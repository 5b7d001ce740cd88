//! Plain-text instance formats.
//!
//! * Matrix: first line `d n`, then `d` rows of `n` reals.
//! * Cone: first line `n m r`, then `m` lines holding the inequality
//!   normals (columns of `C`, `n` reals each), then `r` lines holding the
//!   equality normals. A two-token header `0 0` stands for the whole space
//!   of whatever dimension the caller supplies.
//! * Measurement model: first line `N L`, then `L` blocks of `N` rows, each
//!   row holding `N` complex entries as `re im` pairs.
//! * Vector: whitespace-separated reals.
//!
//! Text after `#` on a line is ignored. Parse errors carry the 1-based line
//! and column of the offending token.

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};

use crate::cones::{ConeG, ConeH};
use crate::error::{Error, Result};
use crate::gridapp::MeasurementModel;
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            last_line = idx + 1;
            let mut offset = 0;
            for piece in line.split_whitespace() {
                let start = line[offset..].find(piece).map_or(offset, |p| p + offset);
                offset = start + piece.len();
                tokens.push(Token {
                    text: piece,
                    line: idx + 1,
                    column: line[..start].chars().count() + 1,
                });
            }
        }
        Self {
            tokens,
            pos: 0,
            last_line,
        }
    }

    fn error_at(tok: &Token<'_>, message: impl Into<String>) -> Error {
        Error::Parse {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>> {
        let tok = self.tokens.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.last_line,
            column: 1,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let tok = self.next(what)?;
        tok.text
            .parse()
            .map_err(|_| Self::error_at(&tok, format!("expected {what} (a nonnegative integer), found `{}`", tok.text)))
    }

    fn real<T: Scalar>(&mut self, what: &str) -> Result<T> {
        let tok = self.next(what)?;
        match tok.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(T::lit(v)),
            _ => Err(Self::error_at(&tok, format!("expected a finite real for {what}, found `{}`", tok.text))),
        }
    }

    fn finish(&self) -> Result<()> {
        match self.tokens.get(self.pos) {
            Some(tok) => Err(Self::error_at(tok, format!("unexpected trailing token `{}`", tok.text))),
            None => Ok(()),
        }
    }

    /// Tokens on the header line.
    fn header_len(&self) -> usize {
        match self.tokens.first() {
            Some(first) => self.tokens.iter().take_while(|t| t.line == first.line).count(),
            None => 0,
        }
    }
}

pub fn parse_matrix<T: Scalar>(text: &str) -> Result<DMatrix<T>> {
    let mut t = Tokens::new(text);
    let d = t.count("row count d")?;
    let n = t.count("column count n")?;
    let mut m = DMatrix::zeros(d, n);
    for i in 0..d {
        for j in 0..n {
            m[(i, j)] = t.real(&format!("entry ({}, {})", i + 1, j + 1))?;
        }
    }
    t.finish()?;
    Ok(m)
}

/// Parses a cone file. `dim` fills in the dimension for a `0 0` header and
/// is checked against a full header.
pub fn parse_cone<T: Scalar>(text: &str, dim: Option<usize>) -> Result<ConeH<T>> {
    let mut t = Tokens::new(text);
    if t.header_len() == 2 {
        let first = t.tokens[0];
        let m = t.count("inequality count m")?;
        let r = t.count("equality count r")?;
        if m != 0 || r != 0 {
            return Err(Tokens::error_at(&first, "a two-token header must be `0 0`; use `n m r`"));
        }
        t.finish()?;
        return Ok(ConeH::whole_space(dim.unwrap_or(0)));
    }
    let first = t.tokens.first().copied();
    let n = t.count("dimension n")?;
    if let (Some(d), Some(tok)) = (dim, first) {
        if d != n {
            return Err(Tokens::error_at(&tok, format!("cone dimension {n} does not match matrix columns {d}")));
        }
    }
    let m = t.count("inequality count m")?;
    let r = t.count("equality count r")?;
    let mut read_block = |count: usize, name: &str| -> Result<DMatrix<T>> {
        let mut block = DMatrix::zeros(n, count);
        for c in 0..count {
            for i in 0..n {
                block[(i, c)] = t.real(&format!("{name} normal {} entry {}", c + 1, i + 1))?;
            }
        }
        Ok(block)
    };
    let ineq = read_block(m, "inequality")?;
    let eq = read_block(r, "equality")?;
    t.finish()?;
    ConeH::new(ineq, eq)
}

pub fn parse_model<T: Scalar>(text: &str) -> Result<MeasurementModel<T>> {
    let mut t = Tokens::new(text);
    let n = t.count("operator size N")?;
    let l = t.count("operator count L")?;
    let mut h_list = Vec::with_capacity(l);
    for k in 0..l {
        let mut h = DMatrix::from_element(n, n, Complex::new(T::zero(), T::zero()));
        for i in 0..n {
            for j in 0..n {
                let what = format!("operator {} entry ({}, {})", k + 1, i + 1, j + 1);
                let re = t.real(&what)?;
                let im = t.real(&what)?;
                h[(i, j)] = Complex::new(re, im);
            }
        }
        h_list.push(h);
    }
    t.finish()?;
    let model = MeasurementModel::from_operators(h_list);
    model.validate()?;
    Ok(model)
}

pub fn parse_vector<T: Scalar>(text: &str) -> Result<DVector<T>> {
    let mut t = Tokens::new(text);
    let mut out = Vec::new();
    while t.pos < t.tokens.len() {
        out.push(t.real(&format!("entry {}", out.len() + 1))?);
    }
    Ok(DVector::from_vec(out))
}

fn push_row<T: Scalar>(out: &mut String, values: impl Iterator<Item = T>) {
    let row: Vec<String> = values.map(|v| format_real(v.as_f64())).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

/// Shortest representation that parses back to the same `f64`; `-0.0` is
/// written as `0.0`.
pub fn format_real(v: f64) -> String {
    format!("{:?}", v + 0.0)
}

pub fn write_matrix<T: Scalar>(m: &DMatrix<T>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        push_row(&mut out, row.iter().copied());
    }
    out
}

pub fn write_cone<T: Scalar>(cone: &ConeH<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", cone.dim(), cone.n_ineq(), cone.n_eq());
    for col in cone.ineq.column_iter().chain(cone.eq.column_iter()) {
        push_row(&mut out, col.iter().copied());
    }
    out
}

/// Generators as a cone-like file: first line `n k`, then one generator per
/// line.
pub fn write_generators<T: Scalar>(cone: &ConeG<T>) -> String {
    let mut out = format!("{} {}\n", cone.dim(), cone.n_gens());
    for col in cone.gens.column_iter() {
        push_row(&mut out, col.iter().copied());
    }
    out
}

pub fn write_model<T: Scalar>(model: &MeasurementModel<T>) -> String {
    let mut out = format!("{} {}\n", model.size(), model.n_measurements());
    for h in &model.h_list {
        for row in h.row_iter() {
            push_row(&mut out, row.iter().flat_map(|z| [z.re, z.im]));
        }
    }
    out
}

pub fn write_vector<T: Scalar>(v: &DVector<T>) -> String {
    let mut out = String::new();
    push_row(&mut out, v.iter().copied());
    out
}
