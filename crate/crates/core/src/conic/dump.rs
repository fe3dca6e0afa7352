//! Plain-text dump of a [`ConicProblem`] for cross-checking with external
//! tools.
//!
//! ```text
//! conic-problem v1
//! vars 2
//! objective 0 1
//! block psd 2
//! F0 1 0 0
//! F 0 0 1 0
//! F 1 0 0 1
//! block nonneg 1
//! F0 2
//! F 1 -1
//! end
//! ```
//!
//! PSD entries are the lower triangle in row-major order
//! (`a11 a21 a22 a31 a32 a33 ...`); nonnegative blocks list the diagonal.
//! Numbers use Rust's shortest round-trip formatting, so parsing a dump
//! reproduces the problem exactly.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use super::{ConeBlock, ConicProblem};
use crate::error::{Error, Result};

fn lower_triangle(m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let mut parts = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            parts.push(format!("{}", m[(i, j)]));
        }
    }
    parts.join(" ")
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl ConicProblem {
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "conic-problem v1");
        let _ = writeln!(s, "vars {}", self.num_vars);
        let _ = writeln!(s, "objective {}", join(self.objective.iter().copied()));
        for b in &self.blocks {
            match b {
                ConeBlock::Psd {
                    constant,
                    coefficients,
                } => {
                    let _ = writeln!(s, "block psd {}", constant.nrows());
                    let _ = writeln!(s, "F0 {}", lower_triangle(constant));
                    for (k, f) in coefficients {
                        let _ = writeln!(s, "F {k} {}", lower_triangle(f));
                    }
                }
                ConeBlock::NonNeg {
                    constant,
                    coefficients,
                } => {
                    let _ = writeln!(s, "block nonneg {}", constant.len());
                    let _ = writeln!(s, "F0 {}", join(constant.iter().copied()));
                    for (k, f) in coefficients {
                        let _ = writeln!(s, "F {k} {}", join(f.iter().copied()));
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("dump line {}: {}", line + 1, msg.into()))
}

fn numbers(line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| bad(line, format!("bad number {t:?}"))))
        .collect()
}

fn sym_from_lower(line: usize, n: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != n * (n + 1) / 2 {
        return Err(bad(line, format!("expected {} entries", n * (n + 1) / 2)));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut it = v.iter();
    for i in 0..n {
        for j in 0..=i {
            let x = *it.next().unwrap();
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Ok(m)
}

enum Pending {
    Psd(usize, Option<DMatrix<f64>>, Vec<(usize, DMatrix<f64>)>),
    NonNeg(usize, Option<DVector<f64>>, Vec<(usize, DVector<f64>)>),
}

pub fn parse_dump(text: &str) -> Result<ConicProblem> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == "conic-problem v1" => {}
        _ => return Err(Error::InvalidArgument("missing dump header".into())),
    }
    let mut problem: Option<ConicProblem> = None;
    let mut pending: Option<Pending> = None;

    let flush = |problem: &mut ConicProblem, p: Option<Pending>, line: usize| -> Result<()> {
        match p {
            None => Ok(()),
            Some(Pending::Psd(_, Some(c), f)) => problem.add_psd_block(c, f),
            Some(Pending::NonNeg(_, Some(c), f)) => problem.add_nonneg_block(c, f),
            Some(_) => Err(bad(line, "block without F0")),
        }
    };

    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "vars" => {
                let m = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(ln, "bad variable count"))?;
                problem = Some(ConicProblem::new(m));
            }
            "objective" => {
                let p = problem.as_mut().ok_or_else(|| bad(ln, "objective before vars"))?;
                p.set_objective(numbers(ln, &toks[1..])?)?;
            }
            "block" => {
                let p = problem.as_mut().ok_or_else(|| bad(ln, "block before vars"))?;
                flush(p, pending.take(), ln)?;
                let n: usize = toks
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(ln, "bad block dimension"))?;
                pending = Some(match toks.get(1) {
                    Some(&"psd") => Pending::Psd(n, None, Vec::new()),
                    Some(&"nonneg") => Pending::NonNeg(n, None, Vec::new()),
                    _ => return Err(bad(ln, "unknown block kind")),
                });
            }
            "F0" => match pending.as_mut() {
                Some(Pending::Psd(n, c, _)) => *c = Some(sym_from_lower(ln, *n, &numbers(ln, &toks[1..])?)?),
                Some(Pending::NonNeg(n, c, _)) => {
                    let v = numbers(ln, &toks[1..])?;
                    if v.len() != *n {
                        return Err(bad(ln, format!("expected {n} entries")));
                    }
                    *c = Some(DVector::from_vec(v));
                }
                None => return Err(bad(ln, "F0 outside a block")),
            },
            "F" => {
                let k: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(ln, "bad variable index"))?;
                let v = numbers(ln, &toks[2..])?;
                match pending.as_mut() {
                    Some(Pending::Psd(n, _, f)) => f.push((k, sym_from_lower(ln, *n, &v)?)),
                    Some(Pending::NonNeg(n, _, f)) => {
                        if v.len() != *n {
                            return Err(bad(ln, format!("expected {n} entries")));
                        }
                        f.push((k, DVector::from_vec(v)));
                    }
                    None => return Err(bad(ln, "F outside a block")),
                }
            }
            "end" => {
                let mut p = problem.ok_or_else(|| bad(ln, "end before vars"))?;
                flush(&mut p, pending.take(), ln)?;
                return Ok(p);
            }
            other => return Err(bad(ln, format!("unknown record {other:?}"))),
        }
    }
    Err(Error::InvalidArgument("dump is missing the end record".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip() {
        let mut p = ConicProblem::new(2);
        p.set_objective(vec![0.0, 1.0]).unwrap();
        p.add_psd_block(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.0]),
            vec![
                (0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])),
                (1, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / 3.0])),
            ],
        )
        .unwrap();
        p.add_nonneg_block(
            DVector::from_vec(vec![2.0]),
            vec![(1, DVector::from_vec(vec![-1.0]))],
        )
        .unwrap();
        let text = p.to_dump();
        assert!(text.contains("block psd 2\nF0 1 0.1 0\n"));
        assert_eq!(parse_dump(&text).unwrap(), p);
    }

    #[test]
    fn dump_rejects_garbage() {
        assert!(parse_dump("nope").is_err());
        assert!(parse_dump("conic-problem v1\nvars 1\nblock psd 2\nF0 1 2\nend\n").is_err());
    }
}
