//! Matrix Market coordinate files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::accessor::SparseMatrix;
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmField {
    Real,
    Complex,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MmHeader {
    pub field: MmField,
    pub symmetry: MmSymmetry,
}

#[derive(Clone, Debug)]
pub struct MmMatrix {
    pub matrix: SparseMatrix,
    pub header: MmHeader,
    /// Number of duplicate coordinates that were summed.
    pub duplicates: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str) -> Result<MmHeader> {
    let words: Vec<String> = line.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format `{}`", words[2])));
    }
    let field = match words[3].as_str() {
        "real" | "double" => MmField::Real,
        "complex" => MmField::Complex,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => return Err(parse_err(1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        "skew-symmetric" => MmSymmetry::SkewSymmetric,
        "hermitian" => MmSymmetry::Hermitian,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };
    if field == MmField::Pattern && symmetry == MmSymmetry::Hermitian {
        return Err(parse_err(1, "pattern matrices cannot be Hermitian"));
    }
    Ok(MmHeader { field, symmetry })
}

fn number(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))
}

fn index(tok: Option<&str>, bound: usize, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing index"))?;
    let i: usize = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid index `{tok}`")))?;
    if i == 0 || i > bound {
        return Err(parse_err(line, format!("index {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

/// Reads a coordinate Matrix Market stream. Symmetric storage is expanded
/// and duplicate coordinates are summed and counted.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<MmMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => parse_header(&l?)?,
        None => return Err(parse_err(1, "empty file")),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = vec![];
    for (no, line) in lines {
        let line = line?;
        let lineno = no + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut tok = t.split_whitespace();
        let Some((n, m, nnz)) = size else {
            let mut count = || -> Result<usize> {
                let t = tok.next().ok_or_else(|| parse_err(lineno, "incomplete size line"))?;
                t.parse()
                    .map_err(|_| parse_err(lineno, format!("invalid size `{t}`")))
            };
            let (n, m, nnz) = (count()?, count()?, count()?);
            size = Some((n, m, nnz));
            triplets.reserve(nnz);
            continue;
        };
        if triplets.len() >= nnz {
            return Err(parse_err(lineno, "more entries than declared"));
        }
        let i = index(tok.next(), n, lineno)?;
        let j = index(tok.next(), m, lineno)?;
        let v = match header.field {
            MmField::Pattern => C64::from(1.0),
            MmField::Real | MmField::Integer => C64::from(number(tok.next(), lineno)?),
            MmField::Complex => C64::new(number(tok.next(), lineno)?, number(tok.next(), lineno)?),
        };
        if tok.next().is_some() {
            return Err(parse_err(lineno, "trailing tokens"));
        }
        triplets.push((i, j, v));
    }
    let Some((n, m, nnz)) = size else {
        return Err(parse_err(1, "missing size line"));
    };
    if triplets.len() != nnz {
        return Err(parse_err(0, format!("declared {nnz} entries, found {}", triplets.len())));
    }
    if header.symmetry != MmSymmetry::General {
        if n != m {
            return Err(parse_err(0, "symmetric storage requires a square matrix"));
        }
        let mirrored: Vec<_> = triplets
            .iter()
            .filter(|&&(i, j, _)| i != j)
            .map(|&(i, j, v)| {
                let w = match header.symmetry {
                    MmSymmetry::Symmetric => v,
                    MmSymmetry::SkewSymmetric => -v,
                    MmSymmetry::Hermitian => v.conj(),
                    MmSymmetry::General => unreachable!(),
                };
                (j, i, w)
            })
            .collect();
        triplets.extend(mirrored);
    }
    let (matrix, duplicates) = SparseMatrix::from_triplets(n, m, triplets)?;
    Ok(MmMatrix {
        matrix,
        header,
        duplicates,
    })
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<MmMatrix> {
    parse_matrix_market(BufReader::new(File::open(path)?))
}

/// Writes general coordinate storage. `Real` is used when every entry is
/// real, `Complex` otherwise; values use the shortest round-trip form.
pub fn write_matrix_market_to<W: Write>(mut w: W, a: &SparseMatrix) -> Result<()> {
    use crate::accessor::MatrixAccessor;
    let complex = a.triplets().any(|(_, _, v)| v.im != 0.0);
    let field = if complex { "complex" } else { "real" };
    writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
    let (n, m) = a.shape();
    writeln!(w, "{n} {m} {}", a.nnz())?;
    for (i, j, v) in a.triplets() {
        if complex {
            writeln!(w, "{} {} {:?} {:?}", i + 1, j + 1, v.re, v.im)?;
        } else {
            writeln!(w, "{} {} {:?}", i + 1, j + 1, v.re)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    write_matrix_market_to(BufWriter::new(File::create(path)?), a)
}
