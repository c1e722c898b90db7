//! Dense matrices, sample sets, point sets and result tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, C64};
use crate::rational::SampleSet;

const DENSE_MAGIC: &[u8; 8] = b"RPLUDNS1";

/// Dense CSV: one matrix row per line, each entry as a `re,im` column pair.
pub fn write_dense_csv(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..a.nrows() {
        let cells: Vec<String> = a.row(i).iter().map(|z| format!("{:?},{:?}", z.re, z.im)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut data = vec![];
    let mut ncols = None;
    let mut nrows = 0;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = t
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: no + 1,
                msg: e.to_string(),
            })?;
        if !vals.len().is_multiple_of(2) {
            return Err(Error::Parse {
                line: no + 1,
                msg: "odd number of columns; expected re,im pairs".into(),
            });
        }
        let m = vals.len() / 2;
        if *ncols.get_or_insert(m) != m {
            return Err(Error::Parse {
                line: no + 1,
                msg: "ragged rows".into(),
            });
        }
        data.extend(vals.chunks(2).map(|p| C64::new(p[0], p[1])));
        nrows += 1;
    }
    DenseMatrix::new(nrows, ncols.unwrap_or(0), data)
}

/// Little-endian binary: magic, `u64` rows, `u64` cols, then `re, im` pairs.
pub fn write_dense_binary(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DENSE_MAGIC)?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for z in a.as_slice() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense_binary(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DENSE_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "not a dense binary matrix".into(),
        });
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let m = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        r.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        data.push(C64::new(re, f64::from_le_bytes(word)));
    }
    DenseMatrix::new(n, m, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    z_re: f64,
    z_im: f64,
    f_re: f64,
    f_im: f64,
}

/// Sample CSV with header `z_re,z_im,f_re,f_im`.
pub fn write_samples(path: impl AsRef<Path>, s: &SampleSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (z, f) in s.points.iter().zip(&s.values) {
        w.serialize(SampleRecord {
            z_re: z.re,
            z_im: z.im,
            f_re: f.re,
            f_im: f.im,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let (mut z, mut f) = (vec![], vec![]);
    for rec in r.deserialize() {
        let rec: SampleRecord = rec?;
        z.push(C64::new(rec.z_re, rec.z_im));
        f.push(C64::new(rec.f_re, rec.f_im));
    }
    SampleSet::new(z, f)
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    set: String,
    re: f64,
    im: f64,
}

/// Point CSV with header `set,re,im`, where `set` is `x` (targets) or `y`
/// (sources).
pub fn write_points(path: impl AsRef<Path>, x: &[C64], y: &[C64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (set, pts) in [("x", x), ("y", y)] {
        for z in pts {
            w.serialize(PointRecord {
                set: set.into(),
                re: z.re,
                im: z.im,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_points(path: impl AsRef<Path>) -> Result<(Vec<C64>, Vec<C64>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let (mut x, mut y) = (vec![], vec![]);
    for (no, rec) in r.deserialize().enumerate() {
        let rec: PointRecord = rec?;
        match rec.set.as_str() {
            "x" => x.push(C64::new(rec.re, rec.im)),
            "y" => y.push(C64::new(rec.re, rec.im)),
            other => {
                return Err(Error::Parse {
                    line: no + 2,
                    msg: format!("unknown point set `{other}`"),
                })
            }
        }
    }
    Ok((x, y))
}

/// One row of an approximation sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rank: usize,
    pub method: String,
    pub seed: u64,
    pub rel_frob_err: f64,
    pub rel_spec_err: f64,
    pub seconds: f64,
    #[serde(rename = "applies_A")]
    pub applies_a: usize,
    #[serde(rename = "applies_At")]
    pub applies_at: usize,
}

pub const RESULTS_HEADER: &str = "rank,method,seed,rel_frob_err,rel_spec_err,seconds,applies_A,applies_At";

/// Writes `# ` comment lines followed by the results table.
pub fn write_results_to<W: Write>(mut w: W, comments: &[String], rows: &[ResultRow]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    cw.write_record(RESULTS_HEADER.split(','))?;
    for r in rows {
        cw.serialize(r)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_results(path: impl AsRef<Path>, comments: &[String], rows: &[ResultRow]) -> Result<()> {
    write_results_to(BufWriter::new(File::create(path)?), comments, rows)
}

pub fn read_results_from<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected results header `{}`", header.join(",")),
        });
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_results_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize) -> ResultRow {
        ResultRow {
            rank: k,
            method: "rplu".into(),
            seed: 7 ^ k as u64,
            rel_frob_err: 0.1f64.powi(k as i32),
            rel_spec_err: 1.0 / 3.0,
            seconds: 1e-3,
            applies_a: 4 * k,
            applies_at: 2 * k,
        }
    }

    #[test]
    fn empty_results_are_header_only() {
        let mut buf = vec![];
        write_results_to(&mut buf, &[], &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{RESULTS_HEADER}\n"));
    }

    #[test]
    fn one_row_two_lines() {
        let mut buf = vec![];
        write_results_to(&mut buf, &[], &[row(3)]).unwrap();
        let s = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert_eq!(read_results_from(buf.as_slice()).unwrap(), vec![row(3)]);
    }

    #[test]
    fn hundred_rows_roundtrip_with_comments() {
        let rows: Vec<_> = (0..100).map(row).collect();
        let mut buf = vec![];
        write_results_to(&mut buf, &["config: {\"a\": 1}".into(), "two\nlines".into()], &rows).unwrap();
        assert_eq!(read_results_from(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn dense_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let a = DenseMatrix::from_fn(3, 4, |i, j| C64::new(i as f64 / 7.0, -(j as f64).sqrt()));
        let p = dir.path().join("a.csv");
        write_dense_csv(&p, &a).unwrap();
        assert_eq!(read_dense_csv(&p).unwrap(), a);
        let p = dir.path().join("a.bin");
        write_dense_binary(&p, &a).unwrap();
        assert_eq!(read_dense_binary(&p).unwrap(), a);
    }

    #[test]
    fn samples_and_points_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = SampleSet::new(vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.0)], vec![C64::new(1.0, 0.0), C64::new(0.0, 2.5)]).unwrap();
        let p = dir.path().join("s.csv");
        write_samples(&p, &s).unwrap();
        let back = read_samples(&p).unwrap();
        assert_eq!(back.points, s.points);
        assert_eq!(back.values, s.values);
        let p = dir.path().join("p.csv");
        write_points(&p, &s.points, &s.values).unwrap();
        assert_eq!(read_points(&p).unwrap(), (s.points.clone(), s.values.clone()));
    }
}
