//! Plain-text matrix files and `key=value` manifests.
//!
//! A matrix file starts with a `rows cols` line followed by one line per
//! row of whitespace-separated values. Reals are written with 17
//! significant digits, complex entries as `a+bi`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_complex(z: Complex64) -> String {
    format!("{:.16e}{:+.16e}i", z.re, z.im)
}

pub fn matrix_to_string(m: &Mat) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_real(m[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn cmatrix_to_string(m: &CMat) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn parse_complex(tok: &str) -> Result<Complex64> {
    let bad = || Error::Parse(format!("bad numeric token '{tok}'"));
    let Some(body) = tok.strip_suffix('i') else {
        return tok.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // Split at the last sign that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re = body[..split].parse::<f64>().map_err(|_| bad())?;
    let im = body[split..].parse::<f64>().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

fn parse_table(text: &str) -> Result<(usize, usize, Vec<Complex64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad header '{header}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!("bad header '{header}'")));
    };
    let mut vals = Vec::with_capacity(rows * cols);
    let mut nrows = 0;
    for line in lines {
        let row: Vec<Complex64> = line.split_whitespace().map(parse_complex).collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::Parse(format!("row {nrows} has {} entries, expected {cols}", row.len())));
        }
        vals.extend(row);
        nrows += 1;
    }
    if nrows != rows {
        return Err(Error::Parse(format!("found {nrows} rows, expected {rows}")));
    }
    Ok((rows, cols, vals))
}

pub fn cmatrix_from_str(text: &str) -> Result<CMat> {
    let (rows, cols, vals) = parse_table(text)?;
    Ok(CMat::from_row_slice(rows, cols, &vals))
}

pub fn matrix_from_str(text: &str) -> Result<Mat> {
    let (rows, cols, vals) = parse_table(text)?;
    if vals.iter().any(|z| z.im != 0.0) {
        return Err(Error::Parse("complex entry in a real matrix".into()));
    }
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    Ok(Mat::from_row_slice(rows, cols, &re))
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    fs::write(path, matrix_to_string(m)).map_err(|e| io_err(path, e))
}

pub fn write_cmatrix(path: &Path, m: &CMat) -> Result<()> {
    fs::write(path, cmatrix_to_string(m)).map_err(|e| io_err(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    matrix_from_str(&text)
}

pub fn read_cmatrix(path: &Path) -> Result<CMat> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    cmatrix_from_str(&text)
}

/// Ordered `key=value` manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta(pub Vec<(String, String)>);

impl Meta {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("manifest is missing '{key}'")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse::<T>()
            .map_err(|_| Error::Parse(format!("manifest value {key}={raw} is malformed")))
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        let mut out = Meta::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("manifest line '{line}' lacks '='")))?;
            if seen.insert(k.trim().to_string(), ()).is_some() {
                return Err(Error::Parse(format!("duplicate manifest key '{k}'")));
            }
            out.push(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_complex_tokens() {
        assert_eq!(parse_complex("1.5").unwrap(), Complex64::new(1.5, 0.0));
        assert_eq!(parse_complex("1e-3-2e+4i").unwrap(), Complex64::new(1e-3, -2e4));
        assert_eq!(parse_complex("-1.0E-1+0.5i").unwrap(), Complex64::new(-0.1, 0.5));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("1.0i").is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(matrix_from_str("2 2\n1 2\n3\n").is_err());
        assert!(matrix_from_str("3 1\n1\n2\n").is_err());
    }

    #[test]
    fn meta_round_trip_keeps_order() {
        let mut m = Meta::default();
        m.push("kernel", "log");
        m.push("k", 4);
        let back = Meta::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parse::<usize>("k").unwrap(), 4);
        assert!(back.get("p").is_err());
    }

    proptest! {
        #[test]
        fn real_matrix_round_trip_is_exact(vals in proptest::collection::vec(-1e300f64..1e300, 6)) {
            let m = Mat::from_row_slice(2, 3, &vals);
            let back = matrix_from_str(&matrix_to_string(&m)).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn complex_matrix_round_trip_is_exact(re in proptest::collection::vec(-1e10f64..1e10, 4),
                                              im in proptest::collection::vec(-1e-10f64..1e-10, 4)) {
            let m = CMat::from_fn(2, 2, |r, c| Complex64::new(re[2 * r + c], im[2 * r + c]));
            let back = cmatrix_from_str(&cmatrix_to_string(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
