//! MatrixMarket text I/O.
//!
//! Dumps always use the dense `array real general` layout (column-major, one
//! value per line, 17 significant digits) so that a write/read/write cycle is
//! byte-identical. Reading additionally accepts `coordinate` files with
//! `general` or `symmetric` storage.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Mat;

pub fn format_array(m: &Mat) -> String {
    let mut out = String::with_capacity(32 + 26 * m.len());
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(out, "{:.16e}", m[(i, j)]);
        }
    }
    out
}

pub fn write_array(path: &Path, m: &Mat) -> Result<()> {
    crate::fsutil::write_atomic(path, format_array(m).as_bytes())
}

pub fn read(path: &Path) -> Result<Mat> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|message| Error::Parse {
        kind: "MatrixMarket",
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse(text: &str) -> std::result::Result<Mat, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let fields: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(format!("bad header line `{header}`"));
    }
    let dense = match fields[2].as_str() {
        "array" => true,
        "coordinate" => false,
        other => return Err(format!("unsupported format `{other}`")),
    };
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(format!("unsupported field `{}`", fields[3]));
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(format!("unsupported symmetry `{other}`")),
    };

    let mut body = lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size_line = body.next().ok_or("missing size line")?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad size token `{t}`")))
        .collect::<std::result::Result<_, _>>()?;

    let num = |t: &str| -> std::result::Result<f64, String> {
        let v: f64 = t.parse().map_err(|_| format!("bad number `{t}`"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite entry `{t}`"))
        }
    };

    if dense {
        let [rows, cols] = dims[..] else {
            return Err(format!("array size line needs 2 integers, got `{size_line}`"));
        };
        let mut m = Mat::zeros(rows, cols);
        let mut count = 0;
        for j in 0..cols {
            let start = if symmetric { j } else { 0 };
            for i in start..rows {
                let tok = body.next().ok_or("too few entries")?;
                let v = num(tok)?;
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
                count += 1;
            }
        }
        if body.next().is_some() {
            return Err(format!("more than the expected {count} entries"));
        }
        Ok(m)
    } else {
        let [rows, cols, nnz] = dims[..] else {
            return Err(format!("coordinate size line needs 3 integers, got `{size_line}`"));
        };
        let mut m = Mat::zeros(rows, cols);
        for _ in 0..nnz {
            let line = body.next().ok_or("too few entries")?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(format!("bad entry line `{line}`"));
            }
            let i: usize = toks[0].parse().map_err(|_| format!("bad row `{}`", toks[0]))?;
            let j: usize = toks[1].parse().map_err(|_| format!("bad col `{}`", toks[1]))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(format!("entry ({i}, {j}) out of range"));
            }
            let v = num(toks[2])?;
            m[(i - 1, j - 1)] += v;
            if symmetric && i != j {
                m[(j - 1, i - 1)] += v;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_layout_is_column_major() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let text = format_array(&m);
        let vals: Vec<f64> = text.lines().skip(2).map(|l| l.parse().unwrap()).collect();
        assert_eq!(vals, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(parse(&text).unwrap(), m);
    }

    #[test]
    fn coordinate_symmetric_expands() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 4.0\n2 1 -1.5\n";
        let m = parse(text).unwrap();
        assert_eq!(m, Mat::from_row_slice(2, 2, &[4.0, -1.5, -1.5, 0.0]));
    }

    #[test]
    fn empty_dimensions_round_trip() {
        let m = Mat::zeros(0, 5);
        assert_eq!(parse(&format_array(&m)).unwrap().shape(), (0, 5));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n").is_err());
        assert!(parse("hello").is_err());
        assert!(parse("%%MatrixMarket matrix array real general\n1 1\nnan\n").is_err());
    }
}
