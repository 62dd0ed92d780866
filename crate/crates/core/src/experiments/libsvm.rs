//! LIBSVM text format: `label idx:val idx:val ...` with 1-based, strictly
//! increasing indices.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Parsed dataset. Labels are `+1` for positive input labels, `−1` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub a: CsrMatrix,
    pub labels: DVector<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_libsvm(std::io::BufReader::new(file))
}

pub fn read_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("bad label {label_tok:?}"),
        })?;
        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                reason: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad index {idx:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad value {val:?}"),
            })?;
            if idx == 0 || idx <= prev {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("index {idx} is not 1-based and strictly increasing"),
                });
            }
            prev = idx;
            row.push((idx - 1, val));
        }
        d = d.max(prev);
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        a: CsrMatrix::from_rows(d, &rows)?,
        labels: DVector::from_vec(labels),
    })
}

/// Writes values with 17 significant digits so reading back is exact.
pub fn write_libsvm(path: &Path, data: &Dataset) -> Result<()> {
    std::fs::write(path, format_libsvm(data))?;
    Ok(())
}

pub fn format_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.n() {
        out.push_str(if data.labels[i] > 0.0 { "+1" } else { "-1" });
        for (j, v) in data.a.row(i) {
            let _ = write!(out, " {}:{v:.16e}", j + 1);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::rng;
    use rand::Rng;

    fn parse(s: &str) -> Result<Dataset> {
        read_libsvm(s.as_bytes())
    }

    #[test]
    fn single_entry_line() {
        let ds = parse("+1 3:0.5\n").unwrap();
        assert_eq!(ds.n(), 1);
        assert!(ds.d() >= 3);
        assert_eq!(ds.a.to_dense()[(0, 2)], 0.5);
        assert_eq!(ds.labels[0], 1.0);
    }

    #[test]
    fn label_coercion() {
        let ds = parse("0 1:1\n2 1:1\n-1 1:1\n").unwrap();
        assert_eq!(ds.labels.as_slice(), &[-1.0, 1.0, -1.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse("+1 1:1\n+1 2:1 2:3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("+1 x:1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("abc 1:1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("+1 0:1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("+1 1:z\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse("\n# only a comment\n"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut r = rng::seeded(3);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 25];
        for row in rows.iter_mut() {
            for j in 0..40 {
                if r.random::<f64>() < 0.2 {
                    let scale = 10f64.powi(r.random_range(-8..8));
                    row.push((j, rng::standard_normal(&mut r) * scale));
                }
            }
        }
        rows[0].push((40, 1.0));
        let d = rows.iter().flat_map(|r| r.iter().map(|(j, _)| j + 1)).max().unwrap();
        let labels = DVector::from_fn(25, |i, _| if i % 3 == 0 { 1.0 } else { -1.0 });
        let ds = Dataset {
            a: CsrMatrix::from_rows(d, &rows).unwrap(),
            labels,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.svm");
        write_libsvm(&path, &ds).unwrap();
        assert_eq!(load_libsvm(&path).unwrap(), ds);
    }
}
