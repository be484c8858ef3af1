//! Plain-text exports shared by the pipeline stages.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Square matrix as CSV with the ids as header row and first column.
pub fn matrix_csv(ids: &[String], m: &Matrix) -> String {
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(&csv_field(id));
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(&csv_field(id));
        for v in m.row(i) {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, ids: &[String], m: &Matrix) -> Result<()> {
    if m.rows() != ids.len() || m.cols() != ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ids for a {}x{} matrix",
            ids.len(),
            m.rows(),
            m.cols()
        )));
    }
    fs::write(path, matrix_csv(ids, m)).map_err(|e| Error::io(path, e))
}

/// Parse a matrix written by [`matrix_csv`], returning ids and values.
pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, Matrix)> {
    let bad = |message: String| Error::Format {
        path: "<csv>".into(),
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty csv".into()))?;
    let ids: Vec<String> = header.split(',').skip(1).map(unquote).collect();
    let mut values = Vec::with_capacity(ids.len() * ids.len());
    for line in lines {
        for cell in line.split(',').skip(1) {
            values.push(cell.parse::<f64>().map_err(|e| bad(format!("{cell:?}: {e}")))?);
        }
    }
    let n = ids.len();
    Ok((ids, Matrix::from_vec(n, n, values)?))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn unquote(s: &str) -> String {
    s.strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .map_or_else(|| s.to_string(), |t| t.replace("\"\"", "\""))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let m = Matrix::from_rows(&[vec![1.0, 0.1 + 0.2], vec![1.0 / 3.0, -2.5e-300]]).unwrap();
        let (ids2, m2) = parse_matrix_csv(&matrix_csv(&ids, &m)).unwrap();
        assert_eq!(ids, ids2);
        assert_eq!(m, m2);
    }
}
