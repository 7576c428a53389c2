//! CSV matrices. The literal token `NA` marks a missing entry, `#` starts a
//! comment line, and a leading row without any numeric cell is a header.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DissimilarityMatrix;

/// Formats `x` with 12 significant digits, trimming trailing zeros.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NA".to_string() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", (DIGITS - 1) as usize, x)
    }
}

/// Parses a numeric table. Returns rows of cells, `None` for NA.
pub fn parse_table(text: &str, path: &Path) -> Result<Vec<Vec<Option<f64>>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseError {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if rows.is_empty() && width.is_none() && record.iter().all(|c| c != "NA" && c.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows { path: path.to_path_buf(), line, expected, found: record.len() });
        }
        let row = record
            .iter()
            .map(|cell| {
                if cell == "NA" {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| Error::ParseError {
                        path: path.to_path_buf(),
                        line,
                        message: format!("cannot parse {cell:?} as a number"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parses a dissimilarity matrix from CSV text.
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DissimilarityMatrix> {
    let rows = parse_table(text, path)?;
    let n = rows.len();
    if let Some(row) = rows.first() {
        if row.len() != n {
            return Err(Error::NonSquare { rows: n, cols: row.len() });
        }
    }
    let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j].unwrap_or(f64::NAN));
    let missing = DMatrix::from_fn(n, n, |i, j| rows[i][j].is_none());
    DissimilarityMatrix::new(entries, Some(missing))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DissimilarityMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text, path)
}

/// Reads a table of test dissimilarity vectors, one vector per row.
pub fn read_vectors_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows = parse_table(&text, path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .map(|c| {
                    c.ok_or_else(|| Error::ParseError {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: "NA is not allowed in a test vector".into(),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn matrix_to_csv(delta: &DissimilarityMatrix) -> String {
    let n = delta.len();
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| match delta.get(i, j) {
                Some(v) => format_sig(v),
                None => "NA".to_string(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(delta: &DissimilarityMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, matrix_to_csv(delta))?;
    Ok(())
}

/// Writes rows of numbers, 12 significant digits each.
pub fn write_vectors_csv(rows: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_sig(v)).collect();
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_plain_and_na() {
        let p = Path::new("mem");
        let d = parse_matrix_csv("0,1\n1,0", p).unwrap();
        assert_eq!(d.get(0, 1), Some(1.0));
        let d = parse_matrix_csv("0,NA\r\nNA,0\r\n", p).unwrap();
        assert!(d.is_missing(0, 1) && d.is_missing(1, 0));
        let d = parse_matrix_csv("# note\na,b\n0,2\n2,0\n", p).unwrap();
        assert_eq!(d.get(1, 0), Some(2.0));
        assert!(matches!(parse_matrix_csv("a,b\n0,2\nc,d", p), Err(Error::ParseError { line: 3, .. })));
    }

    #[test]
    fn parse_errors() {
        let p = Path::new("mem");
        assert!(matches!(parse_matrix_csv("0,1\n1", p), Err(Error::RaggedRows { line: 2, .. })));
        assert!(matches!(parse_matrix_csv("0,x\nx,0", p), Err(Error::ParseError { line: 1, .. })));
        assert!(matches!(parse_matrix_csv("0,1,2\n1,0,3", p), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.5), "1.5");
        assert_eq!(format_sig(2.0), "2");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(123456.0), "123456");
        assert!(format_sig(1e-9).contains('e'));
        assert_eq!(format_sig(1e-9).parse::<f64>().unwrap(), 1e-9);
    }

    #[test]
    fn write_read_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-5.0..5.0));
        let d = DissimilarityMatrix::euclidean(&pts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_matrix_csv(&d, &path).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        for (a, b) in d.entries().iter().zip(back.entries().iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}
