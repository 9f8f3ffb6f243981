//! Points and basis CSV files, report output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::{CliError, CliResult};
use crate::geometry::PointSet;

/// Where a points file came from, echoed in manifests.
#[derive(Debug, Clone)]
pub struct InputInfo {
    pub path: PathBuf,
    pub sha256: String,
    pub n: usize,
    pub d: usize,
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Rows of decimals, comma separated. Lines starting with `#` are skipped.
/// All rows must have the same length.
pub fn parse_rows(bytes: &[u8], origin: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(CliError::Data(format!("{}: line {line}: {e}", origin.display()))),
        }
        let line = record.position().map_or(line, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!(
                    "{}: line {line}, column {}: not a finite number: {field:?}",
                    origin.display(),
                    col + 1
                ))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Data(format!(
                    "{}: line {line}: expected {} values, found {}",
                    origin.display(),
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", origin.display())));
    }
    Ok(rows)
}

pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    parse_rows(&read_bytes(path)?, path)
}

pub fn read_points(path: &Path) -> CliResult<(PointSet, InputInfo)> {
    let bytes = read_bytes(path)?;
    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    let points = PointSet::from_rows(&parse_rows(&bytes, path)?)?;
    let info = InputInfo { path: path.to_path_buf(), sha256, n: points.n(), d: points.d() };
    Ok((points, info))
}

/// Writes one row per matrix row using the shortest round-trip formatting.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&str>) -> CliResult<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Pretty JSON to `path`, or to stdout.
pub fn emit_json(path: Option<&Path>, doc: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("json values serialize");
    text.push('\n');
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_spaces() {
        let rows = parse_rows(b"# x,y\n1, 2\n\n-3.5,4e2\n", Path::new("t")).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![-3.5, 400.0]]);
    }

    #[test]
    fn bad_cell_reports_its_line() {
        let err = parse_rows(b"# h\n1,2\n3,abc\n", Path::new("t")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let msg = parse_rows(b"1,2\n3\n", Path::new("t")).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("expected 2"), "{msg}");
        assert!(parse_rows(b"# only a comment\n", Path::new("t")).is_err());
        assert!(parse_rows(b"1,NaN\n", Path::new("t")).is_err());
    }
}
