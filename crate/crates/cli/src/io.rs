//! CSV input and atomic output.

use std::io::Write;
use std::path::Path;

use flmtest_core::Grid;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

fn read_records(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::parse(path, e.to_string()))
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> u64 {
    record.position().map_or(fallback as u64, |p| p.line())
}

/// Parses one row of numbers; `expected` fixes the row length.
fn parse_row(path: &Path, record: &csv::StringRecord, index: usize, expected: Option<usize>) -> CliResult<Vec<f64>> {
    let line = record_line(record, index + 1);
    if let Some(p) = expected {
        if record.len() != p {
            return Err(CliError::parse(
                path,
                format!("line {line}: expected {p} fields, found {}", record.len()),
            ));
        }
    }
    record
        .iter()
        .enumerate()
        .map(|(col, field)| {
            if field.is_empty() {
                return Err(CliError::parse(path, format!("line {line}, column {}: missing value", col + 1)));
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::parse(path, format!("line {line}, column {}: cannot parse '{field}'", col + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(path, format!("line {line}, column {}: non-finite value", col + 1)));
            }
            Ok(v)
        })
        .collect()
}

/// A grid row followed by one row per function.
pub fn read_functions(path: &Path) -> CliResult<(Grid, DMatrix<f64>)> {
    let records = read_records(path)?;
    let Some(first) = records.first() else {
        return Err(CliError::parse(path, "file is empty"));
    };
    let points = parse_row(path, first, 0, None)?;
    let p = points.len();
    let grid = Grid::new(points).map_err(|e| CliError::parse(path, format!("grid row: {e}")))?;
    let rows = records[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| parse_row(path, r, i + 1, Some(p)))
        .collect::<CliResult<Vec<_>>>()?;
    let m = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok((grid, m))
}

/// Single-column responses, one per line.
pub fn read_responses(path: &Path) -> CliResult<DVector<f64>> {
    let records = read_records(path)?;
    let values = records
        .iter()
        .enumerate()
        .map(|(i, r)| parse_row(path, r, i, Some(1)).map(|v| v[0]))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

pub fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Prefixes every line of `text` with `# `.
pub fn comment_block(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}
