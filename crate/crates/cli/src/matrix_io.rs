//! Headerless comma-separated matrices: one row per line, `n` decimal
//! floats per row.

use crate::CliError;
use cpdetect_core::ObservationMatrix;
use std::io::{Read, Write};

/// Parse a rectangular matrix of finite floats. Diagnostics carry one-based
/// line and column numbers.
pub fn read_matrix<R: Read>(input: R) -> Result<ObservationMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("malformed csv: {e}")))?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(CliError::Input(format!(
                    "line {line}: expected {w} columns, found {}",
                    record.len()
                )));
            }
            Some(_) => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Input(format!("line {line}, column {}: not a number: {cell:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(CliError::Input(format!("line {line}, column {}: value is not finite", col + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let n = width.ok_or_else(|| CliError::Input("matrix is empty".into()))?;
    ObservationMatrix::new(rows, n, values).map_err(|e| CliError::Input(e.to_string()))
}

/// Write with 17 significant digits so that re-reading is bit-exact.
pub fn write_matrix<W: Write>(x: &ObservationMatrix, mut out: W) -> std::io::Result<()> {
    let mut line = String::new();
    for row in x.rows() {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}
