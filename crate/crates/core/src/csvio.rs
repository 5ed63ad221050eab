//! CSV reading/writing shared by the simulation, training, and online traces.
//!
//! All floats are printed with 17 significant digits so that written files
//! round-trip f64 values exactly and reruns are byte-identical.

use std::fmt::Write as _;

use thiserror::Error;

use crate::diagram::ValueKind;
use crate::value::Value;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv parse error: {0}")]
    Malformed(#[from] csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("unexpected column `{0}` (expected x0..xk then y0..ym)")]
    UnexpectedColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: cannot parse `{text}` as {kind}")]
    BadValue { row: usize, column: String, text: String, kind: ValueKind },
    #[error("header does not cover port `{0}`")]
    MissingColumn(String),
}

/// Format a float with 17 significant digits (exact f64 round-trip).
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Render a port value as a single CSV cell.
///
/// Booleans print as `0`/`1`; vectors as `;`-joined components.
pub fn format_value(v: &Value) -> String {
    match v {
        Value::Bool(b) => if *b { "1" } else { "0" }.to_string(),
        Value::Real(x) => format_f64(*x),
        Value::RealVec(xs) => {
            let mut s = String::new();
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    s.push(';');
                }
                let _ = write!(s, "{}", format_f64(*x));
            }
            s
        }
    }
}

/// Parse one CSV cell as a value of the given kind.
pub fn parse_value(kind: ValueKind, text: &str) -> Option<Value> {
    let t = text.trim();
    match kind {
        ValueKind::Boolean => match t {
            "0" | "false" => Some(Value::Bool(false)),
            "1" | "true" => Some(Value::Bool(true)),
            _ => None,
        },
        ValueKind::Real => t.parse::<f64>().ok().map(Value::Real),
        ValueKind::RealVector(d) => {
            let parts: Vec<&str> = if t.is_empty() { Vec::new() } else { t.split(';').collect() };
            if parts.len() != d {
                return None;
            }
            let mut xs = Vec::with_capacity(d);
            for p in parts {
                xs.push(p.trim().parse::<f64>().ok()?);
            }
            Some(Value::RealVec(xs))
        }
    }
}

/// A supervised dataset: rows of inputs paired with target outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn pairs(&self) -> impl Iterator<Item = (&Vec<f64>, &Vec<f64>)> {
        self.inputs.iter().zip(self.targets.iter())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Load a dataset from CSV text with header `x0..xk,y0..ym`.
pub fn load_dataset(text: &str) -> Result<Dataset, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(CsvError::MissingHeader);
    }
    let mut x_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x_cols.push((idx, i));
        } else if let Some(idx) = name.strip_prefix('y').and_then(|s| s.parse::<usize>().ok()) {
            y_cols.push((idx, i));
        } else {
            return Err(CsvError::UnexpectedColumn(name.to_string()));
        }
    }
    x_cols.sort_unstable();
    y_cols.sort_unstable();

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(CsvError::RowWidth {
                row: row_idx + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let parse_cell = |col: usize| -> Result<f64, CsvError> {
            let text = &record[col];
            text.parse::<f64>().map_err(|_| CsvError::BadValue {
                row: row_idx + 1,
                column: headers[col].to_string(),
                text: text.to_string(),
                kind: ValueKind::Real,
            })
        };
        let mut x = Vec::with_capacity(x_cols.len());
        for &(_, col) in &x_cols {
            x.push(parse_cell(col)?);
        }
        let mut y = Vec::with_capacity(y_cols.len());
        for &(_, col) in &y_cols {
            y.push(parse_cell(col)?);
        }
        inputs.push(x);
        targets.push(y);
    }
    Ok(Dataset { inputs, targets })
}

/// Load rows of port values from CSV whose header names the ports.
///
/// A leading `t` column, if present, is ignored; remaining columns must cover
/// every port exactly (any order).
pub fn load_port_rows(
    text: &str,
    ports: &[crate::diagram::PortSpec],
) -> Result<Vec<Vec<Value>>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut columns = Vec::with_capacity(ports.len());
    for p in ports {
        let col = headers
            .iter()
            .position(|h| h == p.name)
            .ok_or_else(|| CsvError::MissingColumn(p.name.clone()))?;
        columns.push((col, p.kind, p.name.clone()));
    }
    let mut rows = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(ports.len());
        for (col, kind, name) in &columns {
            let text = record.get(*col).ok_or(CsvError::RowWidth {
                row: row_idx + 1,
                expected: headers.len(),
                found: record.len(),
            })?;
            row.push(parse_value(*kind, text).ok_or_else(|| CsvError::BadValue {
                row: row_idx + 1,
                column: name.clone(),
                text: text.to_string(),
                kind: *kind,
            })?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Render a loss curve as `epoch,mean_loss` CSV.
pub fn loss_curve_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{}", epoch, format_f64(*loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_roundtrip_columns() {
        let data = load_dataset("x0,x1,y0\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(data.inputs, vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
        assert_eq!(data.targets, vec![vec![3.0], vec![6.0]]);
    }

    #[test]
    fn dataset_rejects_unknown_columns() {
        assert!(matches!(
            load_dataset("a,b\n1,2\n"),
            Err(CsvError::UnexpectedColumn(_))
        ));
    }

    #[test]
    fn shuffled_header_order_is_normalized() {
        let data = load_dataset("y0,x1,x0\n9,2,1\n").unwrap();
        assert_eq!(data.inputs, vec![vec![1.0, 2.0]]);
        assert_eq!(data.targets, vec![vec![9.0]]);
    }

    #[test]
    fn float_format_roundtrips() {
        for x in [0.0, 1.0, -1.5, std::f64::consts::PI, 1e-300, 1.23456789012345e17] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn value_cells_roundtrip() {
        let v = Value::RealVec(vec![1.0, -2.5]);
        let cell = format_value(&v);
        assert_eq!(parse_value(ValueKind::RealVector(2), &cell), Some(v));
        assert_eq!(parse_value(ValueKind::Boolean, "1"), Some(Value::Bool(true)));
        assert_eq!(parse_value(ValueKind::Boolean, "2"), None);
    }
}
