//! CSV emission with round-trip-exact float serialization.
//!
//! Floats print with 17 significant digits, which reparses to the
//! identical 64-bit value; undefined statistics print as the literal
//! `NA`; rows end with a bare LF.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    /// Sentinel for undefined values.
    Na,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Na, Cell::F)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

/// 17 significant digits: exact for every finite f64.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 && x.is_sign_positive() {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

fn write_cell(out: &mut impl Write, cell: &Cell) -> std::io::Result<()> {
    match cell {
        Cell::F(x) => write!(out, "{}", format_f64(*x)),
        Cell::I(i) => write!(out, "{i}"),
        Cell::S(s) => write!(out, "{s}"),
        Cell::Na => write!(out, "NA"),
    }
}

/// Header then rows; every row must match the schema arity.
pub fn write_csv(path: &Path, schema: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let inner = |buf: &mut Vec<u8>| -> std::io::Result<()> {
        writeln!(buf, "{}", schema.join(","))?;
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), schema.len(), "row {i} does not match the schema arity");
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    write!(buf, ",")?;
                }
                write_cell(buf, cell)?;
            }
            writeln!(buf)?;
        }
        Ok(())
    };
    inner(&mut buf).map_err(|e| CliError::new(format!("write {}: {e}", path.display())))?;
    std::fs::write(path, buf).map_err(|e| CliError::new(format!("write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_roundtrips() {
        for &x in &[
            0.1,
            -0.30000000000000004,
            1e-300,
            6.02e23,
            std::f64::consts::PI,
            -0.0,
            404.47819834121663,
        ] {
            let s = format_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
        assert_eq!(format_f64(0.0), "0");
    }

    #[test]
    fn header_only_when_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_csv(&path, &["a", "b"], &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
    }

    #[test]
    fn sentinel_serializes_as_na() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("na.csv");
        write_csv(
            &path,
            &["sigma", "cv"],
            &[vec![Cell::F(0.1), Cell::Na], vec![Cell::F(0.2), Cell::F(0.5)]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",NA"));
        assert!(!text.contains('\r'));
    }
}
