//! CSV and JSON artifacts. Floats are written with 12 significant digits.

use std::fs;
use std::path::Path;

use cvk_core::grid::{ControlField, TimeGrid};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// `x` in scientific notation with 12 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes a header line and one row per record, LF-terminated.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |e: csv::Error| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_field(path: &Path, field: &ControlField) -> CliResult<()> {
    let grid = field.grid();
    write_csv(
        path,
        &["t", "f"],
        field
            .values()
            .iter()
            .enumerate()
            .map(|(k, f)| [fmt_float(grid.node(k)), fmt_float(*f)]),
    )
}

/// Reads a two-column `t, f` file with a header line.
pub fn read_field(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let input_err = |message: String| CliError::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => input_err(format!("{other:?}")),
        })?;
    let mut t = Vec::new();
    let mut f = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_err(e.to_string()))?;
        if record.len() != 2 {
            return Err(input_err(format!(
                "row {}: expected 2 columns, found {}",
                line + 1,
                record.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| input_err(format!("row {}: `{s}`: {e}", line + 1)))
        };
        t.push(parse(&record[0])?);
        f.push(parse(&record[1])?);
    }
    if t.is_empty() {
        return Err(input_err("field file has no samples".into()));
    }
    Ok((t, f))
}

/// Grid implied by a field file: `t_f` is the last time, one step per row.
pub fn read_field_with_grid(path: &Path) -> CliResult<ControlField> {
    let (t, f) = read_field(path)?;
    if t.len() < 3 {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            message: format!("need at least 3 samples, found {}", t.len()),
        });
    }
    let grid = TimeGrid::new(t[t.len() - 1], t.len() - 1)?;
    check_times(path, &t, grid)?;
    Ok(ControlField::new(grid, f)?)
}

/// Reads a field file that must sample exactly the nodes of `grid`.
pub fn read_field_on_grid(path: &Path, grid: TimeGrid) -> CliResult<ControlField> {
    let (t, f) = read_field(path)?;
    if t.len() != grid.n_nodes() {
        return Err(CliError::Core(cvk_core::Error::GridMismatch {
            expected: grid.n_nodes(),
            actual: t.len(),
        }));
    }
    check_times(path, &t, grid)?;
    Ok(ControlField::new(grid, f)?)
}

fn check_times(path: &Path, t: &[f64], grid: TimeGrid) -> CliResult<()> {
    // written with 12 significant digits
    let tol = 1e-9 * grid.t_final().max(1.0);
    for (k, tk) in t.iter().enumerate() {
        if (tk - grid.node(k)).abs() > tol {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                message: format!(
                    "row {}: time {tk} does not match grid node {}",
                    k + 1,
                    grid.node(k)
                ),
            });
        }
    }
    Ok(())
}

/// Keys of `summary.json`; the same set for every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub final_d2: f64,
    pub final_negativity: f64,
    pub target_negativity: f64,
    pub iterations: usize,
    pub converged: Option<bool>,
    pub t_qsl: Option<f64>,
    pub stop_reason: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(1.0), "1.00000000000e0");
        assert_eq!(fmt_float(-3.606737602222), "-3.60673760222e0");
        assert_eq!(fmt_float(0.0), "0.00000000000e0");
    }

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let grid = TimeGrid::new(3.0, 30).unwrap();
        let field = ControlField::from_fn(grid, |t| (t * 1.3).sin()).unwrap();
        write_field(&path, &field).unwrap();
        let back = read_field_on_grid(&path, grid).unwrap();
        for (a, b) in field.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-11);
        }
        let implied = read_field_with_grid(&path).unwrap();
        assert_eq!(implied.grid().n_steps(), 30);
        let other = TimeGrid::new(3.0, 31).unwrap();
        assert!(matches!(
            read_field_on_grid(&path, other),
            Err(CliError::Core(cvk_core::Error::GridMismatch { .. }))
        ));
    }

    #[test]
    fn empty_field_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        fs::write(&path, "t,f\n").unwrap();
        assert!(matches!(read_field(&path), Err(CliError::Input { .. })));
    }
}
