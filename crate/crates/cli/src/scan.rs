//! Two-axis parameter scans. Points are independent and run on a rayon pool;
//! rows come back in grid order (axis1 outer, axis2 inner).

use cvk_core::gaussian::log_negativity;
use cvk_core::grid::ControlField;
use cvk_core::krotov::optimize;
use rayon::prelude::*;
use toml::Value;

use crate::commands::{propagate, run_optimize, t_qsl};
use crate::config::{ExperimentConfig, RawConfig, ScanModeName};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, fmt_float, fmt_opt, read_field_on_grid, write_csv};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub axis1: f64,
    pub axis2: f64,
    pub final_negativity: Option<f64>,
    pub n_over_nt: Option<f64>,
    /// `None` for replayed points.
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub t_qsl: Option<f64>,
    /// `ok`, or the error that stopped this point.
    pub status: String,
}

pub const SCAN_HEADER: [&str; 8] = [
    "axis1",
    "axis2",
    "final_negativity",
    "N_over_NT",
    "converged",
    "iterations",
    "t_qsl",
    "status",
];

/// Runs every grid point and writes `scan.csv`. In replay mode without a
/// `scan.field`, the base configuration is optimized once first and its
/// artifacts land in `<out>/replay/`.
pub fn run_scan(raw: &RawConfig, threads: usize) -> CliResult<Vec<ScanRow>> {
    let base = raw.resolve()?;
    let scan = base
        .scan
        .clone()
        .ok_or_else(|| CliError::Config("scan: section required (use a *_scan preset or [scan])".into()))?;
    let dir = base.output.dir.clone();
    ensure_dir(&dir)?;

    let replay = match scan.mode {
        ScanModeName::Optimize => None,
        ScanModeName::Replay => Some(match &scan.field {
            Some(path) => ReplayField::File(path.clone()),
            None => {
                let mut closed = base.clone();
                closed.bath = None;
                closed.scan = None;
                closed.output.dir = dir.join("replay");
                let report = run_optimize(&closed)?;
                if !report.outcome.converged() {
                    eprintln!(
                        "note: replayed field did not converge (d2 = {:e})",
                        report.outcome.final_d2()
                    );
                }
                ReplayField::Field(report.outcome.field)
            }
        }),
    };

    let points: Vec<(f64, f64)> = scan
        .axis1
        .values()
        .into_iter()
        .flat_map(|a| scan.axis2.values().into_iter().map(move |b| (a, b)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<ScanRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(a, b)| {
                let mut row = ScanRow {
                    axis1: a,
                    axis2: b,
                    final_negativity: None,
                    n_over_nt: None,
                    converged: None,
                    iterations: None,
                    t_qsl: None,
                    status: "ok".into(),
                };
                if let Err(e) = run_point(raw, &scan.axis1.key, &scan.axis2.key, (a, b), replay.as_ref(), &mut row) {
                    row.status = e.to_string();
                }
                row
            })
            .collect()
    });

    write_csv(&dir.join("scan.csv"), &SCAN_HEADER, rows.iter().map(row_fields))?;
    Ok(rows)
}

enum ReplayField {
    File(std::path::PathBuf),
    Field(ControlField),
}

fn run_point(
    raw: &RawConfig,
    key1: &str,
    key2: &str,
    (a, b): (f64, f64),
    replay: Option<&ReplayField>,
    row: &mut ScanRow,
) -> CliResult<()> {
    let mut raw = raw.clone();
    raw.set(key1, Value::Float(a))?;
    raw.set(key2, Value::Float(b))?;
    let cfg: ExperimentConfig = raw.resolve()?;
    let preset = cfg.to_preset()?;
    row.t_qsl = t_qsl(&preset);

    let field = match replay {
        None => {
            let outcome = optimize(&preset.problem()?, &cfg.initial_field()?, preset.shape, &preset.config)?;
            row.converged = Some(outcome.converged());
            row.iterations = Some(outcome.iterations());
            outcome.field
        }
        Some(ReplayField::File(path)) => read_field_on_grid(path, preset.grid)?,
        Some(ReplayField::Field(f)) => {
            if f.grid() != preset.grid {
                return Err(CliError::Core(cvk_core::Error::GridMismatch {
                    expected: preset.grid.n_nodes(),
                    actual: f.grid().n_nodes(),
                }));
            }
            f.clone()
        }
    };
    let bath = preset.bath().transpose()?;
    let run = propagate(&preset, &field, bath.as_ref())?;
    let n = log_negativity(run.final_state())?;
    row.final_negativity = Some(n);
    row.n_over_nt = Some(n / preset.target_negativity());
    Ok(())
}

fn row_fields(r: &ScanRow) -> [String; 8] {
    [
        fmt_float(r.axis1),
        fmt_float(r.axis2),
        fmt_opt(r.final_negativity),
        fmt_opt(r.n_over_nt),
        r.converged.map(|c| c.to_string()).unwrap_or_default(),
        r.iterations.map(|i| i.to_string()).unwrap_or_default(),
        fmt_opt(r.t_qsl),
        r.status.clone(),
    ]
}

/// Worker count: explicit flag, then `CVK_THREADS`, then available
/// parallelism.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("CVK_THREADS").ok()?.trim().parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
