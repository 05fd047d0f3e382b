//! `optimize`, `propagate` and `spectrum` drivers.

use std::path::Path;

use cvk_core::dynamics::{propagate_cm, CmTrajectory};
use cvk_core::gaussian::{cm_distance, log_negativity, vacuum_cm, CovarianceMatrix, ModeLayout};
use cvk_core::grid::ControlField;
use cvk_core::krotov::{optimize, qsl_reachability_hint, KrotovOutcome};
use cvk_core::open_bath::{propagate_open_cm, LorentzianBath, OpenTrajectory};
use cvk_core::optomech::{BathSpec, Preset};
use cvk_core::spectral::{amplitude_report, dct_forward};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, fmt_float, read_field_on_grid, read_field_with_grid, write_csv, write_field, write_json, Summary};

pub struct OptimizeReport {
    pub summary: Summary,
    pub outcome: KrotovOutcome,
}

/// `T_QSL` for the configured target, when the coupling is positive.
pub fn t_qsl(p: &Preset) -> Option<f64> {
    qsl_reachability_hint(p.target_r, p.params.coupling).ok()
}

/// Closed-system Krotov run. Writes every artifact even when the run stops
/// without converging; the caller decides the exit status.
pub fn run_optimize(cfg: &ExperimentConfig) -> CliResult<OptimizeReport> {
    let preset = cfg.to_preset()?;
    if cfg.bath.is_some() {
        eprintln!("note: optimization is closed-system; [bath] only affects propagate and scan");
    }
    let guess = cfg.initial_field()?;
    let outcome = optimize(&preset.problem()?, &guess, preset.shape, &preset.config)?;

    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    write_field(&dir.join("field.csv"), &outcome.field)?;
    write_csv(
        &dir.join("iterations.csv"),
        &["iter", "d2", "field_update_norm"],
        outcome.records.iter().map(|r| {
            [
                r.iter.to_string(),
                fmt_float(r.d2),
                fmt_float(r.field_update_norm),
            ]
        }),
    )?;
    write_dynamics(&dir.join("dynamics.csv"), &outcome.trajectory, &preset)?;
    write_spectrum(&dir.join("spectrum.csv"), &outcome.field)?;

    let target = preset.target();
    let final_state = outcome.trajectory.final_state();
    let summary = Summary {
        final_d2: cm_distance(final_state, &target)?,
        final_negativity: log_negativity(final_state)?,
        target_negativity: preset.target_negativity(),
        iterations: outcome.iterations(),
        converged: Some(outcome.converged()),
        t_qsl: t_qsl(&preset),
        stop_reason: Some(outcome.stop.as_str().to_string()),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(OptimizeReport { summary, outcome })
}

/// Closed or open propagation of `field`, depending on `bath`.
pub enum Propagation {
    Closed(CmTrajectory),
    Open(OpenTrajectory),
}

impl Propagation {
    pub fn cm(&self) -> &CmTrajectory {
        match self {
            Self::Closed(t) => t,
            Self::Open(t) => &t.cm,
        }
    }

    pub fn final_state(&self) -> &CovarianceMatrix {
        self.cm().final_state()
    }
}

pub fn propagate(preset: &Preset, field: &ControlField, bath: Option<&LorentzianBath>) -> CliResult<Propagation> {
    let gen = preset.generator()?;
    let vacuum = vacuum_cm(ModeLayout::two_mode());
    Ok(match bath {
        None => Propagation::Closed(propagate_cm(&gen, field, &vacuum)?),
        Some(b) => Propagation::Open(propagate_open_cm(&gen, field, b, &vacuum)?),
    })
}

/// Replays a field (file, guess file or constant guess). With
/// `compare_baths`, also writes closed, Markov and non-Markov dynamics side by
/// side.
pub fn run_propagate(cfg: &ExperimentConfig, field_path: Option<&Path>, compare_baths: bool) -> CliResult<Summary> {
    let preset = cfg.to_preset()?;
    let field = match field_path {
        Some(p) => read_field_on_grid(p, preset.grid)?,
        None => cfg.initial_field()?,
    };
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;

    let bath = preset.bath().transpose()?;
    let run = propagate(&preset, &field, bath.as_ref())?;
    write_dynamics(&dir.join("dynamics.csv"), run.cm(), &preset)?;
    if let Propagation::Open(open) = &run {
        write_obar(&dir.join("obar.csv"), open)?;
    }

    if compare_baths {
        let spec = preset
            .bath
            .ok_or_else(|| CliError::Config("--compare-baths needs a [bath] section".into()))?;
        let eta = spec
            .eta
            .ok_or_else(|| CliError::Config("--compare-baths needs bath.eta and bath.markov = false".into()))?;
        let closed = propagate(&preset, &field, None)?;
        let markov = BathSpec { eta: None, ..spec }.build()?;
        let markov = propagate(&preset, &field, Some(&markov))?;
        let memory = BathSpec { eta: Some(eta), ..spec }.build()?;
        let memory = propagate(&preset, &field, Some(&memory))?;
        write_dynamics(&dir.join("dynamics_closed.csv"), closed.cm(), &preset)?;
        write_dynamics(&dir.join("dynamics_markov.csv"), markov.cm(), &preset)?;
        write_dynamics(&dir.join("dynamics_nonmarkov.csv"), memory.cm(), &preset)?;
    }

    let target = preset.target();
    let summary = Summary {
        final_d2: cm_distance(run.final_state(), &target)?,
        final_negativity: log_negativity(run.final_state())?,
        target_negativity: preset.target_negativity(),
        iterations: 0,
        converged: None,
        t_qsl: t_qsl(&preset),
        stop_reason: None,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Amplitude spectrum of a field file; the grid is read from the file.
pub fn run_spectrum(field_path: &Path, out_dir: &Path) -> CliResult<Vec<(f64, f64)>> {
    let field = read_field_with_grid(field_path)?;
    ensure_dir(out_dir)?;
    let report = spectrum_of(&field)?;
    write_csv(
        &out_dir.join("spectrum.csv"),
        &["omega", "amplitude"],
        report.iter().map(|(w, a)| [fmt_float(*w), fmt_float(*a)]),
    )?;
    Ok(report)
}

/// `(ω_j, amplitude_j)` of the first `n_steps` samples.
pub fn spectrum_of(field: &ControlField) -> CliResult<Vec<(f64, f64)>> {
    let grid = field.grid();
    let spec = dct_forward(&field.values()[..grid.n_steps()], grid.t_final())?;
    Ok(amplitude_report(&spec))
}

fn write_spectrum(path: &Path, field: &ControlField) -> CliResult<()> {
    let report = spectrum_of(field)?;
    write_csv(
        path,
        &["omega", "amplitude"],
        report.iter().map(|(w, a)| [fmt_float(*w), fmt_float(*a)]),
    )
}

pub fn write_dynamics(path: &Path, traj: &CmTrajectory, preset: &Preset) -> CliResult<()> {
    let target = preset.target();
    let nt = preset.target_negativity();
    let grid = traj.grid();
    let mut rows = Vec::with_capacity(grid.n_nodes());
    for (k, state) in traj.states().iter().enumerate() {
        let n = log_negativity(state)?;
        rows.push([
            fmt_float(grid.node(k)),
            fmt_float(n),
            fmt_float(n / nt),
            fmt_float(cm_distance(state, &target)?),
        ]);
    }
    write_csv(path, &["t", "negativity", "negativity_over_target", "d2_to_target"], rows)
}

fn write_obar(path: &Path, traj: &OpenTrajectory) -> CliResult<()> {
    let grid = traj.cm.grid();
    let width = traj.obar.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    for i in 0..width {
        header.push(format!("re_o{i}"));
        header.push(format!("im_o{i}"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        traj.obar.iter().enumerate().map(|(k, o)| {
            std::iter::once(fmt_float(grid.node(k)))
                .chain(o.iter().flat_map(|c| [fmt_float(c.re), fmt_float(c.im)]))
                .collect::<Vec<_>>()
        }),
    )
}
