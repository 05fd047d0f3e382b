use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvk::commands::{run_optimize, run_propagate, run_spectrum};
use cvk::config::{load, RawConfig};
use cvk::scan::{resolve_threads, run_scan};
use cvk::{CliError, CliResult};
use toml::Value;

/// Krotov optimal control of Gaussian covariance-matrix dynamics.
#[derive(Parser)]
#[command(name = "cvk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter set: fig2, fig2_spectral, fig3_rwa, fig3_strong,
    /// fig4_scan, fig5_open, fig6_scan, fig7_scan. Defaults to fig2.
    #[arg(long)]
    preset: Option<String>,
    /// Override applied last, e.g. `--set optimizer.lambda_a=500`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (same as `--set output.dir=...`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn raw(&self) -> CliResult<RawConfig> {
        let mut raw = load(self.preset.as_deref(), self.config.as_deref(), &self.sets)?;
        if let Some(out) = &self.out {
            raw.set("output.dir", Value::String(out.display().to_string()))?;
        }
        Ok(raw)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the control field and write field, convergence, dynamics,
    /// spectrum and summary files.
    Optimize(Common),
    /// Propagate a given field (closed, or open when [bath] is set).
    Propagate {
        #[command(flatten)]
        common: Common,
        /// Two-column t,f field file; defaults to the configured guess.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Also write closed, Markov and non-Markov dynamics side by side.
        #[arg(long)]
        compare_baths: bool,
    },
    /// Sweep two settings over a grid of points.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Points per axis, overriding both axis counts.
        #[arg(long)]
        resolution: Option<usize>,
        /// Worker threads (default: CVK_THREADS, then available cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Amplitude spectrum of a field file.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Field file; defaults to guess.file from the configuration.
        #[arg(long)]
        field: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Optimize(common) => {
            let cfg = common.raw()?.resolve()?;
            let report = run_optimize(&cfg)?;
            println!(
                "{}: d2 = {:e}, N/N_T = {:.6}, {} iterations",
                report.outcome.stop.as_str(),
                report.summary.final_d2,
                report.summary.final_negativity / report.summary.target_negativity,
                report.summary.iterations
            );
            if !report.outcome.converged() {
                return Err(CliError::NotConverged {
                    reason: report.outcome.stop.as_str(),
                    d2: report.summary.final_d2,
                });
            }
        }
        Command::Propagate {
            common,
            field,
            compare_baths,
        } => {
            let cfg = common.raw()?.resolve()?;
            let s = run_propagate(&cfg, field.as_deref(), compare_baths)?;
            println!(
                "final N = {:.6}, N/N_T = {:.6}",
                s.final_negativity,
                s.final_negativity / s.target_negativity
            );
        }
        Command::Scan {
            common,
            resolution,
            threads,
        } => {
            let mut raw = common.raw()?;
            if let Some(n) = resolution {
                let n = i64::try_from(n).map_err(|_| CliError::Config("--resolution too large".into()))?;
                raw.set("scan.axis1.count", Value::Integer(n))?;
                raw.set("scan.axis2.count", Value::Integer(n))?;
            }
            let rows = run_scan(&raw, resolve_threads(threads))?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} points, {failed} failed", rows.len());
        }
        Command::Spectrum { common, field } => {
            let cfg = common.raw()?.resolve()?;
            let path = field
                .or(cfg.guess.file.clone())
                .ok_or_else(|| CliError::Config("spectrum: --field or guess.file required".into()))?;
            let rows = run_spectrum(&path, &cfg.output.dir)?;
            println!("{} frequencies", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
