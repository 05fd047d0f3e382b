//! Layered TOML configuration: preset, then config file, then `--set`
//! overrides. Every layer is merged as a raw table and validated once at the
//! end, so unknown keys are rejected no matter where they come from.

use std::path::{Path, PathBuf};

use cvk_core::grid::{ControlField, TimeGrid};
use cvk_core::krotov::{KrotovConfig, ShapeFunction};
use cvk_core::optomech::{self, BathSpec, OptomechParams, Preset, ScanMode};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};
use crate::io::read_field_on_grid;

pub const DEFAULT_PRESET: &str = "fig2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub target: TargetSection,
    pub schedule: ScheduleSection,
    pub optimizer: OptimizerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSection>,
    #[serde(default)]
    pub guess: GuessSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub omega_m: f64,
    /// Effective optomechanical coupling `G`.
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// Two-mode squeezing parameter of the target state.
    pub r: f64,
}

/// Exactly one of `n_steps` and `dt` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub t_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeName {
    Blackman,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub lambda_a: f64,
    pub tol_d2: f64,
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_cutoff: Option<usize>,
    #[serde(default = "default_shape")]
    pub shape: ShapeName,
}

fn default_shape() -> ShapeName {
    ShapeName::Blackman
}

/// `markov = true` selects the memoryless limit and ignores `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default)]
    pub markov: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub omega_shift: f64,
    #[serde(default)]
    pub lambda_o: f64,
    #[serde(default)]
    pub lambda_m: f64,
}

/// A field file, when present, wins over the constant `value`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessSection {
    #[serde(default)]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    /// Dotted key of a numeric setting, e.g. `bath.eta`.
    pub key: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSection {
    pub fn values(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanModeName {
    /// Optimize the field independently at every point.
    Optimize,
    /// Propagate one fixed field at every point.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub axis1: AxisSection,
    pub axis2: AxisSection,
    pub mode: ScanModeName,
    /// Field replayed in `replay` mode; optimized from the base point if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
}

/// Numeric keys a scan axis may sweep.
pub const SCAN_KEYS: [&str; 12] = [
    "model.omega_m",
    "model.coupling",
    "target.r",
    "schedule.t_f",
    "schedule.dt",
    "optimizer.lambda_a",
    "optimizer.tol_d2",
    "guess.value",
    "bath.eta",
    "bath.omega_shift",
    "bath.lambda_o",
    "bath.lambda_m",
];

impl ExperimentConfig {
    pub fn from_preset(p: &Preset) -> Self {
        let sweeps_t_f = p
            .scan
            .is_some_and(|s| s.axis1.key == "schedule.t_f" || s.axis2.key == "schedule.t_f");
        let schedule = if sweeps_t_f {
            ScheduleSection {
                t_f: p.grid.t_final(),
                n_steps: None,
                dt: Some(p.grid.dt()),
            }
        } else {
            ScheduleSection {
                t_f: p.grid.t_final(),
                n_steps: Some(p.grid.n_steps()),
                dt: None,
            }
        };
        let axis = |a: optomech::ScanAxis| AxisSection {
            key: a.key.to_string(),
            min: a.min,
            max: a.max,
            count: a.count,
        };
        Self {
            model: ModelSection {
                omega_m: p.params.omega_m,
                coupling: p.params.coupling,
            },
            target: TargetSection { r: p.target_r },
            schedule,
            optimizer: OptimizerSection {
                lambda_a: p.config.lambda_a,
                tol_d2: p.config.tol_d2,
                max_iters: p.config.max_iters,
                spectral_cutoff: p.config.spectral_cutoff,
                shape: match p.shape {
                    ShapeFunction::Blackman => ShapeName::Blackman,
                    ShapeFunction::ConstantOne => ShapeName::Constant,
                },
            },
            bath: p.bath.map(|b| BathSection {
                markov: b.eta.is_none(),
                eta: b.eta,
                omega_shift: b.omega_shift,
                lambda_o: b.lambda_o,
                lambda_m: b.lambda_m,
            }),
            guess: GuessSection {
                value: p.guess,
                file: None,
            },
            output: OutputSection::default(),
            run: RunSection::default(),
            scan: p.scan.map(|s| ScanSection {
                axis1: axis(s.axis1),
                axis2: axis(s.axis2),
                mode: match s.mode {
                    ScanMode::Optimize => ScanModeName::Optimize,
                    ScanMode::Replay => ScanModeName::Replay,
                },
                field: None,
            }),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        fn bad(key: &str, reason: impl std::fmt::Display) -> CliResult<()> {
            Err(CliError::Config(format!("{key}: {reason}")))
        }
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                bad(key, format_args!("must be a positive number, got {v}"))
            }
        };
        positive("model.omega_m", self.model.omega_m)?;
        if !self.model.coupling.is_finite() {
            return bad("model.coupling", "must be finite");
        }
        if !(self.target.r.is_finite() && self.target.r >= 0.0) {
            return bad("target.r", format_args!("must be non-negative, got {}", self.target.r));
        }
        positive("schedule.t_f", self.schedule.t_f)?;
        match (self.schedule.n_steps, self.schedule.dt) {
            (Some(_), Some(_)) => return bad("schedule", "give either n_steps or dt, not both"),
            (None, None) => return bad("schedule", "one of n_steps or dt is required"),
            (Some(n), None) if n < 2 => return bad("schedule.n_steps", "must be at least 2"),
            (None, Some(dt)) => positive("schedule.dt", dt)?,
            _ => {}
        }
        positive("optimizer.lambda_a", self.optimizer.lambda_a)?;
        positive("optimizer.tol_d2", self.optimizer.tol_d2)?;
        if self.optimizer.max_iters == 0 {
            return bad("optimizer.max_iters", "must be at least 1");
        }
        if self.optimizer.spectral_cutoff == Some(0) {
            return bad("optimizer.spectral_cutoff", "must be at least 1");
        }
        if let Some(b) = &self.bath {
            if !b.markov {
                match b.eta {
                    None => return bad("bath.eta", "required unless bath.markov = true"),
                    Some(eta) => positive("bath.eta", eta)?,
                }
            }
            for (key, v) in [
                ("bath.omega_shift", b.omega_shift),
                ("bath.lambda_o", b.lambda_o),
                ("bath.lambda_m", b.lambda_m),
            ] {
                if !v.is_finite() {
                    return bad(key, "must be finite");
                }
            }
        }
        if let Some(s) = &self.scan {
            for (name, a) in [("scan.axis1", &s.axis1), ("scan.axis2", &s.axis2)] {
                if !SCAN_KEYS.contains(&a.key.as_str()) {
                    return bad(
                        &format!("{name}.key"),
                        format_args!("`{}` is not a scannable setting", a.key),
                    );
                }
                if a.count < 2 {
                    return bad(&format!("{name}.count"), "must be at least 2");
                }
                if !(a.min.is_finite() && a.max.is_finite()) {
                    return bad(name, "bounds must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        let grid = match (self.schedule.n_steps, self.schedule.dt) {
            (Some(n), _) => TimeGrid::new(self.schedule.t_f, n),
            (None, Some(dt)) => TimeGrid::with_spacing(self.schedule.t_f, dt),
            (None, None) => return Err(CliError::Config("schedule: n_steps or dt required".into())),
        };
        Ok(grid?)
    }

    pub fn params(&self) -> OptomechParams {
        OptomechParams {
            omega_m: self.model.omega_m,
            coupling: self.model.coupling,
        }
    }

    pub fn krotov(&self) -> KrotovConfig {
        KrotovConfig {
            lambda_a: self.optimizer.lambda_a,
            tol_d2: self.optimizer.tol_d2,
            max_iters: self.optimizer.max_iters,
            spectral_cutoff: self.optimizer.spectral_cutoff,
        }
    }

    pub fn shape(&self) -> ShapeFunction {
        match self.optimizer.shape {
            ShapeName::Blackman => ShapeFunction::Blackman,
            ShapeName::Constant => ShapeFunction::ConstantOne,
        }
    }

    pub fn bath_spec(&self) -> Option<BathSpec> {
        self.bath.as_ref().map(|b| BathSpec {
            eta: if b.markov { None } else { b.eta },
            omega_shift: b.omega_shift,
            lambda_o: b.lambda_o,
            lambda_m: b.lambda_m,
        })
    }

    /// Preset-shaped view used by the drivers.
    pub fn to_preset(&self) -> CliResult<Preset> {
        Ok(Preset {
            name: "config",
            params: self.params(),
            target_r: self.target.r,
            grid: self.grid()?,
            config: self.krotov(),
            shape: self.shape(),
            guess: self.guess.value,
            bath: self.bath_spec(),
            scan: None,
        })
    }

    pub fn initial_field(&self) -> CliResult<ControlField> {
        let grid = self.grid()?;
        match &self.guess.file {
            Some(path) => read_field_on_grid(path, grid),
            None => Ok(ControlField::constant(grid, self.guess.value)),
        }
    }
}

/// Configuration as a merged TOML table, before typed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    table: Table,
}

impl RawConfig {
    pub fn from_preset_name(name: &str) -> CliResult<Self> {
        let preset = optomech::preset(name)?;
        let table = Table::try_from(ExperimentConfig::from_preset(&preset))
            .map_err(|e| CliError::Config(format!("preset {name}: {e}")))?;
        Ok(Self { table })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    /// Overlays a TOML document on the current table.
    pub fn merge_str(&mut self, text: &str, origin: &Path) -> CliResult<()> {
        let overlay: Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
        normalize_schedule(&mut self.table, &overlay);
        deep_merge(&mut self.table, overlay);
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.merge_str(&text, path)
    }

    /// Applies one `section.key=value` override. Values parse as TOML when
    /// possible and fall back to plain strings.
    pub fn apply_set(&mut self, assignment: &str) -> CliResult<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set `{assignment}`: expected key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: Value) -> CliResult<()> {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("`{key}`: malformed key")));
        }
        let mut overlay = Table::new();
        let mut cursor = &mut overlay;
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("fresh table");
        }
        cursor.insert(parts[parts.len() - 1].to_string(), value);
        normalize_schedule(&mut self.table, &overlay);
        deep_merge(&mut self.table, overlay);
        Ok(())
    }

    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let cfg: ExperimentConfig = Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Builds the merged configuration: preset (default `fig2`), then the config
/// file, then each `--set`.
pub fn load(preset: Option<&str>, file: Option<&Path>, sets: &[String]) -> CliResult<RawConfig> {
    let mut raw = RawConfig::from_preset_name(preset.unwrap_or(DEFAULT_PRESET))?;
    if let Some(path) = file {
        raw.merge_file(path)?;
    }
    for s in sets {
        raw.apply_set(s)?;
    }
    Ok(raw)
}

fn deep_merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `n_steps` and `dt` are alternatives: a layer that sets one drops the other
/// inherited from below.
fn normalize_schedule(base: &mut Table, overlay: &Table) {
    let Some(Value::Table(over)) = overlay.get("schedule") else {
        return;
    };
    let Some(Value::Table(sched)) = base.get_mut("schedule") else {
        return;
    };
    if over.contains_key("dt") && !over.contains_key("n_steps") {
        sched.remove("n_steps");
    }
    if over.contains_key("n_steps") && !over.contains_key("dt") {
        sched.remove("dt");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_round_trips() {
        for name in optomech::PRESET_NAMES {
            let raw = RawConfig::from_preset_name(name).unwrap();
            let cfg = raw.resolve().unwrap();
            let p = optomech::preset(name).unwrap();
            assert_eq!(cfg.grid().unwrap(), p.grid, "{name}");
            assert_eq!(cfg.krotov(), p.config, "{name}");
            assert_eq!(cfg.bath_spec(), p.bath, "{name}");
        }
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut raw = RawConfig::from_preset_name("fig2").unwrap();
        raw.merge_str("[target]\nr = 0.5\n", Path::new("inline")).unwrap();
        raw.apply_set("target.r=0.7").unwrap();
        raw.apply_set("output.dir=results/a").unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.target.r, 0.7);
        assert_eq!(cfg.output.dir, PathBuf::from("results/a"));
    }

    #[test]
    fn integer_override_of_float_key() {
        let mut raw = RawConfig::from_preset_name("fig2").unwrap();
        raw.apply_set("optimizer.lambda_a=500").unwrap();
        assert_eq!(raw.resolve().unwrap().optimizer.lambda_a, 500.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut raw = RawConfig::from_preset_name("fig2").unwrap();
        raw.apply_set("model.colupling=0.2").unwrap();
        let err = raw.resolve().unwrap_err().to_string();
        assert!(err.contains("colupling"), "{err}");

        let mut raw = RawConfig::from_preset_name("fig2").unwrap();
        raw.apply_set("extras.x=1").unwrap();
        let err = raw.resolve().unwrap_err().to_string();
        assert!(err.contains("extras"), "{err}");
    }

    #[test]
    fn dt_replaces_n_steps() {
        let mut raw = RawConfig::from_preset_name("fig2").unwrap();
        raw.apply_set("schedule.dt=0.05").unwrap();
        let grid = raw.resolve().unwrap().grid().unwrap();
        assert_eq!(grid.n_steps(), 1200);
    }

    #[test]
    fn validation_messages_name_the_key() {
        let mut raw = RawConfig::from_preset_name("fig5_open").unwrap();
        raw.apply_set("bath.eta=-1").unwrap();
        let err = raw.resolve().unwrap_err().to_string();
        assert!(err.contains("bath.eta"), "{err}");

        let mut raw = RawConfig::from_preset_name("fig7_scan").unwrap();
        raw.apply_set("scan.axis1.key=\"model.nothing\"").unwrap();
        let err = raw.resolve().unwrap_err().to_string();
        assert!(err.contains("scan.axis1.key"), "{err}");
    }

    #[test]
    fn axis_values_hit_both_ends() {
        let a = AxisSection {
            key: "bath.eta".into(),
            min: 0.05,
            max: 2.0,
            count: 4,
        };
        let v = a.values();
        assert_eq!(v[0], 0.05);
        assert_eq!(v[3], 2.0);
        assert!((v[1] - 0.7).abs() < 1e-12);
    }
}
