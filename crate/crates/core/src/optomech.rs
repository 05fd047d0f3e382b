//! Linearized optomechanical model: cavity mode `a` coupled to a mechanical
//! mode `b` through `G(a + a†)(b + b†)`, with the cavity detuning as control.
//!
//! In quadratures `(q_c, q_m, p_c, p_m)` the Hamiltonian is
//! `f(p_c² + q_c²)/2 + ω_m(p_m² + q_m²)/2 + 2G q_c q_m`. Frequencies are in
//! units of `ω_m`, times in units of `1/ω_m`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::QuadraticGenerator;
use crate::error::{Error, Result};
use crate::gaussian::{log_negativity, two_mode_squeezed_cm, vacuum_cm, CovarianceMatrix, ModeLayout};
use crate::grid::{ControlField, TimeGrid};
use crate::krotov::{ControlProblem, KrotovConfig, ShapeFunction};
use crate::open_bath::{two_mode_couplings, LorentzianBath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptomechParams {
    pub omega_m: f64,
    /// Effective coupling `G`.
    pub coupling: f64,
}

impl Default for OptomechParams {
    fn default() -> Self {
        Self {
            omega_m: 1.0,
            coupling: 0.1,
        }
    }
}

/// `M₀` with `2G` on the `q_c q_m` entries and `ω_m` on the mechanical
/// diagonal; `M_c = diag(1, 0, 1, 0)`.
pub fn build_generator(p: &OptomechParams) -> Result<QuadraticGenerator> {
    if !(p.omega_m.is_finite() && p.omega_m > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_m",
            reason: format!("must be positive, got {}", p.omega_m),
        });
    }
    if !p.coupling.is_finite() {
        return Err(Error::InvalidParameter {
            name: "coupling",
            reason: "must be finite".into(),
        });
    }
    let g2 = 2.0 * p.coupling;
    #[rustfmt::skip]
    let m0 = DMatrix::from_row_slice(4, 4, &[
        0.0, g2,        0.0, 0.0,
        g2,  p.omega_m, 0.0, 0.0,
        0.0, 0.0,       0.0, 0.0,
        0.0, 0.0,       0.0, p.omega_m,
    ]);
    let mc = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]));
    QuadraticGenerator::new(ModeLayout::two_mode(), m0, mc)
}

/// Drive and cavity parameters of the unlinearized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    pub omega_c: f64,
    /// Drive frequency `ω`.
    pub omega: f64,
    /// Single-photon coupling `g`.
    pub g: f64,
    pub omega_m: f64,
    pub omega_d: f64,
    pub kappa_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldSolution {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// `ω − ω_c + 2G²/ω_m`.
    pub detuning: f64,
    /// `G = |α| g`.
    pub coupling: f64,
    pub iterations: usize,
}

const MEAN_FIELD_MAX_ITERS: usize = 10_000;
const MEAN_FIELD_MIXING: f64 = 0.5;

/// Solves `[i(ω − ω_c) − ig(β + β*) − κ_a]α = iΩ_d`, `−iω_m β = ig|α|²` by
/// damped fixed-point iteration on `|α|²`.
pub fn mean_field_fixed_point(mf: &MeanFieldParams) -> Result<MeanFieldSolution> {
    if !(mf.kappa_a > 0.0) {
        return Err(Error::InvalidParameter {
            name: "kappa_a",
            reason: format!("must be positive, got {}", mf.kappa_a),
        });
    }
    if !(mf.omega_m > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_m",
            reason: format!("must be positive, got {}", mf.omega_m),
        });
    }
    let bare = mf.omega - mf.omega_c;
    // with β = −g|α|²/ω_m the effective detuning is ω − ω_c + 2g²|α|²/ω_m
    let target = |n: f64| {
        let shift = bare + 2.0 * mf.g * mf.g * n / mf.omega_m;
        mf.omega_d * mf.omega_d / (shift * shift + mf.kappa_a * mf.kappa_a)
    };
    let mut n = 0.0f64;
    let mut previous = n;
    for iter in 1..=MEAN_FIELD_MAX_ITERS {
        let next = target(n);
        previous = n;
        n = (1.0 - MEAN_FIELD_MIXING) * n + MEAN_FIELD_MIXING * next;
        if (next - previous).abs() <= 1e-12 * next.max(1.0) {
            let n = next;
            let shift = bare + 2.0 * mf.g * mf.g * n / mf.omega_m;
            let alpha = Complex64::new(0.0, mf.omega_d) / Complex64::new(-mf.kappa_a, shift);
            let beta = Complex64::new(-mf.g * alpha.norm_sqr() / mf.omega_m, 0.0);
            let coupling = alpha.norm() * mf.g;
            return Ok(MeanFieldSolution {
                alpha,
                beta,
                detuning: bare + 2.0 * coupling * coupling / mf.omega_m,
                coupling,
                iterations: iter,
            });
        }
    }
    Err(Error::MeanFieldNonConvergence { previous, last: n })
}

/// Bath attached to a preset: `eta = None` selects the Markov limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub eta: Option<f64>,
    pub omega_shift: f64,
    pub lambda_o: f64,
    pub lambda_m: f64,
}

impl BathSpec {
    pub fn build(&self) -> Result<LorentzianBath> {
        let l = two_mode_couplings(self.lambda_o, self.lambda_m);
        match self.eta {
            Some(eta) => LorentzianBath::new(eta, self.omega_shift, l),
            None => LorentzianBath::markov(l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanAxis {
    /// Dotted configuration key, e.g. `bath.lambda_m`.
    pub key: &'static str,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Whether scan points re-optimize or replay a closed-system field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Optimize,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPreset {
    pub axis1: ScanAxis,
    pub axis2: ScanAxis,
    pub mode: ScanMode,
}

/// Parameter bundle for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub params: OptomechParams,
    pub target_r: f64,
    pub grid: TimeGrid,
    pub config: KrotovConfig,
    pub shape: ShapeFunction,
    /// Constant initial guess for the control.
    pub guess: f64,
    pub bath: Option<BathSpec>,
    pub scan: Option<ScanPreset>,
}

pub const PRESET_NAMES: [&str; 8] = [
    "fig2",
    "fig2_spectral",
    "fig3_rwa",
    "fig3_strong",
    "fig4_scan",
    "fig5_open",
    "fig6_scan",
    "fig7_scan",
];

const DEFAULT_SCAN_COUNT: usize = 24;

impl Preset {
    pub fn generator(&self) -> Result<QuadraticGenerator> {
        build_generator(&self.params)
    }

    pub fn target(&self) -> CovarianceMatrix {
        two_mode_squeezed_cm(self.target_r)
    }

    pub fn target_negativity(&self) -> f64 {
        log_negativity(&self.target()).unwrap_or(f64::NAN)
    }

    pub fn problem(&self) -> Result<ControlProblem> {
        Ok(ControlProblem {
            generator: self.generator()?,
            initial: vacuum_cm(ModeLayout::two_mode()),
            target: self.target(),
        })
    }

    pub fn initial_guess(&self) -> ControlField {
        ControlField::constant(self.grid, self.guess)
    }

    pub fn bath(&self) -> Option<Result<LorentzianBath>> {
        self.bath.map(|b| b.build())
    }
}

/// Looks up a named experiment.
pub fn preset(name: &str) -> Result<Preset> {
    let grid = |t_f: f64, n: usize| TimeGrid::new(t_f, n).expect("preset grids are valid");
    let main = Preset {
        name: "fig2",
        params: OptomechParams {
            omega_m: 1.0,
            coupling: 0.1,
        },
        target_r: 1.25,
        grid: grid(60.0, 6000),
        config: KrotovConfig {
            lambda_a: 8000.0,
            tol_d2: 1e-4,
            max_iters: 3000,
            spectral_cutoff: None,
        },
        shape: ShapeFunction::Blackman,
        guess: 0.0,
        bath: None,
        scan: None,
    };
    let axis = |key, min, max| ScanAxis {
        key,
        min,
        max,
        count: DEFAULT_SCAN_COUNT,
    };
    let p = match name {
        "fig2" => main,
        "fig2_spectral" => Preset {
            name: "fig2_spectral",
            // filtered steps are shorter; 8000 needs more than 5000 iterations
            config: KrotovConfig {
                lambda_a: 2000.0,
                max_iters: 5000,
                spectral_cutoff: Some(20),
                ..main.config
            },
            ..main
        },
        "fig3_rwa" => Preset {
            name: "fig3_rwa",
            params: OptomechParams {
                omega_m: 1.0,
                coupling: 0.01,
            },
            target_r: 0.2,
            grid: grid(30.0, 3000),
            guess: -1.0,
            config: KrotovConfig {
                lambda_a: 20.0,
                max_iters: 3000,
                ..main.config
            },
            ..main
        },
        "fig3_strong" => Preset {
            name: "fig3_strong",
            target_r: 1.0,
            grid: grid(30.0, 3000),
            ..main
        },
        "fig4_scan" => Preset {
            name: "fig4_scan",
            target_r: 0.8,
            grid: grid(15.0, 1500),
            // 30 diverges at t_f = 2·T_QSL, G = 0.1
            config: KrotovConfig {
                lambda_a: 100.0,
                max_iters: 3000,
                ..main.config
            },
            scan: Some(ScanPreset {
                axis1: axis("model.coupling", 0.02, 0.2),
                axis2: axis("schedule.t_f", 2.0, 40.0),
                mode: ScanMode::Optimize,
            }),
            ..main
        },
        "fig5_open" => Preset {
            name: "fig5_open",
            bath: Some(BathSpec {
                eta: Some(0.5),
                omega_shift: 0.0,
                lambda_o: 0.0,
                lambda_m: 0.1,
            }),
            ..main
        },
        "fig6_scan" => Preset {
            name: "fig6_scan",
            bath: Some(BathSpec {
                eta: Some(0.5),
                omega_shift: 0.0,
                lambda_o: 0.0,
                lambda_m: 0.1,
            }),
            scan: Some(ScanPreset {
                axis1: axis("bath.lambda_m", 0.01, 0.3),
                axis2: axis("bath.eta", 0.05, 2.0),
                mode: ScanMode::Replay,
            }),
            ..main
        },
        "fig7_scan" => Preset {
            name: "fig7_scan",
            bath: Some(BathSpec {
                eta: Some(0.2),
                omega_shift: 0.0,
                lambda_o: 0.1,
                lambda_m: 0.1,
            }),
            scan: Some(ScanPreset {
                axis1: axis("bath.lambda_o", 0.0, 0.3),
                axis2: axis("bath.lambda_m", 0.0, 0.3),
                mode: ScanMode::Replay,
            }),
            ..main
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(p)
}
