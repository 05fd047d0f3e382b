//! First-order Krotov optimization of a scalar control driving the
//! covariance matrix towards a target.
//!
//! The final-time cost is `J_T = ‖vec γ_T − vec γ(t_f)‖²`. Each iteration
//! propagates the costate `χ` backwards from `χ(t_f) = 2(vec γ_T − vec γ(t_f))`
//! under the previous field, then sweeps forward, updating the field node by
//! node with
//!
//! ```text
//! Δf(t) = S(t)/λ_a · χᵀ G_c vec γ(t)
//! ```
//!
//! where `γ` is already propagated under the updated field and
//! `G_c = 1⊗σM_c + σM_c⊗1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{
    closed_step, control_flow, propagate_cm, propagate_cm_final, propagate_costate, CmTrajectory,
    QuadraticGenerator, Rk4Buffers,
};
use crate::error::{Error, Result};
use crate::gaussian::{cm_distance, CovarianceMatrix};
use crate::grid::{ControlField, TimeGrid};
use crate::spectral::band_limit_field;

/// Consecutive increases of `d₂` tolerated before a run is declared divergent.
pub const DIVERGENCE_WINDOW: usize = 5;

/// Update shape `S(t) ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFunction {
    /// `0.42 − 0.5 cos(2πt/t_f) + 0.08 cos(4πt/t_f)`, exactly zero at both ends.
    Blackman,
    ConstantOne,
}

impl ShapeFunction {
    pub fn value(&self, t: f64, t_final: f64) -> f64 {
        match self {
            Self::ConstantOne => 1.0,
            Self::Blackman => {
                if t <= 0.0 || t >= t_final {
                    return 0.0;
                }
                let x = t / t_final;
                (0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()).clamp(0.0, 1.0)
            }
        }
    }

    pub fn sample(&self, grid: TimeGrid) -> Vec<f64> {
        let n = grid.n_steps();
        (0..=n)
            .map(|k| match (self, k) {
                (Self::Blackman, 0) => 0.0,
                (Self::Blackman, k) if k == n => 0.0,
                _ => self.value(grid.node(k), grid.t_final()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrotovConfig {
    /// Inverse step size `λ_a`.
    pub lambda_a: f64,
    /// Stop once `d₂ ≤ tol_d2`.
    pub tol_d2: f64,
    pub max_iters: usize,
    /// Number of DCT coefficients kept after each iteration.
    pub spectral_cutoff: Option<usize>,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            lambda_a: 8000.0,
            tol_d2: 1e-4,
            max_iters: 3000,
            spectral_cutoff: None,
        }
    }
}

impl KrotovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_a.is_finite() && self.lambda_a > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda_a",
                reason: format!("must be positive, got {}", self.lambda_a),
            });
        }
        if !(self.tol_d2.is_finite() && self.tol_d2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol_d2",
                reason: format!("must be positive, got {}", self.tol_d2),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if self.spectral_cutoff == Some(0) {
            return Err(Error::InvalidParameter {
                name: "spectral_cutoff",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One line of the convergence log. Iteration 0 is the initial guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub d2: f64,
    /// `sqrt(Σ Δf_k² Δt)` of the update applied in this iteration.
    pub field_update_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationBudget,
    /// `d₂` rose in [`DIVERGENCE_WINDOW`] consecutive iterations.
    Diverged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::IterationBudget => "iteration_budget",
            Self::Diverged => "diverged",
        }
    }
}

/// Generator, initial state and target of one control task.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub generator: QuadraticGenerator,
    pub initial: CovarianceMatrix,
    pub target: CovarianceMatrix,
}

#[derive(Debug, Clone)]
pub struct KrotovOutcome {
    pub field: ControlField,
    pub records: Vec<IterationRecord>,
    /// Forward trajectory under the returned field.
    pub trajectory: CmTrajectory,
    pub stop: StopReason,
}

impl KrotovOutcome {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn final_d2(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.d2)
    }

    /// Number of field updates performed.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }
}

/// `χ(t_f) = −∂J_T/∂vec γ(t_f) = 2(vec γ_T − vec γ(t_f))`.
pub fn costate_boundary(
    gamma_final: &CovarianceMatrix,
    gamma_target: &CovarianceMatrix,
) -> Result<DVector<f64>> {
    if gamma_final.layout() != gamma_target.layout() {
        return Err(Error::DimensionMismatch {
            expected: gamma_target.layout().dim(),
            actual: gamma_final.layout().dim(),
        });
    }
    Ok((gamma_target.to_vec() - gamma_final.to_vec()) * 2.0)
}

/// `Δf = (S/λ_a) χᵀ G_c vec γ`, evaluated with the assembled control flow.
pub fn pulse_update_amplitude(
    chi: &DVector<f64>,
    gamma: &CovarianceMatrix,
    gen: &QuadraticGenerator,
    shape: f64,
    lambda_a: f64,
) -> f64 {
    if shape == 0.0 {
        return 0.0;
    }
    shape / lambda_a * chi.dot(&control_flow(gen).apply(&gamma.to_vec()))
}

/// `χᵀ G_c vec γ = Σ_ij X_ij (Bγ + γBᵀ)_ij` with `B = σM_c`, without building
/// the Kronecker product.
#[inline]
fn control_overlap(chi: &DMatrix<f64>, gamma: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = gamma.nrows();
    let mut acc = 0.0;
    for j in 0..d {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += b[(i, k)] * gamma[(k, j)] + gamma[(i, k)] * b[(j, k)];
            }
            acc += chi[(i, j)] * s;
        }
    }
    acc
}

/// Runs the optimization without progress reporting.
pub fn optimize(
    problem: &ControlProblem,
    guess: &ControlField,
    shape: ShapeFunction,
    config: &KrotovConfig,
) -> Result<KrotovOutcome> {
    optimize_with_observer(problem, guess, shape, config, |_| {})
}

/// Runs the optimization, handing every [`IterationRecord`] to `observer` as
/// soon as it is produced.
pub fn optimize_with_observer(
    problem: &ControlProblem,
    guess: &ControlField,
    shape: ShapeFunction,
    config: &KrotovConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<KrotovOutcome> {
    config.validate()?;
    let gen = &problem.generator;
    let layout = problem.initial.layout();
    if gen.layout() != layout || problem.target.layout() != layout {
        return Err(Error::DimensionMismatch {
            expected: gen.layout().dim(),
            actual: layout.dim(),
        });
    }
    let grid = guess.grid();
    if let Some(k) = config.spectral_cutoff {
        if k > grid.n_steps() {
            return Err(Error::InvalidParameter {
                name: "spectral_cutoff",
                reason: format!("cannot exceed {} grid steps", grid.n_steps()),
            });
        }
    }
    let shape_values = shape.sample(grid);
    let dt = grid.dt();
    let b = gen.control_drift().clone();
    let mut buf = Rk4Buffers::new(layout.dim());

    let mut field = guess.clone();
    let mut gamma_final = propagate_cm_final(gen, &field, &problem.initial)?;
    let mut d2 = cm_distance(&gamma_final, &problem.target)?;
    let mut records = vec![IterationRecord {
        iter: 0,
        d2,
        field_update_norm: 0.0,
    }];
    observer(&records[0]);

    let mut stop = StopReason::IterationBudget;
    let mut rises = 0usize;
    if d2 <= config.tol_d2 {
        stop = StopReason::Converged;
    } else {
        for iter in 1..=config.max_iters {
            let chi_final = costate_boundary(&gamma_final, &problem.target)?;
            let costate = propagate_costate(gen, &field, &chi_final)?;
            let chi = costate.matrices();

            let old = field.values();
            let mut updated = old.to_vec();
            // unshaped step `g/λ_a`, kept for the spectral projection
            let mut raw = vec![0.0; grid.n_nodes()];
            let mut gamma = problem.initial.matrix().clone();
            for k in 0..=grid.n_steps() {
                raw[k] = control_overlap(&chi[k], &gamma, &b) / config.lambda_a;
                let df = shape_values[k] * raw[k];
                updated[k] = old[k] + df;
                if k == grid.n_steps() {
                    break;
                }
                // the update at node k is held across the step
                closed_step(gen, |frac| field.within_step(k, frac) + df, &mut gamma, dt, &mut buf);
                if !gamma.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { step: k });
                }
            }

            if let Some(keep) = config.spectral_cutoff {
                // P·S·P applied to the unshaped step stays a descent
                // direction: ⟨g, PSPg⟩ = ⟨Pg, S·Pg⟩ ≥ 0. Filtering the whole
                // field instead contracts it by S every iteration and stalls.
                let increment = band_limit_field(&raw, keep, &shape_values)?;
                updated = old.iter().zip(&increment).map(|(o, d)| o + d).collect();
            }
            let update_norm = (old
                .iter()
                .zip(&updated)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                * dt)
                .sqrt();
            field = ControlField::new(grid, updated)?;
            gamma_final = propagate_cm_final(gen, &field, &problem.initial)?;
            let next = cm_distance(&gamma_final, &problem.target)?;
            let record = IterationRecord {
                iter,
                d2: next,
                field_update_norm: update_norm,
            };
            observer(&record);
            records.push(record);

            rises = if next > d2 { rises + 1 } else { 0 };
            d2 = next;
            if d2 <= config.tol_d2 {
                stop = StopReason::Converged;
                break;
            }
            if rises >= DIVERGENCE_WINDOW {
                stop = StopReason::Diverged;
                break;
            }
        }
    }

    let trajectory = propagate_cm(gen, &field, &problem.initial)?;
    Ok(KrotovOutcome {
        field,
        records,
        trajectory,
        stop,
    })
}

/// Speed-limit estimate `arccos(1/cosh r)/G` for reaching a two-mode squeezed
/// state from vacuum with coupling `G`.
pub fn qsl_reachability_hint(r: f64, coupling: f64) -> Result<f64> {
    if !(coupling.is_finite() && coupling > 0.0) {
        return Err(Error::InvalidParameter {
            name: "coupling",
            reason: format!("must be positive, got {coupling}"),
        });
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("must be non-negative, got {r}"),
        });
    }
    Ok((1.0 / r.cosh()).min(1.0).acos() / coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{two_mode_squeezed_cm, vacuum_cm, ModeLayout};

    fn optomech(g: f64) -> QuadraticGenerator {
        #[rustfmt::skip]
        let m0 = DMatrix::from_row_slice(4, 4, &[
            0.0, 2.0 * g, 0.0, 0.0,
            2.0 * g, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        let mc = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]));
        QuadraticGenerator::new(ModeLayout::two_mode(), m0, mc).unwrap()
    }

    #[test]
    fn blackman_shape() {
        let grid = TimeGrid::new(60.0, 6000).unwrap();
        let s = ShapeFunction::Blackman.sample(grid);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[6000], 0.0);
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((s[3000] - 1.0).abs() < 1e-12);
        assert!(ShapeFunction::ConstantOne.sample(grid).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn boundary_examples() {
        let t = two_mode_squeezed_cm(0.9);
        assert!(costate_boundary(&t, &t).unwrap().iter().all(|v| *v == 0.0));

        let i4 = vacuum_cm(ModeLayout::two_mode());
        let two = CovarianceMatrix::new(ModeLayout::two_mode(), DMatrix::identity(4, 4) * 2.0).unwrap();
        let chi = costate_boundary(&i4, &two).unwrap();
        for (idx, v) in chi.iter().enumerate() {
            let diagonal = idx % 5 == 0;
            assert_eq!(*v, if diagonal { 2.0 } else { 0.0 });
        }
        let one = vacuum_cm(ModeLayout::new(1).unwrap());
        assert!(costate_boundary(&one, &i4).is_err());
    }

    #[test]
    fn update_amplitude_matches_dense_kronecker() {
        let gen = optomech(0.1);
        let chi = DVector::from_column_slice(DMatrix::<f64>::identity(4, 4).as_slice());
        let gamma = vacuum_cm(ModeLayout::two_mode());
        // dense 16x16 oracle built entry by entry
        let b = gen.sigma() * gen.mc();
        let mut dense = DMatrix::<f64>::zeros(16, 16);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let id = |a: usize, c: usize| if a == c { 1.0 } else { 0.0 };
                        dense[(4 * i + k, 4 * j + l)] = id(i, j) * b[(k, l)] + b[(i, j)] * id(k, l);
                    }
                }
            }
        }
        let expected = 0.5 / 8000.0 * chi.dot(&(&dense * gamma.to_vec()));
        let got = pulse_update_amplitude(&chi, &gamma, &gen, 0.5, 8000.0);
        assert!((got - expected).abs() < 1e-15);

        let gamma = two_mode_squeezed_cm(0.4);
        let chi = DVector::from_fn(16, |i, _| (i as f64 * 0.3).sin());
        let fast = control_overlap(
            &DMatrix::from_column_slice(4, 4, chi.as_slice()),
            gamma.matrix(),
            gen.control_drift(),
        );
        let slow = chi.dot(&(&dense * gamma.to_vec()));
        assert!((fast - slow).abs() < 1e-12);

        assert_eq!(pulse_update_amplitude(&chi, &gamma, &gen, 0.0, 8000.0), 0.0);
        let a = pulse_update_amplitude(&chi, &gamma, &gen, 1.0, 100.0);
        let b2 = pulse_update_amplitude(&chi, &gamma, &gen, 1.0, 200.0);
        assert_eq!(a, 2.0 * b2);
    }

    #[test]
    fn already_at_target_stops_immediately() {
        let gen = optomech(0.1);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let vac = vacuum_cm(ModeLayout::two_mode());
        // decoupled free evolution keeps the vacuum fixed
        let free = QuadraticGenerator::new(
            ModeLayout::two_mode(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0])),
            gen.mc().clone(),
        )
        .unwrap();
        let problem = ControlProblem {
            generator: free,
            initial: vac.clone(),
            target: vac,
        };
        let out = optimize(
            &problem,
            &ControlField::constant(grid, 0.0),
            ShapeFunction::Blackman,
            &KrotovConfig::default(),
        )
        .unwrap();
        assert!(out.converged());
        assert_eq!(out.iterations(), 0);
        assert!(out.final_d2() < 1e-4);
    }

    #[test]
    fn short_run_decreases_distance_and_pins_endpoints() {
        let gen = optomech(0.1);
        let grid = TimeGrid::new(20.0, 2000).unwrap();
        let problem = ControlProblem {
            generator: gen,
            initial: vacuum_cm(ModeLayout::two_mode()),
            target: two_mode_squeezed_cm(0.5),
        };
        let config = KrotovConfig {
            lambda_a: 200.0,
            max_iters: 30,
            ..KrotovConfig::default()
        };
        let out = optimize(&problem, &ControlField::constant(grid, 0.0), ShapeFunction::Blackman, &config)
            .unwrap();
        assert!(out.records.windows(2).all(|w| w[1].d2 <= w[0].d2));
        assert!(out.final_d2() < out.records[0].d2);
        assert!(out.field.values()[0].abs() < 1e-12);
        assert!(out.field.values()[2000].abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            KrotovConfig { lambda_a: 0.0, ..Default::default() },
            KrotovConfig { tol_d2: -1.0, ..Default::default() },
            KrotovConfig { max_iters: 0, ..Default::default() },
            KrotovConfig { spectral_cutoff: Some(0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn qsl_values() {
        assert_eq!(qsl_reachability_hint(0.0, 0.1).unwrap(), 0.0);
        let t = qsl_reachability_hint(0.8, 0.1).unwrap();
        // arccos(1/cosh 0.8) = 0.7262048...
        assert!((t - 7.262048).abs() < 1e-5, "{t}");
        assert_eq!(
            qsl_reachability_hint(0.8, 0.2).unwrap(),
            qsl_reachability_hint(0.8, 0.1).unwrap() / 2.0
        );
        assert!(qsl_reachability_hint(0.8, 0.0).is_err());
    }
}
