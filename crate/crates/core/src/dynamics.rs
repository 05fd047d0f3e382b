//! Closed-system covariance-matrix dynamics under a quadratic Hamiltonian
//! `H = R·M(t)·R / 2`, `M(t) = M₀ + f(t)·M_c`.
//!
//! The covariance matrix obeys `∂γ = Aγ + γAᵀ` with `A = σM`. In
//! column-stacked form this is `∂vec(γ) = G·vec(γ)` with
//! `G = 1⊗A + A⊗1`. The costate used by the optimizer runs backwards under
//! `∂χ = -Gᵀχ`, which keeps `χ·vec(γ)` constant along paired trajectories.
//!
//! All propagators are fixed-step RK4 on the field's grid; stage values of the
//! control are linearly interpolated between nodes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{symplectic_form, CovarianceMatrix, FirstMoments, ModeLayout};
use crate::grid::{ControlField, TimeGrid};

/// Symmetrized generator pair `(M₀, M_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGenerator {
    layout: ModeLayout,
    m0: DMatrix<f64>,
    mc: DMatrix<f64>,
    sigma: DMatrix<f64>,
    sigma_m0: DMatrix<f64>,
    sigma_mc: DMatrix<f64>,
}

impl QuadraticGenerator {
    /// Both matrices are replaced by their symmetric parts `(M + Mᵀ)/2`.
    pub fn new(layout: ModeLayout, m0: DMatrix<f64>, mc: DMatrix<f64>) -> Result<Self> {
        let dim = layout.dim();
        for m in [&m0, &mc] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: m.nrows().max(m.ncols()),
                });
            }
        }
        let m0 = (&m0 + m0.transpose()) * 0.5;
        let mc = (&mc + mc.transpose()) * 0.5;
        let sigma = symplectic_form(layout);
        let sigma_m0 = &sigma * &m0;
        let sigma_mc = &sigma * &mc;
        Ok(Self {
            layout,
            m0,
            mc,
            sigma,
            sigma_m0,
            sigma_mc,
        })
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn m0(&self) -> &DMatrix<f64> {
        &self.m0
    }

    pub fn mc(&self) -> &DMatrix<f64> {
        &self.mc
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `M₀ + f·M_c`.
    pub fn hamiltonian(&self, f: f64) -> DMatrix<f64> {
        &self.m0 + &self.mc * f
    }

    /// `σM_c`, the control direction of the drift.
    pub fn control_drift(&self) -> &DMatrix<f64> {
        &self.sigma_mc
    }

    /// `σ(M₀ + f·M_c)`.
    pub fn drift(&self, f: f64) -> DMatrix<f64> {
        let mut out = self.sigma_m0.clone();
        self.drift_into(f, &mut out);
        out
    }

    #[inline]
    pub(crate) fn drift_into(&self, f: f64, out: &mut DMatrix<f64>) {
        for ((o, a), b) in out
            .iter_mut()
            .zip(self.sigma_m0.iter())
            .zip(self.sigma_mc.iter())
        {
            *o = a + f * b;
        }
    }
}

/// Vectorized generator `G = 1⊗A + A⊗1` acting on column-stacked matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    data: DMatrix<f64>,
}

impl FlowMatrix {
    /// `1⊗A + A⊗1` for an arbitrary square drift `A`.
    pub fn from_drift(a: &DMatrix<f64>) -> Self {
        let id = DMatrix::<f64>::identity(a.nrows(), a.nrows());
        Self {
            data: id.kronecker(a) + a.kronecker(&id),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.data * v
    }
}

/// Flow matrix at control value `f`.
pub fn assemble_flow(gen: &QuadraticGenerator, f: f64) -> FlowMatrix {
    FlowMatrix::from_drift(&gen.drift(f))
}

/// Flow matrix of the control direction, `1⊗σM_c + σM_c⊗1`.
pub fn control_flow(gen: &QuadraticGenerator) -> FlowMatrix {
    FlowMatrix::from_drift(&gen.sigma_mc)
}

/// Covariance matrices at every grid node.
#[derive(Debug, Clone)]
pub struct CmTrajectory {
    grid: TimeGrid,
    states: Vec<CovarianceMatrix>,
}

impl CmTrajectory {
    pub(crate) fn new(grid: TimeGrid, states: Vec<CovarianceMatrix>) -> Self {
        Self { grid, states }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn states(&self) -> &[CovarianceMatrix] {
        &self.states
    }

    pub fn final_state(&self) -> &CovarianceMatrix {
        self.states.last().expect("trajectory holds at least two nodes")
    }
}

/// Backward costate, stored as unvectorized matrices at every node.
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    grid: TimeGrid,
    states: Vec<DMatrix<f64>>,
}

impl CostateTrajectory {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.states
    }

    /// `χ(t_k)` in column-stacked form.
    pub fn vector(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.states[k].as_slice())
    }
}

/// Preallocated stage buffers for matrix-valued RK4.
pub(crate) struct Rk4Buffers {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub k3: DMatrix<f64>,
    pub k4: DMatrix<f64>,
    pub probe: DMatrix<f64>,
    pub drift: DMatrix<f64>,
}

impl Rk4Buffers {
    pub fn new(dim: usize) -> Self {
        let z = || DMatrix::zeros(dim, dim);
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            probe: z(),
            drift: z(),
        }
    }
}

/// `out = Aγ + γAᵀ`.
#[inline]
pub(crate) fn lyapunov_rhs(a: &DMatrix<f64>, g: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    let d = g.nrows();
    for j in 0..d {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[(i, k)] * g[(k, j)] + g[(i, k)] * a[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
}

/// `out = -(Aᵀχ + χA)`, the unvectorized form of `-Gᵀ vec(χ)`.
#[inline]
fn adjoint_rhs(a: &DMatrix<f64>, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    let d = x.nrows();
    for j in 0..d {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[(k, i)] * x[(k, j)] + x[(i, k)] * a[(k, j)];
            }
            out[(i, j)] = -s;
        }
    }
}

#[inline]
fn set_probe(probe: &mut DMatrix<f64>, y: &DMatrix<f64>, h: f64, k: &DMatrix<f64>) {
    for ((p, a), b) in probe.iter_mut().zip(y.iter()).zip(k.iter()) {
        *p = a + h * b;
    }
}

/// One classical RK4 step on a matrix state. `rhs(s, y, drift, out)` is
/// called at stage fractions `s ∈ {0, ½, ½, 1}`; `drift` is scratch space.
pub(crate) fn rk4_matrix_step<F>(y: &mut DMatrix<f64>, h: f64, buf: &mut Rk4Buffers, mut rhs: F)
where
    F: FnMut(f64, &DMatrix<f64>, &mut DMatrix<f64>, &mut DMatrix<f64>),
{
    let Rk4Buffers {
        k1,
        k2,
        k3,
        k4,
        probe,
        drift,
    } = buf;
    rhs(0.0, y, drift, k1);
    set_probe(probe, y, 0.5 * h, k1);
    rhs(0.5, probe, drift, k2);
    set_probe(probe, y, 0.5 * h, k2);
    rhs(0.5, probe, drift, k3);
    set_probe(probe, y, h, k3);
    rhs(1.0, probe, drift, k4);
    let w = h / 6.0;
    for i in 0..y.len() {
        y[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[inline]
pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>, step: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

fn check_layouts(gen: &QuadraticGenerator, layout: ModeLayout) -> Result<()> {
    if gen.layout != layout {
        return Err(Error::DimensionMismatch {
            expected: gen.layout.dim(),
            actual: layout.dim(),
        });
    }
    Ok(())
}

/// Advances `γ` one step from node `k` under `field`, in place.
#[inline]
pub(crate) fn closed_step(
    gen: &QuadraticGenerator,
    field_at: impl Fn(f64) -> f64,
    gamma: &mut DMatrix<f64>,
    dt: f64,
    buf: &mut Rk4Buffers,
) {
    rk4_matrix_step(gamma, dt, buf, |s, y, drift, out| {
        gen.drift_into(field_at(s), drift);
        lyapunov_rhs(drift, y, out);
    });
    symmetrize_in_place(gamma);
}

/// Integrates `∂γ = σMγ + γ(σM)ᵀ` over the field's grid.
pub fn propagate_cm(
    gen: &QuadraticGenerator,
    field: &ControlField,
    gamma0: &CovarianceMatrix,
) -> Result<CmTrajectory> {
    check_layouts(gen, gamma0.layout())?;
    let grid = field.grid();
    let dt = grid.dt();
    let layout = gamma0.layout();
    let mut buf = Rk4Buffers::new(layout.dim());
    let mut gamma = gamma0.matrix().clone();
    let mut states = Vec::with_capacity(grid.n_nodes());
    states.push(gamma0.clone());
    for k in 0..grid.n_steps() {
        closed_step(gen, |s| field.within_step(k, s), &mut gamma, dt, &mut buf);
        check_finite(&gamma, k)?;
        states.push(CovarianceMatrix::from_symmetrized(layout, gamma.clone())?);
    }
    Ok(CmTrajectory::new(grid, states))
}

/// Final covariance matrix only, without storing the trajectory.
pub fn propagate_cm_final(
    gen: &QuadraticGenerator,
    field: &ControlField,
    gamma0: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    check_layouts(gen, gamma0.layout())?;
    let grid = field.grid();
    let dt = grid.dt();
    let mut buf = Rk4Buffers::new(gamma0.layout().dim());
    let mut gamma = gamma0.matrix().clone();
    for k in 0..grid.n_steps() {
        closed_step(gen, |s| field.within_step(k, s), &mut gamma, dt, &mut buf);
        check_finite(&gamma, k)?;
    }
    CovarianceMatrix::from_symmetrized(gamma0.layout(), gamma)
}

/// Integrates the column-stacked equation `∂vec(γ) = G(t)·vec(γ)` with the
/// assembled flow matrix. Slower than [`propagate_cm`]; used to cross-check it.
pub fn propagate_cm_vectorized(
    gen: &QuadraticGenerator,
    field: &ControlField,
    gamma0: &CovarianceMatrix,
) -> Result<CmTrajectory> {
    check_layouts(gen, gamma0.layout())?;
    let grid = field.grid();
    let dt = grid.dt();
    let layout = gamma0.layout();
    let dim = layout.dim();
    let mut v = gamma0.to_vec();
    let mut states = Vec::with_capacity(grid.n_nodes());
    states.push(gamma0.clone());
    for k in 0..grid.n_steps() {
        let flow = |s: f64| assemble_flow(gen, field.within_step(k, s));
        let (g0, gh, g1) = (flow(0.0), flow(0.5), flow(1.0));
        let k1 = g0.apply(&v);
        let k2 = gh.apply(&(&v + &k1 * (0.5 * dt)));
        let k3 = gh.apply(&(&v + &k2 * (0.5 * dt)));
        let k4 = g1.apply(&(&v + &k3 * dt));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let m = DMatrix::from_column_slice(dim, dim, v.as_slice());
        check_finite(&m, k)?;
        let cm = CovarianceMatrix::from_symmetrized(layout, m)?;
        v = cm.to_vec();
        states.push(cm);
    }
    Ok(CmTrajectory::new(grid, states))
}

/// Integrates `∂χ = -G(t)ᵀχ` backwards from `χ(t_f) = chi_final`.
pub fn propagate_costate(
    gen: &QuadraticGenerator,
    field: &ControlField,
    chi_final: &DVector<f64>,
) -> Result<CostateTrajectory> {
    let dim = gen.layout.dim();
    if chi_final.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            actual: chi_final.len(),
        });
    }
    let grid = field.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut buf = Rk4Buffers::new(dim);
    let mut chi = DMatrix::from_column_slice(dim, dim, chi_final.as_slice());
    let mut states = vec![DMatrix::zeros(dim, dim); grid.n_nodes()];
    states[n] = chi.clone();
    for k in (0..n).rev() {
        // step from t_{k+1} to t_k: stage fraction s runs from node k+1 to k
        rk4_matrix_step(&mut chi, -dt, &mut buf, |s, y, drift, out| {
            gen.drift_into(field.within_step(k, 1.0 - s), drift);
            adjoint_rhs(drift, y, out);
        });
        check_finite(&chi, k)?;
        states[k] = chi.clone();
    }
    Ok(CostateTrajectory { grid, states })
}

/// Integrates `∂⟨R⟩ = (σM + σΔ)⟨R⟩`, where `Δ` is an optional constant
/// bath drift (zero for a closed system).
pub fn propagate_first_moments(
    gen: &QuadraticGenerator,
    field: &ControlField,
    bath_drift: Option<&DMatrix<f64>>,
    moments0: &FirstMoments,
) -> Result<Vec<FirstMoments>> {
    check_layouts(gen, moments0.layout())?;
    let layout = moments0.layout();
    let extra = match bath_drift {
        Some(delta) => {
            if delta.nrows() != layout.dim() || delta.ncols() != layout.dim() {
                return Err(Error::DimensionMismatch {
                    expected: layout.dim(),
                    actual: delta.nrows(),
                });
            }
            gen.sigma() * delta
        }
        None => DMatrix::zeros(layout.dim(), layout.dim()),
    };
    let grid = field.grid();
    let dt = grid.dt();
    let a = |k: usize, s: f64| gen.drift(field.within_step(k, s)) + &extra;
    let mut x = moments0.vector().clone();
    let mut out = Vec::with_capacity(grid.n_nodes());
    out.push(moments0.clone());
    for k in 0..grid.n_steps() {
        let (a0, ah, a1) = (a(k, 0.0), a(k, 0.5), a(k, 1.0));
        let k1 = &a0 * &x;
        let k2 = &ah * (&x + &k1 * (0.5 * dt));
        let k3 = &ah * (&x + &k2 * (0.5 * dt));
        let k4 = &a1 * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        out.push(FirstMoments::new(layout, x.clone())?);
    }
    Ok(out)
}
