//! Covariance-matrix dynamics under a Lorentzian (memory) bath.
//!
//! The system couples through `L = l_i R_i` to a bath with correlation
//! `α(t, s) = (η/2) e^{-(η + iΩ)|t - s|}`. Memory enters through the
//! noise-free operator `Ō(t) = o_i(t) R_i`, whose coefficients obey
//!
//! ```text
//! ∂o_i = α(0) l_i - (η + iΩ) o_i - o_l [σM]_li - i σ_kl (o_k o_l l_i* + o_i o_l l_k*)
//! ```
//!
//! with `o(0) = 0`. Given `o`, the covariance matrix follows
//!
//! ```text
//! ∂γ = (σM + σΔ)γ + γ(σM + σΔ)ᵀ + 2σδᴿσᵀ
//! Δ_mn = i l_m o_n* - i l_m* o_n,   δᴿ_mn = Re(l_m* o_n + o_m* l_n).
//! ```
//!
//! The memoryless limit pins `o = l/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::{check_finite, lyapunov_rhs, symmetrize_in_place, CmTrajectory, QuadraticGenerator};
use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::grid::ControlField;

/// Bath parameters and the linear coupling vector `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianBath {
    eta: f64,
    omega_shift: f64,
    couplings: Vec<Complex64>,
    markov: bool,
}

impl LorentzianBath {
    /// Non-Markovian bath. `eta` is the inverse memory time.
    pub fn new(eta: f64, omega_shift: f64, couplings: Vec<Complex64>) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("must be positive, got {eta}"),
            });
        }
        if !omega_shift.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega_shift",
                reason: "must be finite".into(),
            });
        }
        check_couplings(&couplings)?;
        Ok(Self {
            eta,
            omega_shift,
            couplings,
            markov: false,
        })
    }

    /// Memoryless bath; `Ō = L/2` throughout.
    pub fn markov(couplings: Vec<Complex64>) -> Result<Self> {
        check_couplings(&couplings)?;
        Ok(Self {
            eta: f64::INFINITY,
            omega_shift: 0.0,
            couplings,
            markov: true,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega_shift(&self) -> f64 {
        self.omega_shift
    }

    pub fn couplings(&self) -> &[Complex64] {
        &self.couplings
    }

    pub fn is_markov(&self) -> bool {
        self.markov
    }

    /// `α(τ) = (η/2) e^{-(η + iΩ)|τ|}`.
    pub fn correlation(&self, tau: f64) -> Complex64 {
        let rate = Complex64::new(self.eta, self.omega_shift);
        0.5 * self.eta * (-rate * tau.abs()).exp()
    }

    /// Markov-limit coefficients `l/2`.
    pub fn markov_obar(&self) -> Vec<Complex64> {
        self.couplings.iter().map(|l| l * 0.5).collect()
    }
}

fn check_couplings(couplings: &[Complex64]) -> Result<()> {
    if couplings.is_empty() || couplings.len() % 2 != 0 {
        return Err(Error::InvalidParameter {
            name: "couplings",
            reason: format!("need 2n entries, got {}", couplings.len()),
        });
    }
    if couplings.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "couplings",
            reason: "non-finite coupling".into(),
        });
    }
    Ok(())
}

/// Coupling vector of `L = λ_o a + λ_m b` in `(q_c, q_m, p_c, p_m)`, using
/// `a = (q + ip)/√2`.
pub fn two_mode_couplings(lambda_o: f64, lambda_m: f64) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        Complex64::new(lambda_o * s, 0.0),
        Complex64::new(lambda_m * s, 0.0),
        Complex64::new(0.0, lambda_o * s),
        Complex64::new(0.0, lambda_m * s),
    ]
}

/// Time derivative of the `Ō` coefficients at control value `f`.
///
/// Only meaningful for a non-Markovian bath; the Markov path never calls it.
pub fn obar_rhs(
    bath: &LorentzianBath,
    gen: &QuadraticGenerator,
    f: f64,
    o: &[Complex64],
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); o.len()];
    obar_rhs_into(bath, gen.sigma(), &gen.drift(f), o, &mut out);
    out
}

fn obar_rhs_into(
    bath: &LorentzianBath,
    sigma: &DMatrix<f64>,
    drift: &DMatrix<f64>,
    o: &[Complex64],
    out: &mut [Complex64],
) {
    let l = &bath.couplings;
    let d = l.len();
    let alpha0 = 0.5 * bath.eta;
    let eta_eff = Complex64::new(bath.eta, bath.omega_shift);
    let i = Complex64::i();

    // σ_kl o_k o_l and σ_kl l_k* o_l
    let mut s_oo = Complex64::new(0.0, 0.0);
    let mut s_lo = Complex64::new(0.0, 0.0);
    for k in 0..d {
        for m in 0..d {
            let s = sigma[(k, m)];
            if s != 0.0 {
                s_oo += s * o[k] * o[m];
                s_lo += s * l[k].conj() * o[m];
            }
        }
    }
    for idx in 0..d {
        let mut transport = Complex64::new(0.0, 0.0);
        for m in 0..d {
            transport += o[m] * drift[(m, idx)];
        }
        out[idx] = alpha0 * l[idx] - eta_eff * o[idx] - transport
            - i * (s_oo * l[idx].conj() + o[idx] * s_lo);
    }
}

/// Drift `Δ` and diffusion `δᴿ` generated by the current `Ō` coefficients.
pub fn drift_diffusion(bath: &LorentzianBath, o: &[Complex64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = bath.couplings.len();
    let mut delta = DMatrix::zeros(d, d);
    let mut diffusion = DMatrix::zeros(d, d);
    drift_diffusion_into(&bath.couplings, o, &mut delta, &mut diffusion);
    (delta, diffusion)
}

fn drift_diffusion_into(
    l: &[Complex64],
    o: &[Complex64],
    delta: &mut DMatrix<f64>,
    diffusion: &mut DMatrix<f64>,
) {
    let i = Complex64::i();
    let d = l.len();
    for m in 0..d {
        for n in 0..d {
            let dr = i * l[m] * o[n].conj() - i * l[m].conj() * o[n];
            delta[(m, n)] = dr.re;
            diffusion[(m, n)] = (l[m].conj() * o[n] + o[m].conj() * l[n]).re;
        }
    }
}

/// Open-system covariance trajectory together with the `Ō` coefficients.
#[derive(Debug, Clone)]
pub struct OpenTrajectory {
    pub cm: CmTrajectory,
    pub obar: Vec<Vec<Complex64>>,
}

/// Propagates `γ` (and `Ō` unless the bath is Markovian) over the field's grid.
pub fn propagate_open_cm(
    gen: &QuadraticGenerator,
    field: &ControlField,
    bath: &LorentzianBath,
    gamma0: &CovarianceMatrix,
) -> Result<OpenTrajectory> {
    if bath.markov {
        integrate(gen, field, bath, gamma0, bath.markov_obar(), false)
    } else {
        let zero = vec![Complex64::new(0.0, 0.0); bath.couplings.len()];
        integrate(gen, field, bath, gamma0, zero, true)
    }
}

/// Runs the general open-system equations with `Ō` held at `obar` instead of
/// evolving it.
pub fn propagate_with_frozen_obar(
    gen: &QuadraticGenerator,
    field: &ControlField,
    bath: &LorentzianBath,
    gamma0: &CovarianceMatrix,
    obar: Vec<Complex64>,
) -> Result<OpenTrajectory> {
    if obar.len() != bath.couplings.len() {
        return Err(Error::DimensionMismatch {
            expected: bath.couplings.len(),
            actual: obar.len(),
        });
    }
    integrate(gen, field, bath, gamma0, obar, false)
}

struct Workspace {
    drift: DMatrix<f64>,
    delta: DMatrix<f64>,
    diffusion: DMatrix<f64>,
    total: DMatrix<f64>,
    source: DMatrix<f64>,
}

/// Joint right-hand side for `(γ, o)`.
#[allow(clippy::too_many_arguments)]
fn open_rhs(
    gen: &QuadraticGenerator,
    bath: &LorentzianBath,
    f: f64,
    gamma: &DMatrix<f64>,
    o: &[Complex64],
    evolve_obar: bool,
    ws: &mut Workspace,
    d_gamma: &mut DMatrix<f64>,
    d_o: &mut [Complex64],
) {
    gen.drift_into(f, &mut ws.drift);
    if evolve_obar {
        obar_rhs_into(bath, gen.sigma(), &ws.drift, o, d_o);
    } else {
        d_o.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    }
    drift_diffusion_into(&bath.couplings, o, &mut ws.delta, &mut ws.diffusion);
    let sigma = gen.sigma();
    ws.total.copy_from(&ws.drift);
    ws.total.gemm(1.0, sigma, &ws.delta, 1.0);
    lyapunov_rhs(&ws.total, gamma, d_gamma);
    // 2σδᴿσᵀ
    ws.source.copy_from(&(sigma * &ws.diffusion * sigma.transpose()));
    *d_gamma += &ws.source * 2.0;
}

fn integrate(
    gen: &QuadraticGenerator,
    field: &ControlField,
    bath: &LorentzianBath,
    gamma0: &CovarianceMatrix,
    o0: Vec<Complex64>,
    evolve_obar: bool,
) -> Result<OpenTrajectory> {
    let layout = gamma0.layout();
    let d = layout.dim();
    if gen.layout() != layout || bath.couplings.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bath.couplings.len(),
        });
    }
    let grid = field.grid();
    let dt = grid.dt();
    let zero_m = || DMatrix::<f64>::zeros(d, d);
    let zero_c = || vec![Complex64::new(0.0, 0.0); d];
    let mut ws = Workspace {
        drift: zero_m(),
        delta: zero_m(),
        diffusion: zero_m(),
        total: zero_m(),
        source: zero_m(),
    };
    let (mut kg, mut ko) = (
        [zero_m(), zero_m(), zero_m(), zero_m()],
        [zero_c(), zero_c(), zero_c(), zero_c()],
    );

    let mut gamma = gamma0.matrix().clone();
    let mut o = o0;
    let mut states = Vec::with_capacity(grid.n_nodes());
    let mut obar = Vec::with_capacity(grid.n_nodes());
    states.push(gamma0.clone());
    obar.push(o.clone());

    for step in 0..grid.n_steps() {
        let fracs = [0.0, 0.5, 0.5, 1.0];
        let scales = [0.0, 0.5 * dt, 0.5 * dt, dt];
        for stage in 0..4 {
            let f = field.within_step(step, fracs[stage]);
            let (probe_g, probe_o) = if stage == 0 {
                (gamma.clone(), o.clone())
            } else {
                let h = scales[stage];
                let pg = &gamma + &kg[stage - 1] * h;
                let po: Vec<Complex64> = o
                    .iter()
                    .zip(&ko[stage - 1])
                    .map(|(a, b)| a + b * h)
                    .collect();
                (pg, po)
            };
            open_rhs(
                gen,
                bath,
                f,
                &probe_g,
                &probe_o,
                evolve_obar,
                &mut ws,
                &mut kg[stage],
                &mut ko[stage],
            );
        }
        let w = dt / 6.0;
        for i in 0..gamma.len() {
            gamma[i] += w * (kg[0][i] + 2.0 * kg[1][i] + 2.0 * kg[2][i] + kg[3][i]);
        }
        for (i, v) in o.iter_mut().enumerate() {
            *v += (ko[0][i] + ko[1][i] * 2.0 + ko[2][i] * 2.0 + ko[3][i]) * w;
        }
        symmetrize_in_place(&mut gamma);
        check_finite(&gamma, step)?;
        if o.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        states.push(CovarianceMatrix::from_symmetrized(layout, gamma.clone())?);
        obar.push(o.clone());
    }
    Ok(OpenTrajectory {
        cm: CmTrajectory::new(grid, states),
        obar,
    })
}
