//! Gaussian-state algebra on quadrature covariance matrices.
//!
//! Quadratures are ordered `R = (q_1, ..., q_n, p_1, ..., p_n)` with `ħ = 1`
//! and the covariance matrix is `γ_ij = <R_i R_j + R_j R_i> - 2<R_i><R_j>`,
//! so the vacuum is the identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest antisymmetric residue tolerated for a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Slack on the uncertainty relation `γ + iσ ≥ 0`.
pub const PHYSICALITY_TOL: f64 = 1e-8;
/// Degenerate symplectic moduli must agree to this (relative above 1).
pub const PAIRING_TOL: f64 = 1e-8;

/// Number of bosonic modes and the fixed `(q..., p...)` ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLayout {
    n_modes: usize,
}

impl ModeLayout {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter {
                name: "n_modes",
                reason: "at least one mode is required".into(),
            });
        }
        Ok(Self { n_modes })
    }

    /// Cavity plus mechanics, ordered `(q_c, q_m, p_c, p_m)`.
    pub fn two_mode() -> Self {
        Self { n_modes: 2 }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Phase-space dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn q_index(&self, mode: usize) -> usize {
        mode
    }

    pub fn p_index(&self, mode: usize) -> usize {
        self.n_modes + mode
    }
}

/// The symplectic form `σ = [[0, 1], [-1, 0]]` in `n × n` blocks.
pub fn symplectic_form(layout: ModeLayout) -> DMatrix<f64> {
    let n = layout.n_modes();
    let mut sigma = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        sigma[(i, n + i)] = 1.0;
        sigma[(n + i, i)] = -1.0;
    }
    sigma
}

/// Second moments of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    layout: ModeLayout,
    data: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a matrix, rejecting wrong shapes and asymmetric input.
    pub fn new(layout: ModeLayout, data: DMatrix<f64>) -> Result<Self> {
        let dim = layout.dim();
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.nrows().max(data.ncols()),
            });
        }
        let asym = max_asymmetry(&data);
        if !(asym <= SYMMETRY_TOL) {
            return Err(Error::InvalidParameter {
                name: "covariance",
                reason: format!("matrix is not symmetric (residue {asym:e})"),
            });
        }
        Ok(Self { layout, data })
    }

    /// Builds from a matrix that is symmetric up to integration noise; the
    /// result is `(m + mᵀ)/2`.
    pub fn from_symmetrized(layout: ModeLayout, data: DMatrix<f64>) -> Result<Self> {
        let sym = (&data + data.transpose()) * 0.5;
        Self::new(layout, sym)
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Column-stacked `vec(γ)`.
    pub fn to_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.data.as_slice())
    }

    pub fn determinant(&self) -> f64 {
        self.data.determinant()
    }

    /// Smallest eigenvalue of the Hermitian matrix `γ + iσ`.
    pub fn uncertainty_margin(&self) -> f64 {
        let sigma = symplectic_form(self.layout);
        min_hermitian_eigenvalue(&self.data, &sigma)
    }

    /// True when `γ + iσ ≥ -tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.uncertainty_margin() >= -tol
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Minimum eigenvalue of `A + iB` (A symmetric, B antisymmetric) through the
/// real embedding `[[A, -B], [B, A]]`, whose spectrum is that of `A + iB`
/// with each eigenvalue doubled.
fn min_hermitian_eigenvalue(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    let d = re.nrows();
    let mut big = DMatrix::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(re);
    big.view_mut((d, d), (d, d)).copy_from(re);
    big.view_mut((0, d), (d, d)).copy_from(&(-im));
    big.view_mut((d, 0), (d, d)).copy_from(im);
    big.symmetric_eigenvalues().min()
}

/// First moments `<R_i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstMoments {
    layout: ModeLayout,
    data: DVector<f64>,
}

impl FirstMoments {
    pub fn new(layout: ModeLayout, data: DVector<f64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                actual: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: ModeLayout) -> Self {
        Self {
            layout,
            data: DVector::zeros(layout.dim()),
        }
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.data
    }
}

/// Vacuum covariance matrix (the identity).
pub fn vacuum_cm(layout: ModeLayout) -> CovarianceMatrix {
    let dim = layout.dim();
    CovarianceMatrix {
        layout,
        data: DMatrix::identity(dim, dim),
    }
}

/// Two-mode squeezed vacuum `exp[r(ab - a†b†)]|00>` in `(q_c, q_m, p_c, p_m)`.
pub fn two_mode_squeezed_cm(r: f64) -> CovarianceMatrix {
    let c = (2.0 * r).cosh();
    let s = (2.0 * r).sinh();
    #[rustfmt::skip]
    let data = DMatrix::from_row_slice(4, 4, &[
        c,  -s,  0.0, 0.0,
        -s,  c,  0.0, 0.0,
        0.0, 0.0, c,   s,
        0.0, 0.0, s,   c,
    ]);
    CovarianceMatrix {
        layout: ModeLayout::two_mode(),
        data,
    }
}

/// `PγP` with `P = diag(1, 1, 1, -1)`: transposes the second mode.
pub fn partial_transpose(cm: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    require_two_modes(cm.layout)?;
    let mut data = cm.data.clone();
    let p_m = cm.layout.p_index(1);
    for k in 0..4 {
        if k != p_m {
            data[(p_m, k)] = -data[(p_m, k)];
            data[(k, p_m)] = -data[(k, p_m)];
        }
    }
    Ok(CovarianceMatrix {
        layout: cm.layout,
        data,
    })
}

fn require_two_modes(layout: ModeLayout) -> Result<()> {
    if layout.n_modes() != 2 {
        return Err(Error::WrongModeCount {
            expected: 2,
            actual: layout.n_modes(),
        });
    }
    Ok(())
}

/// Symplectic eigenvalues, one per degenerate pair, ascending.
///
/// The eigenvalues of `σγ` are `±iν_k`; their moduli are sorted and paired.
pub fn symplectic_eigenvalues(cm: &CovarianceMatrix) -> Result<Vec<f64>> {
    let sigma = symplectic_form(cm.layout);
    let product = &sigma * &cm.data;
    let mut moduli: Vec<f64> = product
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(f64::total_cmp);

    moduli
        .chunks_exact(2)
        .map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            if !a.is_finite() || !b.is_finite() || (a - b).abs() > PAIRING_TOL * a.max(1.0) {
                Err(Error::Pairing { left: a, right: b })
            } else {
                Ok(0.5 * (a + b))
            }
        })
        .collect()
}

/// Logarithmic negativity `-Σ log₂ min(1, ν_k)` of the partial transpose,
/// one term per symplectic eigenvalue.
pub fn log_negativity(cm: &CovarianceMatrix) -> Result<f64> {
    let transposed = partial_transpose(cm)?;
    let nu = symplectic_eigenvalues(&transposed)?;
    Ok(nu.iter().map(|v| -v.min(1.0).log2()).sum::<f64>().max(0.0))
}

/// Squared Euclidean distance between vectorized matrices.
pub fn cm_distance(a: &CovarianceMatrix, b: &CovarianceMatrix) -> Result<f64> {
    if a.layout != b.layout {
        return Err(Error::DimensionMismatch {
            expected: a.layout.dim(),
            actual: b.layout.dim(),
        });
    }
    Ok(a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}
