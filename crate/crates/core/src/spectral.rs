//! Cosine-transform pair for real control fields.
//!
//! Forward: `Y_k = 2 Σ_{j<n} x_j cos[π(j + ½)k / n]` (DCT-II).
//! Inverse: `x_k = (Y_0 + 2 Σ_{j≥1} Y_j cos[πj(k + ½) / n]) / 2n`.
//!
//! Coefficient `j` oscillates at angular frequency `ω_j = πj / t_f` with phase
//! `φ_j = πj / 2n` relative to the node times.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// DCT coefficients of a signal sampled over `[0, t_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coefficients: Vec<f64>,
    t_final: f64,
}

impl Spectrum {
    pub fn new(coefficients: Vec<f64>, t_final: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            coefficients,
            t_final,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Logical transform size `N = 2n`.
    pub fn logical_size(&self) -> usize {
        2 * self.len()
    }

    pub fn frequency(&self, j: usize) -> f64 {
        PI * j as f64 / self.t_final
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.frequency(j)).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.len()).map(|j| PI * j as f64 / (2.0 * n)).collect()
    }

    /// Cosine-series amplitude of coefficient `j`: `Y_0/2n` for the mean,
    /// `Y_j/n` otherwise.
    pub fn amplitude(&self, j: usize) -> f64 {
        let n = self.len() as f64;
        if j == 0 {
            self.coefficients[0] / (2.0 * n)
        } else {
            self.coefficients[j] / n
        }
    }

    /// Evaluates the cosine series at sample index `k`; `k = n` continues the
    /// series one step past the transformed block.
    pub fn evaluate(&self, k: usize) -> f64 {
        let table = CosTable::new(self.len());
        table.series_at(&self.coefficients, self.active_len(), k)
    }

    fn active_len(&self) -> usize {
        self.coefficients
            .iter()
            .rposition(|c| *c != 0.0)
            .map_or(0, |p| p + 1)
    }
}

/// `cos(πm / 2n)` for `m ∈ [0, 4n)`.
struct CosTable {
    n: usize,
    values: Vec<f64>,
}

impl CosTable {
    fn new(n: usize) -> Self {
        let values = (0..4 * n)
            .map(|m| (PI * m as f64 / (2.0 * n as f64)).cos())
            .collect();
        Self { n, values }
    }

    /// `Y_k` for `k < keep`.
    fn forward(&self, x: &[f64], keep: usize) -> Vec<f64> {
        let period = 4 * self.n;
        (0..keep)
            .map(|k| {
                // argument index (2j + 1)k mod 4n
                let step = (2 * k) % period;
                let mut m = k % period;
                let mut acc = 0.0;
                for xj in x {
                    acc += xj * self.values[m];
                    m += step;
                    if m >= period {
                        m -= period;
                    }
                }
                2.0 * acc
            })
            .collect()
    }

    fn series_at(&self, y: &[f64], active: usize, k: usize) -> f64 {
        let period = 4 * self.n;
        let step = (2 * k + 1) % period;
        let mut m = 0usize;
        let mut acc = 0.0;
        for (j, yj) in y.iter().take(active).enumerate() {
            let c = self.values[m];
            acc += if j == 0 { *yj } else { 2.0 * yj * c };
            m += step;
            if m >= period {
                m -= period;
            }
        }
        acc / (2.0 * self.n as f64)
    }

    fn inverse(&self, y: &[f64], nodes: usize) -> Vec<f64> {
        let active = y.iter().rposition(|c| *c != 0.0).map_or(0, |p| p + 1);
        (0..nodes).map(|k| self.series_at(y, active, k)).collect()
    }
}

/// Full DCT of `x` (O(n²) with a cosine table).
pub fn dct_forward(x: &[f64], t_final: f64) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let table = CosTable::new(x.len());
    Spectrum::new(table.forward(x, x.len()), t_final)
}

/// Inverse transform back to the `n` samples.
pub fn dct_inverse(spec: &Spectrum) -> Vec<f64> {
    CosTable::new(spec.len()).inverse(&spec.coefficients, spec.len())
}

/// Zeroes every coefficient with index `≥ keep`.
pub fn low_pass(spec: &Spectrum, keep: usize) -> Result<Spectrum> {
    if keep == 0 || keep > spec.len() {
        return Err(Error::InvalidParameter {
            name: "keep",
            reason: format!("must lie in 1..={}, got {keep}", spec.len()),
        });
    }
    let mut coefficients = spec.coefficients.clone();
    coefficients[keep..].iter_mut().for_each(|c| *c = 0.0);
    Spectrum::new(coefficients, spec.t_final)
}

/// `(ω_j, |amplitude_j|)` for every coefficient.
pub fn amplitude_report(spec: &Spectrum) -> Vec<(f64, f64)> {
    (0..spec.len())
        .map(|j| (spec.frequency(j), spec.amplitude(j).abs()))
        .collect()
}

/// Restricts a nodal field (`n + 1` values over `n` steps) to its lowest
/// `keep` cosine components.
///
/// The first `n` samples are transformed, truncated and resynthesized on all
/// `n + 1` nodes, multiplied by the update shape, and truncated again. Nodes
/// where the shape vanishes are then pinned to zero by the smallest
/// correction that stays inside the retained band, so the result is exactly
/// band-limited and keeps zero endpoints.
pub fn band_limit_field(values: &[f64], keep: usize, shape: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::EmptyInput);
    }
    if shape.len() != values.len() {
        return Err(Error::GridMismatch {
            expected: values.len(),
            actual: shape.len(),
        });
    }
    let n = values.len() - 1;
    if keep == 0 || keep > n {
        return Err(Error::InvalidParameter {
            name: "spectral_cutoff",
            reason: format!("must lie in 1..={n}, got {keep}"),
        });
    }
    let table = CosTable::new(n);

    let mut coeffs = table.forward(&values[..n], keep);
    coeffs.resize(n, 0.0);
    let mut windowed = table.inverse(&coeffs, n + 1);
    windowed.iter_mut().zip(shape).for_each(|(w, s)| *w *= s);

    let mut band = table.forward(&windowed[..n], keep);
    let pinned: Vec<usize> = [0, n].into_iter().filter(|&k| shape[k] == 0.0).collect();
    if !pinned.is_empty() {
        let rows = DMatrix::from_fn(pinned.len(), keep, |r, j| {
            let mut unit = vec![0.0; keep];
            unit[j] = 1.0;
            table.series_at(&unit, keep, pinned[r])
        });
        let current = &rows * DVector::from_column_slice(&band);
        let correction = rows
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidParameter {
                name: "spectral_cutoff",
                reason: e.to_string(),
            })?
            * (-current);
        band.iter_mut().zip(correction.iter()).for_each(|(b, c)| *b += c);
    }
    band.resize(n, 0.0);
    let mut out = table.inverse(&band, n + 1);
    for k in pinned {
        out[k] = 0.0;
    }
    Ok(out)
}
