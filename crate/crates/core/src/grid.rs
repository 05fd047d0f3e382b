//! Uniform time grids and control fields sampled on them.

use crate::error::{Error, Result};

/// Uniform grid `t_k = k·Δt`, `k = 0..=n_steps`, with `Δt = t_f / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_f",
                reason: format!("must be positive and finite, got {t_final}"),
            });
        }
        if n_steps < 2 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: format!("need at least 2 steps, got {n_steps}"),
            });
        }
        Ok(Self { t_final, n_steps })
    }

    /// Grid whose spacing is as close as possible to (and not above) `dt`.
    pub fn with_spacing(t_final: f64, dt: f64) -> Result<Self> {
        let n = (t_final / dt - 1e-9).ceil().max(2.0) as usize;
        Self::new(t_final, n)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.node(k))
    }
}

/// Scalar control `f(t)` stored at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ControlField {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch {
                expected: grid.n_nodes(),
                actual: values.len(),
            });
        }
        if let Some(step) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation inside step `k` at fraction `s ∈ [0, 1]`.
    #[inline]
    pub fn within_step(&self, k: usize, s: f64) -> f64 {
        let a = self.values[k];
        let b = self.values[(k + 1).min(self.grid.n_steps)];
        a + s * (b - a)
    }

    /// Root-mean-square norm `sqrt(Σ f_k² Δt)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dt()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let g = TimeGrid::new(60.0, 6000).unwrap();
        assert!((g.dt() - 0.01).abs() < 1e-15);
        assert_eq!(g.n_nodes(), 6001);
        assert_eq!(g.nodes().last().unwrap(), 60.0);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());

        let h = TimeGrid::with_spacing(7.2595, 0.01).unwrap();
        assert_eq!(h.n_steps(), 726);
        assert!(h.dt() <= 0.01);
    }

    #[test]
    fn field_validation_and_interpolation() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            ControlField::new(g, vec![0.0; 3]),
            Err(Error::GridMismatch { expected: 5, actual: 3 })
        ));
        assert!(matches!(
            ControlField::new(g, vec![0.0, 1.0, f64::INFINITY, 0.0, 0.0]),
            Err(Error::NonFinite { step: 2 })
        ));
        let f = ControlField::from_fn(g, |t| 2.0 * t).unwrap();
        assert!((f.within_step(1, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(f.within_step(4, 0.5), 2.0);
    }
}
