//! One-dimensional nonlinear Fokker-Planck solver for the separable model
//!
//! ```text
//! ∂t μ = −∂x[(f(x) − ε⁻¹ α(x) I_ε(t)) μ] + (σ²/2) ∂xx μ,   I_ε(t) = ∫ β dμ
//! ```
//!
//! together with the Hopf-Cole transform `φ_ε = ε ln μ_ε` and the numerical
//! checks of the concentration theory built on it.

mod diagnostics;
mod hopf;
mod solver;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{
    check_bv_interaction, check_moment_bound, check_supersolution_envelope, check_w_gradient_bound,
    hamiltonian_residual, support_width, BvReport, EnvelopeFit, EnvelopeReport, GradientReport,
    MomentReport, ResidualReport, DEFAULT_SUPPORT_THRESHOLD,
};
pub use hopf::{hopf_cole, HopfColeField, DEFAULT_FLOOR_RATIO};
pub use solver::{cfl_dt, ou_stationary_l1, solve_fp_1d, DtPolicy, FpRun};
pub use sweep::{epsilon_sweep, ConvergenceReport, EpsilonRun, SweepSpec, TrendChecks};

/// Uniform cell-centred grid on `[−L, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    half_width: f64,
    cells: usize,
}

impl Grid1D {
    pub fn new(half_width: f64, cells: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid("L", "must be positive"));
        }
        if cells < 64 {
            return Err(Error::invalid("M", "at least 64 cells required"));
        }
        Ok(Self { half_width, cells })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cells).map(|j| self.center(j))
    }

    /// Interior face between cells `j` and `j + 1`.
    pub fn face(&self, j: usize) -> f64 {
        -self.half_width + (j + 1) as f64 * self.dx()
    }

    /// Cell containing `x`, clamped to the grid.
    pub fn locate(&self, x: f64) -> usize {
        (((x + self.half_width) / self.dx()).floor().max(0.0) as usize).min(self.cells - 1)
    }
}

/// Cell values of a probability density at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub t: f64,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>, epsilon: f64, t: f64) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::invalid(
                "values",
                "length differs from the cell count",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("values", "must be finite and nonnegative"));
        }
        Ok(Self {
            grid,
            values,
            epsilon,
            t,
        })
    }

    /// Density proportional to `g` at cell centres, normalised to unit mass.
    pub fn from_fn(grid: Grid1D, epsilon: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        let raw: Vec<f64> = grid.centers().map(g).collect();
        let mut d = Self::new(grid, raw, epsilon, 0.0)?;
        d.normalize()?;
        Ok(d)
    }

    /// `μ₀ ∝ exp(−A (x − x₀)² / ε)`.
    pub fn gaussian_profile(grid: Grid1D, epsilon: f64, x0: f64, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::invalid("A", "must be positive"));
        }
        Self::from_fn(grid, epsilon, |x| {
            (-a * (x - x0) * (x - x0) / epsilon).exp()
        })
    }

    /// Normal density with the given mean and variance.
    pub fn normal(grid: Grid1D, epsilon: f64, mean: f64, var: f64) -> Result<Self> {
        Self::from_fn(grid, epsilon, |x| {
            (-(x - mean) * (x - mean) / (2.0 * var)).exp()
        })
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::EmptyInput("density has zero mass".into()));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Centre of the highest cell (first one on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (j, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = j;
            }
        }
        self.grid.center(best)
    }

    /// `∫ x^k dμ` by midpoint quadrature.
    pub fn moment(&self, k: u32) -> f64 {
        let dx = self.grid.dx();
        self.grid
            .centers()
            .zip(&self.values)
            .map(|(x, m)| x.powi(k as i32) * m * dx)
            .sum()
    }

    pub fn l1_distance(&self, g: impl Fn(f64) -> f64) -> f64 {
        let dx = self.grid.dx();
        self.grid
            .centers()
            .zip(&self.values)
            .map(|(x, m)| (m - g(x)).abs() * dx)
            .sum()
    }
}
