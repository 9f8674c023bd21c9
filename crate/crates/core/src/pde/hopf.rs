//! Hopf-Cole transform `φ_ε = ε ln μ_ε` and the derived field
//! `w_ε = √(2F² − φ_ε)`.

use super::{DensityField, Grid1D};
use crate::error::{Error, Result};

pub const DEFAULT_FLOOR_RATIO: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct HopfColeField {
    pub grid: Grid1D,
    pub epsilon: f64,
    pub t: f64,
    /// `ε ln μ` on the mask, NaN elsewhere.
    pub phi: Vec<f64>,
    pub mask: Vec<bool>,
    /// `F²` with `2F² = 2(1 + max(0, sup φ))`.
    pub f_squared: f64,
    /// `√(2F² − φ)` on the mask, NaN elsewhere.
    pub w: Vec<f64>,
}

pub fn hopf_cole(density: &DensityField, floor_ratio: f64) -> Result<HopfColeField> {
    if !(floor_ratio >= 0.0) {
        return Err(Error::invalid("floor_ratio", "must be nonnegative"));
    }
    let max = density.max();
    if !(max > 0.0) {
        return Err(Error::EmptyInput("density is identically zero".into()));
    }
    let eps = density.epsilon;
    let floor = floor_ratio * max;
    let mask: Vec<bool> = density
        .values
        .iter()
        .map(|&m| m > floor && m > 0.0)
        .collect();
    let phi: Vec<f64> = density
        .values
        .iter()
        .zip(&mask)
        .map(|(&m, &on)| if on { eps * m.ln() } else { f64::NAN })
        .collect();
    let sup = eps * max.ln();
    let f_squared = 1.0 + sup.max(0.0);
    let w = phi
        .iter()
        .map(|&p| {
            if p.is_nan() {
                f64::NAN
            } else {
                (2.0 * f_squared - p).sqrt()
            }
        })
        .collect();
    Ok(HopfColeField {
        grid: density.grid.clone(),
        epsilon: eps,
        t: density.t,
        phi,
        mask,
        f_squared,
        w,
    })
}

impl HopfColeField {
    /// Maximum of `φ` over the mask.
    pub fn sup_phi(&self) -> f64 {
        self.phi
            .iter()
            .filter(|p| !p.is_nan())
            .fold(f64::NEG_INFINITY, |m, p| m.max(*p))
    }

    /// Mask cells whose two neighbours are also in the mask.
    pub fn is_interior(&self, j: usize) -> bool {
        j > 0 && j + 1 < self.mask.len() && self.mask[j - 1] && self.mask[j] && self.mask[j + 1]
    }

    /// `exp(φ/ε)`, zero off the mask.
    pub fn density(&self) -> Vec<f64> {
        self.phi
            .iter()
            .map(|&p| {
                if p.is_nan() {
                    0.0
                } else {
                    (p / self.epsilon).exp()
                }
            })
            .collect()
    }

    pub fn d_phi(&self) -> Vec<f64> {
        derivative(&self.phi, &self.mask, self.grid.dx())
    }

    pub fn d_w(&self) -> Vec<f64> {
        derivative(&self.w, &self.mask, self.grid.dx())
    }
}

/// Centred differences on the mask, one-sided at its edges, NaN elsewhere.
fn derivative(values: &[f64], mask: &[bool], dx: f64) -> Vec<f64> {
    let m = values.len();
    (0..m)
        .map(|j| {
            if !mask[j] {
                return f64::NAN;
            }
            let left = j > 0 && mask[j - 1];
            let right = j + 1 < m && mask[j + 1];
            match (left, right) {
                (true, true) => (values[j + 1] - values[j - 1]) / (2.0 * dx),
                (false, true) => (values[j + 1] - values[j]) / dx,
                (true, false) => (values[j] - values[j - 1]) / dx,
                (false, false) => f64::NAN,
            }
        })
        .collect()
}
