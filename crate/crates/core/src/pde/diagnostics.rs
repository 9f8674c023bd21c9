//! Numerical checks of the a-priori bounds behind the concentration theory.
//!
//! The constants fitted here are diagnostics computed on the truncated grid;
//! they play the role of the existential constants of the analysis.

use serde::{Deserialize, Serialize};

use super::{DensityField, Grid1D, HopfColeField};
use crate::error::{Error, Result};
use crate::model::SeparableModel1D;
use crate::stats::SeriesReport;

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-3;

/// Cells with `μ ≥ CORE_RATIO · max μ` form the support core.
const CORE_RATIO: f64 = 1e-2;

/// Length of the smallest interval holding every cell with
/// `μ ≥ threshold_ratio · max μ`.
pub fn support_width(density: &DensityField, threshold_ratio: f64) -> Result<f64> {
    let max = density.max();
    if !(max > 0.0) {
        return Err(Error::EmptyInput("density is identically zero".into()));
    }
    let level = threshold_ratio * max;
    let first = density
        .values
        .iter()
        .position(|&m| m >= level)
        .expect("max cell qualifies");
    let last = density
        .values
        .iter()
        .rposition(|&m| m >= level)
        .expect("max cell qualifies");
    Ok((last - first + 1) as f64 * density.grid.dx())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub k: u32,
    pub sup_moment: f64,
    pub k0: f64,
    /// `sup (2y^{2k−1} f + σ²(2k−1) y^{2k−2} + y^{2k})`.
    pub c_prime: f64,
    /// `min α(y)/y` over `|y| ≥ M`.
    pub c1: f64,
    /// `min(0, inf_{|y|<M} y^{2k−1} α − C₁ y^{2k})`.
    pub c2: f64,
    pub c_star: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Constructive constants `(C', C₁, C₂, C*)` on `grid` with split radius `m`.
pub fn moment_constants(
    model: &SeparableModel1D,
    grid: &Grid1D,
    k: u32,
    m: f64,
) -> (f64, f64, f64, f64) {
    let k = k as i32;
    let s2 = model.sigma * model.sigma;
    let mut c_prime = f64::NEG_INFINITY;
    let mut c1 = f64::INFINITY;
    let mut alpha_zero = true;
    for y in grid.centers() {
        let f = (model.f)(y);
        let a = (model.alpha)(y);
        alpha_zero &= a == 0.0;
        let v = 2.0 * y.powi(2 * k - 1) * f
            + s2 * (2 * k - 1) as f64 * y.powi(2 * k - 2)
            + y.powi(2 * k);
        c_prime = c_prime.max(v);
        if y.abs() >= m {
            c1 = c1.min(a / y);
        }
    }
    if alpha_zero {
        return (c_prime, 0.0, 0.0, c_prime);
    }
    if !(c1 > 0.0) {
        return (c_prime, c1, f64::NAN, f64::INFINITY);
    }
    let mut c2 = 0.0f64;
    for y in grid.centers().filter(|y| y.abs() < m) {
        c2 = c2.min(y.powi(2 * k - 1) * (model.alpha)(y) - c1 * y.powi(2 * k));
    }
    (c_prime, c1, c2, c_prime.max(-c2 / c1))
}

/// Checks `sup_t ∫ y^{2k} μ(t) ≤ max(K₀, C*)` along a trajectory.
pub fn check_moment_bound(
    trajectory: &[DensityField],
    model: &SeparableModel1D,
    k: u32,
    k0: f64,
) -> Result<MomentReport> {
    let first = trajectory
        .first()
        .ok_or_else(|| Error::EmptyInput("trajectory".into()))?;
    if k == 0 {
        return Err(Error::invalid("k", "must be positive"));
    }
    let (c_prime, c1, c2, c_star) = moment_constants(model, &first.grid, k, 1.0);
    let sup_moment = trajectory
        .iter()
        .map(|d| d.moment(2 * k))
        .fold(0.0, f64::max);
    let bound = k0.max(c_star);
    Ok(MomentReport {
        k,
        sup_moment,
        k0,
        c_prime,
        c1,
        c2,
        c_star,
        bound,
        satisfied: sup_moment <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvReport {
    pub tv: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
}

fn cumulative_tv(series: &SeriesReport, t_end: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(series.len());
    let mut tv = 0.0;
    let mut prev: Option<f64> = None;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if t > t_end + 1e-12 {
            break;
        }
        if let Some(p) = prev {
            tv += (v - p).abs();
        }
        prev = Some(v);
        out.push((t, tv));
    }
    out
}

/// Total variation of `I` on `[0, T]` and the line `C' + C''T'` fitted to its
/// cumulative variation: `C''` is the least-squares slope (clamped at zero)
/// and `C'` the smallest intercept keeping the line above the data.
pub fn check_bv_interaction(series: &SeriesReport, t_end: f64) -> Result<BvReport> {
    let cum = cumulative_tv(series, t_end);
    if cum.is_empty() {
        return Err(Error::EmptyInput("interaction series".into()));
    }
    let n = cum.len() as f64;
    let mt = cum.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = cum.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = cum.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = cum.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let intercept = cum.iter().map(|p| p.1 - slope * p.0).fold(0.0, f64::max);
    Ok(BvReport {
        tv: cum.last().expect("nonempty").1,
        c_prime: intercept,
        c_double_prime: slope,
    })
}

impl BvReport {
    /// Whether this report's line bounds the cumulative variation of `series`.
    pub fn bounds(&self, series: &SeriesReport, t_end: f64) -> bool {
        cumulative_tv(series, t_end)
            .iter()
            .all(|&(t, tv)| tv <= self.c_prime + self.c_double_prime * t + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub a_prime: f64,
    pub b_prime: f64,
    pub d_prime: f64,
    pub e_prime: f64,
}

impl EnvelopeFit {
    pub fn value(&self, epsilon: f64, t: f64, x: f64, i: f64, lambda: f64) -> f64 {
        -self.a_prime * i * lambda - 0.5 * epsilon * self.b_prime * x * x
            + self.d_prime * t
            + self.e_prime
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub epsilon: f64,
    /// One fit per searched `A'`.
    pub fits: Vec<EnvelopeFit>,
    /// Fit at the `A'` closest to `1/σ²`.
    pub primary: EnvelopeFit,
    pub satisfied: bool,
}

/// `Λ(x) = ∫₀ˣ α` by composite Simpson quadrature.
pub fn primitive(alpha: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let n = 64;
    let h = x / n as f64;
    let mut s = alpha(0.0) + alpha(x);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * alpha(k as f64 * h);
    }
    s * h / 3.0
}

/// Number of `A'` values searched in `(0, 2/σ²)`.
pub const ENVELOPE_GRID: usize = 7;

/// Fits `φ ≤ −A' I Λ − (ε/2) B' x² + D' t + E'` over every masked point of
/// every field, for `A' = (k/8)(2/σ²)`, `k = 1..7`. `B'` and `D'` are held at
/// zero and `E'` is the smallest nonnegative constant closing the inequality.
pub fn check_supersolution_envelope(
    fields: &[HopfColeField],
    interaction: &SeriesReport,
    model: &SeparableModel1D,
) -> Result<EnvelopeReport> {
    let first = fields
        .first()
        .ok_or_else(|| Error::EmptyInput("fields".into()))?;
    let lambda: Vec<f64> = first
        .grid
        .centers()
        .map(|x| primitive(&*model.alpha, x))
        .collect();
    let s2 = model.sigma * model.sigma;
    let mut fits = Vec::with_capacity(ENVELOPE_GRID);
    for k in 1..=ENVELOPE_GRID {
        let a_prime = k as f64 / (ENVELOPE_GRID + 1) as f64 * 2.0 / s2;
        let mut e = 0.0f64;
        for field in fields {
            let i = interaction
                .at(field.t)
                .ok_or_else(|| Error::MissingStatistic(format!("I at t = {}", field.t)))?;
            for (j, &p) in field.phi.iter().enumerate() {
                if !p.is_nan() {
                    e = e.max(p + a_prime * i * lambda[j]);
                }
            }
        }
        fits.push(EnvelopeFit {
            a_prime,
            b_prime: 0.0,
            d_prime: 0.0,
            e_prime: e,
        });
    }
    let target = 1.0 / s2;
    let primary = *fits
        .iter()
        .min_by(|a, b| {
            (a.a_prime - target)
                .abs()
                .total_cmp(&(b.a_prime - target).abs())
        })
        .expect("nonempty search grid");
    Ok(EnvelopeReport {
        epsilon: first.epsilon,
        satisfied: primary.e_prime.is_finite(),
        fits,
        primary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub epsilon: f64,
    pub t0: f64,
    /// `sup (|∂ₓw| − √(1/(tσ²)))` over `t ≥ t₀` and interior mask cells.
    pub theta: f64,
    pub max_gradient: f64,
}

pub fn check_w_gradient_bound(
    fields: &[HopfColeField],
    sigma: f64,
    t0: f64,
) -> Result<GradientReport> {
    if !(t0 > 0.0) {
        return Err(Error::invalid("t0", "the bound is singular at t = 0"));
    }
    let mut theta = f64::NEG_INFINITY;
    let mut max_gradient = 0.0f64;
    let mut epsilon = f64::NAN;
    for field in fields.iter().filter(|f| f.t >= t0 - 1e-12) {
        epsilon = field.epsilon;
        let bound = (1.0 / (field.t * sigma * sigma)).sqrt();
        for (j, g) in field.d_w().iter().enumerate() {
            if field.is_interior(j) {
                max_gradient = max_gradient.max(g.abs());
                theta = theta.max(g.abs() - bound);
            }
        }
    }
    if theta == f64::NEG_INFINITY {
        return Err(Error::EmptyInput(format!(
            "no field at t >= {t0} with interior cells"
        )));
    }
    Ok(GradientReport {
        epsilon,
        t0,
        theta,
        max_gradient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `−α I ∂ₓφ − (σ²/2)(∂ₓφ)²`, NaN off the mask.
    pub residual: Vec<f64>,
    /// Sup-norm over interior cells of the support core.
    pub sup_core: f64,
}

pub fn hamiltonian_residual(
    field: &HopfColeField,
    model: &SeparableModel1D,
    i: f64,
) -> Result<ResidualReport> {
    let s2 = model.sigma * model.sigma;
    let dphi = field.d_phi();
    let residual: Vec<f64> = field
        .grid
        .centers()
        .zip(&dphi)
        .map(|(x, &p)| -(model.alpha)(x) * i * p - 0.5 * s2 * p * p)
        .collect();
    let core_level = field.sup_phi() + field.epsilon * CORE_RATIO.ln();
    let mut sup = f64::NEG_INFINITY;
    for (j, r) in residual.iter().enumerate() {
        if field.is_interior(j) && field.phi[j] >= core_level {
            sup = sup.max(r.abs());
        }
    }
    if sup == f64::NEG_INFINITY {
        return Err(Error::EmptyInput(
            "support core has no interior cells".into(),
        ));
    }
    Ok(ResidualReport {
        residual,
        sup_core: sup,
    })
}
