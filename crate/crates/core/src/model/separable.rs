//! One-dimensional, one-population model with separable interaction
//! `b(x, y) = α(x) β(y)` and coupling `1/ε`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SeparableModel1D {
    pub f: ScalarFn,
    pub alpha: ScalarFn,
    pub beta: ScalarFn,
    pub sigma: f64,
    pub epsilon: f64,
    /// Declared lower bound `K⁻¹` of `β` on the working domain.
    pub beta_floor: f64,
}

impl fmt::Debug for SeparableModel1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparableModel1D")
            .field("sigma", &self.sigma)
            .field("epsilon", &self.epsilon)
            .field("beta_floor", &self.beta_floor)
            .finish_non_exhaustive()
    }
}

impl SeparableModel1D {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: f64,
        epsilon: f64,
        beta_floor: f64,
    ) -> Result<Self> {
        let model = Self {
            f: Arc::new(f),
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
            sigma,
            epsilon,
            beta_floor,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1]"));
        }
        if !(self.beta_floor > 0.0) {
            return Err(Error::invalid("beta_floor", "must be positive"));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let model = Self {
            epsilon,
            ..self.clone()
        };
        model.validate()?;
        Ok(model)
    }

    /// Advection velocity `f(x) − α(x) I / ε`.
    #[inline]
    pub fn velocity(&self, x: f64, interaction: f64) -> f64 {
        (self.f)(x) - (self.alpha)(x) * interaction / self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparableKind {
    /// `f(x) = x − x³`, `α(x) = x − E`, sigmoidal `β`.
    Default,
    /// `f(x) = −k x`, `α ≡ 0`, `β ≡ 1`.
    OrnsteinUhlenbeck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableSpec {
    pub kind: SeparableKind,
    pub sigma: f64,
    pub epsilon: f64,
    /// Zero `E` of `α(x) = x − E`.
    pub reversal: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta_threshold: f64,
    pub beta_slope: f64,
    /// Mean-reversion rate of the Ornstein-Uhlenbeck variant.
    pub ou_rate: f64,
}

impl Default for SeparableSpec {
    fn default() -> Self {
        Self {
            kind: SeparableKind::Default,
            sigma: 0.5,
            epsilon: 0.1,
            reversal: 0.0,
            beta0: 1.0,
            beta1: 1.0,
            beta_threshold: 0.5,
            beta_slope: 0.5,
            ou_rate: 1.0,
        }
    }
}

impl SeparableSpec {
    pub fn ornstein_uhlenbeck(sigma: f64) -> Self {
        Self {
            kind: SeparableKind::OrnsteinUhlenbeck,
            sigma,
            ..Self::default()
        }
    }
}

pub fn build_separable_1d(spec: &SeparableSpec) -> Result<SeparableModel1D> {
    match spec.kind {
        SeparableKind::Default => {
            if !(spec.beta0 > 0.0) {
                return Err(Error::invalid("beta0", "must be positive"));
            }
            if !(spec.beta1 >= 0.0) {
                return Err(Error::invalid("beta1", "must be nonnegative"));
            }
            if !(spec.beta_slope > 0.0) {
                return Err(Error::invalid("beta_slope", "must be positive"));
            }
            let e = spec.reversal;
            let (b0, b1, th, k) = (spec.beta0, spec.beta1, spec.beta_threshold, spec.beta_slope);
            SeparableModel1D::new(
                |x| x - x * x * x,
                move |x| x - e,
                move |y| b0 + b1 / (1.0 + (-(y - th) / k).exp()),
                spec.sigma,
                spec.epsilon,
                b0,
            )
        }
        SeparableKind::OrnsteinUhlenbeck => {
            let rate = spec.ou_rate;
            if !(rate > 0.0) {
                return Err(Error::invalid("ou_rate", "must be positive"));
            }
            SeparableModel1D::new(
                move |x| -rate * x,
                |_| 0.0,
                |_| 1.0,
                spec.sigma,
                spec.epsilon,
                1.0,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HypothesisStatus {
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub status: HypothesisStatus,
    pub witness: Option<f64>,
    pub constants: Vec<(String, f64)>,
}

impl HypothesisCheck {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn satisfied(&self) -> bool {
        self.status == HypothesisStatus::Satisfied
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub half_width: f64,
    pub grid_points: usize,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn d1(g: &ScalarFn, x: f64) -> f64 {
    let h = 1e-5 * (1.0 + x.abs());
    (g(x + h) - g(x - h)) / (2.0 * h)
}

fn d2(g: &ScalarFn, x: f64) -> f64 {
    let h = 1e-4 * (1.0 + x.abs());
    (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h)
}

fn status(ok: bool) -> HypothesisStatus {
    if ok {
        HypothesisStatus::Satisfied
    } else {
        HypothesisStatus::Violated
    }
}

/// Grid scan of the structural hypotheses on `[−L, L]`.
///
/// Checks reported (by name):
/// * `f_prime_bound`: `f′(x) ≤ C₀(1 − x²)`, with the smallest admissible `C₀`;
/// * `alpha_slopes`: `α′` at both domain ends positive (`C₁`, `C₂`);
/// * `beta_bounds`: `β ≥ K⁻¹ > 0` and bounded above on the grid;
/// * `beta_alpha_monotone`: `β′α ≥ C⁻¹ > 0` and `β″α² + β′α′α ≥ 0`;
/// * `growth`: fitted `|f″| ≤ C(1 + |x|)` and `max |α″|`.
pub fn validate_hypotheses(
    model: &SeparableModel1D,
    half_width: f64,
    grid_points: usize,
) -> Result<HypothesisReport> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::invalid("L", "must be positive"));
    }
    if grid_points < 64 {
        return Err(Error::invalid("grid", "at least 64 points required"));
    }
    let xs: Vec<f64> = (0..grid_points)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut checks = Vec::new();

    // f'(x) <= C0 (1 - x^2): lower bounds on C0 where 1-x^2 > 0, upper bounds where < 0.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut witness = None;
    for &x in &xs {
        let fp = d1(&model.f, x);
        let w = 1.0 - x * x;
        if w > 1e-12 {
            if fp / w > lo {
                lo = fp / w;
            }
        } else if w < -1e-12 {
            if fp / w < hi {
                hi = fp / w;
            }
        } else if fp > 1e-8 && witness.is_none() {
            witness = Some(x);
        }
    }
    let c0 = lo.max(f64::MIN_POSITIVE);
    let ok = witness.is_none() && c0 <= hi;
    if !ok && witness.is_none() {
        witness = xs.iter().copied().find(|&x| {
            let w = 1.0 - x * x;
            d1(&model.f, x) > c0 * w + 1e-8
        });
    }
    checks.push(HypothesisCheck {
        name: "f_prime_bound".into(),
        status: status(ok),
        witness: if ok { None } else { witness },
        constants: vec![("C0".into(), c0), ("C0_max".into(), hi)],
    });

    let c1 = d1(&model.alpha, -half_width);
    let c2 = d1(&model.alpha, half_width);
    let ok = c1 > 0.0 && c2 > 0.0;
    checks.push(HypothesisCheck {
        name: "alpha_slopes".into(),
        status: status(ok),
        witness: if ok {
            None
        } else if c1 <= 0.0 {
            Some(-half_width)
        } else {
            Some(half_width)
        },
        constants: vec![("C1".into(), c1), ("C2".into(), c2)],
    });

    let (mut bmin, mut bmax, mut argmin) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &x in &xs {
        let b = (model.beta)(x);
        if b < bmin {
            bmin = b;
            argmin = x;
        }
        bmax = bmax.max(b);
    }
    let ok = bmin > 0.0 && bmax.is_finite();
    checks.push(HypothesisCheck {
        name: "beta_bounds".into(),
        status: status(ok),
        witness: if ok { None } else { Some(argmin) },
        constants: vec![("K_inv".into(), bmin), ("beta_max".into(), bmax)],
    });

    let (mut m1, mut w1) = (f64::INFINITY, 0.0);
    let (mut m2, mut w2) = (f64::INFINITY, 0.0);
    for &x in &xs {
        let a = (model.alpha)(x);
        let bp = d1(&model.beta, x);
        let first = bp * a;
        let second = d2(&model.beta, x) * a * a + bp * d1(&model.alpha, x) * a;
        if first < m1 {
            m1 = first;
            w1 = x;
        }
        if second < m2 {
            m2 = second;
            w2 = x;
        }
    }
    let first_ok = m1 > 0.0;
    let second_ok = m2 >= -1e-8;
    checks.push(HypothesisCheck {
        name: "beta_alpha_monotone".into(),
        status: status(first_ok && second_ok),
        witness: if !first_ok {
            Some(w1)
        } else if !second_ok {
            Some(w2)
        } else {
            None
        },
        constants: vec![
            ("min_beta_prime_alpha".into(), m1),
            ("min_second_order".into(), m2),
        ],
    });

    let mut cf = 0.0f64;
    let mut a2 = 0.0f64;
    for &x in &xs {
        cf = cf.max(d2(&model.f, x).abs() / (1.0 + x.abs()));
        a2 = a2.max(d2(&model.alpha, x).abs());
    }
    checks.push(HypothesisCheck {
        name: "growth".into(),
        status: status(cf.is_finite() && a2.is_finite()),
        witness: None,
        constants: vec![("C_f2".into(), cf), ("max_alpha_second".into(), a2)],
    });

    Ok(HypothesisReport {
        half_width,
        grid_points,
        checks,
    })
}
