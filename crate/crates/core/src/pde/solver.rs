//! Explicit conservative finite-volume time stepping.

use serde::{Deserialize, Serialize};

use super::{DensityField, Grid1D};
use crate::error::{Error, Result};
use crate::model::SeparableModel1D;
use crate::stats::SeriesReport;

/// Negative cell values below this abort the run.
pub const POSITIVITY_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    /// Safety factor on the CFL bound.
    pub cfl: f64,
    /// Spacing of recorded density snapshots.
    pub record_interval: f64,
    pub max_steps: u64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            record_interval: 0.05,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpRun {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: u64,
    pub snapshots: Vec<DensityField>,
    /// `I_ε` at every step, start-of-step values.
    pub interaction: SeriesReport,
    /// Largest `|mass − 1|` seen at any step.
    pub max_mass_drift: f64,
    /// Smallest cell value seen at any step.
    pub min_value: f64,
}

impl FpRun {
    pub fn final_density(&self) -> &DensityField {
        self.snapshots
            .last()
            .expect("runs record at least the initial state")
    }

    pub fn t_end(&self) -> f64 {
        self.final_density().t
    }

    /// Mass drift normalised by the horizon.
    pub fn mass_drift_rate(&self) -> f64 {
        self.max_mass_drift / self.t_end().max(1.0)
    }
}

struct FaceCoefficients {
    f: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_max: f64,
}

impl FaceCoefficients {
    fn new(model: &SeparableModel1D, grid: &Grid1D) -> Result<Self> {
        let faces: Vec<f64> = (0..grid.cells() - 1).map(|k| grid.face(k)).collect();
        let f: Vec<f64> = faces.iter().map(|&x| (model.f)(x)).collect();
        let alpha: Vec<f64> = faces.iter().map(|&x| (model.alpha)(x)).collect();
        let beta: Vec<f64> = grid.centers().map(|x| (model.beta)(x)).collect();
        if f.iter().chain(&alpha).chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::ModelDefinition(
                "coefficients are not finite on the grid".into(),
            ));
        }
        let beta_max = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        Ok(Self {
            f,
            alpha,
            beta,
            beta_max,
        })
    }

    fn speed_bound(&self, epsilon: f64) -> f64 {
        self.f
            .iter()
            .zip(&self.alpha)
            .map(|(f, a)| f.abs() + a.abs() * self.beta_max / epsilon)
            .fold(0.0, f64::max)
    }
}

fn dt_from(speed: f64, sigma: f64, dx: f64, cfl: f64) -> f64 {
    // The upwind stencil loses positivity only when both neighbouring faces
    // carry mass out of the cell, hence the factor 2 on the advective part.
    cfl / (2.0 * speed / dx + sigma * sigma / dx / dx)
}

/// Largest stable step for `model` on `grid`.
pub fn cfl_dt(model: &SeparableModel1D, grid: &Grid1D, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::CflInfeasible(format!(
            "cfl factor {cfl} outside (0, 1]"
        )));
    }
    let coef = FaceCoefficients::new(model, grid)?;
    let dt = dt_from(coef.speed_bound(model.epsilon), model.sigma, grid.dx(), cfl);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::CflInfeasible(format!(
            "step bound {dt} is not positive"
        )));
    }
    Ok(dt)
}

/// Integrates the nonlinear Fokker-Planck equation from `mu0` to time `t_end`.
pub fn solve_fp_1d(
    model: &SeparableModel1D,
    mu0: &DensityField,
    t_end: f64,
    policy: &DtPolicy,
) -> Result<FpRun> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("T", "must be positive"));
    }
    if !(policy.record_interval > 0.0) {
        return Err(Error::invalid("record_interval", "must be positive"));
    }
    if (mu0.mass() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(
            "mu0",
            format!("mass {} is not 1", mu0.mass()),
        ));
    }
    let grid = mu0.grid.clone();
    let m = grid.cells();
    let dx = grid.dx();
    let eps = model.epsilon;
    let diff = 0.5 * model.sigma * model.sigma;
    let coef = FaceCoefficients::new(model, &grid)?;
    let dt_max = cfl_dt(model, &grid, policy.cfl)?;
    let steps = (t_end / dt_max).ceil() as u64;
    if steps > policy.max_steps {
        return Err(Error::CflInfeasible(format!(
            "{steps} steps needed (dt <= {dt_max:e}), limit is {}",
            policy.max_steps
        )));
    }
    let dt = t_end / steps as f64;
    let record_every = ((policy.record_interval / dt).round() as u64).max(1);

    let mut mu = mu0.values.clone();
    let mut flux = vec![0.0; m + 1];
    let mut snapshots = vec![DensityField {
        t: 0.0,
        epsilon: eps,
        ..mu0.clone()
    }];
    let mut times = Vec::with_capacity(steps as usize + 1);
    let mut interaction = Vec::with_capacity(steps as usize + 1);
    let mut max_mass_drift = (mu0.mass() - 1.0).abs();
    let mut min_value = mu0.min();
    let lambda = dt / dx;

    for step in 0..=steps {
        let t = step as f64 * dt;
        let i_eps = coef.beta.iter().zip(&mu).map(|(b, m)| b * m).sum::<f64>() * dx;
        times.push(t);
        interaction.push(i_eps);
        if step == steps {
            break;
        }
        let shift = i_eps / eps;
        for k in 0..m - 1 {
            let v = coef.f[k] - coef.alpha[k] * shift;
            let adv = if v > 0.0 { v * mu[k] } else { v * mu[k + 1] };
            flux[k + 1] = adv - diff * (mu[k + 1] - mu[k]) / dx;
        }
        let mut mass = 0.0;
        let mut low = f64::INFINITY;
        for j in 0..m {
            let v = mu[j] - lambda * (flux[j + 1] - flux[j]);
            mu[j] = v;
            mass += v;
            low = low.min(v);
        }
        let t_next = (step + 1) as f64 * dt;
        if low < POSITIVITY_FLOOR {
            return Err(Error::NegativeDensity {
                t: t_next,
                min: low,
            });
        }
        min_value = min_value.min(low);
        max_mass_drift = max_mass_drift.max((mass * dx - 1.0).abs());
        if (step + 1) % record_every == 0 || step + 1 == steps {
            snapshots.push(DensityField {
                grid: grid.clone(),
                values: mu.iter().map(|v| v.max(0.0)).collect(),
                epsilon: eps,
                t: t_next,
            });
        }
    }

    Ok(FpRun {
        epsilon: eps,
        dt,
        steps,
        snapshots,
        interaction: SeriesReport::new("I_eps", times, interaction)?,
        max_mass_drift,
        min_value,
    })
}

/// L1 distance of `density` to the centred normal law with variance `var`.
pub fn ou_stationary_l1(density: &DensityField, var: f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    density.l1_distance(|x| norm * (-x * x / (2.0 * var)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_separable_1d, SeparableSpec};

    fn ou(sigma: f64) -> SeparableModel1D {
        build_separable_1d(&SeparableSpec::ornstein_uhlenbeck(sigma)).unwrap()
    }

    #[test]
    fn ou_relaxes_to_stationary_gaussian() {
        let grid = Grid1D::new(8.0, 1024).unwrap();
        let mu0 = DensityField::normal(grid, 1.0, 1.0, 0.25).unwrap();
        let run = solve_fp_1d(
            &ou(1.0),
            &mu0,
            10.0,
            &DtPolicy {
                record_interval: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let err = ou_stationary_l1(run.final_density(), 0.5);
        assert!(err <= 1e-2, "L1 error {err}");
        assert!(run.max_mass_drift <= 1e-10);
        assert!(run.min_value >= POSITIVITY_FLOOR);
        assert!(run
            .snapshots
            .iter()
            .all(|s| (s.mass() - 1.0).abs() <= 1e-10));
        // OU: α ≡ 0 so I never affects the dynamics, but it is still recorded
        assert_eq!(run.interaction.len() as u64, run.steps + 1);
    }

    #[test]
    fn infeasible_step_count_rejected() {
        let grid = Grid1D::new(8.0, 1024).unwrap();
        let mu0 = DensityField::normal(grid, 1.0, 0.0, 0.5).unwrap();
        let policy = DtPolicy {
            max_steps: 10,
            ..Default::default()
        };
        assert!(matches!(
            solve_fp_1d(&ou(1.0), &mu0, 1.0, &policy),
            Err(Error::CflInfeasible(_))
        ));
        assert!(cfl_dt(&ou(1.0), &mu0.grid, 1.5).is_err());
    }

    #[test]
    fn satisfies_stated_cfl_bound() {
        let model = build_separable_1d(&SeparableSpec::default()).unwrap();
        let grid = Grid1D::new(8.0, 512).unwrap();
        let dt = cfl_dt(&model, &grid, 0.9).unwrap();
        let dx = grid.dx();
        let vmax = grid
            .centers()
            .map(|x| (model.f)(x).abs() + (model.alpha)(x).abs() * 2.0 / model.epsilon)
            .fold(0.0, f64::max);
        assert!(dt * (vmax / dx + model.sigma * model.sigma / dx / dx) <= 0.9);
    }
}
