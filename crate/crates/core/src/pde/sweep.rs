//! Sweeps over `ε` and the cross-`ε` trend checks of the concentration
//! theory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{
    check_bv_interaction, check_moment_bound, check_supersolution_envelope, check_w_gradient_bound,
    hamiltonian_residual, support_width, BvReport, EnvelopeFit, EnvelopeReport, GradientReport,
    MomentReport, DEFAULT_SUPPORT_THRESHOLD,
};
use super::hopf::{hopf_cole, DEFAULT_FLOOR_RATIO};
use super::solver::{solve_fp_1d, DtPolicy};
use super::{DensityField, Grid1D};
use crate::error::{Error, Result};
use crate::model::{build_separable_1d, SeparableSpec};
use crate::stats::SeriesReport;

/// Relative slack allowed when comparing finer-`ε` constants to the
/// coarsest-`ε` ones.
pub const UNIFORMITY_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub model: SeparableSpec,
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub half_width: f64,
    pub cells: usize,
    /// Initial profile `∝ exp(−A (x − x₀)²/ε)`.
    pub x0: f64,
    pub a: f64,
    pub policy: DtPolicy,
    /// Earliest time entering the gradient bound.
    pub t0: f64,
    /// Moment order is `2k`.
    pub moment_k: u32,
    pub floor_ratio: f64,
    pub support_threshold: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            model: SeparableSpec::default(),
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
            t_end: 2.0,
            half_width: 8.0,
            cells: 2048,
            x0: 0.0,
            a: 3.0,
            policy: DtPolicy::default(),
            t0: 0.5,
            moment_k: 2,
            floor_ratio: DEFAULT_FLOOR_RATIO,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::EmptyInput("epsilon list".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::invalid("epsilons", "values must lie in (0, 1]"));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid(
                "epsilons",
                "list must be strictly decreasing",
            ));
        }
        if !(self.t0 > 0.0 && self.t0 <= self.t_end) {
            return Err(Error::invalid("t0", "must lie in (0, T]"));
        }
        Grid1D::new(self.half_width, self.cells)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    /// `None` when the run and its diagnostics completed.
    pub error: Option<String>,
    pub dt: f64,
    pub steps: u64,
    pub max_mass_drift: f64,
    pub min_value: f64,
    pub sup_phi: f64,
    pub support_width: f64,
    pub i_final: f64,
    pub residual_sup: f64,
    pub initial_moment: f64,
    pub bv: Option<BvReport>,
    pub envelope: Option<EnvelopeReport>,
    pub gradient: Option<GradientReport>,
    pub moment: Option<MomentReport>,
    #[serde(skip)]
    pub interaction: Option<SeriesReport>,
    #[serde(skip)]
    pub final_density: Option<DensityField>,
}

impl EpsilonRun {
    fn failed(epsilon: f64, err: Error) -> Self {
        Self {
            epsilon,
            error: Some(err.to_string()),
            dt: f64::NAN,
            steps: 0,
            max_mass_drift: f64::NAN,
            min_value: f64::NAN,
            sup_phi: f64::NAN,
            support_width: f64::NAN,
            i_final: f64::NAN,
            residual_sup: f64::NAN,
            initial_moment: f64::NAN,
            bv: None,
            envelope: None,
            gradient: None,
            moment: None,
            interaction: None,
            final_density: None,
        }
    }

    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

fn run_one(spec: &SweepSpec, epsilon: f64) -> Result<EpsilonRun> {
    let model = build_separable_1d(&SeparableSpec {
        epsilon,
        ..spec.model.clone()
    })?;
    let grid = Grid1D::new(spec.half_width, spec.cells)?;
    let mu0 = DensityField::gaussian_profile(grid, epsilon, spec.x0, spec.a)?;
    let run = solve_fp_1d(&model, &mu0, spec.t_end, &spec.policy)?;
    let fields = run
        .snapshots
        .iter()
        .map(|d| hopf_cole(d, spec.floor_ratio))
        .collect::<Result<Vec<_>>>()?;
    let last = fields.last().expect("at least one snapshot");
    let density = run.final_density();
    let i_final = run.interaction.last().expect("nonempty series");
    let residual = hamiltonian_residual(last, &model, i_final)?;
    let bv = check_bv_interaction(&run.interaction, spec.t_end)?;
    let envelope = check_supersolution_envelope(&fields, &run.interaction, &model)?;
    let gradient = check_w_gradient_bound(&fields, model.sigma, spec.t0)?;
    let initial_moment = mu0.moment(2 * spec.moment_k);
    let moment = check_moment_bound(&run.snapshots, &model, spec.moment_k, initial_moment)?;
    Ok(EpsilonRun {
        epsilon,
        error: None,
        dt: run.dt,
        steps: run.steps,
        max_mass_drift: run.max_mass_drift,
        min_value: run.min_value,
        sup_phi: last.sup_phi(),
        support_width: support_width(density, spec.support_threshold)?,
        i_final,
        residual_sup: residual.sup_core,
        initial_moment,
        bv: Some(bv),
        envelope: Some(envelope),
        gradient: Some(gradient),
        moment: Some(moment),
        final_density: Some(density.clone()),
        interaction: Some(run.interaction),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendChecks {
    pub sup_phi_abs_decreasing: bool,
    pub width_decreasing: bool,
    /// `max/min` of `width/√ε`.
    pub width_sqrt_ratio: f64,
    pub width_consistent_with_sqrt: bool,
    pub residual_decreasing: bool,
    pub i_gaps: Vec<f64>,
    pub i_gaps_decreasing: bool,
    /// Envelope at `A' ≈ 1/σ²` with `E'` the maximum over the sweep.
    pub envelope_joint: Option<EnvelopeFit>,
    pub envelope_uniform: bool,
    pub bv_uniform: bool,
    pub theta_uniform: bool,
    /// `max(K₀, C*)` shared by every run.
    pub moment_bound: f64,
    pub moment_uniform: bool,
}

impl TrendChecks {
    pub fn concentration_ok(&self) -> bool {
        self.sup_phi_abs_decreasing
            && self.width_decreasing
            && self.width_consistent_with_sqrt
            && self.residual_decreasing
            && self.i_gaps_decreasing
    }

    pub fn bounds_ok(&self) -> bool {
        self.envelope_uniform && self.bv_uniform && self.theta_uniform && self.moment_uniform
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn within_slack(value: f64, reference: f64) -> bool {
    value <= reference + UNIFORMITY_SLACK * reference.abs()
}

fn trends(spec: &SweepSpec, runs: &[EpsilonRun]) -> TrendChecks {
    let ok = runs.iter().all(EpsilonRun::completed);
    let sup: Vec<f64> = runs.iter().map(|r| r.sup_phi.abs()).collect();
    let widths: Vec<f64> = runs.iter().map(|r| r.support_width).collect();
    let scaled: Vec<f64> = runs
        .iter()
        .map(|r| r.support_width / r.epsilon.sqrt())
        .collect();
    let ratio = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let residuals: Vec<f64> = runs.iter().map(|r| r.residual_sup).collect();
    let i_gaps: Vec<f64> = runs
        .windows(2)
        .map(|w| (w[1].i_final - w[0].i_final).abs())
        .collect();

    let (mut envelope_joint, mut envelope_uniform) = (None, false);
    let (mut bv_uniform, mut theta_uniform, mut moment_uniform) = (false, false, false);
    let mut moment_bound = f64::NAN;
    if ok {
        let env: Vec<EnvelopeFit> = runs
            .iter()
            .map(|r| r.envelope.as_ref().expect("completed").primary)
            .collect();
        let coarse = env[0].e_prime;
        envelope_uniform = env
            .iter()
            .all(|e| e.e_prime.is_finite() && within_slack(e.e_prime, coarse));
        envelope_joint = Some(EnvelopeFit {
            e_prime: env.iter().map(|e| e.e_prime).fold(0.0, f64::max),
            ..env[0]
        });

        let line = runs[0].bv.as_ref().expect("completed");
        bv_uniform = runs
            .iter()
            .all(|r| line.bounds(r.interaction.as_ref().expect("completed"), spec.t_end));

        let thetas: Vec<f64> = runs
            .iter()
            .map(|r| r.gradient.as_ref().expect("completed").theta)
            .collect();
        theta_uniform = thetas
            .iter()
            .all(|&t| t.is_finite() && within_slack(t, thetas[0]));

        let k0 = runs.iter().map(|r| r.initial_moment).fold(0.0, f64::max);
        let c_star = runs[0].moment.as_ref().expect("completed").c_star;
        moment_bound = k0.max(c_star);
        moment_uniform = runs.iter().all(|r| {
            let m = r.moment.as_ref().expect("completed");
            m.c_star == c_star && m.sup_moment <= moment_bound
        });
    }

    TrendChecks {
        sup_phi_abs_decreasing: ok && strictly_decreasing(&sup),
        width_decreasing: ok && strictly_decreasing(&widths),
        width_sqrt_ratio: ratio,
        width_consistent_with_sqrt: ok && ratio <= 2.0,
        residual_decreasing: ok && strictly_decreasing(&residuals),
        i_gaps_decreasing: ok && strictly_decreasing(&i_gaps),
        i_gaps,
        envelope_joint,
        envelope_uniform,
        bv_uniform,
        theta_uniform,
        moment_bound,
        moment_uniform,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub spec: SweepSpec,
    pub runs: Vec<EpsilonRun>,
    pub trends: TrendChecks,
}

impl ConvergenceReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.completed()).count()
    }
}

/// Runs the solver and all diagnostics for every `ε`, concurrently; a failed
/// `ε` is recorded and the sweep carries on.
pub fn epsilon_sweep(spec: &SweepSpec) -> Result<ConvergenceReport> {
    spec.validate()?;
    let runs: Vec<EpsilonRun> = spec
        .epsilons
        .par_iter()
        .map(|&eps| run_one(spec, eps).unwrap_or_else(|e| EpsilonRun::failed(eps, e)))
        .collect();
    let trends = trends(spec, &runs);
    Ok(ConvergenceReport {
        spec: spec.clone(),
        runs,
        trends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepSpec {
        SweepSpec {
            epsilons: vec![0.4],
            t_end: 0.5,
            cells: 256,
            half_width: 4.0,
            t0: 0.25,
            ..Default::default()
        }
    }

    #[test]
    fn single_epsilon_matches_individual_diagnostics() {
        let spec = small();
        let report = epsilon_sweep(&spec).unwrap();
        assert_eq!(report.failures(), 0);
        let direct = run_one(&spec, 0.4).unwrap();
        let r = &report.runs[0];
        assert_eq!(r.sup_phi, direct.sup_phi);
        assert_eq!(r.support_width, direct.support_width);
        assert_eq!(r.residual_sup, direct.residual_sup);
        assert_eq!(r.bv, direct.bv);
        assert!(report.trends.bv_uniform && report.trends.theta_uniform);
    }

    #[test]
    fn invalid_lists_rejected() {
        let mut spec = small();
        spec.epsilons = vec![0.1, 0.2];
        assert!(epsilon_sweep(&spec).is_err());
        spec.epsilons = vec![1.5];
        assert!(epsilon_sweep(&spec).is_err());
    }

    #[test]
    fn failure_recorded_and_sweep_continues() {
        let mut spec = small();
        spec.epsilons = vec![0.4, 0.2];
        spec.policy.max_steps = 3300;
        let report = epsilon_sweep(&spec).unwrap();
        assert!(report.runs[0].completed());
        assert!(!report.runs[1].completed());
        assert!(!report.trends.concentration_ok());
    }
}
