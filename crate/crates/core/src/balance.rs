//! Balance-manifold objects: net input, chemical balance voltages and their
//! stability, the frozen-measure early ODE and distance to balance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interaction, NetworkModel};
use crate::sim::{Aggregates, NetworkState};
use crate::sum::exact_sum;

/// Relative tolerance under which a balance denominator counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Uniformly weighted samples, one array per population.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// `samples[p]` holds `dim` entries per sample.
    samples: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, samples: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        for (p, s) in samples.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::EmptyInput(format!("population {p} has no samples")));
            }
            if s.len() % dim != 0 {
                return Err(Error::invalid("samples", "length is not a multiple of dim"));
            }
        }
        if samples.is_empty() {
            return Err(Error::EmptyInput("no populations".into()));
        }
        Ok(Self { dim, samples })
    }

    pub fn from_state(state: &NetworkState, n_populations: usize) -> Result<Self> {
        let mut samples = vec![Vec::new(); n_populations];
        for (i, &p) in state.population_of.iter().enumerate() {
            samples[p].extend_from_slice(state.agent(i));
        }
        Self::new(state.dim, samples)
    }

    /// Point mass at `x` for every population.
    pub fn dirac(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        Self::new(dim, points.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_populations(&self) -> usize {
        self.samples.len()
    }

    pub fn count(&self, p: usize) -> usize {
        self.samples[p].len() / self.dim
    }

    pub fn samples(&self, p: usize) -> &[f64] {
        &self.samples[p]
    }

    pub fn coordinate(&self, p: usize, c: usize) -> Vec<f64> {
        self.samples[p]
            .iter()
            .skip(c)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    pub fn mean(&self, p: usize, c: usize) -> f64 {
        exact_sum(self.samples[p].iter().skip(c).step_by(self.dim).copied()) / self.count(p) as f64
    }

    fn sums(&self) -> Vec<Vec<f64>> {
        (0..self.n_populations())
            .map(|p| {
                (0..self.dim)
                    .map(|c| self.mean(p, c) * self.count(p) as f64)
                    .collect()
            })
            .collect()
    }
}

/// `Σ_q g_pq · mean_y b_pq(x, y)` from precomputed coordinate sums.
fn net_input_with(
    model: &NetworkModel,
    measure: &EmpiricalMeasure,
    sums: &[Vec<f64>],
    p: usize,
    x: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let d = model.state_dim();
    out.fill(0.0);
    for q in 0..model.n_populations() {
        let g = model.coupling()[p][q];
        if g == 0.0 {
            continue;
        }
        let count = measure.count(q) as f64;
        let b = model.interaction(p, q);
        let w = g / count;
        if !b.accumulate_from_sums(x, count, &sums[q], w, out) {
            for y in measure.samples(q).chunks(d) {
                b.eval_into(x, y, scratch);
                for c in 0..d {
                    out[c] += w * scratch[c];
                }
            }
        }
    }
}

fn check_measure(model: &NetworkModel, measure: &EmpiricalMeasure) -> Result<()> {
    if measure.n_populations() != model.n_populations() || measure.dim() != model.state_dim() {
        return Err(Error::invalid(
            "measure",
            "does not match the model's populations",
        ));
    }
    Ok(())
}

/// Net interaction input received at `x` by population `p` under `measure`.
pub fn net_input(
    model: &NetworkModel,
    p: usize,
    x: &[f64],
    measure: &EmpiricalMeasure,
) -> Result<Vec<f64>> {
    check_measure(model, measure)?;
    if x.len() != model.state_dim() || p >= model.n_populations() {
        return Err(Error::invalid("x", "dimension or population out of range"));
    }
    let d = model.state_dim();
    let mut out = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    net_input_with(
        model,
        measure,
        &measure.sums(),
        p,
        x,
        &mut out,
        &mut scratch,
    );
    Ok(out)
}

fn denominator_scale(g: &[[f64; 2]; 2], sbar: [f64; 2], beta: usize) -> f64 {
    g[0][beta].abs() * sbar[0].abs() + g[1][beta].abs() * sbar[1].abs()
}

/// Balance voltages `x*_β` of the two-population chemical model.
///
/// `g` holds signed conductances `[source][target]`, `reversal` is
/// `(E_E, E_I)` and `sbar` the mean synaptic variables `(s̄_E, s̄_I)`.
pub fn chemical_balance_voltages(
    g: &[[f64; 2]; 2],
    reversal: [f64; 2],
    sbar: [f64; 2],
) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for beta in 0..2 {
        let den = g[0][beta] * sbar[0] + g[1][beta] * sbar[1];
        let scale = denominator_scale(g, sbar, beta);
        if !(den.abs() > DEGENERACY_TOL * scale) || scale == 0.0 {
            return Err(Error::DegenerateDenominator {
                population: beta,
                value: den,
            });
        }
        let num = g[0][beta] * reversal[0] * sbar[0] + g[1][beta] * reversal[1] * sbar[1];
        out[beta] = num / den;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub marginal: bool,
    pub rate: f64,
}

/// Linear rate `ĝ_Eβ s̄_E + ĝ_Iβ s̄_I` of the balance equation of each
/// population; negative rates are stable.
pub fn chemical_stability(g: &[[f64; 2]; 2], sbar: [f64; 2]) -> [StabilityVerdict; 2] {
    std::array::from_fn(|beta| {
        let rate = g[0][beta] * sbar[0] + g[1][beta] * sbar[1];
        StabilityVerdict {
            stable: rate < 0.0,
            marginal: rate == 0.0,
            rate,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalProjection {
    pub x_star: f64,
    /// Population standard deviation of the voltages.
    pub dispersion: f64,
}

/// Projection of a single-population measure onto the Dirac structure of the
/// electrical balance manifold.
pub fn electrical_balance_projection(measure: &EmpiricalMeasure) -> Result<ElectricalProjection> {
    let v = measure.coordinate(0, 0);
    if v.is_empty() {
        return Err(Error::EmptyInput("measure".into()));
    }
    let (x_star, dispersion) = crate::stats::mean_std(&v);
    Ok(ElectricalProjection { x_star, dispersion })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub voltages: Vec<f64>,
    pub stable: Vec<bool>,
    pub marginal: Vec<bool>,
    pub rates: Vec<f64>,
    pub denominators: Vec<f64>,
    pub sbar: Vec<f64>,
}

impl BalanceReport {
    pub fn chemical(g: &[[f64; 2]; 2], reversal: [f64; 2], sbar: [f64; 2]) -> Result<Self> {
        let voltages = chemical_balance_voltages(g, reversal, sbar)?;
        let verdicts = chemical_stability(g, sbar);
        Ok(Self {
            voltages: voltages.to_vec(),
            stable: verdicts.iter().map(|v| v.stable).collect(),
            marginal: verdicts.iter().map(|v| v.marginal).collect(),
            rates: verdicts.iter().map(|v| v.rate).collect(),
            denominators: verdicts.iter().map(|v| v.rate).collect(),
            sbar: sbar.to_vec(),
        })
    }

    /// Chemical report with `s̄` measured from a network state (coordinate 2).
    pub fn chemical_from_state(
        g: &[[f64; 2]; 2],
        reversal: [f64; 2],
        state: &NetworkState,
    ) -> Result<Self> {
        let measure = EmpiricalMeasure::from_state(state, 2)?;
        Self::chemical(g, reversal, [measure.mean(0, 2), measure.mean(1, 2)])
    }

    /// Electrical report: balance voltage is the mean, the rate is `−g`.
    pub fn electrical(measure: &EmpiricalMeasure, g: f64) -> Result<Self> {
        let proj = electrical_balance_projection(measure)?;
        Ok(Self {
            voltages: vec![proj.x_star],
            stable: vec![g > 0.0],
            marginal: vec![g == 0.0],
            rates: vec![-g],
            denominators: vec![g],
            sbar: Vec::new(),
        })
    }
}

/// Signed `[source][target]` conductances and source reversal potentials of a
/// two-population network with synaptic interactions.
pub fn chemical_structure(model: &NetworkModel) -> Result<([[f64; 2]; 2], [f64; 2])> {
    if model.n_populations() != 2 {
        return Err(Error::ModelDefinition(
            "balance voltages need two populations".into(),
        ));
    }
    let mut g = [[0.0; 2]; 2];
    let mut reversal = [0.0; 2];
    for source in 0..2 {
        for target in 0..2 {
            match model.interaction(target, source) {
                Interaction::Synaptic { reversal: e, .. } => reversal[source] = *e,
                _ => {
                    return Err(Error::ModelDefinition(
                        "interactions are not synaptic".into(),
                    ))
                }
            }
            g[source][target] = model.coupling()[target][source];
        }
    }
    Ok((g, reversal))
}

/// Step size used for the early ODE at a given linear rate.
pub fn default_early_dt(rate: f64) -> f64 {
    1e-3 * (1.0f64).min(1.0 / rate.abs().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyTrajectory {
    pub times: Vec<f64>,
    /// `states[k][step]` is the state of trajectory `k`.
    pub states: Vec<Vec<Vec<f64>>>,
    pub populations: Vec<usize>,
    pub blowup: Option<f64>,
}

impl EarlyTrajectory {
    /// Linear interpolation of coordinate `c` of trajectory `k` at time `t`.
    pub fn at(&self, k: usize, c: usize, t: f64) -> f64 {
        let dt = self.times[1] - self.times[0];
        let pos = (t / dt).clamp(0.0, (self.times.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.times.len() - 2);
        let w = pos - i as f64;
        let s = &self.states[k];
        (1.0 - w) * s[i][c] + w * s[i + 1][c]
    }
}

const EARLY_BLOWUP: f64 = 1e12;

/// RK4 integration of `dx/dt = Σ_q g_pq ∫ b_pq(x, y) μ_q(dy)` with the
/// measure frozen, for arbitrary `(population, start)` pairs.
pub fn integrate_early_ode_points(
    model: &NetworkModel,
    frozen: &EmpiricalMeasure,
    starts: &[(usize, Vec<f64>)],
    t_end: f64,
    dt: f64,
) -> Result<EarlyTrajectory> {
    check_measure(model, frozen)?;
    if !(t_end > 0.0) || !(dt > 0.0) || dt > t_end {
        return Err(Error::invalid("t_end/dt", "need 0 < dt <= t_end"));
    }
    let d = model.state_dim();
    for (p, x) in starts {
        if *p >= model.n_populations() || x.len() != d {
            return Err(Error::invalid("x0", "dimension or population out of range"));
        }
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let sums = frozen.sums();
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let results: Vec<(Vec<Vec<f64>>, Option<f64>)> = starts
        .par_iter()
        .map(|(p, x0)| {
            let mut scratch = vec![0.0; d];
            let mut rhs = |x: &[f64], out: &mut [f64]| {
                net_input_with(model, frozen, &sums, *p, x, out, &mut scratch);
            };
            let mut traj = Vec::with_capacity(steps + 1);
            let mut x = x0.clone();
            traj.push(x.clone());
            let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
                vec![0.0; d],
                vec![0.0; d],
                vec![0.0; d],
                vec![0.0; d],
                vec![0.0; d],
            );
            for step in 0..steps {
                rhs(&x, &mut k1);
                for c in 0..d {
                    tmp[c] = x[c] + 0.5 * dt * k1[c];
                }
                rhs(&tmp, &mut k2);
                for c in 0..d {
                    tmp[c] = x[c] + 0.5 * dt * k2[c];
                }
                rhs(&tmp, &mut k3);
                for c in 0..d {
                    tmp[c] = x[c] + dt * k3[c];
                }
                rhs(&tmp, &mut k4);
                for c in 0..d {
                    x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
                if x.iter().any(|v| !v.is_finite() || v.abs() > EARLY_BLOWUP) {
                    return (traj, Some((step + 1) as f64 * dt));
                }
                traj.push(x.clone());
            }
            (traj, None)
        })
        .collect();
    let blowup = results.iter().filter_map(|r| r.1).min_by(f64::total_cmp);
    Ok(EarlyTrajectory {
        times,
        states: results.into_iter().map(|r| r.0).collect(),
        populations: starts.iter().map(|s| s.0).collect(),
        blowup,
    })
}

/// Early ODE with one starting point per population.
pub fn integrate_early_ode(
    model: &NetworkModel,
    frozen: &EmpiricalMeasure,
    x0: &[Vec<f64>],
    t_end: f64,
    dt: f64,
) -> Result<EarlyTrajectory> {
    let starts: Vec<(usize, Vec<f64>)> = x0.iter().cloned().enumerate().collect();
    integrate_early_ode_points(model, frozen, &starts, t_end, dt)
}

pub(crate) fn distance_from_states(
    model: &NetworkModel,
    states: &[f64],
    aggregates: &mut Aggregates,
) -> f64 {
    let d = model.state_dim();
    let n = model.pop_size();
    aggregates.update(states);
    let aggregates = &*aggregates;
    states
        .par_chunks(d)
        .enumerate()
        .with_min_len(256)
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(out, scratch), (i, x)| {
                aggregates.coupling_into(model, states, i / n, x, out, scratch);
                let norm2: f64 = out.iter().map(|v| v * v).sum();
                norm2.sqrt() / n as f64
            },
        )
        .reduce(|| 0.0, f64::max)
}

/// `max_i |(1/n) Σ_q g_pq Σ_j b_pq(x_i, x_j)|`.
pub fn distance_to_balance(state: &NetworkState, model: &NetworkModel) -> Result<f64> {
    if state.states.len() != model.n_agents() * model.state_dim() {
        return Err(Error::invalid("state", "does not match the model"));
    }
    let mut aggregates = Aggregates::for_model(model);
    Ok(distance_from_states(model, &state.states, &mut aggregates))
}
