//! Fixed-step Euler-Maruyama integration of the network SDE.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::noise::{self, NoiseStreams};
use crate::stats;
use crate::sum::ExactSum;

/// Coupling stability guard: `γ · max|g| · dt` may not exceed this.
pub const STEP_GUARD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub dim: usize,
    /// Agent-major states, `dim` entries per agent, populations contiguous.
    pub states: Vec<f64>,
    pub population_of: Vec<usize>,
}

impl NetworkState {
    pub fn new(model: &NetworkModel, t: f64, states: Vec<f64>) -> Result<Self> {
        let d = model.state_dim();
        if states.len() != model.n_agents() * d {
            return Err(Error::invalid(
                "states",
                format!(
                    "expected {} entries, got {}",
                    model.n_agents() * d,
                    states.len()
                ),
            ));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("states", "entries must be finite"));
        }
        Ok(Self {
            t,
            dim: d,
            states,
            population_of: (0..model.n_agents())
                .map(|i| model.population_of(i))
                .collect(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.population_of.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinate `coord` of every agent in population `pop`.
    pub fn coordinate(&self, pop: usize, coord: usize) -> Vec<f64> {
        self.population_of
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == pop)
            .map(|(i, _)| self.states[i * self.dim + coord])
            .collect()
    }
}

/// Distribution of one coordinate at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateInit {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditionSpec {
    /// Independent draws, `[population][coordinate]`.
    Independent(Vec<Vec<CoordinateInit>>),
    Explicit(Vec<f64>),
}

impl InitialConditionSpec {
    /// Voltage `N(1, 5²)`, recovery `N(1.5, 5²)`.
    pub fn electrical_default() -> Self {
        InitialConditionSpec::Independent(vec![vec![
            CoordinateInit::Normal { mean: 1.0, sd: 5.0 },
            CoordinateInit::Normal { mean: 1.5, sd: 5.0 },
        ]])
    }

    /// Voltage `N(3, 1)`, adaptation `N(2, 1)`, synapses `U[0,2]` (E) and
    /// `U[0,3]` (I).
    pub fn chemical_default() -> Self {
        let pop = |hi: f64| {
            vec![
                CoordinateInit::Normal { mean: 3.0, sd: 1.0 },
                CoordinateInit::Normal { mean: 2.0, sd: 1.0 },
                CoordinateInit::Uniform { lo: 0.0, hi },
            ]
        };
        InitialConditionSpec::Independent(vec![pop(2.0), pop(3.0)])
    }

    pub fn sample(&self, model: &NetworkModel, seed: u64) -> Result<NetworkState> {
        match self {
            InitialConditionSpec::Explicit(states) => NetworkState::new(model, 0.0, states.clone()),
            InitialConditionSpec::Independent(spec) => {
                let d = model.state_dim();
                if spec.len() != model.n_populations() || spec.iter().any(|s| s.len() != d) {
                    return Err(Error::invalid(
                        "init",
                        format!(
                            "need {} populations x {d} coordinates",
                            model.n_populations()
                        ),
                    ));
                }
                let mut states = vec![0.0; model.n_agents() * d];
                for (i, chunk) in states.chunks_mut(d).enumerate() {
                    let mut rng = noise::init_rng(seed, i as u64);
                    for (c, v) in chunk.iter_mut().enumerate() {
                        *v = match spec[model.population_of(i)][c] {
                            CoordinateInit::Normal { mean, sd } => {
                                noise::sample_normal(&mut rng, mean, sd)
                            }
                            CoordinateInit::Uniform { lo, hi } => {
                                noise::sample_uniform(&mut rng, lo, hi)
                            }
                            CoordinateInit::Constant(x) => x,
                        };
                    }
                }
                NetworkState::new(model, 0.0, states)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSpec {
    /// Steps between recorded samples.
    pub every: usize,
    /// Number of agents per population whose full state is traced.
    pub trace_per_population: usize,
    /// Times at which full network snapshots are kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self {
            every: 10,
            trace_per_population: 20,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    pub t_event: f64,
    /// `(target, source, factor)` multipliers on coupling entries.
    pub multipliers: Vec<(usize, usize, f64)>,
}

impl PerturbationEvent {
    /// Scales every coupling leaving population `source`.
    pub fn scale_source(t_event: f64, source: usize, factor: f64, n_populations: usize) -> Self {
        Self {
            t_event,
            multipliers: (0..n_populations)
                .map(|target| (target, source, factor))
                .collect(),
        }
    }
}

/// Returns the model with scaled coupling magnitudes; signs are kept.
pub fn apply_perturbation(model: &NetworkModel, event: &PerturbationEvent) -> Result<NetworkModel> {
    let p = model.n_populations();
    let mut coupling = model.coupling().to_vec();
    for &(target, source, factor) in &event.multipliers {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::invalid(
                "multiplier",
                format!("{factor} must be positive"),
            ));
        }
        if target >= p || source >= p {
            return Err(Error::invalid(
                "multiplier",
                "population index out of range",
            ));
        }
        coupling[target][source] *= factor;
    }
    model.with_coupling(coupling)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub record: RecordSpec,
    pub perturbations: Vec<PerturbationEvent>,
    /// Noise stream per agent; defaults to the agent index.
    pub stream_ids: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn new(t_end: f64, dt: f64, seed: u64) -> Self {
        Self {
            t_end,
            dt,
            seed,
            record: RecordSpec::default(),
            perturbations: Vec::new(),
            stream_ids: None,
        }
    }

    pub fn with_record(mut self, record: RecordSpec) -> Self {
        self.record = record;
        self
    }

    pub fn with_perturbation(mut self, event: PerturbationEvent) -> Self {
        self.perturbations.push(event);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    Blowup { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// `[population * dim + coord]`.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub distance: f64,
    /// Traced agents' states, `dim` entries each.
    pub traces: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub dt: f64,
    pub gamma: f64,
    pub n_populations: usize,
    pub dim: usize,
    pub rescaled: bool,
    pub trace_agents: Vec<usize>,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<NetworkState>,
    pub final_state: NetworkState,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn mean_series(&self, pop: usize, coord: usize) -> Vec<f64> {
        let k = pop * self.dim + coord;
        self.samples.iter().map(|s| s.means[k]).collect()
    }

    pub fn std_series(&self, pop: usize, coord: usize) -> Vec<f64> {
        let k = pop * self.dim + coord;
        self.samples.iter().map(|s| s.stds[k]).collect()
    }

    pub fn distance_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.distance).collect()
    }

    /// Coordinate of the `slot`-th traced agent over time.
    pub fn trace_series(&self, slot: usize, coord: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.traces[slot * self.dim + coord])
            .collect()
    }

    /// First recorded sample at or after `t`.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.t >= t - 0.5 * self.dt)
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

#[derive(Debug, Clone, Copy)]
struct StepScales {
    interaction: f64,
    intrinsic: f64,
    noise: f64,
}

impl StepScales {
    fn original(model: &NetworkModel) -> Self {
        Self {
            interaction: model.gamma() / model.pop_size() as f64,
            intrinsic: 1.0,
            noise: 1.0,
        }
    }

    fn rescaled(model: &NetworkModel) -> Self {
        let gamma = model.gamma();
        Self {
            interaction: 1.0 / model.pop_size() as f64,
            intrinsic: 1.0 / gamma,
            noise: 1.0 / gamma.sqrt(),
        }
    }
}

/// Per-population coordinate sums needed by aggregable interactions.
#[derive(Debug, Clone)]
pub(crate) struct Aggregates {
    sums: Vec<f64>,
    needed: Vec<(usize, usize)>,
    dim: usize,
    n: usize,
}

impl Aggregates {
    pub(crate) fn for_model(model: &NetworkModel) -> Self {
        use crate::model::Interaction;
        let p = model.n_populations();
        let d = model.state_dim();
        let mut needed = Vec::new();
        for target in 0..p {
            for source in 0..p {
                let c = match model.interaction(target, source) {
                    Interaction::Diffusive { component } => Some(*component),
                    Interaction::Synaptic { synapse, .. } => Some(*synapse),
                    _ => None,
                };
                if let Some(c) = c {
                    if !needed.contains(&(source, c)) {
                        needed.push((source, c));
                    }
                }
            }
        }
        Self {
            sums: vec![0.0; p * d],
            needed,
            dim: d,
            n: model.pop_size(),
        }
    }

    pub(crate) fn update(&mut self, states: &[f64]) {
        let (d, n) = (self.dim, self.n);
        let sums: Vec<f64> = self
            .needed
            .par_iter()
            .map(|&(q, c)| {
                let mut acc = ExactSum::new();
                for j in q * n..(q + 1) * n {
                    acc.add(states[j * d + c]);
                }
                acc.value()
            })
            .collect();
        for (&(q, c), s) in self.needed.iter().zip(sums) {
            self.sums[q * d + c] = s;
        }
    }

    /// `Σ_q g_pq Σ_{j∈q} b_pq(x, x_j)` into `out`.
    pub(crate) fn coupling_into(
        &self,
        model: &NetworkModel,
        states: &[f64],
        p: usize,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        out.fill(0.0);
        let (d, n) = (self.dim, self.n);
        for q in 0..model.n_populations() {
            let g = model.coupling()[p][q];
            if g == 0.0 {
                continue;
            }
            let b = model.interaction(p, q);
            let sums = &self.sums[q * d..(q + 1) * d];
            if !b.accumulate_from_sums(x, n as f64, sums, g, out) {
                for j in q * n..(q + 1) * n {
                    b.eval_into(x, &states[j * d..(j + 1) * d], scratch);
                    for c in 0..d {
                        out[c] += g * scratch[c];
                    }
                }
            }
        }
    }
}

/// One Euler-Maruyama step of every agent; `old` and `new` are full state
/// buffers. Returns `false` when a coordinate became non-finite.
#[allow(clippy::too_many_arguments)]
fn advance(
    model: &NetworkModel,
    scales: StepScales,
    aggregates: &mut Aggregates,
    old: &[f64],
    new: &mut [f64],
    noise: &[f64],
    dt: f64,
) -> bool {
    let d = model.state_dim();
    let n = model.pop_size();
    let k = model.populations()[0].noise_channels();
    aggregates.update(old);
    let aggregates = &*aggregates;
    let sqrt_dt = dt.sqrt();
    new.par_chunks_mut(d)
        .enumerate()
        .with_min_len(128)
        .map_init(
            || (vec![0.0; d], vec![0.0; d], vec![0.0; d]),
            |(drift, coupling, scratch), (i, out)| {
                let p = i / n;
                let x = &old[i * d..(i + 1) * d];
                model.drift(p).eval_into(x, drift);
                aggregates.coupling_into(model, old, p, x, coupling, scratch);
                let sigma = &model.populations()[p].sigma;
                let xi = &noise[i * k..(i + 1) * k];
                let mut finite = true;
                for c in 0..d {
                    let det = scales.intrinsic * drift[c] + scales.interaction * coupling[c];
                    let mut stoch = 0.0;
                    for (s, z) in sigma[c].iter().zip(xi) {
                        stoch += s * z;
                    }
                    let v = x[c] + det * dt + scales.noise * sqrt_dt * stoch;
                    finite &= v.is_finite();
                    out[c] = v;
                }
                finite
            },
        )
        .reduce(|| true, |a, b| a && b)
}

/// Single Euler-Maruyama step with caller-supplied standard normal draws
/// (`N × K`, agent-major).
pub fn step_euler_maruyama(
    state: &NetworkState,
    model: &NetworkModel,
    dt: f64,
    noise: &[f64],
) -> Result<NetworkState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let k = model.populations()[0].noise_channels();
    if noise.len() != model.n_agents() * k {
        return Err(Error::invalid(
            "noise",
            format!("expected {} draws", model.n_agents() * k),
        ));
    }
    if state.states.len() != model.n_agents() * model.state_dim() {
        return Err(Error::invalid("state", "does not match the model"));
    }
    let mut aggregates = Aggregates::for_model(model);
    let mut new = vec![0.0; state.states.len()];
    let ok = advance(
        model,
        StepScales::original(model),
        &mut aggregates,
        &state.states,
        &mut new,
        noise,
        dt,
    );
    let t = state.t + dt;
    if !ok {
        return Err(Error::Blowup { t });
    }
    Ok(NetworkState {
        t,
        dim: state.dim,
        states: new,
        population_of: state.population_of.clone(),
    })
}

fn validate_config(
    model: &NetworkModel,
    cfg: &RunConfig,
    scales: StepScales,
) -> Result<Vec<NetworkModel>> {
    if !(cfg.t_end > 0.0) || !cfg.t_end.is_finite() {
        return Err(Error::invalid("t_end", "must be positive"));
    }
    if !(cfg.dt > 0.0) || cfg.dt > cfg.t_end {
        return Err(Error::invalid(
            "dt",
            "must be positive and at most the horizon",
        ));
    }
    if cfg.record.every == 0 {
        return Err(Error::invalid("record.every", "must be at least 1"));
    }
    if let Some(ids) = &cfg.stream_ids {
        if ids.len() != model.n_agents() {
            return Err(Error::invalid(
                "stream_ids",
                "one stream id per agent required",
            ));
        }
    }
    let mut models = vec![model.clone()];
    let mut events: Vec<&PerturbationEvent> = cfg.perturbations.iter().collect();
    events.sort_by(|a, b| a.t_event.total_cmp(&b.t_event));
    for ev in events {
        if !(ev.t_event >= 0.0 && ev.t_event <= cfg.t_end) {
            return Err(Error::invalid(
                "perturbation",
                "event time outside the run horizon",
            ));
        }
        let next = apply_perturbation(models.last().expect("nonempty"), ev)?;
        models.push(next);
    }
    let rate = scales.interaction * model.pop_size() as f64;
    for m in &models {
        let guard = rate * m.max_abs_coupling() * cfg.dt;
        if guard > STEP_GUARD * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt",
                format!("coupling guard gamma*max|g|*dt = {guard:.4} exceeds {STEP_GUARD}"),
            ));
        }
    }
    Ok(models)
}

fn record_sample(
    model: &NetworkModel,
    state: &[f64],
    t: f64,
    trace_agents: &[usize],
    aggregates: &mut Aggregates,
) -> Sample {
    let d = model.state_dim();
    let n = model.pop_size();
    let p = model.n_populations();
    let mut means = vec![0.0; p * d];
    let mut stds = vec![0.0; p * d];
    let mut column = vec![0.0; n];
    for q in 0..p {
        for c in 0..d {
            for (j, v) in column.iter_mut().enumerate() {
                *v = state[(q * n + j) * d + c];
            }
            let (m, s) = stats::mean_std(&column);
            means[q * d + c] = m;
            stds[q * d + c] = s;
        }
    }
    let distance = crate::balance::distance_from_states(model, state, aggregates);
    let mut traces = Vec::with_capacity(trace_agents.len() * d);
    for &i in trace_agents {
        traces.extend_from_slice(&state[i * d..(i + 1) * d]);
    }
    Sample {
        t,
        means,
        stds,
        distance,
        traces,
    }
}

fn run(
    model: &NetworkModel,
    init: &InitialConditionSpec,
    cfg: &RunConfig,
    rescaled: bool,
) -> Result<RunRecord> {
    let scales = if rescaled {
        StepScales::rescaled(model)
    } else {
        StepScales::original(model)
    };
    let models = validate_config(model, cfg, scales)?;
    let initial = init.sample(model, cfg.seed)?;
    let d = model.state_dim();
    let n = model.pop_size();
    let k = model.populations()[0].noise_channels();
    let n_agents = model.n_agents();

    let ids: Vec<u64> = cfg
        .stream_ids
        .clone()
        .unwrap_or_else(|| (0..n_agents as u64).collect());
    let mut streams = NoiseStreams::new(cfg.seed, &ids, k);
    let mut noise = vec![0.0; n_agents * k];

    let trace_agents: Vec<usize> = (0..model.n_populations())
        .flat_map(|q| (0..cfg.record.trace_per_population.min(n)).map(move |j| q * n + j))
        .collect();

    let mut events: Vec<&PerturbationEvent> = cfg.perturbations.iter().collect();
    events.sort_by(|a, b| a.t_event.total_cmp(&b.t_event));
    let mut next_event = 0;
    let mut current = Cow::Borrowed(&models[0]);

    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as u64;
    let mut snapshot_times: Vec<f64> = cfg.record.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;

    let mut aggregates = Aggregates::for_model(model);
    let mut old = initial.states.clone();
    let mut new = vec![0.0; old.len()];
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut status = RunStatus::Completed;
    let snapshot = |states: &[f64], t: f64| NetworkState {
        t,
        dim: d,
        states: states.to_vec(),
        population_of: initial.population_of.clone(),
    };

    let mut step: u64 = 0;
    loop {
        let t = step as f64 * cfg.dt;
        while next_event < events.len() && events[next_event].t_event <= t + 0.5 * cfg.dt {
            next_event += 1;
            current = Cow::Borrowed(&models[next_event]);
        }
        while next_snapshot < snapshot_times.len()
            && snapshot_times[next_snapshot] <= t + 0.5 * cfg.dt
        {
            snapshots.push(snapshot(&old, t));
            next_snapshot += 1;
        }
        if step % cfg.record.every as u64 == 0 || step == steps {
            samples.push(record_sample(
                &current,
                &old,
                t,
                &trace_agents,
                &mut aggregates,
            ));
        }
        if step == steps {
            break;
        }
        streams.fill(&mut noise);
        let ok = advance(
            &current,
            scales,
            &mut aggregates,
            &old,
            &mut new,
            &noise,
            cfg.dt,
        );
        step += 1;
        if !ok {
            status = RunStatus::Blowup {
                t: step as f64 * cfg.dt,
            };
            break;
        }
        std::mem::swap(&mut old, &mut new);
    }

    let t_final = samples.last().map_or(0.0, |s| s.t);
    Ok(RunRecord {
        seed: cfg.seed,
        dt: cfg.dt,
        gamma: model.gamma(),
        n_populations: model.n_populations(),
        dim: d,
        rescaled,
        trace_agents,
        samples,
        snapshots,
        final_state: snapshot(&old, t_final),
        status,
    })
}

/// Integrates the network SDE over `[0, cfg.t_end]`.
pub fn simulate(
    model: &NetworkModel,
    init: &InitialConditionSpec,
    cfg: &RunConfig,
) -> Result<RunRecord> {
    run(model, init, cfg, false)
}

/// Integrates the time-rescaled system `x̃(t) = x(t/γ)`: interactions at
/// `O(1)`, intrinsic drift scaled by `1/γ` and noise by `1/√γ`. Times in the
/// record are rescaled times.
pub fn simulate_rescaled_early(
    model: &NetworkModel,
    init: &InitialConditionSpec,
    cfg: &RunConfig,
) -> Result<RunRecord> {
    run(model, init, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn scalar_model(n: usize, drift: Drift, g: f64, sigma: f64) -> NetworkModel {
        NetworkModel::new(
            vec![PopulationSpec::with_voltage_noise("A", n, 1, sigma)],
            vec![drift],
            vec![vec![Interaction::Diffusive { component: 0 }]],
            vec![vec![g]],
            ScalingRule::Constant(1.0),
            ScalingBasis::Population,
        )
        .unwrap()
    }

    #[test]
    fn identity_step() {
        let model = scalar_model(3, Drift::Zero { dim: 1 }, 0.0, 0.0);
        let s = NetworkState::new(&model, 0.0, vec![1.0, -2.0, 3.5]).unwrap();
        let next = step_euler_maruyama(&s, &model, 0.1, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(next.states, s.states);
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn explicit_euler_decay() {
        let model = scalar_model(1, Drift::custom(1, |x, o| o[0] = -x[0]), 0.0, 0.0);
        let s = NetworkState::new(&model, 0.0, vec![1.0]).unwrap();
        let next = step_euler_maruyama(&s, &model, 0.1, &[0.0]).unwrap();
        assert!((next.states[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn two_agent_linear_coupling_matches_exponential() {
        // x' = (γ/n) g (mean-field difference): x1' = g (x2 - x1)/2 * 2 ... with n=2, γ=1
        let g = 3.0;
        let model = scalar_model(2, Drift::Zero { dim: 1 }, g, 0.0);
        let dt = 1e-3;
        let mut s = NetworkState::new(&model, 0.0, vec![1.0, -1.0]).unwrap();
        let next = step_euler_maruyama(&s, &model, dt, &[0.0, 0.0]).unwrap();
        // closed form: difference decays as exp(-2 * (g/2) t) = exp(-g t), mean constant
        let exact_diff = 2.0 * (-g * dt).exp();
        let diff = next.states[0] - next.states[1];
        assert!((diff - exact_diff).abs() < 2.0 * (g * dt).powi(2));
        for _ in 0..1000 {
            s = step_euler_maruyama(&s, &model, dt, &[0.0, 0.0]).unwrap();
        }
        let diff = s.states[0] - s.states[1];
        assert!((diff - 2.0 * (-g).exp()).abs() < 5e-3 * 2.0 * (-g).exp() * 3.0);
        assert!((s.states[0] + s.states[1]).abs() < 1e-12);
    }

    #[test]
    fn blowup_reported() {
        let model = scalar_model(1, Drift::custom(1, |x, o| o[0] = x[0] * x[0]), 0.0, 0.0);
        let mut s = NetworkState::new(&model, 0.0, vec![1e200]).unwrap();
        let r = step_euler_maruyama(&s, &model, 1.0, &[0.0]);
        assert!(matches!(r, Err(Error::Blowup { .. })));
        s.states[0] = 1.0;
        assert!(step_euler_maruyama(&s, &model, 1.0, &[0.0]).is_ok());
    }

    #[test]
    fn perturbation_examples() {
        let p = FhnChemicalParams::inhibition_dominated();
        let model = build_fhn_chemical(&p).unwrap();
        let same =
            apply_perturbation(&model, &PerturbationEvent::scale_source(0.0, EXC, 1.0, 2)).unwrap();
        assert_eq!(same.coupling(), model.coupling());
        let ev = PerturbationEvent::scale_source(1.0, EXC, 1.5, 2);
        let m = apply_perturbation(&model, &ev).unwrap();
        // [target][source]: signed ((0.45, 3), (-1, -10)) in [source][target]
        assert!((m.coupling()[EXC][EXC] - 0.45).abs() < 1e-15);
        assert!((m.coupling()[INH][EXC] - 3.0).abs() < 1e-15);
        assert_eq!(m.coupling()[EXC][INH], -1.0);
        assert_eq!(m.coupling()[INH][INH], -10.0);
        let bad = PerturbationEvent::scale_source(1.0, EXC, 0.0, 2);
        assert!(apply_perturbation(&model, &bad).is_err());
    }

    #[test]
    fn step_guard_enforced() {
        let model = build_fhn_electrical(&FhnElectricalParams::default()).unwrap();
        let cfg = RunConfig::new(0.1, 1e-3, 1);
        let err = simulate(&model, &InitialConditionSpec::electrical_default(), &cfg);
        assert!(matches!(err, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn same_seed_same_record() {
        let p = FhnElectricalParams {
            n: 50,
            ..Default::default()
        };
        let model = build_fhn_electrical(&p).unwrap();
        let cfg = RunConfig::new(0.05, 1e-4, 11);
        let a = simulate(&model, &InitialConditionSpec::electrical_default(), &cfg).unwrap();
        let b = simulate(&model, &InitialConditionSpec::electrical_default(), &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.final_state, b.final_state);
        let c = simulate(
            &model,
            &InitialConditionSpec::electrical_default(),
            &RunConfig::new(0.05, 1e-4, 12),
        )
        .unwrap();
        assert_ne!(a.final_state, c.final_state);
    }

    #[test]
    fn rescaled_at_unit_gamma_matches_original() {
        let p = FhnChemicalParams {
            n: 40,
            scaling: ScalingRule::Constant(1.0),
            ..FhnChemicalParams::inhibition_dominated()
        };
        let model = build_fhn_chemical(&p).unwrap();
        let cfg = RunConfig::new(0.2, 1e-3, 5);
        let a = simulate(&model, &InitialConditionSpec::chemical_default(), &cfg).unwrap();
        let b = simulate_rescaled_early(&model, &InitialConditionSpec::chemical_default(), &cfg)
            .unwrap();
        assert_eq!(a.final_state.states, b.final_state.states);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn snapshots_and_perturbation_timing() {
        let p = FhnChemicalParams {
            n: 20,
            ..FhnChemicalParams::inhibition_dominated()
        };
        let model = build_fhn_chemical(&p).unwrap();
        let mut cfg = RunConfig::new(0.01, 1e-4, 3)
            .with_perturbation(PerturbationEvent::scale_source(0.005, EXC, 1.5, 2));
        cfg.record.snapshot_times = vec![0.0, 0.005];
        let r = simulate(&model, &InitialConditionSpec::chemical_default(), &cfg).unwrap();
        assert_eq!(r.snapshots.len(), 2);
        assert!((r.snapshots[1].t - 0.005).abs() < 1e-12);
        assert!(r.completed());
        let bad = RunConfig::new(0.01, 1e-4, 3)
            .with_perturbation(PerturbationEvent::scale_source(0.5, EXC, 1.5, 2));
        assert!(simulate(&model, &InitialConditionSpec::chemical_default(), &bad).is_err());
    }
}
