//! Experiment configuration in TOML with strict key checking.
//!
//! Every key has a documented default except `kind` and `seed`. User input is
//! merged over the serialized defaults; a key absent from the defaults is an
//! unknown key, and a value whose TOML type differs from the default's is a
//! type mismatch (integers are accepted where floats are expected).

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::error::Result;
use crate::model::{
    build_fhn_chemical, build_fhn_electrical, FhnChemicalParams, FhnElectricalParams, NetworkModel,
    Polynomial, ScalingBasis, ScalingRule, SeparableKind, SeparableSpec, Sigmoid,
};

use crate::pde::{DtPolicy, SweepSpec, DEFAULT_FLOOR_RATIO, DEFAULT_SUPPORT_THRESHOLD};
use crate::sim::{CoordinateInit, InitialConditionSpec, PerturbationEvent, RecordSpec, RunConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("MISSING_KEY({0})")]
    MissingKey(String),
    #[error("TYPE_MISMATCH({key}): expected {expected}, found {found}")]
    TypeMismatch {
        key: String,
        expected: String,
        found: String,
    },
    #[error("UNKNOWN_KEY({0})")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("configuration syntax error: {0}")]
    Syntax(String),
}

const REQUIRED: [&str; 2] = ["kind", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NetworkRun,
    RescaledEarly,
    PdeRun,
    EpsilonSweep,
    DoubleLimitSweep,
    BalanceAnalysis,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NetworkRun => "network-run",
            ExperimentKind::RescaledEarly => "rescaled-early",
            ExperimentKind::PdeRun => "pde-run",
            ExperimentKind::EpsilonSweep => "epsilon-sweep",
            ExperimentKind::DoubleLimitSweep => "double-limit-sweep",
            ExperimentKind::BalanceAnalysis => "balance-analysis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    Electrical,
    Chemical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingKind {
    Linear,
    Sqrt,
    ScaledLinear,
    Constant,
}

impl ScalingKind {
    pub fn rule(self, param: f64) -> ScalingRule {
        match self {
            ScalingKind::Linear => ScalingRule::Linear,
            ScalingKind::Sqrt => ScalingRule::Sqrt,
            ScalingKind::ScaledLinear => ScalingRule::ScaledLinear(param),
            ScalingKind::Constant => ScalingRule::Constant(param),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Population size for electrical networks, total size for chemical ones.
    Auto,
    Population,
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub t: f64,
    /// Label of the source population whose outgoing conductances scale.
    pub source: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub model: NetworkKind,
    pub n: usize,
    pub scaling: ScalingKind,
    /// `c` of the scaled-linear rule or `γ₀` of the constant rule.
    pub scaling_param: f64,
    pub scaling_basis: BasisKind,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub trace_per_population: usize,
    pub snapshot_times: Vec<f64>,
    pub histogram_bins: usize,
    pub histogram_lo: f64,
    pub histogram_hi: f64,
    pub perturbations: Vec<PerturbationConfig>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            model: NetworkKind::Electrical,
            n: 300,
            scaling: ScalingKind::Linear,
            scaling_param: 1.0,
            scaling_basis: BasisKind::Auto,
            t_end: 1.0,
            dt: 1e-4,
            record_every: 10,
            trace_per_population: 20,
            snapshot_times: vec![0.0, 0.01, 0.05, 0.2, 1.0],
            histogram_bins: 60,
            histogram_lo: -15.0,
            histogram_hi: 15.0,
            perturbations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectricalSection {
    /// Ascending coefficients of the cubic.
    pub cubic: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub sigma: f64,
    pub v_mean: f64,
    pub v_sd: f64,
    pub w_mean: f64,
    pub w_sd: f64,
}

impl Default for ElectricalSection {
    fn default() -> Self {
        let p = FhnElectricalParams::default();
        Self {
            cubic: p.cubic.0,
            a: p.a,
            b: p.b,
            g: p.g,
            sigma: p.sigma,
            v_mean: 1.0,
            v_sd: 5.0,
            w_mean: 1.5,
            w_sd: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemicalSection {
    pub cubic: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub tau: f64,
    pub sigmoid_gain: f64,
    pub sigmoid_threshold: f64,
    pub sigmoid_slope: f64,
    pub e_exc: f64,
    pub e_inh: f64,
    pub g_ee: f64,
    pub g_ei: f64,
    pub g_ie: f64,
    pub g_ii: f64,
    pub sigma: f64,
    pub x_mean: f64,
    pub x_sd: f64,
    pub y_mean: f64,
    pub y_sd: f64,
    pub s_max_e: f64,
    pub s_max_i: f64,
}

impl Default for ChemicalSection {
    fn default() -> Self {
        let p = FhnChemicalParams::inhibition_dominated();
        Self {
            cubic: p.cubic.0,
            a: p.a,
            b: p.b,
            c: p.c,
            tau: p.tau,
            sigmoid_gain: p.sigmoid.gain,
            sigmoid_threshold: p.sigmoid.threshold,
            sigmoid_slope: p.sigmoid.slope,
            e_exc: p.e_exc,
            e_inh: p.e_inh,
            g_ee: p.g_ee,
            g_ei: p.g_ei,
            g_ie: p.g_ie,
            g_ii: p.g_ii,
            sigma: p.sigma,
            x_mean: 3.0,
            x_sd: 1.0,
            y_mean: 2.0,
            y_sd: 1.0,
            s_max_e: 2.0,
            s_max_i: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeModelKind {
    Default,
    Ou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeInitKind {
    /// `∝ exp(−A (x − x₀)²/ε)`.
    Profile,
    /// Normal with mean `x0` and variance `init_var`.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub model: PdeModelKind,
    pub sigma: f64,
    pub epsilon: f64,
    pub reversal: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta_threshold: f64,
    pub beta_slope: f64,
    pub ou_rate: f64,
    pub half_width: f64,
    pub cells: usize,
    pub t_end: f64,
    pub init: PdeInitKind,
    pub x0: f64,
    pub a: f64,
    pub init_var: f64,
    pub cfl: f64,
    pub record_interval: f64,
    pub floor_ratio: f64,
    pub support_threshold: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        let s = SeparableSpec::default();
        Self {
            model: PdeModelKind::Default,
            sigma: s.sigma,
            epsilon: s.epsilon,
            reversal: s.reversal,
            beta0: s.beta0,
            beta1: s.beta1,
            beta_threshold: s.beta_threshold,
            beta_slope: s.beta_slope,
            ou_rate: s.ou_rate,
            half_width: 8.0,
            cells: 1024,
            t_end: 1.0,
            init: PdeInitKind::Profile,
            x0: 0.5,
            a: 3.0,
            init_var: 0.25,
            cfl: 0.9,
            record_interval: 0.05,
            floor_ratio: DEFAULT_FLOOR_RATIO,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub cells: usize,
    pub x0: f64,
    pub t0: f64,
    pub moment_k: u32,
    /// Network sizes of the fixed-`n` rows.
    pub ns: Vec<usize>,
    /// Scaling rules of the fixed-`n` rows (`scaling_param` applies).
    pub scalings: Vec<ScalingKind>,
    /// Rescaled horizon of the early-dynamics runs.
    pub horizon: f64,
    pub dt: f64,
    /// Voltage SD marking the collapse.
    pub collapse_level: f64,
    /// Also run the `ε` column through the PDE solver.
    pub include_pde_column: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepSpec::default();
        Self {
            epsilons: s.epsilons,
            t_end: s.t_end,
            cells: s.cells,
            x0: s.x0,
            t0: s.t0,
            moment_k: s.moment_k,
            ns: vec![100, 300],
            scalings: vec![ScalingKind::Linear, ScalingKind::Sqrt],
            horizon: 5.0,
            dt: 1e-3,
            collapse_level: 1.0,
            include_pde_column: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output_dir: String,
    pub network: NetworkSection,
    pub electrical: ElectricalSection,
    pub chemical: ChemicalSection,
    pub pde: PdeSection,
    pub sweep: SweepSection,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            output_dir: "out".into(),
            network: NetworkSection::default(),
            electrical: ElectricalSection::default(),
            chemical: ChemicalSection::default(),
            pde: PdeSection::default(),
            sweep: SweepSection::default(),
        }
    }

    /// Defaults for the chemical network short panel.
    pub fn chemical(kind: ExperimentKind, seed: u64) -> Self {
        let mut spec = Self::new(kind, seed);
        spec.network.model = NetworkKind::Chemical;
        spec.network.scaling = ScalingKind::ScaledLinear;
        spec.network.scaling_param = 0.1;
        spec.network.t_end = 0.5;
        spec.network.snapshot_times = vec![0.0, 0.25, 0.5];
        spec
    }

    pub fn electrical_params(&self) -> FhnElectricalParams {
        let e = &self.electrical;
        FhnElectricalParams {
            n: self.network.n,
            scaling: self.network.scaling.rule(self.network.scaling_param),
            cubic: Polynomial(e.cubic.clone()),
            a: e.a,
            b: e.b,
            g: e.g,
            sigma: e.sigma,
        }
    }

    pub fn chemical_params(&self) -> FhnChemicalParams {
        let c = &self.chemical;
        let basis = match self.network.scaling_basis {
            BasisKind::Population => ScalingBasis::Population,
            BasisKind::Auto | BasisKind::Total => ScalingBasis::Total,
        };
        FhnChemicalParams {
            n: self.network.n,
            scaling: self.network.scaling.rule(self.network.scaling_param),
            basis,
            cubic: Polynomial(c.cubic.clone()),
            a: c.a,
            b: c.b,
            c: c.c,
            tau: c.tau,
            sigmoid: Sigmoid {
                gain: c.sigmoid_gain,
                threshold: c.sigmoid_threshold,
                slope: c.sigmoid_slope,
            },
            e_exc: c.e_exc,
            e_inh: c.e_inh,
            g_ee: c.g_ee,
            g_ei: c.g_ei,
            g_ie: c.g_ie,
            g_ii: c.g_ii,
            sigma: c.sigma,
        }
    }

    pub fn network_model(&self) -> Result<NetworkModel> {
        let model = match self.network.model {
            NetworkKind::Electrical => {
                let model = build_fhn_electrical(&self.electrical_params())?;
                if self.network.scaling_basis == BasisKind::Total {
                    NetworkModel::new(
                        model.populations().to_vec(),
                        vec![model.drift(0).clone()],
                        vec![vec![model.interaction(0, 0).clone()]],
                        model.coupling().to_vec(),
                        model.scaling(),
                        ScalingBasis::Total,
                    )?
                } else {
                    model
                }
            }
            NetworkKind::Chemical => build_fhn_chemical(&self.chemical_params())?,
        };
        Ok(model)
    }

    pub fn initial_conditions(&self) -> InitialConditionSpec {
        let normal = |mean, sd| CoordinateInit::Normal { mean, sd };
        match self.network.model {
            NetworkKind::Electrical => {
                let e = &self.electrical;
                InitialConditionSpec::Independent(vec![vec![
                    normal(e.v_mean, e.v_sd),
                    normal(e.w_mean, e.w_sd),
                ]])
            }
            NetworkKind::Chemical => {
                let c = &self.chemical;
                let pop = |hi| {
                    vec![
                        normal(c.x_mean, c.x_sd),
                        normal(c.y_mean, c.y_sd),
                        CoordinateInit::Uniform { lo: 0.0, hi },
                    ]
                };
                InitialConditionSpec::Independent(vec![pop(c.s_max_e), pop(c.s_max_i)])
            }
        }
    }

    pub fn run_config(&self, model: &NetworkModel) -> std::result::Result<RunConfig, ConfigError> {
        let net = &self.network;
        let mut cfg = RunConfig::new(net.t_end, net.dt, self.seed).with_record(RecordSpec {
            every: net.record_every,
            trace_per_population: net.trace_per_population,
            snapshot_times: net.snapshot_times.clone(),
        });
        for (k, p) in net.perturbations.iter().enumerate() {
            let source = model
                .populations()
                .iter()
                .position(|q| q.label == p.source)
                .ok_or_else(|| ConfigError::InvalidValue {
                    key: format!("network.perturbations[{k}].source"),
                    reason: format!("no population labelled `{}`", p.source),
                })?;
            cfg = cfg.with_perturbation(PerturbationEvent::scale_source(
                p.t,
                source,
                p.factor,
                model.n_populations(),
            ));
        }
        Ok(cfg)
    }

    pub fn separable_spec(&self) -> SeparableSpec {
        let p = &self.pde;
        SeparableSpec {
            kind: match p.model {
                PdeModelKind::Default => SeparableKind::Default,
                PdeModelKind::Ou => SeparableKind::OrnsteinUhlenbeck,
            },
            sigma: p.sigma,
            epsilon: p.epsilon,
            reversal: p.reversal,
            beta0: p.beta0,
            beta1: p.beta1,
            beta_threshold: p.beta_threshold,
            beta_slope: p.beta_slope,
            ou_rate: p.ou_rate,
        }
    }

    pub fn dt_policy(&self) -> DtPolicy {
        DtPolicy {
            cfl: self.pde.cfl,
            record_interval: self.pde.record_interval,
            ..DtPolicy::default()
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let s = &self.sweep;
        SweepSpec {
            model: self.separable_spec(),
            epsilons: s.epsilons.clone(),
            t_end: s.t_end,
            half_width: self.pde.half_width,
            cells: s.cells,
            x0: s.x0,
            a: self.pde.a,
            policy: self.dt_policy(),
            t0: s.t0,
            moment_k: s.moment_k,
            floor_ratio: self.pde.floor_ratio,
            support_threshold: self.pde.support_threshold,
        }
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        let net = &self.network;
        if net.n == 0 {
            return bad("network.n", "must be at least 1");
        }
        if !(net.t_end > 0.0) {
            return bad("network.t_end", "must be positive");
        }
        if !(net.dt > 0.0) || net.dt > net.t_end {
            return bad("network.dt", "must be positive and at most t_end");
        }
        if net.record_every == 0 {
            return bad("network.record_every", "must be at least 1");
        }
        if net.histogram_bins == 0 || !(net.histogram_hi > net.histogram_lo) {
            return bad(
                "network.histogram_bins",
                "need at least one bin on a nonempty range",
            );
        }
        if !(self.pde.t_end > 0.0) {
            return bad("pde.t_end", "must be positive");
        }
        if self.sweep.ns.is_empty() || self.sweep.scalings.is_empty() {
            return bad("sweep.ns", "double-limit grid must be nonempty");
        }
        if !(self.sweep.horizon > 0.0 && self.sweep.dt > 0.0) {
            return bad("sweep.horizon", "horizon and dt must be positive");
        }
        Ok(())
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn merge(default: &Value, user: Value, path: &str) -> std::result::Result<Value, ConfigError> {
    let mismatch = |user: &Value| ConfigError::TypeMismatch {
        key: path.to_string(),
        expected: type_name(default).into(),
        found: type_name(user).into(),
    };
    match (default, user) {
        (Value::Table(d), Value::Table(u)) => {
            let mut out = d.clone();
            for (k, v) in u {
                let key = join(path, &k);
                let dv = d
                    .get(&k)
                    .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
                out.insert(k, merge(dv, v, &key)?);
            }
            Ok(Value::Table(out))
        }
        (Value::Array(d), Value::Array(u)) => match d.first() {
            Some(proto) => u
                .into_iter()
                .enumerate()
                .map(|(i, v)| merge(proto, v, &format!("{path}[{i}]")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Value::Array),
            None => Ok(Value::Array(u)),
        },
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (d, u) if std::mem::discriminant(d) == std::mem::discriminant(&u) => Ok(u),
        (_, u) => Err(mismatch(&u)),
    }
}

fn defaults_value() -> Value {
    Value::try_from(ExperimentSpec::new(ExperimentKind::NetworkRun, 0)).expect("defaults serialize")
}

/// Parses a TOML experiment description, applying defaults for every
/// optional key.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentSpec, ConfigError> {
    let user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    for key in REQUIRED {
        if !user.contains_key(key) {
            return Err(ConfigError::MissingKey(key.into()));
        }
    }
    let defaults = defaults_value();
    // Array-of-table prototypes for keys whose default is an empty array.
    let mut defaults = defaults;
    if let Some(Value::Table(net)) = defaults.as_table_mut().and_then(|t| t.get_mut("network")) {
        let proto = Value::try_from(PerturbationConfig {
            t: 0.0,
            source: String::new(),
            factor: 1.0,
        })
        .expect("prototype serializes");
        net.insert("perturbations".into(), Value::Array(vec![proto]));
    }
    let mut merged = merge(&defaults, Value::Table(user.clone()), "")?;
    let user_perturbations = user
        .get("network")
        .and_then(|n| n.get("perturbations"))
        .is_some();
    if !user_perturbations {
        if let Some(Value::Table(net)) = merged.as_table_mut().and_then(|t| t.get_mut("network")) {
            net.insert("perturbations".into(), Value::Array(Vec::new()));
        }
    }
    if let Some(Value::Array(items)) = merged.get("network").and_then(|n| n.get("perturbations")) {
        for (i, item) in items.iter().enumerate() {
            for key in ["t", "source", "factor"] {
                let given = user
                    .get("network")
                    .and_then(|n| n.get("perturbations"))
                    .and_then(|p| p.get(i))
                    .and_then(|p| p.get(key))
                    .is_some();
                if !given && item.get(key).is_some() {
                    return Err(ConfigError::MissingKey(format!(
                        "network.perturbations[{i}].{key}"
                    )));
                }
            }
        }
    }
    let seed = &merged["seed"];
    if let Value::Integer(s) = seed {
        if *s < 0 {
            return Err(ConfigError::InvalidValue {
                key: "seed".into(),
                reason: "must be nonnegative".into(),
            });
        }
    }
    let spec: ExperimentSpec =
        merged
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::InvalidValue {
                key: "(document)".into(),
                reason: e.message().to_string(),
            })?;
    spec.validate()?;
    Ok(spec)
}

/// Serializes a spec so that [`parse_config`] reproduces it.
pub fn emit_config(spec: &ExperimentSpec) -> String {
    toml::to_string(spec).expect("experiment specs serialize to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config("kind = \"network-run\"\nseed = 7\n").unwrap();
        assert_eq!(spec, ExperimentSpec::new(ExperimentKind::NetworkRun, 7));
    }

    #[test]
    fn missing_seed() {
        let err = parse_config("kind = \"pde-run\"\n").unwrap_err();
        assert_eq!(err, ConfigError::MissingKey("seed".into()));
    }

    #[test]
    fn fig1_config_echo() {
        let text = r#"
kind = "network-run"
seed = 1
[network]
model = "electrical"
n = 300
scaling = "linear"
[electrical]
g = 1
sigma = 1.0
a = 0.005
b = 6
"#;
        let spec = parse_config(text).unwrap();
        let p = spec.electrical_params();
        assert_eq!(p.n, 300);
        assert_eq!(p.scaling, ScalingRule::Linear);
        assert_eq!((p.g, p.sigma, p.a, p.b), (1.0, 1.0, 0.005, 6.0));
        let model = spec.network_model().unwrap();
        assert_eq!(model.gamma(), 300.0);
    }

    #[test]
    fn unknown_and_mismatched_keys() {
        let err =
            parse_config("kind = \"network-run\"\nseed = 1\n[network]\nnn = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("network.nn".into()));
        let err = parse_config("kind = \"network-run\"\nseed = 1\n[network]\nn = \"many\"\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::TypeMismatch { ref key, .. } if key == "network.n"));
        let err = parse_config("kind = \"network-run\"\nseed = 1\nextra = true\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("extra".into()));
        let err = parse_config("kind = \"bogus\"\nseed = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { .. }));
    }

    #[test]
    fn perturbations_are_checked() {
        let text = r#"
kind = "balance-analysis"
seed = 1
[network]
model = "chemical"
[[network.perturbations]]
t = 0.25
source = "E"
factor = 1.5
"#;
        let spec = parse_config(text).unwrap();
        let model = spec.network_model().unwrap();
        let cfg = spec.run_config(&model).unwrap();
        assert_eq!(cfg.perturbations.len(), 1);
        assert_eq!(
            cfg.perturbations[0].multipliers,
            vec![(0, 0, 1.5), (1, 0, 1.5)]
        );
        let missing = text.replace("factor = 1.5\n", "");
        assert_eq!(
            parse_config(&missing).unwrap_err(),
            ConfigError::MissingKey("network.perturbations[0].factor".into())
        );
        let unknown = text.replace("factor = 1.5", "factor = 1.5\nwhen = 2");
        assert_eq!(
            parse_config(&unknown).unwrap_err(),
            ConfigError::UnknownKey("network.perturbations[0].when".into())
        );
    }

    #[test]
    fn defaults_round_trip() {
        for kind in [
            ExperimentKind::NetworkRun,
            ExperimentKind::RescaledEarly,
            ExperimentKind::PdeRun,
            ExperimentKind::EpsilonSweep,
            ExperimentKind::DoubleLimitSweep,
            ExperimentKind::BalanceAnalysis,
        ] {
            let spec = ExperimentSpec::new(kind, 42);
            assert_eq!(parse_config(&emit_config(&spec)).unwrap(), spec);
            let chem = ExperimentSpec::chemical(kind, 3);
            assert_eq!(parse_config(&emit_config(&chem)).unwrap(), chem);
        }
    }
}
