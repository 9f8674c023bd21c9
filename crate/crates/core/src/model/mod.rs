//! Network model structures and the concrete models used in the experiments.
//!
//! A [`NetworkModel`] describes `P` populations of `n` agents each. Agent `i`
//! of population `p` follows
//!
//! ```text
//! dx_i = [ f_p(x_i) + (γ/n) Σ_q g_pq Σ_{j∈q} b_pq(x_i, x_j) ] dt + σ_p dW_i
//! ```
//!
//! where `γ = γ(n)` diverges with the network size. Coupling matrices are
//! indexed `[target][source]`, matching `g_pq` above.

mod fhn;
mod separable;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fhn::{
    build_fhn_chemical, build_fhn_electrical, FhnChemicalParams, FhnElectricalParams, Polynomial,
    Sigmoid, EXC, INH,
};
pub use separable::{
    build_separable_1d, validate_hypotheses, HypothesisCheck, HypothesisReport, HypothesisStatus,
    ScalarFn, SeparableKind, SeparableModel1D, SeparableSpec,
};

/// Rule giving the coupling scale `γ(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingRule {
    Linear,
    Sqrt,
    ScaledLinear(f64),
    Constant(f64),
}

impl ScalingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalingRule::ScaledLinear(c) if !(c > 0.0 && c.is_finite()) => Err(Error::invalid(
                "scaling",
                format!("scaled-linear factor {c} must be positive"),
            )),
            ScalingRule::Constant(g) if !(g > 0.0 && g.is_finite()) => Err(Error::invalid(
                "scaling",
                format!("constant gamma {g} must be positive"),
            )),
            _ => Ok(()),
        }
    }

    pub fn gamma(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            ScalingRule::Linear => n,
            ScalingRule::Sqrt => n.sqrt(),
            ScalingRule::ScaledLinear(c) => c * n,
            ScalingRule::Constant(g) => g,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ScalingRule::Linear => "linear".into(),
            ScalingRule::Sqrt => "sqrt".into(),
            ScalingRule::ScaledLinear(c) => format!("scaled-linear({c})"),
            ScalingRule::Constant(g) => format!("constant({g})"),
        }
    }
}

/// `γ(n)` for a scaling rule.
pub fn scaling_gamma(rule: ScalingRule, n: usize) -> f64 {
    debug_assert!(n >= 1);
    rule.gamma(n)
}

/// Which network size the scaling rule is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingBasis {
    /// `γ(n)` with `n` agents per population.
    #[default]
    Population,
    /// `γ(N)` with `N = P n` agents in total.
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub label: String,
    pub size: usize,
    pub state_dim: usize,
    /// `d × K` noise amplitudes, row per state coordinate.
    pub sigma: Vec<Vec<f64>>,
}

impl PopulationSpec {
    /// Population with a single noise channel acting on coordinate 0.
    pub fn with_voltage_noise(label: &str, size: usize, state_dim: usize, sigma: f64) -> Self {
        let mut rows = vec![vec![0.0]; state_dim];
        rows[0][0] = sigma;
        Self {
            label: label.to_string(),
            size,
            state_dim,
            sigma: rows,
        }
    }

    pub fn noise_channels(&self) -> usize {
        self.sigma.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("population.size", "must be at least 1"));
        }
        if self.state_dim == 0 {
            return Err(Error::invalid("population.state_dim", "must be at least 1"));
        }
        if self.sigma.len() != self.state_dim {
            return Err(Error::invalid(
                "population.sigma",
                format!("expected {} rows, got {}", self.state_dim, self.sigma.len()),
            ));
        }
        let k = self.noise_channels();
        for row in &self.sigma {
            if row.len() != k {
                return Err(Error::invalid("population.sigma", "ragged noise matrix"));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::invalid("population.sigma", "entries must be finite"));
            }
        }
        Ok(())
    }
}

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type PairField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Intrinsic drift `f_p`.
#[derive(Clone)]
pub enum Drift {
    Zero {
        dim: usize,
    },
    /// `(f(x) − y, a(b x − y + c))`.
    FitzHughNagumo {
        cubic: Polynomial,
        a: f64,
        b: f64,
        c: f64,
    },
    /// `(f(x) − y, a(b x − y + c), −s/τ + α(x)(1 − s))`.
    SynapticFitzHughNagumo {
        cubic: Polynomial,
        a: f64,
        b: f64,
        c: f64,
        tau: f64,
        sigmoid: Sigmoid,
    },
    Custom {
        dim: usize,
        func: VectorField,
    },
}

impl Drift {
    pub fn custom(dim: usize, func: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Drift::Custom {
            dim,
            func: Arc::new(func),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Drift::Zero { dim } | Drift::Custom { dim, .. } => *dim,
            Drift::FitzHughNagumo { .. } => 2,
            Drift::SynapticFitzHughNagumo { .. } => 3,
        }
    }

    /// Writes `f(x)` into `out` (`out.len() == self.dim()`).
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero { .. } => out.fill(0.0),
            Drift::FitzHughNagumo { cubic, a, b, c } => {
                out[0] = cubic.eval(x[0]) - x[1];
                out[1] = a * (b * x[0] - x[1] + c);
            }
            Drift::SynapticFitzHughNagumo {
                cubic,
                a,
                b,
                c,
                tau,
                sigmoid,
            } => {
                out[0] = cubic.eval(x[0]) - x[1];
                out[1] = a * (b * x[0] - x[1] + c);
                out[2] = -x[2] / tau + sigmoid.eval(x[0]) * (1.0 - x[2]);
            }
            Drift::Custom { func, .. } => func(x, out),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero { dim } => write!(f, "Zero({dim})"),
            Drift::FitzHughNagumo { cubic, a, b, c } => f
                .debug_struct("FitzHughNagumo")
                .field("cubic", cubic)
                .field("a", a)
                .field("b", b)
                .field("c", c)
                .finish(),
            Drift::SynapticFitzHughNagumo {
                cubic,
                a,
                b,
                c,
                tau,
                sigmoid,
            } => f
                .debug_struct("SynapticFitzHughNagumo")
                .field("cubic", cubic)
                .field("a", a)
                .field("b", b)
                .field("c", c)
                .field("tau", tau)
                .field("sigmoid", sigmoid)
                .finish(),
            Drift::Custom { dim, .. } => write!(f, "Custom({dim})"),
        }
    }
}

/// Pairwise interaction `b_pq(x, y)`, with `x` the receiving agent.
#[derive(Clone)]
pub enum Interaction {
    Zero,
    /// `b(x, y) = (y_c − x_c) e_c` (electrical/gap-junction coupling).
    Diffusive {
        component: usize,
    },
    /// `b(x, y) = (x_v − E) y_s e_v` (chemical synapse with reversal `E`).
    Synaptic {
        reversal: f64,
        voltage: usize,
        synapse: usize,
    },
    Custom(PairField),
}

impl Interaction {
    pub fn custom(func: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Interaction::Custom(Arc::new(func))
    }

    /// Writes `b(x, y)` into `out`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Interaction::Zero => out.fill(0.0),
            Interaction::Diffusive { component } => {
                out.fill(0.0);
                out[*component] = y[*component] - x[*component];
            }
            Interaction::Synaptic {
                reversal,
                voltage,
                synapse,
            } => {
                out.fill(0.0);
                out[*voltage] = (x[*voltage] - reversal) * y[*synapse];
            }
            Interaction::Custom(func) => func(x, y, out),
        }
    }

    /// `Σ_j b(x, y_j)` from the source population's size and coordinate sums,
    /// added (times `weight`) into `out`. Returns `false` for interactions that
    /// need the full sample set.
    #[inline]
    pub(crate) fn accumulate_from_sums(
        &self,
        x: &[f64],
        count: f64,
        coord_sums: &[f64],
        weight: f64,
        out: &mut [f64],
    ) -> bool {
        match self {
            Interaction::Zero => true,
            Interaction::Diffusive { component } => {
                let c = *component;
                out[c] += weight * (coord_sums[c] - count * x[c]);
                true
            }
            Interaction::Synaptic {
                reversal,
                voltage,
                synapse,
            } => {
                out[*voltage] += weight * (x[*voltage] - reversal) * coord_sums[*synapse];
                true
            }
            Interaction::Custom(_) => false,
        }
    }

    pub fn is_aggregable(&self) -> bool {
        !matches!(self, Interaction::Custom(_))
    }
}

impl fmt::Debug for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interaction::Zero => write!(f, "Zero"),
            Interaction::Diffusive { component } => write!(f, "Diffusive({component})"),
            Interaction::Synaptic {
                reversal,
                voltage,
                synapse,
            } => write!(f, "Synaptic(E={reversal}, v={voltage}, s={synapse})"),
            Interaction::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Immutable description of a multi-population network.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    populations: Vec<PopulationSpec>,
    drifts: Vec<Drift>,
    interactions: Vec<Vec<Interaction>>,
    coupling: Vec<Vec<f64>>,
    scaling: ScalingRule,
    basis: ScalingBasis,
}

impl NetworkModel {
    pub fn new(
        populations: Vec<PopulationSpec>,
        drifts: Vec<Drift>,
        interactions: Vec<Vec<Interaction>>,
        coupling: Vec<Vec<f64>>,
        scaling: ScalingRule,
        basis: ScalingBasis,
    ) -> Result<Self> {
        let p = populations.len();
        if p == 0 {
            return Err(Error::invalid(
                "populations",
                "at least one population required",
            ));
        }
        for pop in &populations {
            pop.validate()?;
        }
        let n = populations[0].size;
        let d = populations[0].state_dim;
        if populations.iter().any(|q| q.size != n) {
            return Err(Error::invalid(
                "populations",
                "all populations must have the same size",
            ));
        }
        if populations.iter().any(|q| q.state_dim != d) {
            return Err(Error::invalid(
                "populations",
                "all populations must share the state dimension",
            ));
        }
        if drifts.len() != p || drifts.iter().any(|f| f.dim() != d) {
            return Err(Error::invalid(
                "drifts",
                format!("need {p} drifts of dimension {d}"),
            ));
        }
        if interactions.len() != p || interactions.iter().any(|row| row.len() != p) {
            return Err(Error::invalid(
                "interactions",
                format!("need a {p}x{p} matrix"),
            ));
        }
        for row in &interactions {
            for b in row {
                let bad = match b {
                    Interaction::Diffusive { component } => *component >= d,
                    Interaction::Synaptic {
                        voltage,
                        synapse,
                        reversal,
                    } => *voltage >= d || *synapse >= d || !reversal.is_finite(),
                    _ => false,
                };
                if bad {
                    return Err(Error::invalid(
                        "interactions",
                        "coordinate index out of range",
                    ));
                }
            }
        }
        if coupling.len() != p || coupling.iter().any(|row| row.len() != p) {
            return Err(Error::invalid("coupling", format!("need a {p}x{p} matrix")));
        }
        if coupling.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::invalid("coupling", "entries must be finite"));
        }
        scaling.validate()?;
        Ok(Self {
            populations,
            drifts,
            interactions,
            coupling,
            scaling,
            basis,
        })
    }

    pub fn populations(&self) -> &[PopulationSpec] {
        &self.populations
    }

    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    /// Agents per population.
    pub fn pop_size(&self) -> usize {
        self.populations[0].size
    }

    pub fn n_agents(&self) -> usize {
        self.pop_size() * self.n_populations()
    }

    pub fn state_dim(&self) -> usize {
        self.populations[0].state_dim
    }

    pub fn drift(&self, p: usize) -> &Drift {
        &self.drifts[p]
    }

    pub fn interaction(&self, target: usize, source: usize) -> &Interaction {
        &self.interactions[target][source]
    }

    /// Coupling matrix `g[target][source]`.
    pub fn coupling(&self) -> &[Vec<f64>] {
        &self.coupling
    }

    pub fn scaling(&self) -> ScalingRule {
        self.scaling
    }

    pub fn scaling_basis(&self) -> ScalingBasis {
        self.basis
    }

    /// `γ` evaluated at the population or total size, per the scaling basis.
    pub fn gamma(&self) -> f64 {
        let size = match self.basis {
            ScalingBasis::Population => self.pop_size(),
            ScalingBasis::Total => self.n_agents(),
        };
        self.scaling.gamma(size)
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.coupling
            .iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_aggregable(&self) -> bool {
        self.interactions
            .iter()
            .flatten()
            .all(Interaction::is_aggregable)
    }

    pub fn population_of(&self, agent: usize) -> usize {
        agent / self.pop_size()
    }

    pub fn with_coupling(&self, coupling: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.populations.clone(),
            self.drifts.clone(),
            self.interactions.clone(),
            coupling,
            self.scaling,
            self.basis,
        )
    }

    pub fn with_scaling(&self, scaling: ScalingRule) -> Result<Self> {
        scaling.validate()?;
        Ok(Self {
            scaling,
            ..self.clone()
        })
    }

    pub fn with_pop_size(&self, n: usize) -> Result<Self> {
        let populations = self
            .populations
            .iter()
            .map(|p| PopulationSpec {
                size: n,
                ..p.clone()
            })
            .collect();
        Self::new(
            populations,
            self.drifts.clone(),
            self.interactions.clone(),
            self.coupling.clone(),
            self.scaling,
            self.basis,
        )
    }

    /// `f_p(x)`.
    pub fn eval_drift(&self, p: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(p, x)?;
        let mut out = vec![0.0; self.state_dim()];
        self.drifts[p].eval_into(x, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelDefinition(format!(
                "drift of population {p} is not finite at {x:?}"
            )));
        }
        Ok(out)
    }

    /// `b_pq(x, y)`.
    pub fn eval_interaction(&self, p: usize, q: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(p, x)?;
        self.check_point(q, y)?;
        let mut out = vec![0.0; self.state_dim()];
        self.interactions[p][q].eval_into(x, y, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelDefinition(format!(
                "interaction ({p},{q}) is not finite at {x:?}, {y:?}"
            )));
        }
        Ok(out)
    }

    fn check_point(&self, p: usize, x: &[f64]) -> Result<()> {
        if p >= self.n_populations() {
            return Err(Error::invalid(
                "population",
                format!("index {p} out of range"),
            ));
        }
        if x.len() != self.state_dim() {
            return Err(Error::invalid(
                "state",
                format!("expected dimension {}", self.state_dim()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state", "entries must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_rules() {
        assert_eq!(scaling_gamma(ScalingRule::Linear, 300), 300.0);
        assert!((scaling_gamma(ScalingRule::Sqrt, 300) - 17.32051).abs() < 1e-5);
        assert!((scaling_gamma(ScalingRule::ScaledLinear(0.1), 600) - 60.0).abs() < 1e-12);
        assert_eq!(scaling_gamma(ScalingRule::Constant(7.5), 3), 7.5);
        for n in 1..2000 {
            assert_eq!(scaling_gamma(ScalingRule::Linear, n) / n as f64, 1.0);
        }
    }

    #[test]
    fn gamma_increasing_for_divergent_rules() {
        for rule in [
            ScalingRule::Linear,
            ScalingRule::Sqrt,
            ScalingRule::ScaledLinear(0.3),
        ] {
            for n in 1..500 {
                assert!(rule.gamma(n + 1) > rule.gamma(n));
            }
        }
    }

    #[test]
    fn invalid_scaling_rejected() {
        assert!(ScalingRule::Constant(0.0).validate().is_err());
        assert!(ScalingRule::ScaledLinear(-1.0).validate().is_err());
        assert!(ScalingRule::Sqrt.validate().is_ok());
    }

    #[test]
    fn drift_non_finite_is_model_error() {
        let pop = PopulationSpec::with_voltage_noise("A", 2, 1, 0.0);
        let model = NetworkModel::new(
            vec![pop],
            vec![Drift::custom(1, |x, out| out[0] = 1.0 / x[0])],
            vec![vec![Interaction::Zero]],
            vec![vec![0.0]],
            ScalingRule::Linear,
            ScalingBasis::Population,
        )
        .unwrap();
        assert!(matches!(
            model.eval_drift(0, &[0.0]),
            Err(Error::ModelDefinition(_))
        ));
        assert_eq!(model.eval_drift(0, &[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let pop = PopulationSpec::with_voltage_noise("A", 2, 2, 0.0);
        let err = NetworkModel::new(
            vec![pop],
            vec![Drift::Zero { dim: 3 }],
            vec![vec![Interaction::Zero]],
            vec![vec![0.0]],
            ScalingRule::Linear,
            ScalingBasis::Population,
        );
        assert!(err.is_err());
    }
}
