//! FitzHugh-Nagumo networks with electrical or chemical coupling.

use serde::{Deserialize, Serialize};

use super::{Drift, Interaction, NetworkModel, PopulationSpec, ScalingBasis, ScalingRule};
use crate::error::{Error, Result};

/// Excitatory population index in the chemical model.
pub const EXC: usize = 0;
/// Inhibitory population index in the chemical model.
pub const INH: usize = 1;

/// Polynomial with coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    /// `v(1 − v)(v − λ) + offset`.
    pub fn fhn_cubic(lambda: f64, offset: f64) -> Self {
        // v(1-v)(v-λ) = -v^3 + (1+λ) v^2 - λ v
        Polynomial(vec![offset, -lambda, 1.0 + lambda, -1.0])
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn leading(&self) -> f64 {
        self.0.get(self.degree()).copied().unwrap_or(0.0)
    }
}

/// Voltage sigmoid `gain / (1 + exp(−(x − threshold)/slope))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub gain: f64,
    pub threshold: f64,
    pub slope: f64,
}

impl Default for Sigmoid {
    fn default() -> Self {
        Self {
            gain: 1.0,
            threshold: 1.0,
            slope: 0.2,
        }
    }
}

impl Sigmoid {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.gain / (1.0 + (-(x - self.threshold) / self.slope).exp())
    }
}

fn check_cubic(cubic: &Polynomial) -> Result<()> {
    if cubic.0.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cubic", "coefficients must be finite"));
    }
    if cubic.degree() != 3 || cubic.leading() >= 0.0 {
        return Err(Error::invalid(
            "cubic",
            "must be a cubic with negative leading coefficient",
        ));
    }
    Ok(())
}

/// Single population of electrically coupled FitzHugh-Nagumo neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhnElectricalParams {
    pub n: usize,
    pub scaling: ScalingRule,
    pub cubic: Polynomial,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub sigma: f64,
}

impl Default for FhnElectricalParams {
    /// `f(v) = v(1−v)(v−4) + 4`, `a = 0.005`, `b = 6`, `g = 1`, `σ = 1`,
    /// `n = 300`, `γ(n) = n`.
    fn default() -> Self {
        Self {
            n: 300,
            scaling: ScalingRule::Linear,
            cubic: Polynomial::fhn_cubic(4.0, 4.0),
            a: 0.005,
            b: 6.0,
            g: 1.0,
            sigma: 1.0,
        }
    }
}

pub fn build_fhn_electrical(params: &FhnElectricalParams) -> Result<NetworkModel> {
    check_cubic(&params.cubic)?;
    if !(params.a > 0.0) {
        return Err(Error::invalid("a", "must be positive"));
    }
    if !(params.g >= 0.0) || !params.g.is_finite() {
        return Err(Error::invalid("g", "must be nonnegative"));
    }
    if !params.b.is_finite() || !params.sigma.is_finite() {
        return Err(Error::invalid("b/sigma", "must be finite"));
    }
    let pop = PopulationSpec::with_voltage_noise("V", params.n, 2, params.sigma);
    NetworkModel::new(
        vec![pop],
        vec![Drift::FitzHughNagumo {
            cubic: params.cubic.clone(),
            a: params.a,
            b: params.b,
            c: 0.0,
        }],
        vec![vec![Interaction::Diffusive { component: 0 }]],
        vec![vec![params.g]],
        params.scaling,
        ScalingBasis::Population,
    )
}

/// Excitatory/inhibitory FitzHugh-Nagumo network with chemical synapses.
///
/// Conductances are stored as nonnegative magnitudes; the model uses signed
/// effective values, negating every entry whose source is inhibitory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhnChemicalParams {
    pub n: usize,
    pub scaling: ScalingRule,
    pub basis: ScalingBasis,
    pub cubic: Polynomial,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub tau: f64,
    pub sigmoid: Sigmoid,
    pub e_exc: f64,
    pub e_inh: f64,
    pub g_ee: f64,
    pub g_ei: f64,
    pub g_ie: f64,
    pub g_ii: f64,
    pub sigma: f64,
}

impl Default for FhnChemicalParams {
    /// Inhibition-dominated magnitudes of the stable regime.
    fn default() -> Self {
        Self::inhibition_dominated()
    }
}

impl FhnChemicalParams {
    /// `g_EE = 0.3, g_EI = 2, g_IE = 1, g_II = 10`.
    pub fn inhibition_dominated() -> Self {
        Self {
            n: 300,
            scaling: ScalingRule::ScaledLinear(0.1),
            basis: ScalingBasis::Total,
            cubic: Polynomial::fhn_cubic(0.3, 0.0),
            a: 0.4,
            b: 1.5,
            c: 1.0,
            tau: 1.0,
            sigmoid: Sigmoid::default(),
            e_exc: 3.0,
            e_inh: -1.0,
            g_ee: 0.3,
            g_ei: 2.0,
            g_ie: 1.0,
            g_ii: 10.0,
            sigma: 1.0,
        }
    }

    /// `g_EE = 1, g_EI = 2, g_IE = 0.1, g_II = 0.7`.
    pub fn excitation_dominated() -> Self {
        Self {
            g_ee: 1.0,
            g_ei: 2.0,
            g_ie: 0.1,
            g_ii: 0.7,
            ..Self::inhibition_dominated()
        }
    }

    /// Signed effective conductances indexed `[source][target]`.
    pub fn signed_conductances(&self) -> [[f64; 2]; 2] {
        [[self.g_ee, self.g_ei], [-self.g_ie, -self.g_ii]]
    }

    pub fn reversals(&self) -> [f64; 2] {
        [self.e_exc, self.e_inh]
    }

    fn validate(&self) -> Result<()> {
        check_cubic(&self.cubic)?;
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid("tau", "must be positive"));
        }
        if !(self.sigmoid.slope > 0.0) {
            return Err(Error::invalid("sigmoid.slope", "must be positive"));
        }
        for (name, g) in [
            ("g_ee", self.g_ee),
            ("g_ei", self.g_ei),
            ("g_ie", self.g_ie),
            ("g_ii", self.g_ii),
        ] {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::invalid(
                    name,
                    "conductance magnitudes must be nonnegative",
                ));
            }
        }
        if self.e_exc == self.e_inh || !self.e_exc.is_finite() || !self.e_inh.is_finite() {
            return Err(Error::invalid(
                "e_exc/e_inh",
                "reversal potentials must differ",
            ));
        }
        Ok(())
    }
}

pub fn build_fhn_chemical(params: &FhnChemicalParams) -> Result<NetworkModel> {
    params.validate()?;
    let signed = params.signed_conductances();
    let reversal = params.reversals();
    let drift = Drift::SynapticFitzHughNagumo {
        cubic: params.cubic.clone(),
        a: params.a,
        b: params.b,
        c: params.c,
        tau: params.tau,
        sigmoid: params.sigmoid,
    };
    let interactions = (0..2)
        .map(|_target| {
            (0..2)
                .map(|source| Interaction::Synaptic {
                    reversal: reversal[source],
                    voltage: 0,
                    synapse: 2,
                })
                .collect()
        })
        .collect();
    let coupling = (0..2)
        .map(|target| (0..2).map(|source| signed[source][target]).collect())
        .collect();
    NetworkModel::new(
        vec![
            PopulationSpec::with_voltage_noise("E", params.n, 3, params.sigma),
            PopulationSpec::with_voltage_noise("I", params.n, 3, params.sigma),
        ],
        vec![drift.clone(), drift],
        interactions,
        coupling,
        params.scaling,
        params.basis,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1_f(v: f64) -> f64 {
        v * (1.0 - v) * (v - 4.0) + 4.0
    }

    #[test]
    fn electrical_drift_examples() {
        let model = build_fhn_electrical(&FhnElectricalParams::default()).unwrap();
        assert_eq!(model.eval_drift(0, &[0.0, 0.0]).unwrap(), vec![4.0, 0.0]);
        let d = model.eval_drift(0, &[1.0, 0.0]).unwrap();
        assert_eq!(d[0], 4.0);
        assert!((d[1] - 0.03).abs() < 1e-15);
        // factored-form oracle
        let d = model.eval_drift(0, &[2.0, 1.0]).unwrap();
        assert!((d[0] - (fig1_f(2.0) - 1.0)).abs() < 1e-12);
        assert!((d[1] - 0.005 * (6.0 * 2.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn electrical_model_shape() {
        let model = build_fhn_electrical(&FhnElectricalParams::default()).unwrap();
        assert_eq!(model.n_populations(), 1);
        assert_eq!(model.state_dim(), 2);
        assert_eq!(model.coupling()[0][0], 1.0);
        assert_eq!(model.populations()[0].sigma, vec![vec![1.0], vec![0.0]]);
        assert_eq!(model.gamma(), 300.0);
    }

    #[test]
    fn electrical_interaction() {
        let model = build_fhn_electrical(&FhnElectricalParams::default()).unwrap();
        assert_eq!(
            model
                .eval_interaction(0, 0, &[1.0, 5.0], &[3.0, -2.0])
                .unwrap(),
            vec![2.0, 0.0]
        );
        assert_eq!(
            model
                .eval_interaction(0, 0, &[1.5, 2.0], &[1.5, 2.0])
                .unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn zero_conductance_electrical_builds() {
        let p = FhnElectricalParams {
            g: 0.0,
            ..Default::default()
        };
        let model = build_fhn_electrical(&p).unwrap();
        assert_eq!(model.coupling()[0][0], 0.0);
        let bad = FhnElectricalParams {
            g: -1.0,
            ..Default::default()
        };
        assert!(build_fhn_electrical(&bad).is_err());
        let bad = FhnElectricalParams {
            cubic: Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
            ..Default::default()
        };
        assert!(build_fhn_electrical(&bad).is_err());
    }

    #[test]
    fn chemical_signed_matrix() {
        let p = FhnChemicalParams::inhibition_dominated();
        assert_eq!(p.signed_conductances(), [[0.3, 2.0], [-1.0, -10.0]]);
        let model = build_fhn_chemical(&p).unwrap();
        // coupling is [target][source]
        assert_eq!(model.coupling()[EXC][INH], -1.0);
        assert_eq!(model.coupling()[INH][EXC], 2.0);
        assert_eq!(model.gamma(), 60.0);
    }

    #[test]
    fn chemical_interaction_substitution() {
        let p = FhnChemicalParams::inhibition_dominated();
        let model = build_fhn_chemical(&p).unwrap();
        let x = [0.7, 0.1, 0.2];
        let y = [2.0, 0.3, 0.45];
        let b = model.eval_interaction(EXC, EXC, &x, &y).unwrap();
        assert_eq!(b, vec![(0.7 - 3.0) * 0.45, 0.0, 0.0]);
        let b = model.eval_interaction(EXC, INH, &x, &y).unwrap();
        assert_eq!(b, vec![(0.7 + 1.0) * 0.45, 0.0, 0.0]);
    }

    #[test]
    fn chemical_synapse_decay() {
        let p = FhnChemicalParams {
            sigmoid: Sigmoid {
                gain: 0.0,
                ..Sigmoid::default()
            },
            ..FhnChemicalParams::inhibition_dominated()
        };
        let model = build_fhn_chemical(&p).unwrap();
        let d = model.eval_drift(EXC, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(d[2], -1.0 / p.tau);
    }

    #[test]
    fn zero_conductances_uncoupled() {
        let p = FhnChemicalParams {
            g_ee: 0.0,
            g_ei: 0.0,
            g_ie: 0.0,
            g_ii: 0.0,
            ..FhnChemicalParams::inhibition_dominated()
        };
        let model = build_fhn_chemical(&p).unwrap();
        assert_eq!(model.max_abs_coupling(), 0.0);
    }

    #[test]
    fn chemical_rejects_bad_params() {
        let base = FhnChemicalParams::inhibition_dominated();
        assert!(build_fhn_chemical(&FhnChemicalParams {
            tau: 0.0,
            ..base.clone()
        })
        .is_err());
        assert!(build_fhn_chemical(&FhnChemicalParams {
            g_ie: -0.1,
            ..base.clone()
        })
        .is_err());
        assert!(build_fhn_chemical(&FhnChemicalParams {
            e_inh: 3.0,
            ..base.clone()
        })
        .is_err());
        let s = Sigmoid {
            slope: 0.0,
            ..Sigmoid::default()
        };
        assert!(build_fhn_chemical(&FhnChemicalParams { sigmoid: s, ..base }).is_err());
    }

    proptest! {
        #[test]
        fn electrical_self_interaction_vanishes(x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
            let model = build_fhn_electrical(&FhnElectricalParams::default()).unwrap();
            let b = model.eval_interaction(0, 0, &[x0, x1], &[x0, x1]).unwrap();
            prop_assert_eq!(b, vec![0.0, 0.0]);
        }

        #[test]
        fn chemical_sign_convention(g in prop::array::uniform4(0.0f64..20.0)) {
            let p = FhnChemicalParams { g_ee: g[0], g_ei: g[1], g_ie: g[2], g_ii: g[3],
                ..FhnChemicalParams::inhibition_dominated() };
            let s = p.signed_conductances();
            prop_assert!(s[EXC][EXC] >= 0.0 && s[EXC][INH] >= 0.0);
            prop_assert!(s[INH][EXC] <= 0.0 && s[INH][INH] <= 0.0);
        }

        #[test]
        fn horner_matches_factored(v in -20.0f64..20.0) {
            let f = Polynomial::fhn_cubic(4.0, 4.0);
            prop_assert!((f.eval(v) - fig1_f(v)).abs() <= 1e-9 * (1.0 + fig1_f(v).abs()));
        }
    }
}
