//! Simulation and numerical-verification toolkit for stochastic networks of
//! interacting agents whose coupling strength diverges with network size.
//!
//! The crate is split along the lines of the workflow:
//!
//! * [`model`] builds network models (generic drift/interaction/coupling
//!   structures plus the electrical and chemical FitzHugh-Nagumo networks) and
//!   the one-dimensional separable mean-field model.
//! * [`sim`] integrates the network SDE with a fixed-step Euler-Maruyama
//!   scheme, including the time-rescaled early-dynamics mode.
//! * [`balance`] computes balance-manifold objects: balance voltages,
//!   stability rates, the frozen-measure early ODE and distance to balance.
//! * [`stats`] holds empirical statistics (moments, histograms, dispersion
//!   series, weighted norms, cluster splits).
//! * [`pde`] solves the 1D nonlinear Fokker-Planck equation and runs the
//!   Hopf-Cole concentration diagnostics.
//! * [`harness`] parses experiment configurations, orchestrates runs and
//!   sweeps, and writes CSV/JSON artifacts.

pub mod balance;
pub mod error;
pub mod harness;
pub mod model;
pub mod noise;
pub mod pde;
pub mod sim;
pub mod stats;
mod sum;

pub use error::{Error, Result};
pub use model::{
    build_fhn_chemical, build_fhn_electrical, scaling_gamma, validate_hypotheses, Drift,
    FhnChemicalParams, FhnElectricalParams, Interaction, NetworkModel, PopulationSpec,
    ScalingBasis, ScalingRule, SeparableModel1D, SeparableSpec,
};
pub use sim::{
    apply_perturbation, simulate, simulate_rescaled_early, step_euler_maruyama,
    InitialConditionSpec, NetworkState, PerturbationEvent, RecordSpec, RunConfig, RunRecord,
    RunStatus,
};
