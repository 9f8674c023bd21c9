//! Python bindings for `balnet`.
//!
//! Models and run records are wrapped as opaque classes; everything else
//! crosses the boundary as floats, lists and dicts.

use std::path::PathBuf;

use balnet::balance::{chemical_structure, BalanceReport};
use balnet::harness::{
    emit_config, parse_config, run_experiment as run_spec, ExperimentKind, ExperimentSpec,
};
use balnet::model::{build_separable_1d, SeparableSpec};
use balnet::pde::{
    epsilon_sweep as sweep_eps, ou_stationary_l1, solve_fp_1d, DensityField, DtPolicy, Grid1D,
    SweepSpec,
};
use balnet::sim::{InitialConditionSpec, RecordSpec};
use balnet::stats::cluster_split as split;
use balnet::{
    build_fhn_chemical, build_fhn_electrical, simulate as run_network, FhnChemicalParams,
    FhnElectricalParams, NetworkModel, RunConfig, RunRecord, ScalingRule,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scaling_rule(name: &str, param: f64) -> PyResult<ScalingRule> {
    Ok(match name {
        "linear" => ScalingRule::Linear,
        "sqrt" => ScalingRule::Sqrt,
        "scaled-linear" => ScalingRule::ScaledLinear(param),
        "constant" => ScalingRule::Constant(param),
        other => return Err(err(format!("unknown scaling `{other}`"))),
    })
}

/// A network of interacting agents.
#[pyclass(name = "Model", module = "pybalnet", frozen)]
struct PyModel {
    inner: NetworkModel,
    chemical: bool,
}

#[pymethods]
impl PyModel {
    /// Single population of electrically coupled FitzHugh-Nagumo neurons.
    #[staticmethod]
    #[pyo3(signature = (n = 300, g = 1.0, sigma = 1.0, scaling = "linear", scaling_param = 1.0))]
    fn electrical(
        n: usize,
        g: f64,
        sigma: f64,
        scaling: &str,
        scaling_param: f64,
    ) -> PyResult<Self> {
        let params = FhnElectricalParams {
            n,
            g,
            sigma,
            scaling: scaling_rule(scaling, scaling_param)?,
            ..FhnElectricalParams::default()
        };
        Ok(Self {
            inner: build_fhn_electrical(&params).map_err(err)?,
            chemical: false,
        })
    }

    /// Excitatory/inhibitory network with chemical synapses.
    ///
    /// `regime` is `"inhibition"` or `"excitation"`; `conductances` overrides
    /// the magnitudes `(g_EE, g_EI, g_IE, g_II)`.
    #[staticmethod]
    #[pyo3(signature = (n = 1000, regime = "inhibition", sigma = 1.0, conductances = None))]
    fn chemical(
        n: usize,
        regime: &str,
        sigma: f64,
        conductances: Option<[f64; 4]>,
    ) -> PyResult<Self> {
        let base = match regime {
            "inhibition" => FhnChemicalParams::inhibition_dominated(),
            "excitation" => FhnChemicalParams::excitation_dominated(),
            other => return Err(err(format!("unknown regime `{other}`"))),
        };
        let mut params = FhnChemicalParams { n, sigma, ..base };
        if let Some([ee, ei, ie, ii]) = conductances {
            (params.g_ee, params.g_ei, params.g_ie, params.g_ii) = (ee, ei, ie, ii);
        }
        Ok(Self {
            inner: build_fhn_chemical(&params).map_err(err)?,
            chemical: true,
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    #[getter]
    fn n_populations(&self) -> usize {
        self.inner.n_populations()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(populations={}, agents={}, gamma={})",
            self.inner.n_populations(),
            self.inner.n_agents(),
            self.inner.gamma()
        )
    }
}

/// Recorded output of a network run.
#[pyclass(name = "Run", module = "pybalnet", frozen)]
struct PyRun {
    inner: RunRecord,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn completed(&self) -> bool {
        self.inner.completed()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    #[pyo3(signature = (population = 0, coordinate = 0))]
    fn mean(&self, population: usize, coordinate: usize) -> Vec<f64> {
        self.inner.mean_series(population, coordinate)
    }

    #[pyo3(signature = (population = 0, coordinate = 0))]
    fn std(&self, population: usize, coordinate: usize) -> Vec<f64> {
        self.inner.std_series(population, coordinate)
    }

    /// Distance to the balance manifold at every sample.
    fn distance(&self) -> Vec<f64> {
        self.inner.distance_series()
    }

    /// Final values of one coordinate for every agent of a population.
    #[pyo3(signature = (population = 0, coordinate = 0))]
    fn final_values(&self, population: usize, coordinate: usize) -> Vec<f64> {
        self.inner.final_state.coordinate(population, coordinate)
    }
}

/// Euler-Maruyama run from the model's default initial distribution.
#[pyfunction]
#[pyo3(signature = (model, t_end, dt, seed, record_every = 10, snapshot_times = Vec::new()))]
fn simulate(
    py: Python<'_>,
    model: &PyModel,
    t_end: f64,
    dt: f64,
    seed: u64,
    record_every: usize,
    snapshot_times: Vec<f64>,
) -> PyResult<PyRun> {
    let init = if model.chemical {
        InitialConditionSpec::chemical_default()
    } else {
        InitialConditionSpec::electrical_default()
    };
    let cfg = RunConfig::new(t_end, dt, seed).with_record(RecordSpec {
        every: record_every,
        trace_per_population: 0,
        snapshot_times,
    });
    let record = py
        .detach(|| run_network(&model.inner, &init, &cfg))
        .map_err(err)?;
    Ok(PyRun { inner: record })
}

/// Balance voltages, stability rates and gate means of a chemical run's final state.
#[pyfunction]
fn balance_report<'py>(
    py: Python<'py>,
    model: &PyModel,
    run: &PyRun,
) -> PyResult<Bound<'py, PyDict>> {
    let (g, reversal) = chemical_structure(&model.inner).map_err(err)?;
    let report =
        BalanceReport::chemical_from_state(&g, reversal, &run.inner.final_state).map_err(err)?;
    balance_dict(py, &report)
}

/// Balance voltages and stability from signed conductances `g[source][target]`.
#[pyfunction]
fn chemical_balance<'py>(
    py: Python<'py>,
    g: [[f64; 2]; 2],
    reversal: [f64; 2],
    sbar: [f64; 2],
) -> PyResult<Bound<'py, PyDict>> {
    let report = BalanceReport::chemical(&g, reversal, sbar).map_err(err)?;
    balance_dict(py, &report)
}

fn balance_dict<'py>(py: Python<'py>, r: &BalanceReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("voltages", r.voltages.clone())?;
    d.set_item("rates", r.rates.clone())?;
    d.set_item("stable", r.stable.clone())?;
    d.set_item("sbar", r.sbar.clone())?;
    Ok(d)
}

/// Fractions above and below `pivot` and the smallest distance to it.
#[pyfunction]
fn cluster_split(samples: Vec<f64>, pivot: f64) -> PyResult<(f64, f64, f64)> {
    let s = split(&samples, pivot).map_err(err)?;
    Ok((s.fraction_above, s.fraction_below, s.gap))
}

/// L1 distance to the Gaussian stationary law after solving the
/// Ornstein-Uhlenbeck Fokker-Planck equation from N(1, 1/4).
#[pyfunction]
#[pyo3(signature = (sigma = 1.0, cells = 1024, t_end = 10.0, half_width = 8.0))]
fn ou_stationary_error(
    py: Python<'_>,
    sigma: f64,
    cells: usize,
    t_end: f64,
    half_width: f64,
) -> PyResult<f64> {
    let spec = SeparableSpec::ornstein_uhlenbeck(sigma);
    let model = build_separable_1d(&spec).map_err(err)?;
    let grid = Grid1D::new(half_width, cells).map_err(err)?;
    let mu0 = DensityField::normal(grid, spec.epsilon, 1.0, 0.25).map_err(err)?;
    let run = py
        .detach(|| solve_fp_1d(&model, &mu0, t_end, &DtPolicy::default()))
        .map_err(err)?;
    Ok(ou_stationary_l1(
        run.final_density(),
        sigma * sigma / (2.0 * spec.ou_rate),
    ))
}

/// Concentration diagnostics of the separable model for each ε.
///
/// `t0` is the start of the time window used for the time-integrated checks.
#[pyfunction]
#[pyo3(signature = (epsilons = None, t_end = None, cells = None, t0 = None))]
fn epsilon_sweep<'py>(
    py: Python<'py>,
    epsilons: Option<Vec<f64>>,
    t_end: Option<f64>,
    cells: Option<usize>,
    t0: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = SweepSpec::default();
    if let Some(e) = epsilons {
        spec.epsilons = e;
    }
    if let Some(t) = t_end {
        spec.t_end = t;
    }
    if let Some(c) = cells {
        spec.cells = c;
    }
    if let Some(t) = t0 {
        spec.t0 = t;
    }
    let report = py.detach(|| sweep_eps(&spec)).map_err(err)?;
    report
        .runs
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epsilon", r.epsilon)?;
            d.set_item("error", r.error.clone())?;
            d.set_item("sup_phi", r.sup_phi)?;
            d.set_item("support_width", r.support_width)?;
            d.set_item("max_mass_drift", r.max_mass_drift)?;
            d.set_item("min_value", r.min_value)?;
            Ok(d)
        })
        .collect()
}

/// TOML text of the default configuration for an experiment kind.
#[pyfunction]
#[pyo3(signature = (kind, seed = 0))]
fn default_config(kind: &str, seed: u64) -> PyResult<String> {
    let kind: ExperimentKind = toml::Value::String(kind.into()).try_into().map_err(err)?;
    let spec = if kind == ExperimentKind::BalanceAnalysis {
        ExperimentSpec::chemical(kind, seed)
    } else {
        ExperimentSpec::new(kind, seed)
    };
    Ok(emit_config(&spec))
}

/// Run a TOML-configured experiment into `out_dir`; returns the manifest summary.
#[pyfunction]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: PathBuf,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = parse_config(config).map_err(err)?;
    let m = py.detach(|| run_spec(&spec, &out_dir)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("kind", m.kind.clone())?;
    d.set_item("status", format!("{:?}", m.status))?;
    d.set_item("errors", m.errors.clone())?;
    d.set_item("metrics", m.metrics.clone())?;
    d.set_item(
        "files",
        m.files.iter().map(|f| f.path.clone()).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pymodule]
fn pybalnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(balance_report, m)?)?;
    m.add_function(wrap_pyfunction!(chemical_balance, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_split, m)?)?;
    m.add_function(wrap_pyfunction!(ou_stationary_error, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
