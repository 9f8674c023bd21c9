//! Experiment orchestration: single runs, the double-limit sweep and the
//! balance analysis, each writing CSV artifacts plus a manifest.

use std::path::Path;

use rayon::prelude::*;

use super::artifacts::{
    format_number, ArtifactWriter, CsvTable, ManifestStatus, RunManifest, MANIFEST_FILE,
};
use super::config::{ExperimentKind, ExperimentSpec, PdeInitKind, PdeModelKind, ScalingKind};
use crate::balance::{
    chemical_structure, default_early_dt, integrate_early_ode_points, BalanceReport,
    EmpiricalMeasure,
};
use crate::error::{Error, Result};
use crate::model::{build_separable_1d, NetworkModel};
use crate::pde::{
    epsilon_sweep, hamiltonian_residual, hopf_cole, solve_fp_1d, support_width, DensityField,
    Grid1D,
};
use crate::sim::{
    apply_perturbation, simulate, simulate_rescaled_early, RunConfig, RunRecord, RunStatus, Sample,
};
use crate::stats::{cluster_split, histogram, SeriesReport};

/// Short coordinate names used in CSV headers.
pub fn coordinate_names(dim: usize) -> Vec<String> {
    match dim {
        1 => vec!["x".into()],
        2 => vec!["v".into(), "w".into()],
        3 => vec!["x".into(), "y".into(), "s".into()],
        _ => (0..dim).map(|c| format!("x{c}")).collect(),
    }
}

fn labels(model: &NetworkModel) -> Vec<String> {
    model
        .populations()
        .iter()
        .map(|p| p.label.clone())
        .collect()
}

/// Runs one experiment and writes its artifacts and `manifest.json` into
/// `out_dir`. Module errors end up in the manifest status; only I/O errors
/// are returned.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunManifest> {
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut manifest = RunManifest::new(spec);
    let outcome = match spec.kind {
        ExperimentKind::NetworkRun => network_run(spec, &mut writer, &mut manifest),
        ExperimentKind::RescaledEarly => rescaled_early(spec, &mut writer, &mut manifest),
        ExperimentKind::PdeRun => pde_run(spec, &mut writer, &mut manifest),
        ExperimentKind::EpsilonSweep => epsilon_sweep_run(spec, &mut writer, &mut manifest),
        ExperimentKind::DoubleLimitSweep => {
            double_limit(spec, &mut writer, &mut manifest).map(|_| ())
        }
        ExperimentKind::BalanceAnalysis => balance_analysis(spec, &mut writer, &mut manifest),
    };
    match outcome {
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => manifest.fail(ManifestStatus::Failed, e.to_string()),
        Ok(()) => {}
    }
    manifest.files = writer.into_files();
    manifest.write(out_dir)?;
    Ok(manifest)
}

fn note_status(record: &RunRecord, manifest: &mut RunManifest) {
    if let RunStatus::Blowup { t } = record.status {
        manifest.set_metric("blowup_t", t);
        manifest.fail(ManifestStatus::Partial, format!("BLOWUP at t = {t}"));
    }
}

/// Writes `traces.csv`, `moments.csv` and per-snapshot voltage histograms.
pub(crate) fn write_record(
    spec: &ExperimentSpec,
    model: &NetworkModel,
    record: &RunRecord,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let names = coordinate_names(record.dim);
    let labels = labels(model);
    let n = model.pop_size();
    let times = record.times();

    let mut header = vec!["t".to_string()];
    let mut columns = vec![times.clone()];
    for (slot, &agent) in record.trace_agents.iter().enumerate() {
        let label = &labels[model.population_of(agent)];
        for (c, name) in names.iter().enumerate() {
            header.push(format!("{label}{}_{name}", agent % n));
            columns.push(record.trace_series(slot, c));
        }
    }
    writer.write_csv("traces.csv", &CsvTable::from_columns(&header, &columns))?;

    let mut header = vec!["t".to_string()];
    let mut columns = vec![times.clone()];
    for (p, label) in labels.iter().enumerate() {
        for (c, name) in names.iter().enumerate() {
            header.push(format!("mean_{label}_{name}"));
            columns.push(record.mean_series(p, c));
            header.push(format!("std_{label}_{name}"));
            columns.push(record.std_series(p, c));
        }
    }
    header.push("distance".into());
    columns.push(record.distance_series());
    writer.write_csv("moments.csv", &CsvTable::from_columns(&header, &columns))?;

    let net = &spec.network;
    for snap in &record.snapshots {
        for (p, label) in labels.iter().enumerate() {
            let h = histogram(
                &snap.coordinate(p, 0),
                net.histogram_lo,
                net.histogram_hi,
                net.histogram_bins,
            )?;
            let mut table = CsvTable::new(["bin_lo", "bin_hi", "count", "density"]);
            let w = h.width();
            for (k, (&count, dens)) in h.counts.iter().zip(h.density()).enumerate() {
                let lo = h.lo + k as f64 * w;
                table.push(&[lo, lo + w, count as f64, dens]);
            }
            let name = format!("hist_{label}_t{}.csv", format_number(snap.t));
            writer.write_csv(&name, &table)?;
        }
    }

    let scale = if record.rescaled { record.gamma } else { 1.0 };
    manifest.set_metric("gamma", record.gamma);
    for (p, label) in labels.iter().enumerate() {
        let std = record.std_series(p, 0);
        manifest.set_metric(
            format!("final_std_{label}"),
            *std.last().unwrap_or(&f64::NAN),
        );
        manifest.set_metric(
            format!("final_mean_{label}"),
            *record.mean_series(p, 0).last().unwrap_or(&f64::NAN),
        );
        let series = SeriesReport::new("std", times.clone(), std)?;
        let collapse = series
            .first_below(spec.sweep.collapse_level)
            .unwrap_or(f64::NAN);
        manifest.set_metric(format!("collapse_time_{label}"), collapse / scale);
        if p == 0 {
            manifest.set_metric("collapse_time", collapse / scale);
            if record.rescaled {
                manifest.set_metric("collapse_time_rescaled", collapse);
            }
        }
    }
    let distance = record.distance_series();
    manifest.set_metric("initial_distance", *distance.first().unwrap_or(&f64::NAN));
    manifest.set_metric("final_distance", *distance.last().unwrap_or(&f64::NAN));
    note_status(record, manifest);
    Ok(())
}

fn network_run(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let model = spec.network_model()?;
    let cfg = spec.run_config(&model)?;
    let record = simulate(&model, &spec.initial_conditions(), &cfg)?;
    write_record(spec, &model, &record, writer, manifest)
}

/// Largest linear rate of the frozen-measure ODE, used to pick its step.
fn early_rate(model: &NetworkModel, frozen: &EmpiricalMeasure) -> f64 {
    match chemical_structure(model) {
        Ok((g, _)) => {
            let sbar = [frozen.mean(0, 2), frozen.mean(1, 2)];
            (0..2)
                .map(|b| (g[0][b] * sbar[0] + g[1][b] * sbar[1]).abs())
                .fold(0.0, f64::max)
        }
        Err(_) => model.max_abs_coupling() * model.n_populations() as f64,
    }
}

fn rescaled_early(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let model = spec.network_model()?;
    let cfg = spec.run_config(&model)?;
    let init = spec.initial_conditions();
    let record = simulate_rescaled_early(&model, &init, &cfg)?;
    write_record(spec, &model, &record, writer, manifest)?;

    let initial = init.sample(&model, cfg.seed)?;
    let frozen = EmpiricalMeasure::from_state(&initial, model.n_populations())?;
    let starts: Vec<(usize, Vec<f64>)> = record
        .trace_agents
        .iter()
        .map(|&i| (model.population_of(i), initial.agent(i).to_vec()))
        .collect();
    // Refine the recording step so that ODE nodes coincide with samples.
    let sample_dt = cfg.dt * cfg.record.every as f64;
    let per_sample = (sample_dt / default_early_dt(early_rate(&model, &frozen)))
        .ceil()
        .max(1.0);
    let ode_dt = sample_dt / per_sample;
    let horizon = record.samples.last().map_or(cfg.t_end, |s| s.t);
    let ode = integrate_early_ode_points(&model, &frozen, &starts, horizon.max(ode_dt), ode_dt)?;

    let d = record.dim;
    let n = model.pop_size();
    let labels = labels(&model);
    let names = coordinate_names(d);
    let mut header = vec!["t".to_string()];
    for &agent in &record.trace_agents {
        let label = &labels[model.population_of(agent)];
        header.push(format!("{label}{}_sim", agent % n));
        header.push(format!("{label}{}_ode", agent % n));
    }
    header.push("gap".into());
    let mut early = CsvTable::new(header);
    let mut frozen_table = CsvTable::new(
        std::iter::once("t".to_string())
            .chain(names.iter().skip(1).map(|c| format!("max_change_{c}"))),
    );

    let mut sup_gap = 0.0f64;
    let mut sup_change = 0.0f64;
    let mut sup_drift = 0.0f64;
    let first = &record.samples[0];
    for sample in &record.samples {
        let mut row = vec![sample.t];
        let mut gap = 0.0f64;
        let node = ((sample.t / ode_dt).round() as usize).min(ode.times.len() - 1);
        for slot in 0..record.trace_agents.len() {
            let sim = sample.traces[slot * d];
            let pred = ode.states[slot].get(node).map_or(f64::NAN, |x| x[0]);
            row.push(sim);
            row.push(pred);
            gap = gap.max((sim - pred).abs());
        }
        row.push(gap);
        early.push(&row);
        sup_gap = sup_gap.max(gap);

        let mut changes = vec![sample.t];
        for c in 1..d {
            let change = (0..record.trace_agents.len())
                .map(|slot| (sample.traces[slot * d + c] - first.traces[slot * d + c]).abs())
                .fold(0.0, f64::max);
            sup_change = sup_change.max(change);
            changes.push(change);
        }
        frozen_table.push(&changes);
        for (slot, &agent) in record.trace_agents.iter().enumerate() {
            let x = &sample.traces[slot * d..(slot + 1) * d];
            let drift = model.eval_drift(model.population_of(agent), x)?;
            sup_drift = drift[1..].iter().fold(sup_drift, |m, v| m.max(v.abs()));
        }
    }
    writer.write_csv("early.csv", &early)?;
    writer.write_csv("frozen.csv", &frozen_table)?;
    manifest.set_metric("early_gap_sup", sup_gap);
    manifest.set_metric("frozen_change_sup", sup_change);
    // |Δy|, |Δs| ≤ T̃ sup|drift| / γ along the recorded traces.
    manifest.set_metric("frozen_bound_constant", horizon * sup_drift);
    manifest.set_metric("early_ode_dt", ode_dt);
    if let Some(t) = ode.blowup {
        manifest.set_metric("early_ode_blowup_t", t);
    }
    Ok(())
}

fn pde_run(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let p = &spec.pde;
    let model = build_separable_1d(&spec.separable_spec())?;
    let grid = Grid1D::new(p.half_width, p.cells)?;
    let mu0 = match p.init {
        PdeInitKind::Profile => DensityField::gaussian_profile(grid.clone(), p.epsilon, p.x0, p.a)?,
        PdeInitKind::Normal => DensityField::normal(grid.clone(), p.epsilon, p.x0, p.init_var)?,
    };
    let run = solve_fp_1d(&model, &mu0, p.t_end, &spec.dt_policy())?;
    let last = run.final_density();
    let field = hopf_cole(last, p.floor_ratio)?;
    let i_final = run.interaction.last().expect("nonempty series");
    let residual = hamiltonian_residual(&field, &model, i_final)?;

    let mut density = CsvTable::new(["x", "mu0", "mu", "phi", "w"]);
    for (j, x) in grid.centers().enumerate() {
        density.push(&[x, mu0.values[j], last.values[j], field.phi[j], field.w[j]]);
    }
    writer.write_csv("density.csv", &density)?;

    let mut snaps = CsvTable::new([
        "t",
        "mass",
        "mean",
        "second_moment",
        "interaction",
        "sup_phi",
        "support_width",
    ]);
    for s in &run.snapshots {
        let sup = hopf_cole(s, p.floor_ratio)
            .map(|h| h.sup_phi())
            .unwrap_or(f64::NAN);
        let width = support_width(s, p.support_threshold).unwrap_or(f64::NAN);
        let i = run.interaction.at(s.t).unwrap_or(f64::NAN);
        snaps.push(&[s.t, s.mass(), s.moment(1), s.moment(2), i, sup, width]);
    }
    writer.write_csv("snapshots.csv", &snaps)?;

    manifest.set_metric("dt", run.dt);
    manifest.set_metric("steps", run.steps as f64);
    manifest.set_metric("max_mass_drift", run.max_mass_drift);
    manifest.set_metric("mass_drift_per_time", run.max_mass_drift / p.t_end);
    manifest.set_metric("min_value", run.min_value);
    manifest.set_metric("sup_phi", field.sup_phi());
    manifest.set_metric("support_width", support_width(last, p.support_threshold)?);
    manifest.set_metric("interaction_final", i_final);
    manifest.set_metric("residual_sup", residual.sup_core);
    if p.model == PdeModelKind::Ou {
        let var = p.sigma * p.sigma / (2.0 * p.ou_rate);
        manifest.set_metric("stationary_l1", crate::pde::ou_stationary_l1(last, var));
    }
    Ok(())
}

fn epsilon_sweep_run(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let report = epsilon_sweep(&spec.sweep_spec())?;
    let mut table = CsvTable::new([
        "epsilon",
        "status",
        "dt",
        "steps",
        "sup_phi",
        "support_width",
        "residual_sup",
        "interaction_final",
        "max_mass_drift",
        "min_value",
        "tv",
        "bv_c_prime",
        "bv_c_double_prime",
        "envelope_e_prime",
        "theta",
        "max_gradient",
        "sup_moment",
    ]);
    for r in &report.runs {
        let nan = f64::NAN;
        let (tv, cp, cpp) =
            r.bv.as_ref()
                .map_or((nan, nan, nan), |b| (b.tv, b.c_prime, b.c_double_prime));
        let e = r.envelope.as_ref().map_or(nan, |e| e.primary.e_prime);
        let (theta, grad) = r
            .gradient
            .as_ref()
            .map_or((nan, nan), |g| (g.theta, g.max_gradient));
        let m = r.moment.as_ref().map_or(nan, |m| m.sup_moment);
        let mut cells = vec![
            format_number(r.epsilon),
            r.error.clone().unwrap_or_else(|| "ok".into()),
        ];
        cells.extend(
            [
                r.dt,
                r.steps as f64,
                r.sup_phi,
                r.support_width,
                r.residual_sup,
                r.i_final,
                r.max_mass_drift,
                r.min_value,
                tv,
                cp,
                cpp,
                e,
                theta,
                grad,
                m,
            ]
            .iter()
            .map(|&v| format_number(v)),
        );
        table.push_cells(cells);
        if let Some(err) = &r.error {
            manifest.fail(
                ManifestStatus::Partial,
                format!("epsilon {}: {err}", r.epsilon),
            );
        }
    }
    writer.write_csv("summary.csv", &table)?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    writer.write_bytes("convergence.json", json.as_bytes())?;
    let t = &report.trends;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    manifest.set_metric("failures", report.failures() as f64);
    manifest.set_metric("sup_phi_abs_decreasing", flag(t.sup_phi_abs_decreasing));
    manifest.set_metric("width_decreasing", flag(t.width_decreasing));
    manifest.set_metric("width_sqrt_ratio", t.width_sqrt_ratio);
    manifest.set_metric("residual_decreasing", flag(t.residual_decreasing));
    manifest.set_metric("i_gaps_decreasing", flag(t.i_gaps_decreasing));
    manifest.set_metric("envelope_uniform", flag(t.envelope_uniform));
    manifest.set_metric("bv_uniform", flag(t.bv_uniform));
    manifest.set_metric("theta_uniform", flag(t.theta_uniform));
    manifest.set_metric("moment_uniform", flag(t.moment_uniform));
    manifest.set_metric("moment_bound", t.moment_bound);
    if let Some(last) = report.runs.last() {
        manifest.set_metric("sup_phi", last.sup_phi);
        manifest.set_metric("support_width", last.support_width);
    }
    Ok(())
}

/// One cell of the double-limit grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CellSummary {
    /// `M1` (fixed `γ`, swept in `ε`) or `M2` (fixed `n`, swept in `γ`).
    pub path: String,
    pub directory: String,
    pub n: Option<usize>,
    pub scaling: Option<String>,
    pub gamma: f64,
    pub epsilon: f64,
    pub status: ManifestStatus,
    pub collapse_time: f64,
    pub distance_final: f64,
    pub sup_phi: f64,
    pub support_width: f64,
}

#[derive(Debug, Clone)]
pub struct DoubleLimitReport {
    pub cells: Vec<CellSummary>,
    pub manifest: RunManifest,
}

fn scaling_name(s: ScalingKind) -> &'static str {
    match s {
        ScalingKind::Linear => "linear",
        ScalingKind::Sqrt => "sqrt",
        ScalingKind::ScaledLinear => "scaled-linear",
        ScalingKind::Constant => "constant",
    }
}

/// Specs of every grid cell with the subdirectory each one writes to.
pub fn double_limit_cells(spec: &ExperimentSpec) -> Vec<(String, ExperimentSpec)> {
    let s = &spec.sweep;
    let mut cells = Vec::new();
    for &n in &s.ns {
        for &scaling in &s.scalings {
            let mut cell = spec.clone();
            cell.kind = ExperimentKind::RescaledEarly;
            cell.network.n = n;
            cell.network.scaling = scaling;
            cell.network.t_end = s.horizon;
            cell.network.dt = s.dt;
            cells.push((format!("m2_n{n}_{}", scaling_name(scaling)), cell));
        }
    }
    if s.include_pde_column {
        for &eps in &s.epsilons {
            let mut cell = spec.clone();
            cell.kind = ExperimentKind::PdeRun;
            cell.pde.epsilon = eps;
            cell.pde.t_end = s.t_end;
            cell.pde.cells = s.cells;
            cell.pde.x0 = s.x0;
            cell.pde.init = PdeInitKind::Profile;
            cells.push((format!("m1_eps{}", format_number(eps)), cell));
        }
    }
    cells
}

fn double_limit(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<Vec<CellSummary>> {
    let root = writer.root().to_path_buf();
    let cells = double_limit_cells(spec);
    let results: Vec<(String, ExperimentSpec, Result<RunManifest>)> = cells
        .into_par_iter()
        .map(|(dir, cell)| {
            let out = run_experiment(&cell, &root.join(&dir));
            (dir, cell, out)
        })
        .collect();

    let mut summaries = Vec::new();
    let mut table = CsvTable::new([
        "path",
        "n",
        "scaling",
        "gamma",
        "epsilon",
        "status",
        "collapse_time",
        "distance_final",
        "sup_phi",
        "support_width",
    ]);
    for (dir, cell, outcome) in results {
        let m2 = cell.kind == ExperimentKind::RescaledEarly;
        let summary = match outcome {
            Ok(m) => {
                writer.adopt(&dir, &m.files);
                let bytes = std::fs::read(root.join(&dir).join(MANIFEST_FILE))
                    .map_err(|e| Error::io(&dir, e))?;
                writer.adopt(
                    &dir,
                    &[super::artifacts::FileEntry {
                        path: MANIFEST_FILE.into(),
                        sha256: super::artifacts::sha256_hex(&bytes),
                        bytes: bytes.len() as u64,
                    }],
                );
                if !m.completed() {
                    manifest.fail(
                        ManifestStatus::Partial,
                        format!("{dir}: {}", m.errors.join("; ")),
                    );
                }
                let get = |k: &str| m.metric(k).unwrap_or(f64::NAN);
                CellSummary {
                    path: if m2 { "M2" } else { "M1" }.into(),
                    directory: dir.clone(),
                    n: m2.then_some(cell.network.n),
                    scaling: m2.then(|| scaling_name(cell.network.scaling).to_string()),
                    gamma: if m2 { get("gamma") } else { f64::NAN },
                    epsilon: if m2 { f64::NAN } else { cell.pde.epsilon },
                    status: m.status,
                    collapse_time: if m2 { get("collapse_time") } else { f64::NAN },
                    distance_final: if m2 { get("final_distance") } else { f64::NAN },
                    sup_phi: if m2 { f64::NAN } else { get("sup_phi") },
                    support_width: if m2 { f64::NAN } else { get("support_width") },
                }
            }
            Err(e) => {
                manifest.fail(ManifestStatus::Partial, format!("{dir}: {e}"));
                CellSummary {
                    path: if m2 { "M2" } else { "M1" }.into(),
                    directory: dir.clone(),
                    n: m2.then_some(cell.network.n),
                    scaling: m2.then(|| scaling_name(cell.network.scaling).to_string()),
                    gamma: f64::NAN,
                    epsilon: if m2 { f64::NAN } else { cell.pde.epsilon },
                    status: ManifestStatus::Failed,
                    collapse_time: f64::NAN,
                    distance_final: f64::NAN,
                    sup_phi: f64::NAN,
                    support_width: f64::NAN,
                }
            }
        };
        let status = serde_json::to_value(summary.status).expect("status serializes");
        table.push_cells(vec![
            summary.path.clone(),
            summary.n.map_or(String::new(), |n| n.to_string()),
            summary.scaling.clone().unwrap_or_default(),
            format_number(summary.gamma),
            format_number(summary.epsilon),
            status.as_str().unwrap_or_default().to_string(),
            format_number(summary.collapse_time),
            format_number(summary.distance_final),
            format_number(summary.sup_phi),
            format_number(summary.support_width),
        ]);
        summaries.push(summary);
    }
    writer.write_csv("summary.csv", &table)?;
    manifest.set_metric("cells", summaries.len() as f64);
    manifest.set_metric(
        "failed_cells",
        summaries
            .iter()
            .filter(|c| c.status != ManifestStatus::Completed)
            .count() as f64,
    );
    Ok(summaries)
}

/// Runs every grid cell concurrently, each in its own subdirectory, and
/// writes `summary.csv` plus a manifest covering all cell artifacts.
pub fn sweep_double_limit(spec: &ExperimentSpec, out_dir: &Path) -> Result<DoubleLimitReport> {
    let mut writer = ArtifactWriter::new(out_dir)?;
    let mut manifest = RunManifest::new(spec);
    manifest.kind = ExperimentKind::DoubleLimitSweep.name().into();
    let cells = double_limit(spec, &mut writer, &mut manifest)?;
    manifest.files = writer.into_files();
    manifest.write(out_dir)?;
    Ok(DoubleLimitReport { cells, manifest })
}

/// Network model in force at time `t` after the configured perturbations.
pub fn model_at(model: &NetworkModel, cfg: &RunConfig, t: f64) -> Result<NetworkModel> {
    let mut events: Vec<_> = cfg
        .perturbations
        .iter()
        .filter(|e| e.t_event <= t + 0.5 * cfg.dt)
        .collect();
    events.sort_by(|a, b| a.t_event.total_cmp(&b.t_event));
    let mut current = model.clone();
    for e in events {
        current = apply_perturbation(&current, e)?;
    }
    Ok(current)
}

/// Balance prediction from one recorded sample: chemical balance voltages
/// from the sample's `s̄`, or the mean voltage for other models.
pub fn predicted_balance(
    model: &NetworkModel,
    sample: &Sample,
    dim: usize,
) -> Result<BalanceReport> {
    match chemical_structure(model) {
        Ok((g, reversal)) => {
            if dim < 3 {
                return Err(Error::MissingStatistic("synaptic coordinate".into()));
            }
            BalanceReport::chemical(&g, reversal, [sample.means[2], sample.means[dim + 2]])
        }
        Err(_) => {
            let g = model.coupling()[0][0];
            Ok(BalanceReport {
                voltages: (0..model.n_populations())
                    .map(|p| sample.means[p * dim])
                    .collect(),
                stable: vec![g > 0.0; model.n_populations()],
                marginal: vec![g == 0.0; model.n_populations()],
                rates: vec![-g; model.n_populations()],
                denominators: vec![g; model.n_populations()],
                sbar: Vec::new(),
            })
        }
    }
}

/// Predicted balance voltages at every recorded sample (NaN where the
/// prediction is degenerate).
pub fn balance_series(
    model: &NetworkModel,
    cfg: &RunConfig,
    record: &RunRecord,
) -> Result<Vec<Option<BalanceReport>>> {
    let mut events: Vec<f64> = cfg.perturbations.iter().map(|e| e.t_event).collect();
    events.sort_by(f64::total_cmp);
    let mut cache: Vec<(usize, NetworkModel)> = Vec::new();
    record
        .samples
        .iter()
        .map(|s| {
            let active = events
                .iter()
                .filter(|&&te| te <= s.t + 0.5 * cfg.dt)
                .count();
            if !cache.iter().any(|(k, _)| *k == active) {
                cache.push((active, model_at(model, cfg, s.t)?));
            }
            let m = &cache.iter().find(|(k, _)| *k == active).expect("cached").1;
            match predicted_balance(m, s, record.dim) {
                Ok(r) => Ok(Some(r)),
                Err(Error::DegenerateDenominator { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn balance_analysis(
    spec: &ExperimentSpec,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<()> {
    let model = spec.network_model()?;
    let cfg = spec.run_config(&model)?;
    let record = simulate(&model, &spec.initial_conditions(), &cfg)?;
    write_record(spec, &model, &record, writer, manifest)?;
    let reports = balance_series(&model, &cfg, &record)?;
    let labels = labels(&model);
    let pops = model.n_populations();
    let d = record.dim;

    let mut header = vec!["t".to_string()];
    for label in &labels {
        for col in ["mean", "xstar", "rate", "sbar"] {
            header.push(format!("{col}_{label}"));
        }
    }
    header.push("distance".into());
    let mut table = CsvTable::new(header);
    for (s, r) in record.samples.iter().zip(&reports) {
        let mut row = vec![s.t];
        for p in 0..pops {
            row.push(s.means[p * d]);
            match r {
                Some(r) => {
                    row.push(r.voltages[p]);
                    row.push(r.rates[p]);
                    row.push(r.sbar.get(p).copied().unwrap_or(f64::NAN));
                }
                None => row.extend([f64::NAN; 3]),
            }
        }
        row.push(s.distance);
        table.push(&row);
    }
    writer.write_csv("balance.csv", &table)?;

    let mut first_event = cfg
        .perturbations
        .iter()
        .map(|e| e.t_event)
        .fold(f64::INFINITY, f64::min);
    if !first_event.is_finite() {
        first_event = f64::INFINITY;
    }
    let gap_at = |k: usize, p: usize| -> f64 {
        match &reports[k] {
            Some(r) => {
                let traced: Vec<f64> = record
                    .trace_agents
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| model.population_of(a) == p)
                    .map(|(slot, _)| record.samples[k].traces[slot * d])
                    .collect();
                let x = r.voltages[p];
                traced.iter().map(|v| (v - x).abs()).fold(0.0, f64::max)
                    / x.abs().max(f64::MIN_POSITIVE)
            }
            None => f64::NAN,
        }
    };
    let last = record.samples.len() - 1;
    let pre = record
        .samples
        .iter()
        .rposition(|s| s.t < first_event - 0.5 * cfg.dt);
    for (p, label) in labels.iter().enumerate() {
        manifest.set_metric(format!("final_relative_gap_{label}"), gap_at(last, p));
        if let (Some(k), true) = (pre, first_event.is_finite()) {
            manifest.set_metric(format!("pre_event_relative_gap_{label}"), gap_at(k, p));
        }
        if let Some(r) = &reports[last] {
            manifest.set_metric(format!("xstar_{label}"), r.voltages[p]);
            manifest.set_metric(format!("rate_{label}"), r.rates[p]);
            manifest.set_metric(
                format!("stable_{label}"),
                if r.stable[p] { 1.0 } else { 0.0 },
            );
        }
    }

    if !record.snapshots.is_empty() {
        let mut clusters = CsvTable::new(["t", "pivot", "fraction_above", "fraction_below", "gap"]);
        for snap in &record.snapshots {
            let k = record
                .samples
                .iter()
                .position(|s| s.t >= snap.t - 0.5 * cfg.dt)
                .unwrap_or(last);
            let Some(r) = &reports[k] else { continue };
            let split = cluster_split(&snap.coordinate(0, 0), r.voltages[0])?;
            clusters.push(&[
                snap.t,
                r.voltages[0],
                split.fraction_above,
                split.fraction_below,
                split.gap,
            ]);
        }
        writer.write_csv("clusters.csv", &clusters)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::config::NetworkKind;
    use super::*;

    fn small_network(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(kind, 11);
        spec.network.n = 40;
        spec.network.t_end = 0.05;
        spec.network.dt = 1e-3;
        spec.network.trace_per_population = 4;
        spec.network.snapshot_times = vec![0.0, 0.05];
        spec
    }

    #[test]
    fn network_run_writes_inventory() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_network(ExperimentKind::NetworkRun);
        let m = run_experiment(&spec, dir.path()).unwrap();
        assert!(m.completed(), "{:?}", m.errors);
        for f in [
            "traces.csv",
            "moments.csv",
            "hist_V_t0.csv",
            "hist_V_t0.05.csv",
        ] {
            assert!(m.file(f).is_some(), "{f} missing");
        }
        assert!(m.verify(dir.path()).is_empty());
        let traces = std::fs::read_to_string(dir.path().join("traces.csv")).unwrap();
        assert!(traces.starts_with("t,V0_v,V0_w,V1_v"));
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn module_errors_land_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_network(ExperimentKind::NetworkRun);
        spec.network.dt = 0.04;
        let m = run_experiment(&spec, dir.path()).unwrap();
        assert_eq!(m.status, ManifestStatus::Failed);
        assert!(m.files.is_empty());
    }

    #[test]
    fn balance_columns_for_chemical_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_network(ExperimentKind::BalanceAnalysis);
        spec.network.model = NetworkKind::Chemical;
        spec.network.scaling = ScalingKind::ScaledLinear;
        spec.network.scaling_param = 0.1;
        let m = run_experiment(&spec, dir.path()).unwrap();
        assert!(m.completed(), "{:?}", m.errors);
        let text = std::fs::read_to_string(dir.path().join("balance.csv")).unwrap();
        assert!(text
            .starts_with("t,mean_E,xstar_E,rate_E,sbar_E,mean_I,xstar_I,rate_I,sbar_I,distance\n"));
        assert!(m.metric("xstar_E").is_some() && m.file("clusters.csv").is_some());
    }
}
