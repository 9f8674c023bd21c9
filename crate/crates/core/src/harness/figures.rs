//! Per-panel CSV data for the electrical (voltage collapse) and chemical
//! (balance voltage tracking) figures.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifacts::{format_number, ArtifactWriter, CsvTable, FileEntry};
use super::config::{ExperimentSpec, NetworkKind, PerturbationConfig, ScalingKind};
use super::experiments::balance_series;
use crate::error::{Error, Result};
use crate::model::{FhnChemicalParams, NetworkModel};
use crate::sim::{simulate, RunConfig, RunRecord};
use crate::stats::histogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
}

impl FigureId {
    fn prefix(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
        }
    }
}

/// A finished run with everything needed to derive its panels.
#[derive(Debug, Clone)]
pub struct FigureRun {
    /// Appended to file names as `_{label}` when nonempty.
    pub label: String,
    pub model: NetworkModel,
    pub config: RunConfig,
    pub record: RunRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FigureStatus {
    Written,
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureOutput {
    pub status: FigureStatus,
    pub files: Vec<FileEntry>,
}

/// Histogram range and resolution for the voltage-distribution panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBins {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        Self {
            lo: -15.0,
            hi: 15.0,
            bins: 60,
        }
    }
}

fn suffix(label: &str) -> String {
    if label.is_empty() {
        String::new()
    } else {
        format!("_{label}")
    }
}

/// Trace columns of population `p`, first `count` traced agents.
fn voltage_traces(run: &FigureRun, p: usize, count: usize) -> Vec<Vec<f64>> {
    run.record
        .trace_agents
        .iter()
        .enumerate()
        .filter(|(_, &a)| run.model.population_of(a) == p)
        .take(count)
        .map(|(slot, _)| run.record.trace_series(slot, 0))
        .collect()
}

fn fig1(run: &FigureRun, bins: HistogramBins, writer: &mut ArtifactWriter) -> Result<()> {
    let rec = &run.record;
    if rec.dim < 2 {
        return Err(Error::MissingStatistic(
            "recovery coordinate for std_y".into(),
        ));
    }
    if rec.snapshots.is_empty() {
        return Err(Error::MissingStatistic(
            "voltage snapshots for the histogram panels".into(),
        ));
    }
    let sfx = suffix(&run.label);
    let traces = voltage_traces(run, 0, 20);
    if traces.is_empty() {
        return Err(Error::MissingStatistic("voltage traces".into()));
    }
    let mut names = vec!["t".to_string()];
    names.extend((0..traces.len()).map(|j| format!("v{j}")));
    let mut columns = vec![rec.times()];
    columns.extend(traces);
    writer.write_csv(
        &format!("fig1_traces{sfx}.csv"),
        &CsvTable::from_columns(&names, &columns),
    )?;

    let names: Vec<String> = ["t", "std_x", "std_y"].map(String::from).to_vec();
    let columns = vec![rec.times(), rec.std_series(0, 0), rec.std_series(0, 1)];
    writer.write_csv(
        &format!("fig1_dispersion{sfx}.csv"),
        &CsvTable::from_columns(&names, &columns),
    )?;

    for snap in &rec.snapshots {
        let h = histogram(&snap.coordinate(0, 0), bins.lo, bins.hi, bins.bins)?;
        let mut table = CsvTable::new(["bin_lo", "bin_hi", "count", "density"]);
        let w = h.width();
        for (k, (&count, dens)) in h.counts.iter().zip(h.density()).enumerate() {
            let lo = h.lo + k as f64 * w;
            table.push(&[lo, lo + w, count as f64, dens]);
        }
        writer.write_csv(
            &format!("fig1_hist_t{}{sfx}.csv", format_number(snap.t)),
            &table,
        )?;
    }
    Ok(())
}

fn fig2(run: &FigureRun, writer: &mut ArtifactWriter) -> Result<()> {
    let rec = &run.record;
    if rec.n_populations != 2 || rec.dim < 3 {
        return Err(Error::MissingStatistic(
            "two populations with a synaptic coordinate".into(),
        ));
    }
    let reports = balance_series(&run.model, &run.config, rec)?;
    let e = voltage_traces(run, 0, 20);
    let i = voltage_traces(run, 1, 20);
    if e.is_empty() || i.is_empty() {
        return Err(Error::MissingStatistic("voltage traces".into()));
    }
    let mut names = vec!["t".to_string()];
    names.extend((0..e.len()).map(|j| format!("E{j}")));
    names.extend((0..i.len()).map(|j| format!("I{j}")));
    names.push("xstar_E".into());
    names.push("xstar_I".into());
    let predicted = |p: usize| -> Vec<f64> {
        reports
            .iter()
            .map(|r| r.as_ref().map_or(f64::NAN, |r| r.voltages[p]))
            .collect()
    };
    let mut columns = vec![rec.times()];
    columns.extend(e);
    columns.extend(i);
    columns.push(predicted(0));
    columns.push(predicted(1));
    writer.write_csv(
        &format!("fig2_traces{}.csv", suffix(&run.label)),
        &CsvTable::from_columns(&names, &columns),
    )?;
    Ok(())
}

/// Writes one CSV per panel of `figure` for every run into `out_dir`. An
/// empty run list writes nothing and reports `NO_DATA`.
pub fn emit_figure_data(
    runs: &[FigureRun],
    figure: FigureId,
    out_dir: &Path,
) -> Result<FigureOutput> {
    emit_figure_data_with(runs, figure, HistogramBins::default(), out_dir)
}

pub fn emit_figure_data_with(
    runs: &[FigureRun],
    figure: FigureId,
    bins: HistogramBins,
    out_dir: &Path,
) -> Result<FigureOutput> {
    if runs.is_empty() {
        return Ok(FigureOutput {
            status: FigureStatus::NoData,
            files: Vec::new(),
        });
    }
    let mut writer = ArtifactWriter::new(out_dir)?;
    for run in runs {
        match figure {
            FigureId::Fig1 => fig1(run, bins, &mut writer)?,
            FigureId::Fig2 => fig2(run, &mut writer)?,
        }
    }
    let files = writer
        .into_files()
        .into_iter()
        .filter(|f| f.path.starts_with(figure.prefix()))
        .collect();
    Ok(FigureOutput {
        status: FigureStatus::Written,
        files,
    })
}

/// Horizon of the long chemical panel; the conductance step happens halfway.
pub const FIG2_LONG_T: f64 = 20.0;
/// Horizon of the short chemical panels.
pub const FIG2_SHORT_T: f64 = 0.5;

fn figure_run(spec: &ExperimentSpec, label: &str) -> Result<FigureRun> {
    let model = spec.network_model()?;
    let config = spec.run_config(&model)?;
    let record = simulate(&model, &spec.initial_conditions(), &config)?;
    Ok(FigureRun {
        label: label.into(),
        model,
        config,
        record,
    })
}

/// The runs behind both figures, derived from one spec: the electrical runs
/// use its `[network]` and `[electrical]` sections with `γ` from the spec and
/// with `γ = √n`; the chemical runs use `[chemical]`, `network.n` and
/// `network.dt` with fixed horizons.
pub fn figure_runs(spec: &ExperimentSpec) -> Result<Vec<(FigureId, FigureRun)>> {
    let mut fig1_spec = spec.clone();
    fig1_spec.network.model = NetworkKind::Electrical;
    fig1_spec.network.perturbations.clear();
    let mut sqrt_spec = fig1_spec.clone();
    sqrt_spec.network.scaling = ScalingKind::Sqrt;

    let mut short = ExperimentSpec::chemical(spec.kind, spec.seed);
    short.chemical = spec.chemical.clone();
    short.network.n = spec.network.n;
    short.network.dt = spec.network.dt;
    short.network.t_end = FIG2_SHORT_T;
    let mut unstable = short.clone();
    let b = FhnChemicalParams::excitation_dominated();
    (
        unstable.chemical.g_ee,
        unstable.chemical.g_ei,
        unstable.chemical.g_ie,
        unstable.chemical.g_ii,
    ) = (b.g_ee, b.g_ei, b.g_ie, b.g_ii);
    let mut long = short.clone();
    long.network.t_end = FIG2_LONG_T;
    long.network.record_every = 100;
    long.network.snapshot_times.clear();
    long.network.perturbations = vec![PerturbationConfig {
        t: FIG2_LONG_T / 2.0,
        source: "E".into(),
        factor: 1.5,
    }];

    let plan: Vec<(FigureId, ExperimentSpec, &str)> = vec![
        (FigureId::Fig1, fig1_spec, ""),
        (FigureId::Fig1, sqrt_spec, "sqrt"),
        (FigureId::Fig2, short, ""),
        (FigureId::Fig2, unstable, "unstable"),
        (FigureId::Fig2, long, "long"),
    ];
    let runs: Vec<Result<(FigureId, FigureRun)>> = {
        use rayon::prelude::*;
        plan.par_iter()
            .map(|(id, s, label)| Ok((*id, figure_run(s, label)?)))
            .collect()
    };
    runs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::super::config::ExperimentKind;
    use super::*;

    fn tiny(spec: &mut ExperimentSpec) {
        spec.network.n = 30;
        spec.network.t_end = 0.02;
        spec.network.dt = 1e-3;
        spec.network.record_every = 2;
        spec.network.snapshot_times = vec![0.0, 0.02];
    }

    #[test]
    fn no_runs_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = emit_figure_data(&[], FigureId::Fig1, dir.path()).unwrap();
        assert_eq!(out.status, FigureStatus::NoData);
        assert!(out.files.is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn panel_files_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::new(ExperimentKind::NetworkRun, 5);
        tiny(&mut spec);
        let run = figure_run(&spec, "").unwrap();
        let out = emit_figure_data(&[run.clone()], FigureId::Fig1, dir.path()).unwrap();
        let names: Vec<&str> = out.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(
            names,
            [
                "fig1_dispersion.csv",
                "fig1_hist_t0.02.csv",
                "fig1_hist_t0.csv",
                "fig1_traces.csv"
            ]
        );
        let d = std::fs::read_to_string(dir.path().join("fig1_dispersion.csv")).unwrap();
        assert!(d.starts_with("t,std_x,std_y\n"));
        let t = std::fs::read_to_string(dir.path().join("fig1_traces.csv")).unwrap();
        assert_eq!(t.lines().next().unwrap().split(',').count(), 21);
        // electrical runs lack the panels of the chemical figure
        assert!(matches!(
            emit_figure_data(&[run], FigureId::Fig2, dir.path()),
            Err(Error::MissingStatistic(_))
        ));

        let mut chem = ExperimentSpec::chemical(ExperimentKind::BalanceAnalysis, 5);
        tiny(&mut chem);
        let run = figure_run(&chem, "a").unwrap();
        let out = emit_figure_data(&[run], FigureId::Fig2, dir.path()).unwrap();
        assert_eq!(out.files.len(), 1);
        let text = std::fs::read_to_string(dir.path().join("fig2_traces_a.csv")).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 43);
        assert_eq!(&header[41..], ["xstar_E", "xstar_I"]);
    }
}
