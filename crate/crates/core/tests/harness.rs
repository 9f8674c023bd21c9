use std::path::Path;

use balnet::harness::config::{
    ExperimentKind, ExperimentSpec, PdeInitKind, PdeModelKind, ScalingKind,
};
use balnet::harness::figures::figure_runs;
use balnet::harness::{
    double_limit_cells, emit_figure_data, parse_config, run_experiment, sweep_double_limit,
    FigureId, FigureRun, FigureStatus, ManifestStatus, RunManifest,
};
use balnet::pde::epsilon_sweep;
use balnet::simulate;

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .map(|c| c.parse::<f64>().unwrap())
                .collect()
        })
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn noiseless_uncoupled_traces_follow_the_ode() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::NetworkRun, 3);
    spec.network.n = 5;
    spec.network.t_end = 1.0;
    spec.network.dt = 1e-4;
    spec.network.record_every = 100;
    spec.network.snapshot_times = vec![];
    spec.electrical.g = 0.0;
    spec.electrical.sigma = 0.0;
    spec.electrical.v_sd = 1.0;
    spec.electrical.w_sd = 1.0;
    let m = run_experiment(&spec, dir.path()).unwrap();
    assert!(m.completed(), "{:?}", m.errors);
    let (header, rows) = read_csv(&dir.path().join("traces.csv"));
    let (a, b) = (spec.electrical.a, spec.electrical.b);
    let f = |v: f64| v * (1.0 - v) * (v - 4.0) + 4.0;
    for j in 0..5 {
        let (cv, cw) = (
            column(&header, &format!("V{j}_v")),
            column(&header, &format!("V{j}_w")),
        );
        let (mut v, mut w) = (rows[0][cv], rows[0][cw]);
        // midpoint-rule oracle at a much finer step
        let h = 1e-6;
        let mut t = 0.0;
        let mut sup = 0.0f64;
        for row in &rows {
            while t < row[0] - 0.5 * h {
                let (vm, wm) = (v + 0.5 * h * (f(v) - w), w + 0.5 * h * a * (b * v - w));
                v += h * (f(vm) - wm);
                w += h * a * (b * vm - wm);
                t += h;
            }
            sup = sup.max((row[cv] - v).abs()).max((row[cw] - w).abs());
        }
        assert!(sup <= 1e-3, "agent {j}: {sup}");
    }
}

#[test]
fn ou_pde_run_records_small_stationary_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::PdeRun, 1);
    spec.pde.model = PdeModelKind::Ou;
    spec.pde.sigma = 1.0;
    spec.pde.ou_rate = 1.0;
    spec.pde.cells = 1024;
    spec.pde.t_end = 10.0;
    spec.pde.init = PdeInitKind::Normal;
    let m = run_experiment(&spec, dir.path()).unwrap();
    assert!(m.completed(), "{:?}", m.errors);
    let l1 = m.metric("stationary_l1").unwrap();
    assert!(l1 <= 1e-2, "{l1}");
    assert!(m.metric("mass_drift_per_time").unwrap() <= 1e-10);
}

#[test]
fn identical_specs_give_identical_digests() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::chemical(ExperimentKind::BalanceAnalysis, 8);
    spec.network.n = 60;
    spec.network.t_end = 0.02;
    spec.network.dt = 1e-4;
    let a = run_experiment(&spec, &dir.path().join("a")).unwrap();
    let b = run_experiment(&spec, &dir.path().join("b")).unwrap();
    assert!(a.completed());
    assert_eq!(a.files, b.files);
    assert!(a.verify(&dir.path().join("a")).is_empty());
    assert_eq!(
        std::fs::read(dir.path().join("a/manifest.json")).unwrap(),
        std::fs::read(dir.path().join("b/manifest.json")).unwrap()
    );
}

#[test]
fn single_cell_sweep_equals_run_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::DoubleLimitSweep, 4);
    spec.sweep.ns = vec![80];
    spec.sweep.scalings = vec![ScalingKind::Linear];
    let report = sweep_double_limit(&spec, dir.path()).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert!(report.manifest.completed());

    let cells = double_limit_cells(&spec);
    let (sub, cell) = &cells[0];
    let direct = run_experiment(cell, &dir.path().join("direct")).unwrap();
    let in_sweep = RunManifest::read(&dir.path().join(sub)).unwrap();
    assert_eq!(in_sweep.files, direct.files);
    assert_eq!(in_sweep.metrics, direct.metrics);
    assert_eq!(
        report.cells[0].collapse_time,
        direct.metric("collapse_time").unwrap()
    );
    assert!(report.manifest.verify(dir.path()).is_empty());
}

#[test]
fn collapse_time_scales_inversely_with_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(ExperimentKind::DoubleLimitSweep, 5);
    let report = sweep_double_limit(&spec, dir.path()).unwrap();
    assert!(report.manifest.completed(), "{:?}", report.manifest.errors);
    for n in [100, 300] {
        let cell = |s: &str| {
            report
                .cells
                .iter()
                .find(|c| c.n == Some(n) && c.scaling.as_deref() == Some(s))
                .unwrap()
        };
        let (lin, sqrt) = (cell("linear"), cell("sqrt"));
        let measured = sqrt.collapse_time / lin.collapse_time;
        let predicted = lin.gamma / sqrt.gamma;
        assert!(
            (measured / predicted - 1.0).abs() <= 0.3,
            "n = {n}: measured ratio {measured}, γ ratio {predicted}"
        );
    }
}

#[test]
fn epsilon_column_matches_epsilon_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::DoubleLimitSweep, 6);
    spec.sweep.ns = vec![];
    spec.sweep.include_pde_column = true;
    spec.sweep.epsilons = vec![0.4, 0.2];
    spec.sweep.t_end = 0.3;
    spec.sweep.t0 = 0.1;
    spec.sweep.cells = 256;
    let report = sweep_double_limit(&spec, dir.path()).unwrap();
    assert!(report.manifest.completed(), "{:?}", report.manifest.errors);
    let reference = epsilon_sweep(&spec.sweep_spec()).unwrap();
    assert_eq!(report.cells.len(), reference.runs.len());
    for (cell, run) in report.cells.iter().zip(&reference.runs) {
        assert_eq!(cell.path, "M1");
        assert_eq!(cell.epsilon, run.epsilon);
        assert_eq!(cell.sup_phi, run.sup_phi);
        assert_eq!(cell.support_width, run.support_width);
    }
}

#[test]
fn failed_cells_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::DoubleLimitSweep, 7);
    spec.sweep.ns = vec![50];
    spec.sweep.horizon = 0.5;
    spec.sweep.include_pde_column = true;
    spec.sweep.epsilons = vec![0.4];
    spec.sweep.t_end = 0.1;
    spec.sweep.cells = 128;
    // The coupling step guard rejects this step for the network cells only.
    spec.sweep.dt = 0.5;
    let report = sweep_double_limit(&spec, dir.path()).unwrap();
    assert_eq!(report.manifest.status, ManifestStatus::Partial);
    let statuses: Vec<_> = report
        .cells
        .iter()
        .map(|c| (c.path.as_str(), c.status))
        .collect();
    assert_eq!(
        statuses,
        [
            ("M2", ManifestStatus::Failed),
            ("M2", ManifestStatus::Failed),
            ("M1", ManifestStatus::Completed)
        ]
    );
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn fig1_dispersion_ends_near_the_ou_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::NetworkRun, 12);
    spec.network.t_end = 0.2;
    spec.network.snapshot_times = vec![0.0, 0.2];
    let runs = figure_runs(&spec).unwrap();
    let fig1: Vec<FigureRun> = runs
        .into_iter()
        .filter(|(id, r)| *id == FigureId::Fig1 && r.label.is_empty())
        .map(|(_, r)| r)
        .collect();
    let out = emit_figure_data(&fig1, FigureId::Fig1, dir.path()).unwrap();
    assert_eq!(out.status, FigureStatus::Written);
    let (header, rows) = read_csv(&dir.path().join("fig1_dispersion.csv"));
    let sd = rows.last().unwrap()[column(&header, "std_x")];
    let oracle = 1.0 / (2.0f64 * 300.0).sqrt();
    assert!((sd - oracle).abs() <= 0.5 * oracle, "{sd} vs {oracle}");
}

#[test]
fn fig2a_late_voltages_track_the_predicted_balance() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::chemical(ExperimentKind::BalanceAnalysis, 13);
    spec.network.n = 5000;
    spec.network.dt = 1e-5;
    spec.network.t_end = 0.1;
    spec.network.record_every = 100;
    spec.network.snapshot_times = vec![];
    let model = spec.network_model().unwrap();
    let config = spec.run_config(&model).unwrap();
    let record = simulate(&model, &spec.initial_conditions(), &config).unwrap();
    let run = FigureRun {
        label: String::new(),
        model,
        config,
        record,
    };
    emit_figure_data(&[run], FigureId::Fig2, dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("fig2_traces.csv"));
    let xe = column(&header, "xstar_E");
    let late: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= 0.08).collect();
    assert!(!late.is_empty());
    for row in late {
        for j in 0..20 {
            let v = row[column(&header, &format!("E{j}"))];
            assert!(
                (v - row[xe]).abs() <= 0.05 * row[xe].abs(),
                "t = {}: E{j} = {v}, x* = {}",
                row[0],
                row[xe]
            );
        }
    }
}

#[test]
fn defaults_emitted_for_every_kind_parse_back() {
    use balnet::harness::emit_config;
    for kind in [
        ExperimentKind::NetworkRun,
        ExperimentKind::RescaledEarly,
        ExperimentKind::PdeRun,
        ExperimentKind::EpsilonSweep,
        ExperimentKind::DoubleLimitSweep,
        ExperimentKind::BalanceAnalysis,
    ] {
        let spec = ExperimentSpec::chemical(kind, 99);
        assert_eq!(parse_config(&emit_config(&spec)).unwrap(), spec);
    }
}
