use balnet::sim::{CoordinateInit, InitialConditionSpec, RecordSpec};
use balnet::{
    build_fhn_chemical, build_fhn_electrical, simulate, FhnChemicalParams, FhnElectricalParams,
    RunConfig, RunRecord,
};
use proptest::prelude::*;

fn fig1(n: usize, g: f64, sigma: f64) -> FhnElectricalParams {
    FhnElectricalParams {
        n,
        g,
        sigma,
        ..FhnElectricalParams::default()
    }
}

/// Classical RK4 on `v' = f(v) − w`, `w' = a(b v − w)` with the cubic `v(1 − v)(v − 4) + 4`.
fn fhn_oracle(v0: f64, w0: f64, t_end: f64, h: f64) -> Vec<(f64, f64, f64)> {
    let (a, b) = (0.005, 6.0);
    let rhs = |v: f64, w: f64| (v * (1.0 - v) * (v - 4.0) + 4.0 - w, a * (b * v - w));
    let steps = (t_end / h).round() as usize;
    let mut out = vec![(0.0, v0, w0)];
    let (mut v, mut w) = (v0, w0);
    for k in 0..steps {
        let (k1v, k1w) = rhs(v, w);
        let (k2v, k2w) = rhs(v + 0.5 * h * k1v, w + 0.5 * h * k1w);
        let (k3v, k3w) = rhs(v + 0.5 * h * k2v, w + 0.5 * h * k2w);
        let (k4v, k4w) = rhs(v + h * k3v, w + h * k3w);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        out.push(((k + 1) as f64 * h, v, w));
    }
    out
}

#[test]
fn uncoupled_noiseless_run_matches_ode_oracle() {
    let model = build_fhn_electrical(&fig1(4, 0.0, 0.0)).unwrap();
    let init = InitialConditionSpec::Explicit(vec![0.5, 0.0, 2.0, 1.0, -1.0, 3.0, 3.5, -2.0]);
    let cfg = RunConfig::new(1.0, 1e-4, 1).with_record(RecordSpec {
        every: 100,
        trace_per_population: 4,
        snapshot_times: vec![],
    });
    let rec = simulate(&model, &init, &cfg).unwrap();
    assert!(rec.completed());
    let h = 1e-5;
    for slot in 0..4 {
        let agent = rec.trace_agents[slot];
        let (v0, w0) = (
            rec.samples[0].traces[slot * 2],
            rec.samples[0].traces[slot * 2 + 1],
        );
        assert_eq!(rec.final_state.agent(agent).len(), 2);
        let oracle = fhn_oracle(v0, w0, 1.0, h);
        let mut sup = 0.0f64;
        for s in &rec.samples {
            let k = (s.t / h).round() as usize;
            let (_, v, w) = oracle[k];
            sup = sup
                .max((s.traces[slot * 2] - v).abs())
                .max((s.traces[slot * 2 + 1] - w).abs());
        }
        assert!(sup <= 1e-3, "agent {agent}: sup error {sup}");
    }
}

fn chemical_run(threads: usize) -> RunRecord {
    let model = build_fhn_chemical(&FhnChemicalParams {
        n: 200,
        ..FhnChemicalParams::default()
    })
    .unwrap();
    let cfg = RunConfig::new(0.05, 1e-4, 42).with_record(RecordSpec {
        every: 10,
        trace_per_population: 5,
        snapshot_times: vec![0.0, 0.05],
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| simulate(&model, &InitialConditionSpec::chemical_default(), &cfg).unwrap())
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let reference = chemical_run(1);
    for threads in [2, 4, 8] {
        let other = chemical_run(threads);
        assert_eq!(other.samples, reference.samples, "{threads} threads");
        assert_eq!(other.final_state, reference.final_state);
        assert_eq!(other.snapshots, reference.snapshots);
    }
}

#[test]
fn noiseless_electrical_variance_contracts() {
    let params = fig1(300, 1.0, 0.0);
    let model = build_fhn_electrical(&params).unwrap();
    let cfg = RunConfig::new(0.2, 1e-4, 9).with_record(RecordSpec {
        every: 5,
        trace_per_population: 1,
        snapshot_times: vec![],
    });
    let rec = simulate(&model, &InitialConditionSpec::electrical_default(), &cfg).unwrap();
    let settle = 5.0 / (model.gamma() * params.g);
    let sd: Vec<(f64, f64)> = rec
        .times()
        .into_iter()
        .zip(rec.std_series(0, 0))
        .filter(|(t, _)| *t > settle)
        .collect();
    assert!(sd.len() > 10);
    for w in sd.windows(2) {
        assert!(
            w[1].1 <= w[0].1,
            "sd grew from {} to {} at t = {}",
            w[0].1,
            w[1].1,
            w[1].0
        );
    }
}

fn permuted_pair(perm: &[usize], seed: u64) -> (RunRecord, RunRecord) {
    let n = perm.len();
    let model = build_fhn_electrical(&fig1(n, 1.0, 1.0)).unwrap();
    let base = InitialConditionSpec::Independent(vec![vec![
        CoordinateInit::Normal { mean: 1.0, sd: 5.0 },
        CoordinateInit::Normal { mean: 1.5, sd: 5.0 },
    ]])
    .sample(&model, seed)
    .unwrap();
    let record = RecordSpec {
        every: 50,
        trace_per_population: 0,
        snapshot_times: vec![],
    };
    let cfg = RunConfig::new(0.05, 1e-4, seed).with_record(record);
    let original = simulate(
        &model,
        &InitialConditionSpec::Explicit(base.states.clone()),
        &cfg,
    )
    .unwrap();

    let states: Vec<f64> = perm.iter().flat_map(|&j| base.agent(j).to_vec()).collect();
    let mut cfg = cfg;
    cfg.stream_ids = Some(perm.iter().map(|&j| j as u64).collect());
    let permuted = simulate(&model, &InitialConditionSpec::Explicit(states), &cfg).unwrap();
    (original, permuted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relabelling_agents_relabels_trajectories(
        perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
        seed in 0u64..1000,
    ) {
        let (original, permuted) = permuted_pair(&perm, seed);
        for (k, &j) in perm.iter().enumerate() {
            prop_assert_eq!(permuted.final_state.agent(k), original.final_state.agent(j));
        }
    }
}
