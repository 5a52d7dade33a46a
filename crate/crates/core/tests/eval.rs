use hmppo::baselines::{priority_shares, GreedyController, StaticController};
use hmppo::env::{QoSRecord, ResourcePool, Scenario, SlicingEnv, UserId};
use hmppo::eval::{
    bucket_ranges, evaluate, format_utilization, load_sweep, qos_satisfaction_rate, read_json, shared_trace,
    throughput_series, throughput_trace, utilization_report, utilization_tables, write_json, ExperimentConfig, Method,
    SweepResult,
};
use hmppo::traffic::{synth_trace, Pattern, TrafficTrace};
use hmppo::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heuristics_only() -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![Method::Greedy, Method::Static],
        seeds: vec![0, 1],
        horizon: Some(60),
        ..ExperimentConfig::default()
    }
}

#[test]
fn satisfaction_matches_a_brute_force_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(1..60);
        let records: Vec<QoSRecord> = (0..n)
            .map(|u| QoSRecord {
                user_id: UserId(u),
                achieved_rate: 0.0,
                delay: 0.0,
                reliability: 1.0,
                delay_violation: rng.gen_bool(0.3),
                throughput_violation: rng.gen_bool(0.2),
                reliability_violation: rng.gen_bool(0.1),
            })
            .collect();
        let mut ok = 0;
        for r in &records {
            if !r.delay_violation && !r.throughput_violation && !r.reliability_violation {
                ok += 1;
            }
        }
        assert_eq!(qos_satisfaction_rate(&records).unwrap(), ok as f64 / n as f64);
    }
    assert!(matches!(qos_satisfaction_rate(&[]), Err(Error::InvalidInput(_))));
}

#[test]
fn single_point_sweep_equals_direct_evaluation() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Greedy],
        loads: vec![0.6],
        seeds: vec![3],
        ..heuristics_only()
    };
    let r = load_sweep(&cfg).unwrap();
    assert_eq!(r.curves.len(), 1);
    assert_eq!(r.curves[0].points.len(), 1);
    let sc = cfg.scenario().unwrap();
    let direct = evaluate(&mut GreedyController, &sc, cfg.trace(&sc, 0.6, 3).unwrap(), 3).unwrap();
    assert_eq!(r.curves[0].points[0].satisfaction.mean, direct.satisfaction);
    assert_eq!(r.curves[0].points[0].per_seed, vec![direct.satisfaction]);
}

#[test]
fn sweep_loads_come_out_sorted() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Static],
        loads: vec![1.0, 0.2, 0.6, 0.2],
        ..heuristics_only()
    };
    let r = load_sweep(&cfg).unwrap();
    let loads: Vec<f64> = r.curves[0].points.iter().map(|p| p.load).collect();
    assert_eq!(loads, vec![0.2, 0.6, 1.0]);
}

#[test]
fn static_slicing_is_no_better_at_full_load() {
    let sc = Scenario::desk();
    let shares = priority_shares(&sc.census().specs);
    for seed in 0..3 {
        let at = |load: f64| {
            let mut c = StaticController::new(shares.clone(), 3).unwrap();
            let trace = synth_trace(load, Pattern::Diurnal, sc.env.horizon, seed, 3).unwrap();
            evaluate(&mut c, &sc, trace, seed).unwrap().satisfaction
        };
        assert!(at(1.0) <= at(0.2));
    }
}

#[test]
fn sweep_without_any_checkpoint_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        methods: vec![Method::Hmppo, Method::Dqn],
        out_dir: dir.path().to_path_buf(),
        ..heuristics_only()
    };
    assert!(matches!(load_sweep(&cfg), Err(Error::NotFound(_))));
    let mixed = ExperimentConfig {
        methods: vec![Method::Hmppo, Method::Greedy],
        ..cfg
    };
    assert_eq!(load_sweep(&mixed).unwrap().curves.len(), 1);
}

#[test]
fn abundant_capacity_serves_constant_offered_load() {
    let mut sc = Scenario::desk();
    sc.env.poisson_arrivals = false;
    sc.env.horizon = 40;
    sc.pool = ResourcePool {
        radio_capacity: 1e6,
        bandwidth_capacity: 1e12,
        compute_capacity: 1e15,
    };
    let offered: f64 = sc.census().users.iter().map(|u| u.arrival_rate).sum::<f64>() * 0.5;
    let rec = throughput_series(&mut GreedyController, &sc, TrafficTrace::constant(0.5, 40, 3), 0, None).unwrap();
    assert_eq!(rec.throughput.len(), 40);
    for t in &rec.throughput {
        assert!((t - offered).abs() <= 1e-9 * offered, "{t} vs {offered}");
    }
}

#[test]
fn diurnal_trace_series_span_the_horizon() {
    let cfg = heuristics_only();
    let r = throughput_trace(&cfg).unwrap();
    assert_eq!(r.series.len(), 2);
    assert_eq!(r.load.len(), 60);
    assert!(r.series.iter().all(|s| s.throughput.len() == 60));

    let sc = cfg.scenario().unwrap();
    let base = cfg.trace(&sc, cfg.trace_load, 0).unwrap();
    let boosted = shared_trace(&cfg, &sc).unwrap();
    assert_eq!(boosted.multipliers[..60], base.multipliers[..60]);
}

#[test]
fn zero_capacity_pool_serves_nothing() {
    let sc = Scenario::desk();
    let zero = ResourcePool {
        radio_capacity: 0.0,
        bandwidth_capacity: 0.0,
        compute_capacity: 0.0,
    };
    let trace = synth_trace(0.6, Pattern::Diurnal, sc.env.horizon, 1, 3).unwrap();
    let rec = throughput_series(&mut GreedyController, &sc, trace, 1, Some(zero)).unwrap();
    assert_eq!(rec.throughput.len(), sc.env.horizon);
    assert!(rec.throughput.iter().all(|t| *t == 0.0));
    assert!(matches!(
        utilization_report(&[vec![[0.0; 3]]], &zero),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn utilization_tables_cover_every_bucket() {
    let cfg = ExperimentConfig {
        utilization_buckets: 6,
        ..heuristics_only()
    };
    let tables = utilization_tables(&cfg).unwrap();
    assert_eq!(tables.len(), 2);
    for t in &tables {
        assert_eq!(t.rows.len(), 6);
        for r in &t.rows {
            for v in [r.radio, r.bandwidth, r.compute, r.overall] {
                assert!((0.0..=100.0).contains(&v));
            }
            assert!((r.overall - (r.radio + r.bandwidth + r.compute) / 3.0).abs() < 1e-9);
        }
    }
    let text = format_utilization(&tables);
    assert!(text.contains("T1") && text.contains("T6") && !text.contains("T7"));
    let covered: usize = bucket_ranges(60, 6).iter().map(|(a, b)| b - a).sum();
    assert_eq!(covered, 60);
}

#[test]
fn result_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = heuristics_only();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    write_json(&a, &load_sweep(&cfg).unwrap()).unwrap();
    write_json(&b, &load_sweep(&cfg).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back: SweepResult = read_json(&a).unwrap();
    assert_eq!(back, load_sweep(&cfg).unwrap());
}

#[test]
fn environment_runs_under_cdr_traffic() {
    let fixture = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/milan_2cells_100.tsv");
    let dir = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = toml::from_str(&format!(
        r#"
        methods = ["greedy"]
        seeds = [0]
        loads = [0.5]
        horizon = 80
        [traffic]
        kind = "cdr"
        path = "{}"
        cache_dir = "{}"
        "#,
        fixture.display(),
        dir.path().join("cache").display()
    ))
    .unwrap();
    let sc = cfg.scenario().unwrap();
    let trace = cfg.trace(&sc, 0.5, 0).unwrap();
    assert_eq!(trace.len(), 80);
    assert!((trace.mean() - 0.5).abs() < 1e-9);
    let mut env = SlicingEnv::new(&sc, trace, 0);
    let rec = hmppo::eval::run_episode(&mut GreedyController, &mut env).unwrap();
    assert!((0.0..=1.0).contains(&rec.satisfaction));
}
