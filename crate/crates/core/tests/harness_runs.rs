use std::fs;

use taultn_core::harness::{
    emit_field_grid, read_stamped_records, replay_sample, run_descent_study, run_limit_cycle_study,
    run_monte_carlo, ExperimentConfig, ExperimentKind, MonteCarloConfig, RunDir, SampleRecord,
    SpecSource,
};
use taultn_core::net::SpecJson;
use taultn_core::NetworkSpec;

fn small_mc() -> MonteCarloConfig {
    MonteCarloConfig {
        dimensions: vec![3],
        samples: 4,
        initial_conditions: 2,
        ..Default::default()
    }
}

#[test]
fn monte_carlo_artifacts_replay_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::MonteCarlo);
    cfg.seed = Some(77);
    cfg.monte_carlo = small_mc();
    cfg.validate().unwrap();
    let run = RunDir::create(dir.path(), &cfg).unwrap();
    let report = run_monte_carlo(&cfg.monte_carlo, 77, Some(&run)).unwrap();
    assert!(report.balanced());

    let text = fs::read_to_string(dir.path().join("samples/n3.jsonl")).unwrap();
    let (stamp, records): (_, Vec<SampleRecord>) = read_stamped_records(&text).unwrap();
    assert_eq!(stamp.config_hash, cfg.hash());
    assert_eq!(records, report.records);
    for r in &records {
        assert_eq!(&replay_sample(r, &cfg.monte_carlo).unwrap(), r);
    }
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn artifacts_from_another_config_are_rejected() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = ExperimentConfig::new(ExperimentKind::MonteCarlo);
    ca.seed = Some(1);
    ca.monte_carlo = small_mc();
    let mut cb = ca.clone();
    cb.seed = Some(2);
    for (dir, cfg) in [(&a, &ca), (&b, &cb)] {
        let run = RunDir::create(dir.path(), cfg).unwrap();
        run_monte_carlo(&cfg.monte_carlo, cfg.seed.unwrap(), Some(&run)).unwrap();
    }
    let mixed = fs::read_to_string(a.path().join("samples/n3.jsonl")).unwrap()
        + &fs::read_to_string(b.path().join("samples/n3.jsonl")).unwrap();
    assert!(read_stamped_records::<SampleRecord>(&mixed).is_err());
}

#[test]
fn study_runs_write_their_files() {
    let rot =
        NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0]).unwrap();
    let osc =
        NetworkSpec::from_rows(&[&[4.1, -4.0], &[3.0, -0.5]], &[1.0, 1.0], &[0.5, -0.5]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::FieldGrid);
    cfg.spec = Some(SpecSource::Inline(SpecJson::from(&rot)));
    cfg.field.resolution = 8;
    let run = RunDir::create(dir.path(), &cfg).unwrap();
    emit_field_grid(&rot, &cfg.field, Some(&run)).unwrap();
    let grid = fs::read_to_string(dir.path().join("field_tau=0.0001.csv")).unwrap();
    assert!(grid.starts_with("x1,x2,v1,v2,speed"));
    assert_eq!(grid.lines().count(), 1 + 64);
    assert!(dir.path().join("locus_g1.csv").exists());

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::DescentStudy);
    cfg.descent.t_end_fast = 2.0;
    cfg.descent.s_end_slow = 2.0;
    let run = RunDir::create(dir.path(), &cfg).unwrap();
    let (_, study) = run_descent_study(&rot, &cfg.descent, None, Some(&run)).unwrap();
    assert_eq!(study.cells.len(), 2 * 5);
    let traces = fs::read_dir(dir.path().join("trajectories"))
        .unwrap()
        .count();
    assert_eq!(traces, 2 * 5);

    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::new(ExperimentKind::LimitCycle);
    let run = RunDir::create(dir.path(), &cfg).unwrap();
    let r = run_limit_cycle_study(&osc, &cfg.limit_cycle, Some(&run)).unwrap();
    assert!(r.oscillation_persists(1e-2));
    assert_eq!(
        fs::read_dir(dir.path().join("trajectories"))
            .unwrap()
            .count(),
        5
    );
}
