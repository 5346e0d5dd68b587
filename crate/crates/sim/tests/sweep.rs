use localscore_sim::{convergence_sweep, rate_warnings, Error, SweepConfig, SynthConfig};

fn economy() -> localscore_sim::Economy {
    let mut config = SynthConfig::mixed(0, 8, 0.5, 3);
    config.type_pool = Some(40);
    config.max_list = 4;
    config.economy().unwrap()
}

#[test]
fn cube_root_schedule_shrinks_deviation() {
    let config = SweepConfig::cube_root(&[500, 2000, 8000], 10_000, 7);
    let t = std::time::Instant::now();
    let report = convergence_sweep(&economy(), &config).unwrap();
    eprintln!("{:#?} in {:?}", report, t.elapsed());
    assert!(report.warnings.is_empty());
    assert!(report.is_decreasing(), "{report:?}");
}

#[test]
fn schedule_checks() {
    assert!(matches!(
        convergence_sweep(&economy(), &SweepConfig { schedule: vec![], draws: 10, seed: 1, min_occupancy: 1 }),
        Err(Error::EmptySchedule)
    ));
    assert!(rate_warnings(&[(500, 0.1), (2000, 0.2)]).len() == 1);
    assert_eq!(rate_warnings(&[(500, 0.1), (400, 0.1)]).len(), 2);
    assert!(rate_warnings(&[(500, 0.2), (1000, 0.05)]).iter().any(|w| w.contains("N * delta")));
}
