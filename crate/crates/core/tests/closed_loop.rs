use trackloc::filter::FilterConfig;
use trackloc::harness::runlog::log_digest;
use trackloc::harness::{
    compute_report, replay, run_scenario, run_sweep, DriveMode, Record, ReplayOptions, RunLog, Scenario, SweepSpec,
    Termination,
};

fn short(seed: u64, secs: f64) -> Scenario {
    let mut sc = Scenario { seed, ..Default::default() };
    sc.run.laps = 0;
    sc.run.max_duration = secs;
    sc
}

fn drive(sc: &Scenario) -> RunLog {
    let prep = sc.prepare().unwrap();
    let mut log = RunLog::default();
    let out = run_scenario(&prep, &mut log).unwrap();
    assert_eq!(out.termination, Termination::Timeout);
    log
}

#[test]
fn log_survives_a_file_round_trip() {
    let log = drive(&short(3, 3.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.log");
    log.save(&path).unwrap();
    let back = RunLog::load(&path).unwrap();
    assert!(!back.truncated);
    assert_eq!(back.records.len(), log.records.len());
    assert_eq!(log_digest(&back).unwrap(), log_digest(&log).unwrap());

    let mut text = Vec::new();
    back.export_text(&mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("header version=1"));
    assert_eq!(text.lines().count(), back.records.len());
}

#[test]
fn truncated_log_still_replays() {
    let sc = short(4, 3.0);
    let prep = sc.prepare().unwrap();
    let bytes = drive(&sc).to_bytes().unwrap();
    let cut = RunLog::from_bytes(&bytes[..bytes.len() * 2 / 3 + 5]).unwrap();
    assert!(cut.truncated);

    let opts = ReplayOptions { filter: sc.filter.clone(), init: sc.init, seed: None, bin_width: 1.0 };
    let out = replay(&cut, prep.map.clone(), prep.centerline.as_ref(), &opts).unwrap();
    assert!(out.report.truncated);
    assert!(out.report.notes.iter().any(|n| n.contains("truncated")));
    assert!(out.report.mean_error.unwrap() < 0.5);
}

#[test]
fn weak_cost_map_likelihood_degrades_replay() {
    let sc = short(5, 12.0);
    let prep = sc.prepare().unwrap();
    let log = drive(&sc);
    let run = |lambda: f64| {
        let opts = ReplayOptions {
            filter: FilterConfig { lambda, ..sc.filter.clone() },
            init: sc.init,
            seed: None,
            bin_width: 1.0,
        };
        replay(&log, prep.map.clone(), prep.centerline.as_ref(), &opts).unwrap().report.mean_error.unwrap()
    };
    let (normal, weak) = (run(8.0), run(0.001));
    assert!(weak > 2.0 * normal, "λ = 0.001 gave {weak:.3} m vs {normal:.3} m");
}

#[test]
fn mapless_run_has_no_estimates() {
    let mut sc = short(6, 3.0);
    sc.run.mode = DriveMode::Mapless;
    let prep = sc.prepare().unwrap();
    let log = drive(&sc);
    assert_eq!(log.estimates().count(), 0);
    assert!(log.records.iter().any(|r| matches!(r, Record::Frame(_))));
    let report = compute_report(&log, prep.centerline.as_ref(), Some(&prep.map), 1.0).unwrap();
    assert_eq!(report.mean_error, None);
    assert!(report.max_speed > 1.0);
}

#[test]
fn single_cell_sweep_matches_run() {
    let sc = short(7, 2.0);
    let prep = sc.prepare().unwrap();
    let direct = compute_report(&drive(&sc), prep.centerline.as_ref(), Some(&prep.map), 1.0).unwrap();
    let table = run_sweep(&sc, &SweepSpec::from_toml_str("seeds = 1").unwrap()).unwrap();
    assert_eq!(table.cells.len(), 1);
    assert_eq!(table.cells[0].reports.len(), 1);
    assert_eq!(table.cells[0].reports[0].mean_error, direct.mean_error);
    assert!(table.to_csv().lines().count() >= 2);
}
