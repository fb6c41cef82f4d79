use meshroles_harness::experiment::{aggregate, MetricsRow};
use meshroles_harness::stats::summarize;
use meshroles_harness::{
    emit_csv, emit_plot_data, plot_data_string, rows_csv_string, run_experiment, Algorithm, ExperimentConfig,
    HarnessError, RowStatus,
};
use proptest::prelude::*;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).unwrap()
}

#[test]
fn grid_with_two_algorithms() {
    let t = run_experiment(&cfg("grids = 3x3\nseeds = 0\nalgorithms = st, potatoes")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows.iter().all(|r| r.valid && r.status == RowStatus::Ok));
    let csv = rows_csv_string(&t).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("algorithm,topology,seed,n,edges,status,valid,t_min,avg_stretch,"));
}

#[test]
fn random_corpus_aggregates_with_interval() {
    let t = run_experiment(&cfg("nodes = 20\ndegree = 10\nseeds = 0..10\nalgorithms = potatoes\ncluster_budget = 50")).unwrap();
    assert_eq!(t.rows.len(), 10);
    assert_eq!(t.aggregates.len(), 1);
    let a = &t.aggregates[0];
    assert_eq!(a.runs, 10);
    assert_eq!(a.validity_rate, 1.0);
    let s = a.t_min.unwrap();
    assert_eq!(s.count, 10);
    assert!(s.half_width.unwrap() > 0.0);
    assert!(s.min <= s.mean && s.mean <= s.max);
}

#[test]
fn capped_opt_reports_budget_status() {
    let t = run_experiment(&cfg("nodes = 40\ndegree = 10\nseeds = 0\nalgorithms = opt\nopt_budget = 0")).unwrap();
    assert_eq!(t.rows[0].status, RowStatus::BudgetExceeded);
    assert!(t.rows[0].valid);
    assert!(rows_csv_string(&t).unwrap().contains("budget_exceeded"));
}

#[test]
fn files_are_byte_stable() {
    let c = cfg("grids = 2x3, 3x3\nseeds = 0..3\nalgorithms = opt, potatoes, st, st-pruned, mis");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let t = run_experiment(&c).unwrap();
        let rows = dir.path().join(format!("rows{i}.csv"));
        let plot = dir.path().join(format!("plot{i}.csv"));
        emit_csv(&t, &rows).unwrap();
        emit_plot_data(&t, &plot).unwrap();
        outputs.push((std::fs::read(rows).unwrap(), std::fs::read(plot).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let plot = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(plot.lines().count(), 1 + 5 * 2);
    assert!(plot.lines().nth(1).unwrap().starts_with("opt,grid-2x3,6,3,"));
}

#[test]
fn wall_time_column_is_opt_in() {
    let mut c = cfg("grids = 2x2\nseeds = 0\nalgorithms = st");
    let plain = rows_csv_string(&run_experiment(&c).unwrap()).unwrap();
    assert!(!plain.contains("wall_time"));
    c.wall_time = true;
    let timed = rows_csv_string(&run_experiment(&c).unwrap()).unwrap();
    assert!(timed.lines().next().unwrap().ends_with(",wall_time"));
}

#[test]
fn io_errors_name_the_path() {
    let t = run_experiment(&cfg("grids = 2x2\nseeds = 0\nalgorithms = st")).unwrap();
    let bad = std::path::Path::new("/nonexistent-dir/rows.csv");
    match emit_csv(&t, bad) {
        Err(e @ HarnessError::Io { .. }) => assert!(e.to_string().contains("/nonexistent-dir/rows.csv")),
        other => panic!("unexpected {other:?}"),
    }
    assert!(plot_data_string(&t).is_ok());
}

fn row(seed: u64, t_min: f64) -> MetricsRow {
    MetricsRow {
        algorithm: Algorithm::St,
        topology: "t".into(),
        seed,
        n: 5,
        edges: 4,
        status: RowStatus::Ok,
        valid: true,
        t_min: Some(t_min),
        avg_stretch: Some(1.0),
        dominators: 2,
        conflicts: 0,
        convergence_time: None,
        wall_time: 0.0,
    }
}

#[test]
fn equal_rows_have_zero_interval() {
    let rows: Vec<_> = (0..4).map(|s| row(s, 0.1)).collect();
    let a = &aggregate(&rows, &[Algorithm::St])[0];
    assert_eq!(a.t_min.unwrap().half_width, Some(0.0));
    assert_eq!(a.t_min.unwrap().mean, 0.1);
}

proptest! {
    #[test]
    fn mean_within_range(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let s = summarize(&values).unwrap();
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        if let Some(h) = s.half_width {
            prop_assert!(h >= 0.0);
        }
    }

    #[test]
    fn aggregate_means_within_row_range(ts in proptest::collection::vec(0.0f64..1.0, 1..12)) {
        let rows: Vec<_> = ts.iter().enumerate().map(|(i, &t)| row(i as u64, t)).collect();
        let a = &aggregate(&rows, &[Algorithm::St])[0];
        let s = a.t_min.unwrap();
        let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.mean && s.mean <= hi);
    }
}
