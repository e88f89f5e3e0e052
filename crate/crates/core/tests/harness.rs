use std::fs;

use fafl::fedsim::Method;
use fafl::harness::output::CSV_HEADER;
use fafl::harness::{parse_results_csv, run_experiment, run_to_dir, ExperimentConfig, Status, EXTERNAL_METHOD};

fn small(methods: Vec<Method>, realizations: usize, rounds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { users: 5, realizations, methods, ..Default::default() };
    cfg.train.rounds = rounds;
    cfg.dataset.samples_per_user = 40;
    cfg.dataset.test_samples = 100;
    cfg
}

#[test]
fn one_realization_two_rounds_gives_two_rows() {
    let res = run_experiment(&small(vec![Method::SelectAll], 1, 2), Some(1)).unwrap();
    assert_eq!(res.rows.len(), 2);
    assert_eq!(res.rows[0].round, 0);
    assert_eq!(res.rows[1].round, 1);
    assert!(res.rows.iter().all(|r| r.method == "select_all" && r.realization == 0 && r.selected_count == 5));
}

#[test]
fn rounds_are_contiguous_per_cell() {
    let cfg = small(Method::ALL.to_vec(), 2, 3);
    let res = run_experiment(&cfg, None).unwrap();
    assert_eq!(res.rows.len(), Method::ALL.len() * 2 * 3);
    for chunk in res.rows.chunks(3) {
        assert!(chunk.iter().enumerate().all(|(t, r)| r.round == t && r.method == chunk[0].method && r.realization == chunk[0].realization));
    }
}

#[test]
fn same_seed_gives_byte_identical_files() {
    let cfg = small(Method::ALL.to_vec(), 2, 3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_to_dir(&cfg, a.path(), Some(1)).unwrap();
    run_to_dir(&cfg, b.path(), None).unwrap();
    for f in ["results.csv", "summary.json", "pdd_traces.jsonl"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn different_seeds_give_different_results() {
    let mut cfg = small(vec![Method::Mrt], 1, 2);
    let a = run_experiment(&cfg, None).unwrap();
    cfg.master_seed = 99;
    let b = run_experiment(&cfg, None).unwrap();
    assert_ne!(a.rows, b.rows);
}

#[test]
fn written_csv_parses_back_to_the_rows() {
    let cfg = small(vec![Method::PddFa, Method::Aps], 1, 2);
    let dir = tempfile::tempdir().unwrap();
    let res = run_to_dir(&cfg, dir.path(), None).unwrap();
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let back = parse_results_csv(&text).unwrap();
    assert_eq!(back.len(), res.rows.len());
    for (a, b) in back.iter().zip(&res.rows) {
        assert_eq!((&a.method, a.realization, a.round, a.selected_count), (&b.method, b.realization, b.round, b.selected_count));
        assert!((a.test_accuracy - b.test_accuracy).abs() <= 1e-8 * b.test_accuracy.abs().max(1e-300));
    }
    let traces = fs::read_to_string(dir.path().join("pdd_traces.jsonl")).unwrap();
    assert!(traces.lines().count() > 0);
    assert!(traces.lines().all(|l| l.contains("\"method\":\"pdd_fa\"")));
}

#[test]
fn summary_lists_every_method_once_and_the_external_one() {
    let cfg = small(Method::ALL.to_vec(), 2, 2);
    let res = run_experiment(&cfg, None).unwrap();
    for m in Method::ALL {
        let n = res.summary.methods.iter().filter(|s| s.method == m.name()).count();
        assert_eq!(n, 1, "{m}");
        let s = res.summary.method(m).unwrap();
        assert_eq!(s.status, Status::Ok);
        assert_eq!(s.cells_ok, 2);
        assert!(s.final_accuracy.is_some() && s.selected_count.is_some());
    }
    assert_eq!(res.summary.external.len(), 1);
    assert_eq!(res.summary.external[0].method, EXTERNAL_METHOD);
}

#[test]
fn failing_cells_are_recorded_and_the_run_continues() {
    // A finite power in dBm that underflows to zero milliwatts passes
    // validation but cannot drive any transmitter.
    let mut cfg = small(vec![Method::SelectAll, Method::Mrt], 2, 2);
    cfg.train.p_a_dbm = -4000.0;
    let res = run_experiment(&cfg, None);
    match res {
        Ok(r) => {
            for s in &r.summary.methods {
                assert_eq!(s.status, Status::Failed, "{}", s.method);
                assert_eq!(s.cells_failed, 2);
                assert!(!s.errors.is_empty());
            }
        }
        Err(e) => panic!("the run should record cell failures, got {e}"),
    }
}

#[test]
fn defaults_carry_the_reference_constants() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.train.p_a(), 1.0);
    assert!((cfg.train.sigma_n2() - 0.01).abs() < 1e-15);
    assert_eq!(cfg.train.lr, 0.05);
    assert_eq!((cfg.users, cfg.realizations, cfg.train.rounds, cfg.channel.n_antennas), (20, 16, 25, 4));
    assert_eq!(cfg.dataset.samples_per_user, 270);
}
