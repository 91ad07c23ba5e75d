use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wpcn_dts::cli::ExperimentConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpcn-dts")).args(args).output().expect("spawn binary")
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn header(csv: &str) -> &str {
    csv.lines().find(|l| !l.starts_with('#')).unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn power_sweep_recipe_orders_by_levels() {
    let dir = tempfile::tempdir().unwrap();
    let mut curves = Vec::new();
    for levels in ["10", "100", "300"] {
        let path = dir.path().join(format!("l{levels}.csv"));
        let p = path.to_str().unwrap();
        run_ok(&["analyze", "--axis", "p_dbm", "--grid", "20:46:2", "--levels", levels, "--out", p]);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(header(&text), "axis,phi_analytical");
        curves.push(data_rows(&text));
    }
    for k in 0..curves[0].len() {
        assert!(curves[2][k][1] >= curves[1][k][1] - 1e-12);
        assert!(curves[1][k][1] >= curves[0][k][1] - 1e-12);
    }
}

#[test]
fn rate_sweep_recipe_has_interior_peak() {
    for n in ["3", "4"] {
        let csv = run_ok(&["analyze", "--axis", "rate", "--grid", "0.5:8:0.5", "--levels", "200", "--n-antennas", n]);
        let phi: Vec<f64> = data_rows(&csv).iter().map(|r| r[1]).collect();
        let argmax = phi.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(argmax > 0 && argmax < phi.len() - 1, "N={n}: {phi:?}");
    }
}

#[test]
fn optimize_rate_reports_interior_optimum() {
    let csv = run_ok(&["optimize-rate", "--levels", "200"]);
    assert_eq!(header(&csv), "r_opt,phi_opt,boundary_optimum");
    let line = csv.lines().last().unwrap();
    let cells: Vec<&str> = line.split(',').collect();
    let r: f64 = cells[0].parse().unwrap();
    assert!(r > 0.5 && r < 10.0);
    assert_eq!(cells[2], "false");
}

#[test]
fn capacity_comparison_recipe() {
    let csv = run_ok(&[
        "compare-htt", "--axis", "capacity", "--grid", "1e-6,3e-5", "--blocks", "100000", "--seed", "9",
        "--tau-grid", "0.05:0.95:0.05",
    ]);
    assert_eq!(
        header(&csv),
        "axis,phi_dts_analytical,phi_dts_sim,ci_dts,overflow_dts,phi_htt_sim,ci_htt,overflow_htt,tau_opt"
    );
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[1][2] > rows[1][5], "DTS should beat HTT at large C");
    assert!(rows[0][4] > rows[0][7], "DTS should overflow more at small C");
}

#[test]
fn empty_grid_exits_with_config_code() {
    let out = bin(&["analyze", "--axis", "p_dbm", "--grid", ""]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=config code=2 message=\""), "{err}");
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "command = analyze\nfrobnicate = 1\n").unwrap();
    let out = bin(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_points_failing_exits_with_numerical_code() {
    let out = bin(&["analyze", "--axis", "levels", "--grid", "2500,3000"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=numerical code=3 message=\""), "{err}");
}

#[test]
fn partial_failure_is_recorded_inline() {
    let csv = run_ok(&["analyze", "--axis", "levels", "--grid", "10,3000"]);
    assert!(csv.contains("3000,NaN"));
    assert!(csv.lines().any(|l| l.starts_with("# error at 3000:")));
}

#[test]
fn metadata_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let args = [
        "simulate", "--axis", "p_dbm", "--grid", "24,30", "--blocks", "20000", "--seed", "5", "--warmup", "100",
        "--omega", "2e-5", "--noise-watts", "1e-12", "--battery", "continuous", "--out", out.to_str().unwrap(),
    ];
    run_ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let cfg = ExperimentConfig::from_metadata(&text).unwrap();
    let mut again = ExperimentConfig::default();
    let pairs: Vec<(String, String)> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    again.apply_pairs(&pairs).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.blocks, 20000);
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.warmup, Some(100));
    assert_eq!(cfg.grid, vec![24.0, 30.0]);
    assert_eq!(cfg.metadata(), text.lines().take_while(|l| l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\naxis = rate\ngrid = 2,3\nlevels = 50\n").unwrap();
    let csv = run_ok(&["analyze", "--config", cfg.to_str().unwrap(), "--levels", "20"]);
    let parsed = ExperimentConfig::from_metadata(&csv).unwrap();
    assert_eq!(parsed.levels, 20);
    assert_eq!(parsed.grid, vec![2.0, 3.0]);
}

#[test]
fn dump_chain_writes_matrix_and_law() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("chain");
    run_ok(&["analyze", "--axis", "levels", "--grid", "5", "--dump-chain", d.to_str().unwrap()]);
    let z = fs::read_to_string(d.join("z_0.csv")).unwrap();
    let pi = fs::read_to_string(d.join("pi_0.csv")).unwrap();
    assert_eq!(z.lines().next(), Some("i,j,p"));
    assert_eq!(pi.lines().next(), Some("i,pi"));
    let mass: f64 = pi.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn trace_lists_every_measured_block() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("trace.csv");
    run_ok(&["simulate", "--axis", "rate", "--grid", "3", "--blocks", "2000", "--warmup", "0", "--trace", t.to_str().unwrap()]);
    let text = fs::read_to_string(&t).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("block,mode,stored,credited_bits"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 2000);
    assert!(body.iter().all(|l| l.contains(",eh,") || l.contains(",it,")));

    let multi = bin(&["simulate", "--axis", "rate", "--grid", "2,3", "--blocks", "2000", "--trace", t.to_str().unwrap()]);
    assert_eq!(multi.status.code(), Some(2));
}

fn golden(name: &str, args: &[&str]) {
    let produced = run_ok(args);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &produced).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(produced, expected, "output drifted from {}", path.display());
}

#[test]
fn golden_simulate_small_run() {
    golden(
        "simulate_small.csv",
        &["simulate", "--axis", "p_dbm", "--grid", "26,30,34", "--levels", "50", "--blocks", "20000", "--seed", "11"],
    );
}

#[test]
fn golden_analyze_levels() {
    golden("analyze_levels.csv", &["analyze", "--axis", "levels", "--grid", "1,2,5,10,50"]);
}
