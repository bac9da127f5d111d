use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use far_relay::harness::Scenario;
use far_relay::scenario_file::load_scenario;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_far-relay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn paper_json() -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenarios().join("paper_default.json")).unwrap()).unwrap()
}

fn write(dir: &tempfile::TempDir, name: &str, v: &Value) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn small() -> Value {
    let mut v = paper_json();
    v["grid"]["n1"] = json!(2);
    v["grid"]["n2"] = json!(2);
    v["system"]["trials"] = json!(4);
    v
}

#[test]
fn bundled_default_matches_builtin_scenario() {
    let doc = load_scenario(&scenarios().join("paper_default.json")).unwrap();
    let a = doc.scenario;
    let b = Scenario::paper_default();
    assert_eq!((a.grid, a.total_bw, a.xi, a.seed, a.trials), (b.grid, b.total_bw, b.xi, b.seed, b.trials));
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-11 * y.abs();
    for (u, v) in a.users.iter().zip(&b.users) {
        assert!(close(u.budget.alpha_ur, v.budget.alpha_ur));
        assert!(close(u.budget.alpha_ub, v.budget.alpha_ub));
        assert!(close(u.budget.alpha_rb, v.budget.alpha_rb));
        assert!(close(u.budget.sigma2_bs, v.budget.sigma2_bs));
        assert!(close(u.p_user_min, v.p_user_min));
        assert_eq!((u.p_user_max, u.p_relay_max, u.rate_min), (v.p_user_max, v.p_relay_max, v.rate_min));
    }
    for name in ["sweep_users.json", "sweep_relay_power.json"] {
        assert!(load_scenario(&scenarios().join(name)).unwrap().sweep.is_some());
    }
}

#[test]
fn op_surface_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(&dir, "s.json", &small());
    let o = run(&["op-surface", &f, "--steps", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p_user_w,p_relay_w,xi,op_af,op_df,selection");
    assert_eq!(lines.len(), 101);
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 6);
    }
}

#[test]
fn op_surface_high_threshold_is_all_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(&dir, "s.json", &small());
    let o = run(&["op-surface", &f, "--steps", "4", "--xi", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",INFEASIBLE")), "{text}");
}

#[test]
fn op_surface_shows_df_at_low_power() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(&dir, "s.json", &small());
    let o = run(&["op-surface", &f, "--steps", "6", "--log", "--pu-range", "1e-7:1e-1", "--pr-range", "1e-7:1e-1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for s in ["INFEASIBLE", ",DF", ",AF"] {
        assert!(text.contains(s), "{s} missing from\n{text}");
    }
}

#[test]
fn malformed_json_names_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"grid\": {\"n1\": 4,, }").unwrap();
    let o = run(&["op-surface", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte offset 18"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["users"][1]["alpha_xx"] = json!(1.0);
    let f = write(&dir, "s.json", &v);
    let o = run(&["optimize", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("users[1].alpha_xx"), "{}", stderr(&o));
}

#[test]
fn validate_single_port_is_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["grid"]["n1"] = json!(1);
    v["grid"]["n2"] = json!(1);
    let f = write(&dir, "s.json", &v);
    let o = run(&["validate", &f, "--trials", "200000", "--points", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let mut cdf_rows = 0;
    for l in text.lines().skip(1).filter(|l| l.starts_with("cdf,")) {
        let f: Vec<&str> = l.split(',').collect();
        let x: f64 = f[4].parse().unwrap();
        let analytic: f64 = f[5].parse().unwrap();
        let empirical: f64 = f[6].parse().unwrap();
        let se: f64 = f[7].parse().unwrap();
        // Nine printed digits bound the comparison.
        assert!((analytic + (-x).exp_m1()).abs() <= 1e-8 * analytic.max(1e-3), "{l}");
        assert!((analytic - empirical).abs() <= 4.0 * se + 1e-9, "{l}");
        cdf_rows += 1;
    }
    assert_eq!(cdf_rows, 20);
    assert!(text.contains("op_af,1,") && text.contains("op_df,4,"));
}

#[test]
fn validate_paper_grid_passes() {
    let o = run(&[
        "validate",
        scenarios().join("paper_default.json").to_str().unwrap(),
        "--trials",
        "200000",
        "--points",
        "6",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn corrupted_correlation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["correlation"] = json!([[1.0, 0.1, 0.0, 0.0], [0.1, 0.8, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
    let f = write(&dir, "s.json", &v);
    let o = run(&["validate", &f, "--trials", "10000", "--points", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invariant violation"), "{}", stderr(&o));
}

#[test]
fn optimize_single_user_takes_whole_band() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    let first = v["users"][0].clone();
    v["users"] = json!([first]);
    let f = write(&dir, "s.json", &v);
    let o = run(&["optimize", &f]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let user: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(user[0], "user");
    assert_eq!(user[4], "5.00000000e6");
    assert!(rows[1].starts_with("summary,") && rows[1].ends_with(",true"));
}

#[test]
fn optimize_rate_above_capacity_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    for u in v["users"].as_array_mut().unwrap() {
        u["rate_min_bps"] = json!(1e9);
    }
    let f = write(&dir, "s.json", &v);
    let o = run(&["optimize", &f]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("INFEASIBLE_BANDWIDTH"), "{}", stderr(&o));
}

#[test]
fn optimize_is_reproducible() {
    let f = scenarios().join("paper_default.json");
    let a = run(&["optimize", f.to_str().unwrap()]);
    let b = run(&["optimize", f.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["sweep"] = json!({"variable": "num_users", "values": [1, 2, 3, 4],
                        "schemes": ["proposed", "tas", "avg_bandwidth", "random_power"]});
    let f = write(&dir, "s.json", &v);
    let o = run(&["sweep", &f]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("sweep_value,scheme,trial,sum_rate_bps,feasible"));
    assert_eq!(text.lines().count(), 1 + 16 * 4);
}

#[test]
fn sweep_over_ports_starts_with_tas() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["sweep"] = json!({"variable": "num_ports", "values": [1, 2], "schemes": ["proposed", "tas"]});
    let f = write(&dir, "s.json", &v);
    let out = dir.path().join("out.csv");
    let o = run(&["sweep", &f, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    let rate = |scheme: &str, trial: usize| {
        text.lines()
            .find(|l| l.starts_with(&format!("1,{scheme},{trial},")))
            .map(|l| l.split(',').nth(3).unwrap().to_owned())
            .unwrap()
    };
    for t in 0..4 {
        assert_eq!(rate("proposed", t), rate("tas", t));
    }
}

#[test]
fn sweep_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["sweep"] = json!({"variable": "num_antennas", "values": [1]});
    let f = write(&dir, "s.json", &v);
    assert_eq!(run(&["sweep", &f]).status.code(), Some(2));

    let mut v = small();
    v.as_object_mut().unwrap().remove("sweep");
    let f = write(&dir, "t.json", &v);
    let o = run(&["sweep", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sweep"));
}

#[test]
fn sweep_summary_reports_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small();
    v["users"][0]["rate_min_bps"] = json!(1e9);
    v["sweep"] = json!({"variable": "num_users", "values": [1, 2], "schemes": ["proposed"]});
    let f = write(&dir, "s.json", &v);
    let o = run(&["sweep", &f, "--summary"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().next(),
        Some("sweep_value,scheme,mean_sum_rate_bps,std_err_bps,feasible_trials,excluded_trials")
    );
    assert!(text.lines().nth(1).unwrap().ends_with(",0,4"), "{text}");
}

#[test]
fn missing_file_exits_two() {
    let o = run(&["optimize", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
}
