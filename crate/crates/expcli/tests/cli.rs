use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SCENARIO: &str = r#"
name = "small"
m_dim = 3
n_iters = 300
n_runs = 4
steady_window = 50
master_seed = 17

[topology]
kind = "random"
n_nodes = 5
radius = 0.6
seed = 2

[noise]
sigma2 = 0.0157
nugget = 0.9
kappa = 0.1

[regressors]
power_range = [0.5, 1.5]

[parameter]
kind = "static"

[[algorithms]]
name = "ATC-GMRF"
kind = "atc"
step = { bound_fraction = 0.05 }

[[algorithms]]
name = "ATC"
kind = "atc"
precision = "agnostic"
step = { match = "ATC-GMRF" }

[tracking]
run = 0
node = 1
components = [0, 2]
"#;

fn gmrflms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmrflms")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn simulate(dir: &Path, scenario: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["simulate", scenario.to_str().unwrap(), "--out", out];
    args.extend_from_slice(extra);
    gmrflms(&args)
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn simulate_writes_every_table_with_fixed_headers() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    let out = simulate(dir.path(), &sc, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let curves = lines(&dir.path().join("small_curves.csv"));
    assert_eq!(curves[0], "iter,algorithm,msd_db");
    assert_eq!(curves.len(), 1 + 2 * 300);

    let nodes = lines(&dir.path().join("small_nodes.csv"));
    assert_eq!(nodes[0], "node,algorithm,msd_db_sim,msd_db_theory");
    assert_eq!(nodes.len(), 1 + 2 * 5);

    let summary = lines(&dir.path().join("small_summary.csv"));
    assert_eq!(summary[0], "algorithm,steady_msd_db,mean_comm_entries,dense_comm_entries,diverged_runs");
    assert_eq!(summary.len(), 3);

    let tracking = lines(&dir.path().join("small_tracking.csv"));
    assert_eq!(tracking[0], "iter,component_index,estimate,truth");
    assert_eq!(tracking.len(), 1 + 2 * 300);
}

#[test]
fn same_seed_gives_identical_bytes_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(simulate(&a, &sc, &["--jobs", "1"]).status.success());
    assert!(simulate(&b, &sc, &["--jobs", "3"]).status.success());
    for f in ["small_curves.csv", "small_nodes.csv", "small_tracking.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert!(simulate(&c, &sc, &["--seed", "18"]).status.success());
    assert_ne!(fs::read(a.join("small_curves.csv")).unwrap(), fs::read(c.join("small_curves.csv")).unwrap());
}

#[test]
fn overrides_change_the_run_shape() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    assert!(simulate(dir.path(), &sc, &["--iters", "120", "--runs", "2"]).status.success());
    assert_eq!(lines(&dir.path().join("small_curves.csv")).len(), 1 + 2 * 120);
}

#[test]
fn json_output_carries_results_and_theory() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    assert!(simulate(dir.path(), &sc, &["--format", "json"]).status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("small.json")).unwrap()).unwrap();
    assert_eq!(v["results"]["algorithms"].as_array().unwrap().len(), 2);
    assert_eq!(v["theory"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_writes_theory() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    let out = gmrflms(&["analyze", sc.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("small_theory.json")).unwrap()).unwrap();
    assert_eq!(v[0]["name"], "ATC-GMRF");
    assert_eq!(v[0]["mean_stable"], true);
}

#[test]
fn sweep_writes_one_row_per_value_and_algorithm() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), SCENARIO);
    let out = gmrflms(&[
        "sweep",
        sc.to_str().unwrap(),
        "--axis",
        "nu",
        "--values",
        "0.5,0.9",
        "--runs",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&dir.path().join("small_sweep_nu.csv"));
    assert_eq!(rows[0], "axis_value,algorithm,msd_db");
    assert_eq!(rows.len(), 1 + 2 * 2);
}

#[test]
fn preset_without_running_writes_a_loadable_scenario() {
    let dir = TempDir::new().unwrap();
    let out = gmrflms(&["preset", "fig6_sparse_comparison", "--desk", "--no-run", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("note:"));
    let text = fs::read_to_string(dir.path().join("fig6_sparse_comparison_desk.toml")).unwrap();
    assert!(gmrflms_exp::Scenario::from_toml_str(&text).is_ok());
}

#[test]
fn desk_preset_runs_and_writes_layout() {
    let dir = TempDir::new().unwrap();
    let out = gmrflms(&["preset", "fig3_theory", "--desk", "--runs", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let nodes = lines(&dir.path().join("fig3_theory_desk_layout_nodes.csv"));
    assert_eq!(nodes[0], "node,x,y,regressor_power");
    assert_eq!(nodes.len(), 11);
    assert_eq!(lines(&dir.path().join("fig3_theory_desk_layout_edges.csv"))[0], "kind,i,j");
    assert!(dir.path().join("fig3_theory_desk_nodes.csv").exists());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let bad = write_scenario(dir.path(), &SCENARIO.replace("m_dim = 3", "m_dim = 0"));
    assert_eq!(simulate(dir.path(), &bad, &[]).status.code(), Some(2));
    let typo = write_scenario(dir.path(), &SCENARIO.replace("n_runs = 4", "n_runz = 4"));
    assert_eq!(simulate(dir.path(), &typo, &[]).status.code(), Some(2));
    assert_eq!(gmrflms(&["preset", "fig9"]).status.code(), Some(2));
    assert_eq!(gmrflms(&["simulate"]).status.code(), Some(2));
    let sc = write_scenario(dir.path(), SCENARIO);
    let out = gmrflms(&["sweep", sc.to_str().unwrap(), "--axis", "mu", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn steps_above_the_bound_exit_with_3() {
    let dir = TempDir::new().unwrap();
    let sc = write_scenario(dir.path(), &SCENARIO.replace("bound_fraction = 0.05", "bound_fraction = 1.5"));
    let out = simulate(dir.path(), &sc, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ATC-GMRF"));
}

#[test]
fn allowed_instability_is_simulated_and_reported() {
    let dir = TempDir::new().unwrap();
    let unstable = SCENARIO
        .replace("bound_fraction = 0.05", "bound_fraction = 2.5")
        .replace("master_seed = 17", "master_seed = 17\nallow_unstable = true");
    let sc = write_scenario(dir.path(), &unstable);
    // Nothing can be rate-matched to a diverging reference.
    assert_eq!(simulate(dir.path(), &sc, &[]).status.code(), Some(3));

    let alone = unstable.split("[[algorithms]]\nname = \"ATC\"").next().unwrap().to_owned()
        + "[tracking]\nrun = 0\nnode = 1\ncomponents = [0]\n";
    let sc = write_scenario(dir.path(), &alone);
    let out = simulate(dir.path(), &sc, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = lines(&dir.path().join("small_summary.csv"));
    assert!(summary[1].starts_with("ATC-GMRF,NaN") && summary[1].ends_with(",4"), "{}", summary[1]);
}
