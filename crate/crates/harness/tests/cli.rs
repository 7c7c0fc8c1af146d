use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bilevel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilevel"))
        .current_dir(dir)
        .args(args)
        .env_remove("BILEVEL_RUN_ENV")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_one_csv_per_seed_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[run]\nname = \"smoke\"\nseeds = [0, 1, 2, 3, 4]\n[outer]\nmax_iters = 3\n",
    );
    let o = bilevel(tmp.path(), &["--config", "c.toml", "--out", "o", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("o");
    for seed in 0..5 {
        let rows = csv_rows(&out.join(format!("smoke_seed{seed}.csv")));
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0][0], format!("smoke-seed{seed}"));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("smoke_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 5);
    assert!(summary["median_final_normalized_return"].as_f64().unwrap() > 0.0);
    assert!(out.join("smoke_config.toml").exists());
}

#[test]
fn zero_learning_rate_gives_flat_curves() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[run]\nseeds = [3]\n[outer]\nmax_iters = 4\nlearning_rate = 0.0\n",
    );
    let o = bilevel(tmp.path(), &["--config", "c.toml", "--out", "o", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&tmp.path().join("o/discrete_seed3.csv"));
    assert_eq!(rows.len(), 4);
    // returns and theta stay put; the sampled gradient norm does not
    let fixed = |r: &Vec<String>| [&r[3..5], &r[6..r.len() - 1]].concat();
    for r in &rows[1..] {
        assert_eq!(fixed(r), fixed(&rows[0]));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[run]\nseeds = [0, 1]\n[outer]\nmax_iters = 5\n",
    );
    for out in ["a", "b"] {
        let o = bilevel(tmp.path(), &["--config", "c.toml", "--out", out, "run"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for seed in 0..2 {
        let name = format!("discrete_seed{seed}.csv");
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seed_list_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[run]\nseeds = [0]\n[outer]\nmax_iters = 2\n",
    );
    let o = bilevel(
        tmp.path(),
        &[
            "--config",
            "c.toml",
            "--seed-list",
            "7,9",
            "--out",
            "o",
            "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("o/discrete_seed7.csv").exists());
    assert!(tmp.path().join("o/discrete_seed9.csv").exists());
    assert!(!tmp.path().join("o/discrete_seed0.csv").exists());
}

#[test]
fn invalid_configs_exit_with_one_and_name_the_line() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "unknown.toml",
        "[run]\nseeds = [0]\n[outer]\nlearning_rat = 0.1\n",
    );
    let o = bilevel(tmp.path(), &["--config", "unknown.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown.toml:4"), "{}", stderr(&o));

    write(
        tmp.path(),
        "range.toml",
        "[run]\nseeds = [0]\n\n[environment]\ndiscount = 1.5\n",
    );
    let o = bilevel(tmp.path(), &["--config", "range.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("range.toml:5"), "{}", stderr(&o));

    let o = bilevel(tmp.path(), &["--config", "missing.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    let o = bilevel(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn enumerate_ranks_all_deterministic_policies() {
    let tmp = TempDir::new().unwrap();
    let o = bilevel(tmp.path(), &["enumerate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,actions,return,fraction_of_best");
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines[1].ends_with(",1"));
}

#[test]
fn eval_reports_normalized_return() {
    let tmp = TempDir::new().unwrap();
    let theta = vec!["1"; 24].join(",");
    let o = bilevel(tmp.path(), &["eval", "--theta", &theta]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = v["normalized_return"].as_f64().unwrap();
    assert!(n > 0.0 && n <= 1.0 + 1e-12);
    let o = bilevel(tmp.path(), &["eval", "--theta", "1,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plot_data_merges_histories() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[run]\nseeds = [0, 1, 2]\n[outer]\nmax_iters = 4\n",
    );
    let o = bilevel(tmp.path(), &["--config", "c.toml", "--out", "o", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bilevel(
        tmp.path(),
        &[
            "plot-data",
            "o/discrete_seed0.csv",
            "o/discrete_seed1.csv",
            "o/discrete_seed2.csv",
            "-o",
            "plot.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&tmp.path().join("plot.csv"));
    assert_eq!(rows.len(), 12);
}

#[test]
fn exact_pathway_is_rejected_for_the_continuous_system() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "c.toml", "[run]\nenv = \"continuous\"\n");
    let o = bilevel(
        tmp.path(),
        &["--pathway", "exact", "--config", "c.toml", "run"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn environment_overrides_apply_without_a_config_file() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bilevel"))
        .current_dir(tmp.path())
        .args(["--seed-list", "0", "--out", "o", "run"])
        .env("BILEVEL_OUTER_MAX_ITERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&tmp.path().join("o/discrete_seed0.csv")).len(), 2);
}
