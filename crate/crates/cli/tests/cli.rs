use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use betagamma_core::experiments::{csv_paths, read_moment_csv};
use betagamma_core::verify::CheckOutcome;
use betagamma_core::Environment;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betagamma"))
        .args(args)
        .env_remove("BETAGAMMA_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_model_is_a_usage_error() {
    let o = run(&["verify", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn bad_values_are_usage_errors() {
    assert_eq!(run(&["verify", "--model", "xx"]).status.code(), Some(2));
    assert_eq!(
        run(&["verify", "--model", "ig", "--checks", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["scaling", "--model", "ig", "--N", "64,32"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "scaling",
            "--model",
            "ig",
            "--N",
            "8,16,32",
            "--replicas",
            "10"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(run(&["dump-env", "--model", "g"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn full_verify_passes_for_ig() {
    let o = run(&[
        "verify", "--model", "ig", "--mu", "2", "--theta", "1", "--seed", "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(!out.contains("[FAIL]"));
    for name in [
        "mellin closed form",
        "psi_k",
        "E[p_n(S_r)]",
        "IBP",
        "enumeration",
        "NSEW",
        "down-right",
        "sigma_2",
        "growth bound",
    ] {
        assert!(out.contains(name), "missing {name}");
    }
}

#[test]
fn verify_json_subset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--model",
        "b",
        "--checks",
        "dp,nsew,exit",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let printed: Vec<CheckOutcome> = serde_json::from_str(&stdout(&o)).unwrap();
    let written: Vec<CheckOutcome> =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(printed, written);
    assert_eq!(printed.len(), 3);
    assert!(printed.iter().all(|c| c.pass));
}

fn scaling_csv(dir: &Path, threads: &str) -> Vec<String> {
    let base = dir.join(format!("run{threads}"));
    let o = run(&[
        "scaling",
        "--model",
        "g",
        "--N",
        "8,16,32",
        "--replicas",
        "120",
        "--seed",
        "5",
        "--threads",
        threads,
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    csv_paths(&base)
        .iter()
        .map(|p| fs::read_to_string(p).unwrap())
        .collect()
}

#[test]
fn scaling_csv_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = scaling_csv(dir.path(), "1");
    let two = scaling_csv(dir.path(), "2");
    assert_eq!(one, two);
    let rows = read_moment_csv(&one[0]).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows
        .iter()
        .all(|r| r.model == "g" && r.seed == 5 && r.replicas == 120 && r.moment.is_finite()));
}

#[test]
fn scaling_example_run() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("b");
    let o = run(&[
        "scaling",
        "--model",
        "b",
        "--N",
        "64,128,256",
        "--replicas",
        "500",
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("slopes"));
    assert!(out.contains("logZ  p=2"));
    for p in csv_paths(&base) {
        let rows = read_moment_csv(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.stderr.is_finite()));
    }
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let base = dir.path().join("cfg");
    fs::write(
        &cfg,
        format!(
            "model = \"ib\"\nN = [8, 16, 24]\nreplicas = 100\nseed = 3\nformat = \"json\"\nout = \"{}\"\n",
            base.display()
        ),
    )
    .unwrap();
    let o = run(&["scaling", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cfg.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 3);
    assert_eq!(json["points"].as_array().unwrap().len(), 3);

    // a flag overrides the file
    let o = run(&[
        "scaling",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        "zz",
    ]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "model = \"ig\"\nunknown-key = 1\n").unwrap();
    assert_eq!(
        run(&["verify", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn exit_times_distributions_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("ex");
    let o = run(&[
        "exit-times",
        "--model",
        "ig",
        "--m",
        "12",
        "--n",
        "9",
        "--replicas",
        "20",
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (suffix, len) in [("_south.csv", 13), ("_west.csv", 10)] {
        let text = fs::read_to_string(dir.path().join(format!("ex{suffix}"))).unwrap();
        let probs: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(probs.len(), len);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dump_env_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    let o = run(&[
        "dump-env",
        "--model",
        "b",
        "--N",
        "6",
        "--seed",
        "9",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let env = Environment::load(&path).unwrap();
    assert_eq!(env.seed, 9);
    assert!(env.validate().is_ok());
    let printed = run(&["dump-env", "--model", "b", "--N", "6", "--seed", "9"]);
    assert_eq!(Environment::from_json(&stdout(&printed)).unwrap(), env);
}
