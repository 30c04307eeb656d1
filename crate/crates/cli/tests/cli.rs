//! End-to-end checks of the `arrl` binary: wiring, determinism, file
//! round-trips, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn arrl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arrl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn solve_writes_solution_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = arrl(
        &[
            "solve",
            "--env",
            "random:S=3,A=2,seed=7",
            "--rho",
            "0.25",
            "--horizon",
            "3",
            "--out",
            ".",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("V*_1(s1)"));
    let solution = fs::read_to_string(
        dir.path()
            .join("random-S3-A2-seed7_rho0.25_H3_solution.json"),
    )
    .unwrap();
    let json: serde_json::Value = serde_json::from_str(&solution).unwrap();
    for key in ["V_star", "Q_star", "pi_star", "pi_minus"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn train_is_byte_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "train",
        "--alg",
        "arrlc",
        "--env",
        "random:S=3,A=2,seed=7",
        "--rho",
        "0.2",
        "--episodes",
        "80",
        "--seed",
        "5",
        "--horizon",
        "3",
        "--out",
        ".",
    ];
    assert!(arrl(&args, dir.path()).status.success());
    let csv_name = "arrlc_random-S3-A2-seed7_rho0.2_K80_seed5.csv";
    let first = fs::read(dir.path().join(csv_name)).unwrap();
    assert!(arrl(&args, dir.path()).status.success());
    let second = fs::read(dir.path().join(csv_name)).unwrap();
    assert_eq!(first, second, "reruns must be byte-identical");

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "episode,cert_lo,cert_hi,epsilon,delta,true_value_pi_bar,regret_increment,cum_regret,seed"
    );
    assert_eq!(lines.count(), 80);

    // The stored policy evaluates without loss through the evaluate command.
    let eval = arrl(
        &[
            "evaluate",
            "--env",
            "random:S=3,A=2,seed=7",
            "--horizon",
            "3",
            "--policy",
            "arrlc_random-S3-A2-seed7_rho0.2_K80_seed5_policy.json",
            "--seed",
            "3",
            "--n",
            "40",
            "--kinds",
            "random",
            "--p",
            "0.2",
            "--out",
            ".",
        ],
        dir.path(),
    );
    assert!(
        eval.status.success(),
        "{}",
        String::from_utf8_lossy(&eval.stderr)
    );
    assert!(stdout(&eval).contains("policy_name,perturb_kind,p,n,mean_raw,mean_norm,stderr"));
}

#[test]
fn train_fans_out_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = arrl(
        &[
            "train",
            "--alg",
            "ar-ucbh",
            "--env",
            "chain:n=3,slip=0.1",
            "--rho",
            "0.1",
            "--episodes",
            "30",
            "--seed",
            "1,2",
            "--horizon",
            "4",
            "--jobs",
            "2",
            "--out",
            ".",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for seed in [1, 2] {
        assert!(dir
            .path()
            .join(format!(
                "ar-ucbh_chain-n3-slip0.1_rho0.1_K30_seed{seed}.csv"
            ))
            .exists());
    }
}

#[test]
fn evaluate_rejects_mismatched_policy_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad_policy.json"),
        r#"{"actions": [[0, 1], [1, 0]]}"#,
    )
    .unwrap();
    let out = arrl(
        &[
            "evaluate",
            "--env",
            "random:S=3,A=2,seed=7",
            "--horizon",
            "3",
            "--policy",
            "bad_policy.json",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expected H=3 S=3"), "{err}");
    assert!(err.contains("found H=2 S=2"), "{err}");
}

#[test]
fn exit_codes_distinguish_usage_and_resource_errors() {
    let dir = tempfile::tempdir().unwrap();
    let usage = arrl(&["solve", "--env", "pendulum", "--rho", "0.2"], dir.path());
    assert_eq!(usage.status.code(), Some(2));

    let resource = arrl(
        &[
            "duality-check",
            "--env",
            "cliff",
            "--rho",
            "0.2",
            "--horizon",
            "30",
        ],
        dir.path(),
    );
    assert_eq!(resource.status.code(), Some(3));

    let ok = arrl(
        &[
            "duality-check",
            "--env",
            "random:S=2,A=2,seed=3",
            "--rho",
            "0.3",
            "--horizon",
            "2",
        ],
        dir.path(),
    );
    assert!(ok.status.success());
    assert!(stdout(&ok).contains("gap = 0"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("experiment.json"),
        r#"{
            "env": "random:S=2,A=2,seed=9",
            "algorithm": "arrlc",
            "episodes": 25,
            "rho": 0.3,
            "seed": 4,
            "horizon": 2,
            "out_dir": "."
        }"#,
    )
    .unwrap();
    let from_file = arrl(&["train", "--config", "experiment.json"], dir.path());
    assert!(
        from_file.status.success(),
        "{}",
        String::from_utf8_lossy(&from_file.stderr)
    );
    assert!(dir
        .path()
        .join("arrlc_random-S2-A2-seed9_rho0.3_K25_seed4.csv")
        .exists());

    // The flag wins over the file value.
    let overridden = arrl(
        &["train", "--config", "experiment.json", "--rho", "0.1"],
        dir.path(),
    );
    assert!(overridden.status.success());
    assert!(dir
        .path()
        .join("arrlc_random-S2-A2-seed9_rho0.1_K25_seed4.csv")
        .exists());
}
