//! CLI acceptance: byte-identical reruns (the determinism criterion), exit
//! codes, output schemas, and agreement with closed forms and oracles.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapreg::diagnostics::shapley_exact_stochastic;
use shapreg::games::{sage_game, Loss, ModelKind, TabularModel};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_shapreg")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn shapreg")
}

fn run_to_file(args: &[&str], out: &Path) -> Output {
    let out_arg = out.to_str().unwrap();
    let mut full: Vec<&str> = args.to_vec();
    full.push("--out");
    full.push(out_arg);
    run(&full)
}

fn json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("valid JSON on stdout")
}

/// Writes the shared model + data fixtures into `dir`: a model JSON with
/// its background, a feature-only instances CSV, and a labeled CSV.
fn write_fixtures(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let bg = dir.join("background.csv");
    std::fs::write(&bg, "a,b,c\n0.0,1.0,2.0\n2.0,3.0,0.0\n1.0,-1.0,1.0\n").unwrap();
    let model = dir.join("model.json");
    std::fs::write(
        &model,
        r#"{"kind": "linear", "coefficients": [2.0, -1.0, 0.5], "intercept": 0.3, "background_csv": "background.csv"}"#,
    )
    .unwrap();
    let instances = dir.join("instances.csv");
    std::fs::write(&instances, "a,b,c\n1.5,0.5,-0.5\n0.5,2.0,1.0\n1.0,1.0,1.0\n-0.5,0.0,2.0\n")
        .unwrap();
    let labeled = dir.join("labeled.csv");
    std::fs::write(
        &labeled,
        "a,b,c,y\n1.5,0.5,-0.5,3.0\n0.5,2.0,1.0,0.0\n1.0,1.0,1.0,2.0\n-0.5,0.0,2.0,-1.0\n",
    )
    .unwrap();
    (model, instances, labeled)
}

fn fixture_model() -> TabularModel {
    TabularModel::new(
        ModelKind::Linear,
        vec![2.0, -1.0, 0.5],
        0.3,
        vec![vec![0.0, 1.0, 2.0], vec![2.0, 3.0, 0.0], vec![1.0, -1.0, 1.0]],
    )
    .unwrap()
}

fn fixture_rows_and_labels() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![
            vec![1.5, 0.5, -0.5],
            vec![0.5, 2.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![-0.5, 0.0, 2.0],
        ],
        vec![3.0, 0.0, 2.0, -1.0],
    )
}

#[test]
fn criterion_13_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (model, instances, labeled) = write_fixtures(dir.path());
    let model = model.to_str().unwrap();
    let instances = instances.to_str().unwrap();
    let labeled = labeled.to_str().unwrap();

    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("exact", vec!["exact", "--game", "random:d=6,seed=9"]),
        (
            "explain",
            vec![
                "explain", "--game", model, "--data", instances, "--instance", "1", "--seed",
                "31", "--threshold", "0.05",
            ],
        ),
        (
            "sage",
            vec![
                "sage", "--game", model, "--data", labeled, "--labels", "y", "--seed", "5",
                "--threshold", "0.05",
            ],
        ),
        (
            "bench",
            vec![
                "bench", "--game", "random:d=5,seed=2", "--runs", "30", "--n", "256", "--seed",
                "17", "--threshold", "0.05", "--max-samples", "16384",
            ],
        ),
        (
            "gv_csv",
            vec!["gv", "--game", "random:d=5,seed=2", "--format", "csv"],
        ),
    ];

    let mut all_identical = true;
    for (name, args) in &cases {
        let first = dir.path().join(format!("{name}_first.out"));
        let second = dir.path().join(format!("{name}_second.out"));
        let s1 = run_to_file(args, &first);
        let s2 = run_to_file(args, &second);
        assert_eq!(s1.status.code(), s2.status.code(), "{name} exit codes differ");
        let b1 = std::fs::read(&first).unwrap();
        let b2 = std::fs::read(&second).unwrap();
        if b1 != b2 {
            all_identical = false;
            eprintln!("{name}: outputs differ");
        }
    }

    // Capping the worker pool must not change the bytes either.
    let serial = dir.path().join("bench_serial.out");
    let out = Command::new(bin())
        .args(&cases[3].1)
        .args(["--out", serial.to_str().unwrap()])
        .env("SHAPREG_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let parallel = std::fs::read(dir.path().join("bench_first.out")).unwrap();
    let capped = std::fs::read(&serial).unwrap();
    if parallel != capped {
        all_identical = false;
        eprintln!("bench: thread cap changed the bytes");
    }

    let tag = if all_identical { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion 13: determinism — identical seeds give byte-identical outputs");
    assert!(all_identical);
}

#[test]
fn exact_command_matches_known_values_and_enforces_caps() {
    let out = run(&["exact", "--game", "unanimity:d=3,T=1,2"]);
    let value = json(&out);
    assert_eq!(value["values"][0], 0.5);
    assert_eq!(value["values"][1], 0.5);
    assert_eq!(value["values"][2], 0.0);
    assert_eq!(value["converged"], true);

    // Over the enumeration cap: input error.
    let out = run(&["exact", "--game", "majority:d=21"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explain_recovers_the_linear_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let (model, instances, _labeled) = write_fixtures(dir.path());

    // Attribution of a linear model under marginal removal:
    // coef_i * (x_i - mean background_i). Background means: (1, 1, 1).
    let expected = [2.0 * (1.5 - 1.0), -1.0 * (0.5 - 1.0), 0.5 * (-0.5 - 1.0)];

    let out = run(&[
        "explain",
        "--game",
        model.to_str().unwrap(),
        "--data",
        instances.to_str().unwrap(),
        "--instance",
        "0",
        "--seed",
        "42",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value = json(&out);
    assert_eq!(value["converged"], true);
    for i in 0..3 {
        let v = value["values"][i].as_f64().unwrap();
        let sigma = value["std_errors"][i].as_f64().unwrap();
        assert!((v - expected[i]).abs() <= 3.0 * sigma + 1e-9, "coord {i}: {v}");
    }
    // Covariance appears only behind its flag.
    assert!(value.get("covariance").is_none());

    let out = run(&[
        "explain",
        "--game",
        model.to_str().unwrap(),
        "--data",
        instances.to_str().unwrap(),
        "--instance",
        "0",
        "--seed",
        "42",
        "--covariance",
    ]);
    let value = json(&out);
    assert!(value.get("covariance").is_some());
}

#[test]
fn csv_output_has_one_row_per_player() {
    let dir = tempfile::tempdir().unwrap();
    let (model, instances, _labeled) = write_fixtures(dir.path());
    let out = run(&[
        "explain",
        "--game",
        model.to_str().unwrap(),
        "--data",
        instances.to_str().unwrap(),
        "--instance",
        "0",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "index,value,std_error,ci_lo,ci_hi");
}

#[test]
fn non_convergence_at_the_cap_exits_three() {
    let out = run(&[
        "explain",
        "--game",
        "random:d=8,seed=4",
        "--instance",
        "0",
        "--threshold",
        "0.00001",
        "--max-samples",
        "2048",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["converged"], false);
    assert_eq!(value["n_samples"], 2048);
}

#[test]
fn sage_matches_the_stochastic_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _instances, labeled) = write_fixtures(dir.path());

    let (rows, labels) = fixture_rows_and_labels();
    let game = sage_game(fixture_model(), rows, labels, Loss::Squared).unwrap();
    let oracle = shapley_exact_stochastic(&game).unwrap();

    let out = run(&[
        "sage",
        "--game",
        model.to_str().unwrap(),
        "--data",
        labeled.to_str().unwrap(),
        "--labels",
        "y",
        "--seed",
        "11",
        "--threshold",
        "0.02",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value = json(&out);
    for i in 0..3 {
        let v = value["values"][i].as_f64().unwrap();
        let sigma = value["std_errors"][i].as_f64().unwrap();
        assert!((v - oracle[i]).abs() <= 3.0 * sigma + 1e-9, "coord {i}");
    }
}

#[test]
fn effects_gives_a_zero_coefficient_feature_an_interval_containing_zero() {
    let dir = tempfile::tempdir().unwrap();
    let bg = dir.path().join("background.csv");
    std::fs::write(&bg, "a,b\n0.0,1.0\n2.0,-1.0\n1.0,0.5\n").unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(
        &model,
        r#"{"kind": "linear", "coefficients": [1.5, 0.0], "intercept": 0.1, "background_csv": "background.csv"}"#,
    )
    .unwrap();

    let out = run(&[
        "effects",
        "--game",
        model.to_str().unwrap(),
        "--seed",
        "1",
        "--threshold",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value = json(&out);
    let lo = value["ci95"][1][0].as_f64().unwrap();
    let hi = value["ci95"][1][1].as_f64().unwrap();
    assert!(lo <= 0.0 && 0.0 <= hi, "interval [{lo}, {hi}]");
}

#[test]
fn bench_emits_the_full_table_with_expected_orderings() {
    let out = run(&[
        "bench",
        "--game",
        "random:d=8,seed=1",
        "--runs",
        "100",
        "--n",
        "2048",
        "--threshold",
        "0.03",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.iter().filter(|l| l.starts_with("bias_variance,")).count(), 4);
    assert_eq!(lines.iter().filter(|l| l.starts_with("variance_scaling,")).count(), 4);
    assert_eq!(lines.iter().filter(|l| l.starts_with("speedup_ratio,")).count(), 6);
    assert_eq!(lines.iter().filter(|l| l.starts_with("forecast,")).count(), 1);

    // Pairing speeds up the sampled-moments estimator.
    let paired_row = lines
        .iter()
        .find(|l| l.starts_with("speedup_ratio,original->original_paired"))
        .expect("ratio row present");
    let ratio: f64 = paired_row.split(',').nth(8).unwrap().parse().unwrap();
    assert!(ratio > 1.0, "ratio {ratio}");

    // The exact-moment estimator's bias is far below its variance.
    let unbiased_row = lines
        .iter()
        .find(|l| l.starts_with("bias_variance,unbiased,"))
        .expect("bias_variance row present");
    let fields: Vec<&str> = unbiased_row.split(',').collect();
    let bias_sq: f64 = fields[4].parse().unwrap();
    let variance: f64 = fields[5].parse().unwrap();
    assert!(bias_sq < 0.05 * variance, "bias_sq {bias_sq}, variance {variance}");
}

#[test]
fn input_errors_exit_two() {
    // Missing model file (parsed as a synthetic spec, which also fails).
    let out = run(&["explain", "--game", "missing.json", "--instance", "0"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown synthetic kind.
    let out = run(&["exact", "--game", "nonsense:d=3"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing label column.
    let dir = tempfile::tempdir().unwrap();
    let (model, _instances, labeled) = write_fixtures(dir.path());
    let out = run(&[
        "sage",
        "--game",
        model.to_str().unwrap(),
        "--data",
        labeled.to_str().unwrap(),
        "--labels",
        "missing",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Instance row out of range.
    let out = run(&[
        "explain",
        "--game",
        model.to_str().unwrap(),
        "--instance",
        "99",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
