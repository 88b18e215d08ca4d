use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "iter,f_value,grad_norm,kappa,branch,elapsed_ns,aux";

fn mcat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcat"))
        .args(args)
        .env_remove("MCAT_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Trace contents without the wall-clock column.
fn strip_timing(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(5);
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn frechet_writes_traces_and_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mcat(&[
        "frechet",
        "--kind",
        "extrinsic",
        "--n",
        "40",
        "--dim",
        "4",
        "--iters",
        "5",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{o:?}");
    for name in ["rgd.csv", "catalyst.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER);
        assert!(text.lines().count() >= 2);
    }
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["task"], "frechet-extrinsic");
    assert_eq!(sidecar["summaries"].as_array().unwrap().len(), 2);
    assert!(stdout(&o).contains("sidecar="));
}

#[test]
fn single_solver_writes_one_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mcat(&[
        "frechet",
        "--kind",
        "intrinsic",
        "--n",
        "20",
        "--dim",
        "3",
        "--radius",
        "0.5",
        "--solver",
        "rgd",
        "--iters",
        "3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("rgd.csv").exists());
    assert!(!dir.path().join("catalyst.csv").exists());
}

#[test]
fn rerun_reproduces_the_traces() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let o = mcat(&[
        "frechet",
        "--kind",
        "intrinsic",
        "--n",
        "30",
        "--dim",
        "5",
        "--radius",
        "0.4",
        "--iters",
        "8",
        "--seed",
        "3",
        "--bit-reproducible",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let o = mcat(&[
        "rerun",
        "--sidecar",
        first.join("run.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    for name in ["rgd.csv", "catalyst.csv"] {
        assert_eq!(strip_timing(&first.join(name)), strip_timing(&second.join(name)));
    }
}

#[test]
fn completion_reads_a_rating_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    let mut text = String::new();
    for i in 0..6 {
        for u in 0..8 {
            if (i + u) % 3 != 0 {
                text.push_str(&format!("{i}\t{u}\t{}\n", (i * u) as f64 * 0.1 + 1.0));
            }
        }
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    let o = mcat(&[
        "complete",
        "--input",
        data.to_str().unwrap(),
        "--rank",
        "2",
        "--density",
        "0.8",
        "--iters",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(out.join("catalyst.csv").exists());
}

#[test]
fn malformed_input_exits_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    fs::write(&data, "0\t0\tnot-a-number\n").unwrap();
    let o = mcat(&[
        "complete",
        "--input",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn invalid_settings_exit_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mcat(&["frechet", "--kind", "extrinsic", "--shrink", "1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    let o = mcat(&["frechet", "--kind", "sideways", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mcat"))
        .args([
            "frechet",
            "--kind",
            "extrinsic",
            "--n",
            "10",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("MCAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn solver_failures_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    fs::write(&data, "0\t0\t1\n2\t1\t1\n").unwrap();
    let o = mcat(&[
        "complete",
        "--input",
        data.to_str().unwrap(),
        "--rank",
        "2",
        "--lambda",
        "0",
        "--iters",
        "3",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(dir.path().join("o/run.json").exists());
}

#[test]
fn diag_prints_the_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = mcat(&[
        "diag",
        "--dim",
        "4",
        "--samples",
        "12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    for key in ["r1=", "k1=", "k2=", "k=", "delta="] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{key} missing from {text}");
    }
}
