use std::path::Path;
use std::process::{Command, Output};

fn cfflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfflow"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CFFLOW_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_csv_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "[data]\nsource = \"csv\"\npath = \"nowhere.csv\"\ndx = 1\ndy = 1\n",
    )
    .unwrap();
    let o = cfflow(&["--config", "exp.toml", "--quiet", "gen-data"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn oracle_check_alone_writes_a_single_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = cfflow(&["--quiet", "--out", "run", "oracle-check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["reports"].as_array().unwrap().len(), 1);
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("stage,metric,value,std\n"));
    assert!(metrics.contains("oracle-check,pass,1.0000000000000000e0,"));
}

#[test]
fn bad_input_is_reported_not_panicked() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--quiet", "run", "no-such-stage"],
        vec!["--quiet", "--set", "train.bogus=1", "train"],
        vec!["--quiet", "run"],
        vec!["--quiet", "--out", "x", "sample"],
    ] {
        let o = cfflow(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("error: "), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn small_pipeline_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = cfflow(
        &[
            "--quiet",
            "--out",
            "run",
            "--set",
            "data.n=400",
            "--set",
            "network.hidden=[16,16]",
            "--set",
            "train.epochs=2",
            "--set",
            "sample.count=50",
            "--set",
            "flow.steps=10",
            "--set",
            "sample.trajectory=true",
            "run",
            "gen-data",
            "train",
            "sample",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["data.csv", "model.ckpt", "loss_trace.csv", "samples.csv", "samples.svg", "trajectory.csv", "config.toml"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let samples = std::fs::read_to_string(run.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().next(), Some("x0,y0"));
    assert_eq!(samples.lines().count(), 51);
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cfflow"))
        .args(["--quiet", "oracle-check"])
        .current_dir(dir.path())
        .env("CFFLOW_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/manifest.json").is_file());
}
