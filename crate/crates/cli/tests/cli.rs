use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gridsift");

/// Small but complete run: ten minutes of stream, a few epochs.
fn small_config(work: &Path) -> String {
    format!(
        r#"
version = 1
seed = 3
threads = 1

[paths]
work_dir = "{}"

[synth]
minutes = 10.0
event_rate = 0.0004
super_event = false

[train]
minutes = 5.0

[detector]
epochs = 2
max_train_windows = 64

[replay]
fit_minutes = 7.0
"#,
        work.display()
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("gridsift.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_exits_with_config_code_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("work");
    let cfg = write_config(tmp.path(), &format!("{}\nseeed = 4\n", small_config(&work)));
    let o = run(&["--config", cfg.to_str().unwrap(), "pipeline"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("seeed"));
    assert!(!work.exists());
}

#[test]
fn range_errors_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[detector]\nz_p = -1.0\n[ingest]\noverlap = 40\n",
    );
    let o = run(&["--config", cfg.to_str().unwrap(), "pipeline"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("detector.z_p") && err.contains("ingest.overlap"),
        "{err}"
    );
}

#[test]
fn failing_stage_reports_its_code_and_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-models");
    let out = tmp.path().join("events");
    let o = run(&[
        "detect",
        "--models",
        missing.to_str().unwrap(),
        "--data",
        tmp.path().join("none.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(12), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage detect failed"));
}

#[test]
fn stages_run_as_separate_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config(&tmp.path().join("unused")));
    let cfg = cfg.to_str().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), p("synth")],
        vec![
            "train".into(),
            "--data".into(),
            p("synth/stream.csv"),
            "--out".into(),
            p("models"),
        ],
        vec![
            "detect".into(),
            "--models".into(),
            p("models"),
            "--data".into(),
            p("synth/stream.csv"),
            "--out".into(),
            p("events"),
        ],
        vec![
            "cluster".into(),
            "--events".into(),
            p("events"),
            "--out".into(),
            p("clusters/model.json"),
        ],
        vec![
            "replay".into(),
            "--model".into(),
            p("clusters/model.json"),
            "--events".into(),
            p("events"),
            "--out".into(),
            p("replay"),
        ],
        vec![
            "report".into(),
            "--model".into(),
            p("replay/model.json"),
            "--events".into(),
            p("events"),
            "--out".into(),
            p("reports"),
        ],
    ];
    for step in &steps {
        let mut args = vec!["--config", cfg];
        args.extend(step.iter().map(String::as_str));
        let o = run(&args);
        assert!(o.status.success(), "{:?}: {}", step, stderr(&o));
    }
    for f in [
        "clusters.json",
        "scatter_cluster1.csv",
        "scatter_cluster2.csv",
        "sequences.json",
        "summary.json",
    ] {
        assert!(tmp.path().join("reports").join(f).is_file(), "missing {f}");
    }
    assert!(tmp.path().join("replay/assignments.json").is_file());
}

#[test]
fn pipeline_resumes_from_existing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path().join("work");
    let cfg = write_config(tmp.path(), &small_config(&work));
    let cfg = cfg.to_str().unwrap();

    let first = run(&["--config", cfg, "pipeline"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let log = stderr(&first);
    for stage in ["synth", "train", "detect", "cluster", "replay", "report"] {
        assert!(log.contains(&format!("stage={stage} status=done")), "{log}");
    }
    let models = std::fs::read(work.join("models/train.json")).unwrap();

    // Precomputed models: training is skipped and detection reruns.
    std::fs::remove_dir_all(work.join("events")).unwrap();
    let second = Command::new(BIN)
        .args(["--config", cfg, "pipeline"])
        .env("GRIDSIFT_THREADS", "2")
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(second.status.success(), "{}", stderr(&second));
    let log = stderr(&second);
    assert!(log.contains("stage=train status=skipped"), "{log}");
    assert!(log.contains("stage=detect status=done"), "{log}");
    assert!(log.contains("threads=2"), "{log}");
    assert_eq!(
        std::fs::read(work.join("models/train.json")).unwrap(),
        models
    );
    let stdout = String::from_utf8_lossy(&second.stdout);
    assert!(stdout.contains("skipped [synth,train"), "{stdout}");
}
