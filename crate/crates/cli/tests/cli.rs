use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bcirl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcirl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn macro_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    write_config(
        dir,
        &format!(
            r#"{{"name": "grid", "env": {{"macro_grid": {{}}}}, "gamma": 1.0, "learning_rate": 0.05, "max_iters": 5, "out": {:?}}}"#,
            out
        ),
    )
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_demos_is_deterministic_and_summarised() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = macro_config(tmp.path());
    let c = cfg.to_str().unwrap();
    let first = bcirl(&["gen-demos", "--config", c, "--seed", "3"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("n=3"), "{}", stdout(&first));
    let data = tmp.path().join("out/grid/data/3");
    let snapshot: Vec<Vec<u8>> = ["demos.json", "labels.json", "truth.json"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    let again = bcirl(&["gen-demos", "--config", c, "--seed", "3"]);
    assert!(again.status.success());
    for (f, before) in ["demos.json", "labels.json", "truth.json"].iter().zip(snapshot) {
        assert_eq!(fs::read(data.join(f)).unwrap(), before, "{f} changed");
    }
}

#[test]
fn run_writes_layout_and_flags_non_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = macro_config(tmp.path());
    let c = cfg.to_str().unwrap();
    assert!(bcirl(&["gen-demos", "--config", c, "--seed", "0", "--seed", "1"]).status.success());
    let out = bcirl(&["run", "--config", c, "--seed", "0", "--seed", "1", "--algo", "maxent", "--max-iters", "3"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    for seed in ["0", "1"] {
        let dir = tmp.path().join("out/grid-maxent").join(seed);
        for f in ["trace.csv", "model.json", "config.json"] {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
        let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
        let mut lines = trace.lines();
        assert_eq!(
            lines.next(),
            Some("iteration,feature_gap_ms,loglik,num_clusters,cluster_purity,wall_ms")
        );
        assert_eq!(lines.count(), 3);
    }
}

#[test]
fn run_before_gen_demos_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = macro_config(tmp.path());
    let out = bcirl(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gen-demos"), "{}", stderr(&out));
}

#[test]
fn single_cluster_em_reproduces_maxent() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"name": "g", "env": {{"macro_grid": {{}}}}, "m": 1, "max_iters": 8, "out": {:?}}}"#,
            out_dir
        ),
    );
    let c = cfg.to_str().unwrap();
    assert!(bcirl(&["gen-demos", "--config", c]).status.success());
    bcirl(&["run", "--config", c, "--algo", "maxent"]);
    bcirl(&["run", "--config", c, "--algo", "bcirl-em"]);
    let model = |algo: &str| fs::read_to_string(out_dir.join(format!("g-{algo}/0/model.json"))).unwrap();
    assert_eq!(model("maxent"), model("bcirl-em"));
    let loglik = |algo: &str| -> Vec<String> {
        fs::read_to_string(out_dir.join(format!("g-{algo}/0/trace.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().to_string())
            .collect()
    };
    assert_eq!(loglik("maxent"), loglik("bcirl-em"));
}

#[test]
fn parallel_jobs_match_serial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = macro_config(tmp.path());
    let c = cfg.to_str().unwrap();
    let seeds = ["--seed", "0", "--seed", "1", "--seed", "2"];
    let mut args = vec!["gen-demos", "--config", c];
    args.extend(seeds);
    assert!(bcirl(&args).status.success());
    let serial = tmp.path().join("serial");
    let parallel = tmp.path().join("parallel");
    for (dir, jobs) in [(&serial, "1"), (&parallel, "3")] {
        // Both runs read the data written under the config's own out dir.
        fs::create_dir_all(dir.join("grid")).unwrap();
        copy_dir(&tmp.path().join("out/grid/data"), &dir.join("grid/data"));
        let mut a = vec!["run", "--config", c, "--out", dir.to_str().unwrap(), "--jobs", jobs];
        a.extend(seeds);
        bcirl(&a);
    }
    for seed in ["0", "1", "2"] {
        let read = |root: &Path| fs::read(root.join("grid-bcirl-crp").join(seed).join("model.json")).unwrap();
        assert_eq!(read(&serial), read(&parallel), "seed {seed}");
    }
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

#[test]
fn schema_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"name": "x"}"#);
    let out = bcirl(&["gen-demos", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("env"), "{}", stderr(&out));

    let cfg = macro_config(tmp.path());
    let c = cfg.to_str().unwrap();
    assert!(bcirl(&["gen-demos", "--config", c]).status.success());
    fs::write(tmp.path().join("out/grid/data/0/demos.json"), r#"{"trajectory": []}"#).unwrap();
    let out = bcirl(&["run", "--config", c]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("trajectories"), "{}", stderr(&out));
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(bcirl(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(bcirl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bcirl(&["--help"]).status.code(), Some(0));
}

#[test]
fn report_aggregates_runs_without_touching_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = macro_config(tmp.path());
    let c = cfg.to_str().unwrap();
    assert!(bcirl(&["gen-demos", "--config", c, "--seed", "0", "--seed", "1"]).status.success());
    bcirl(&["run", "--config", c, "--seed", "0", "--seed", "1", "--algo", "maxent"]);
    bcirl(&["run", "--config", c, "--seed", "0", "--seed", "1"]);
    let runs = tmp.path().join("out");
    let trace = runs.join("grid-maxent/0/trace.csv");
    let before = fs::read(&trace).unwrap();
    let report_dir = tmp.path().join("report");
    let out = bcirl(&[
        "report",
        runs.join("grid-maxent").to_str().unwrap(),
        runs.join("grid-bcirl-crp").to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&trace).unwrap(), before);
    let summary = fs::read_to_string(report_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(summary.contains("\nbcirl-crp,2,") && summary.contains("\nmaxent,2,"), "{summary}");
    for f in ["curves.csv", "clusters.csv", "timing.csv"] {
        assert!(report_dir.join(f).is_file(), "missing {f}");
    }
    let curves = fs::read_to_string(report_dir.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().filter(|l| l.starts_with("maxent,")).count(), 5);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(bcirl(&["report", empty.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(bcirl(&["report"]).status.code(), Some(1));
}
