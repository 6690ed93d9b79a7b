use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fracbayes(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbayes"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn preset_run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracbayes(&["run", "--preset", "quadratic-path5", "--seed", "42", "--iters", "400", "--out", "runs/"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    for key in ["mean_true_belief=", "consensus_error=", "decision_gap="] {
        assert!(line.contains(key), "{line}");
    }
    let csv = fs::read_to_string(dir.path().join("runs/quadratic-path5-s42.csv")).unwrap();
    assert!(csv.starts_with("t,alpha,consensus_error,mean_true_belief,qbar_0,qbar_1,qbar_2,"));
    assert_eq!(csv.lines().count(), 402);
    assert!(dir.path().join("runs/quadratic-path5-s42.header.json").exists());
}

#[test]
fn replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--preset", "quadratic-path5", "--seed", "3", "--iters", "300", "--per-agent", "--out", "a"];
    assert!(fracbayes(&args, dir.path()).status.success());
    let o = fracbayes(&["run", "--replay", "a/quadratic-path5-s3.header.json", "--out", "b"], dir.path());
    assert!(o.status.success());
    for f in ["quadratic-path5-s3.csv", "quadratic-path5-s3.agents.csv", "quadratic-path5-s3.header.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    for (t, out) in [("1", "one"), ("3", "three")] {
        let o = fracbayes(
            &["--threads", t, "run", "--agents", "9", "--topology", "er:0.4", "--iters", "200", "--per-agent", "--out", out],
            dir.path(),
        );
        assert!(o.status.success());
    }
    for f in ["run-s0.csv", "run-s0.agents.csv"] {
        assert_eq!(fs::read(dir.path().join("one").join(f)).unwrap(), fs::read(dir.path().join("three").join(f)).unwrap());
    }
}

#[test]
fn plume_preset_and_degenerate_single_agent() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracbayes(&["run", "--preset", "source-ideal", "--seed", "1", "--iters", "200"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("source-ideal-s1:"));
    let o = fracbayes(&["run", "--agents", "1", "--topology", "complete", "--sigma", "0", "--iters", "100"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), "preset = \"consensus-compare\"\nseed = 5\niters = 250\nout = \"cfg\"\n").unwrap();
    let o = fracbayes(&["run", "--config", "exp.toml", "--iters", "120"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("cfg/consensus-compare-linear-s5.csv")).unwrap();
    assert_eq!(csv.lines().count(), 122);
    assert!(dir.path().join("cfg/consensus-compare-log-s5.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--bogus"],
        vec!["run", "--topology", "ring"],
        vec!["run", "--stepsize", "3"],
        vec!["run", "--preset", "nope"],
        vec!["sweep", "--seeds", "4..2"],
        vec!["check", "--only", "A42"],
    ] {
        assert_eq!(fracbayes(&args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn engine_failure_exits_1_with_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracbayes(&["run", "--stepsize", "1000,1", "--no-cap", "--iters", "5000"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));
}

#[test]
fn sweep_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracbayes(&["sweep", "--preset", "consensus-compare", "--seeds", "2..4", "--iters", "150", "--out", "sw"], dir.path());
    assert!(o.status.success());
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sw/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["seeds"], serde_json::json!([2, 3]));
    assert_eq!(agg["variants"].as_array().unwrap().len(), 2);
    assert_eq!(agg["per_seed"][0]["runs"].as_array().unwrap().len(), 2);
    for f in ["consensus-compare-log-s2.csv", "consensus-compare-linear-s3.csv"] {
        assert!(dir.path().join("sw").join(f).exists(), "{f}");
    }
}

#[test]
fn one_seed_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fracbayes(&["sweep", "--preset", "quadratic-path5", "--seeds", "7..8", "--iters", "200", "--out", "s"], dir.path()).status.success());
    assert!(fracbayes(&["run", "--preset", "quadratic-path5", "--seed", "7", "--iters", "200", "--out", "r"], dir.path()).status.success());
    let f = "quadratic-path5-s7.csv";
    assert_eq!(fs::read(dir.path().join("s").join(f)).unwrap(), fs::read(dir.path().join("r").join(f)).unwrap());
}

#[test]
fn check_rejects_corrupted_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fracbayes(&["run", "--iters", "100", "--out", "."], dir.path()).status.success());
    assert_eq!(fracbayes(&["check", "--trace", "run-s0.csv"], dir.path()).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("run-s0.csv")).unwrap();
    let broken: String = text.lines().take(50).map(|l| format!("{l}\n")).collect::<String>() + "49,0.5,1,1,1,1,1\n";
    fs::write(dir.path().join("run-s0.csv"), broken).unwrap();
    assert_eq!(fracbayes(&["check", "--trace", "run-s0.csv"], dir.path()).status.code(), Some(1));
}

#[test]
fn check_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracbayes(&["check", "--only", "a9", "--report", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("A9 PASS"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r[0]["id"], "A9");
}
