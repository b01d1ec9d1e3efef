use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
dim = 20
m = 2
tg = 3
lambda = 6
ns = 3
epochs = 2
eval_runs = 2

[suite]
dims = 20
m = 2
categories = ["FullySeparable", "Overlapping"]
n_train = 2
n_test = 1
"#;

fn lcc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcc"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn config_prints_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&lcc(dir.path(), &["--seed", "42", "--greedy", "--reward", "r1", "config"]));
    assert!(text.contains("seed = 42"));
    assert!(text.contains("policy_mode = \"greedy\""));
    assert!(text.contains("reward = \"r1\""));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "dimm = 3\n").unwrap();
    let o = lcc(dir.path(), &["--config", "bad.toml", "config"]);
    assert!(!o.status.success());
}

#[test]
fn suite_train_evaluate_inspect() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let base = ["--config", "tiny.toml", "--out", "run"];
    let with = |extra: &[&str]| -> Vec<String> {
        base.iter().chain(extra).map(|s| s.to_string()).collect()
    };
    let run = |extra: &[&str]| {
        let args = with(extra);
        lcc(dir.path(), &args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    ok(&run(&["suite", "gen"]));
    assert!(dir.path().join("run/suite.json").exists());

    let text = ok(&run(&["train"]));
    assert!(text.contains("epoch   2"));
    assert!(dir.path().join("run/final.ckpt").exists());
    assert!(dir.path().join("run/train_metrics.csv").exists());

    let text = ok(&run(&["evaluate"]));
    assert_eq!(text.lines().count(), 1 + 3);
    let summary = fs::read_to_string(dir.path().join("run/eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3);

    let text = ok(&lcc(dir.path(), &["ckpt", "inspect", "run/final.ckpt"]));
    assert!(text.contains("epoch        2"));
}

#[test]
fn foreign_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    fs::write(dir.path().join("other.toml"), TINY.replace("ns = 3", "ns = 4")).unwrap();
    ok(&lcc(dir.path(), &["--config", "tiny.toml", "--out", "a", "train"]));
    let o = lcc(
        dir.path(),
        &["--config", "other.toml", "--out", "b", "evaluate", "--checkpoint", "a/final.ckpt"],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}
