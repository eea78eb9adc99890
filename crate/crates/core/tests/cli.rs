use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pursuit-track"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for args in [
        vec!["bogus"],
        vec!["collect", "--policy", "greedy"],
        vec!["train-marl", "--mode", "filter"],
        vec!["eval-marl", "--policy", "nonexistent"],
        vec!["--config", "missing.toml", "gen-world"],
        vec!["train-filter", "--model", "pmc", "--dataset", "nowhere"],
    ] {
        let out = cli(p, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    std::fs::write(p.join("bad.toml"), "[env]\ngrid = 1\n").unwrap();
    assert_eq!(cli(p, &["--config", "bad.toml", "gen-world"]).status.code(), Some(2));
}

#[test]
fn config_file_and_flags_layer_over_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("run.toml"), "seed = 9\ncollect_episodes = 3\n[env]\nt_max = 40\n[marl]\ntau = 0.05\n").unwrap();
    let stdout = ok(p, &["--config", "run.toml", "--seed", "2", "collect", "--policy", "random"]);
    assert!(stdout.starts_with("3 episodes"), "{stdout}");
    let snap: toml::Value = toml::from_str(&std::fs::read_to_string(p.join("out/data/random/2.config.toml")).unwrap()).unwrap();
    assert_eq!(snap["seed"].as_integer(), Some(2));
    assert_eq!(snap["env"]["t_max"].as_integer(), Some(40));
    assert_eq!(snap["env"]["grid"].as_integer(), Some(64));
    assert_eq!(snap["marl"]["tau"].as_float(), Some(0.05));
    assert_eq!(snap["marl"]["seed"].as_integer(), Some(2));
    assert_eq!(snap["command"]["name"].as_str(), Some("collect"));
    assert_eq!(snap["command"]["policy"].as_str(), Some("random"));

    // A snapshot is itself a valid config for replaying the run.
    let replay = p.join("replay");
    std::fs::create_dir(&replay).unwrap();
    std::fs::copy(p.join("out/data/random/2.config.toml"), replay.join("cfg.toml")).unwrap();
    ok(&replay, &["--config", "cfg.toml", "collect", "--policy", "random"]);
    assert_eq!(
        std::fs::read(p.join("out/data/random/2.jsonl")).unwrap(),
        std::fs::read(replay.join("out/data/random/2.jsonl")).unwrap()
    );
}

#[test]
fn paper_shape_preset_resolves() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["--preset", "paper-shape", "gen-world"]);
    assert!(stdout.starts_with("terrain 256x256"), "{stdout}");
    let snap = std::fs::read_to_string(dir.path().join("out/world/terrain.config.toml")).unwrap();
    assert!(snap.contains("preset = \"paper-shape\""));
    assert!(snap.contains("episodes = 5000"));
}

#[test]
fn filter_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["collect", "--policy", "heuristic", "--episodes", "8"]);
    ok(p, &["train-filter", "--model", "fc", "--dataset", "out/data/heuristic", "--epochs", "3"]);
    let curve = std::fs::read_to_string(p.join("out/reports/filter_curve_fc_0.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    ok(p, &["train-filter", "--model", "fc", "--dataset", "out/data/heuristic", "--epochs", "2", "--resume", "out/filters/fc_0.ndg", "--name", "fc_more"]);
    let wrong = cli(p, &["train-filter", "--model", "pmc", "--dataset", "out/data/heuristic", "--resume", "out/filters/fc_0.ndg"]);
    assert_eq!(wrong.status.code(), Some(2));
    ok(p, &["eval-filter", "--checkpoint", "out/filters/fc_more.ndg", "--dataset", "out/data/heuristic", "--split", "all", "--skip-runtime"]);
    let report = std::fs::read_to_string(p.join("out/reports/filter_eval.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("fc_more,") && rows[2].starts_with("motion,"));
    assert!(rows[1].ends_with(','), "runtime column left empty: {}", rows[1]);
}
