use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn phs(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phs"))
        .args(args)
        .env("PHS_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = phs(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().lines().last().unwrap())
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn gen_dataset_is_deterministic() {
    let args = ["gen-dataset", "--mode", "phs", "--scenarios", "10", "--k-expl", "10", "--seed", "7"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = ok(a.path(), &args);
    let db = ok(b.path(), &args);
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(read(&da, "dataset.bin"), read(&db, "dataset.bin"));
    assert_eq!(read(&da, "manifest.txt"), read(&db, "manifest.txt"));
    let manifest = String::from_utf8(read(&da, "manifest.txt")).unwrap();
    assert!(manifest.contains("seed=7\n") && manifest.contains("mode=phs\n"));

    let other = ok(a.path(), &["gen-dataset", "--mode", "phs", "--scenarios", "10", "--seed", "8"]);
    assert_ne!(read(&da, "dataset.bin"), read(&other, "dataset.bin"));
}

#[test]
fn unknown_flag_fails_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = phs(dir.path(), &["gen-dataset", "--bogus"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen-scenarios", "gen-dataset", "train", "evaluate", "render", "pipeline"] {
        let o = phs(dir.path(), &[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "count = 3\nseed = 5\ndensity = 0.2\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = ok(dir.path(), &["gen-scenarios", "--config", cfg]);
    let explicit = ok(dir.path(), &["gen-scenarios", "--count", "3", "--seed", "5", "--density", "0.2"]);
    assert_eq!(read(&from_file, "scenarios.json"), read(&explicit, "scenarios.json"));
    let overridden = ok(dir.path(), &["gen-scenarios", "--config", cfg, "--seed", "6"]);
    assert_ne!(read(&from_file, "scenarios.json"), read(&overridden, "scenarios.json"));

    std::fs::write(dir.path().join("bad.cfg"), "cuont = 3\n").unwrap();
    let o = phs(dir.path(), &["gen-scenarios", "--config", dir.path().join("bad.cfg").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cuont"));
}

#[test]
fn malformed_inputs_are_errors_not_panics() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a dataset").unwrap();
    let junk = junk.to_str().unwrap();
    for args in [
        vec!["train", "--dataset", junk],
        vec!["evaluate", "--network", &format!("x={junk}")],
        vec!["render", "--scenario-file", junk],
        vec!["train"],
    ] {
        let o = phs(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let scen = ok(out, &["gen-scenarios", "--count", "4", "--seed", "1"]);
    let scen_file = scen.join("scenarios.json");
    let data = ok(out, &["gen-dataset", "--scenario-file", scen_file.to_str().unwrap(), "--test-fraction", "0.25"]);
    let trained = ok(
        out,
        &["train", "--dataset", data.join("dataset.bin").to_str().unwrap(), "--steps", "2", "--batch-size", "4"],
    );
    let log = String::from_utf8(read(&trained, "train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let weights = trained.join("weights.bin");
    let eval = ok(
        out,
        &[
            "evaluate",
            "--network",
            &format!("h_phs={}", weights.display()),
            "--eval-scenarios",
            "3",
            "--epsilons",
            "1,2",
        ],
    );
    let records = String::from_utf8(read(&eval, "records.csv")).unwrap();
    assert!(records.starts_with("scenario_id,heuristic,epsilon,path_length,optimal_length,explored_nodes,solved\n"));
    assert_eq!(records.lines().count(), 1 + 3 * 2 * 2);
    let map = ok(
        out,
        &["render", "--scenario-file", scen_file.to_str().unwrap(), "--index", "2", "--network", weights.to_str().unwrap()],
    );
    assert!(read(&map, "map.ppm").starts_with(b"P6\n240 240\n255\n"));
    let explore = ok(out, &["render", "--explore", "--scale", "1", "--seed", "3"]);
    assert_eq!(read(&explore, "map.ppm").len(), "P6\n30 30\n255\n".len() + 2700);
}

#[test]
fn pipeline_runs_end_to_end_at_tiny_scale() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "pipeline", "--scenarios", "5", "--eval-scenarios", "3", "--steps", "2", "--batch-size", "4", "--epsilons", "1,2",
        "--seed", "9", "--jobs", "2",
    ];
    let run = ok(dir.path(), &args);
    for name in [
        "train_scenarios.json",
        "dataset_phs.bin",
        "dataset_van.bin",
        "weights_phs.bin",
        "weights_van.bin",
        "train_log_phs.csv",
        "train_log_van.csv",
        "eval_scenarios.json",
        "records.csv",
        "summary.csv",
        "map_train_phs.ppm",
        "map_train_van.ppm",
        "map_eval_h_adm.ppm",
        "map_eval_h_phs.ppm",
        "map_eval_h_van.ppm",
        "manifest.txt",
    ] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    let summary = String::from_utf8(read(&run, "summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
    let manifest = String::from_utf8(read(&run, "manifest.txt")).unwrap();
    assert!(manifest.contains("weights_phs.bin sha256="));
}
