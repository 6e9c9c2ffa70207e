use std::path::Path;
use std::process::{Command, Output};

fn mvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvlab")).args(args).output().expect("binary runs")
}

fn only_csv(dir: &Path) -> Vec<u8> {
    let csvs: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csvs.len(), 1, "{csvs:?}");
    std::fs::read(&csvs[0]).unwrap()
}

fn replay(args: &[&str]) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let mut full = args.to_vec();
        full.extend(["--out", dir.path().to_str().unwrap(), "--workers", workers]);
        // determinism only: small runs may fail statistical checks
        let out = mvlab(&full);
        assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(only_csv(dir.path()));
    }
    assert_eq!(runs[0], runs[1]);
    // and a plain rerun
    let c = tempfile::tempdir().unwrap();
    let mut full = args.to_vec();
    full.extend(["--out", c.path().to_str().unwrap()]);
    mvlab(&full);
    assert_eq!(only_csv(c.path()), runs[0]);
}

#[test]
fn coupling_replay_is_byte_identical() {
    replay(&["coupling", "--preset", "kinetic-langevin", "--h", "0.01", "--replicas", "200", "--particles", "200"]);
}

#[test]
fn bismut_replay_is_byte_identical() {
    replay(&["bismut", "--h", "0.01", "--replicas", "300", "--particles", "200"]);
}

#[test]
fn manifest_names_the_csv() {
    let d = tempfile::tempdir().unwrap();
    let out = mvlab(&["gramian", "--preset", "kinetic-langevin", "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = std::fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("manifest_"))
        .unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    let hash = m["config_hash"].as_str().unwrap();
    let file = m["files"][0].as_str().unwrap();
    assert_eq!(file, format!("gramian_{hash}.csv"));
    assert!(d.path().join(file).exists());
    assert_eq!(m["seed"], 1);
    assert_eq!(m["checks"][0]["pass"], true);
}

#[test]
fn zero_step_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let out = mvlab(&["simulate", "--h", "0", "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`h`"), "{err}");
    assert_eq!(std::fs::read_dir(d.path()).unwrap().count(), 0);
}

#[test]
fn config_kind_must_match_subcommand() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "kind = \"bismut\"\n").unwrap();
    let out = mvlab(&["coupling", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`kind`"));
}

#[test]
fn failing_check_exits_nonzero() {
    // Gaussian start: t·Ent/W₂² vanishes as t → 0, so the ratio is not stable
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "kind = \"harnack\"\ninit_var = 0.5\n").unwrap();
    let out = mvlab(&["harnack", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL ratio_stable"));
}

#[test]
fn list_presets_names_all_models() {
    let out = mvlab(&["list-presets"]);
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8_lossy(&out.stdout);
    for name in ["linear-ou", "mean-repelled", "kinetic-langevin"] {
        assert!(s.contains(name), "{s}");
    }
}
