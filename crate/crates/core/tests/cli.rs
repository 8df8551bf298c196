mod common;

use std::path::Path;
use std::process::{Command, Output};

use hjhomog::runner::RunManifest;

fn hjhomog(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjhomog"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HJHOMG_CACHE_DIR")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_COSINE: &str = r#"
[medium]
kind = "periodic"
dim = 1
potential = "cosine"
amplitude = 1.0

[lattice]
cells_per_unit = 40
steps_per_unit = 4
speed_cap = 3.0
radius = 4.0

[schedule]
horizons = [1, 2]
seeds = [0]

[grids]
direction_extent = 1.5
direction_step = 0.25
momentum_extent = 0.5
momentum_step = 0.25
"#;

#[test]
fn audit_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let free = common::config_path("free_1d.toml");
    let o = hjhomog(&["audit", "--config", free.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(out.join("audit.json").exists());

    let resonant = common::config_path("resonant.toml");
    let o = hjhomog(&["audit", "--config", resonant.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("[2, -1]"), "{}", text(&o));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, SMALL_COSINE.replace("speed_cap = 3.0", "speed_cap = 3.0\nsped_cap = 1.0")).unwrap();
    let o = hjhomog(&["effective", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let msg = text(&o);
    assert!(msg.contains("sped_cap") && msg.contains("line"), "{msg}");

    let no_eps = tmp.path().join("no_eps.toml");
    std::fs::write(&no_eps, SMALL_COSINE).unwrap();
    let o = hjhomog(&["converge", "--config", no_eps.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("schedule.epsilons"), "{}", text(&o));

    let o = hjhomog(&["effective"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = hjhomog(&["effective", "--config", no_eps.to_str().unwrap(), "--workers", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = hjhomog(&["audit", "--config", tmp.path().join("missing.toml").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cached_rerun_reproduces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, SMALL_COSINE).unwrap();
    let cache = tmp.path().join("cache");
    let run = |out: &str| {
        let o = hjhomog(
            &[
                "effective",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out,
                "--cache",
                cache.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert_ne!(o.status.code(), Some(2), "{}", text(&o));
        manifest(&tmp.path().join(out))
    };
    let cold = run("cold");
    let warm = run("warm");
    assert_eq!(cold.cache.hits, 0);
    assert!(cold.cache.misses > 0);
    assert_eq!(warm.cache.misses, 0);
    assert_eq!(warm.cache.hits, cold.cache.misses);
    let hashes = |m: &RunManifest| m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect::<Vec<_>>();
    assert_eq!(hashes(&cold), hashes(&warm));
    for a in &cold.artifacts {
        let bytes = std::fs::read(tmp.path().join("cold").join(&a.path)).unwrap();
        assert_eq!(bytes.len(), a.bytes);
    }
    // The env var is the last fallback for the cache location.
    let o = Command::new(env!("CARGO_BIN_EXE_hjhomog"))
        .args(["effective", "--config", cfg.to_str().unwrap(), "--out", "env"])
        .current_dir(tmp.path())
        .env("HJHOMG_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(2));
    assert_eq!(manifest(&tmp.path().join("env")).cache.misses, 0);
}

#[test]
fn strict_turns_warnings_into_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, SMALL_COSINE).unwrap();
    let loose = hjhomog(&["effective", "--config", cfg.to_str().unwrap(), "--out", "loose"], tmp.path());
    let m = manifest(&tmp.path().join("loose"));
    assert!(!m.warnings.is_empty(), "short schedule should leave unconverged directions");
    assert!(m.audits.iter().all(|a| a.passed), "{:?}", m.audits);
    assert_eq!(loose.status.code(), Some(0), "{}", text(&loose));
    let strict = hjhomog(
        &["effective", "--config", cfg.to_str().unwrap(), "--out", "strict", "--strict"],
        tmp.path(),
    );
    assert_eq!(strict.status.code(), Some(1), "{}", text(&strict));
}

#[test]
fn seed_override_replaces_seed_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, SMALL_COSINE.replace("seeds = [0]", "seeds = [0, 1, 2]")).unwrap();
    let o = hjhomog(
        &["effective", "--config", cfg.to_str().unwrap(), "--out", "o", "--seed-override", "9"],
        tmp.path(),
    );
    assert_ne!(o.status.code(), Some(2));
    let m = manifest(&tmp.path().join("o"));
    assert_eq!(m.seed_override, Some(9));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/effective.json")).unwrap()).unwrap();
    assert_eq!(json["seeds"], serde_json::json!([9]), "{json}");
}
