use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nldiff_cli::artifacts::{read_csv, DIAG_FILE, HASH_PREFIX};
use nldiff_cli::pipeline::Stage;
use nldiff_cli::{parse_config_str, run_pipeline, ExperimentConfig, RunManifest};

const ALL: [Stage; 4] = [Stage::Stationary, Stage::Evolve, Stage::Report, Stage::Verify];

fn repo_config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn nldiff(root: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nldiff")).args(args).env("NLDIFF_OUTPUT_ROOT", root).output().unwrap();
    let text = |b: Vec<u8>| String::from_utf8(b).unwrap();
    (out.status.code().unwrap(), text(out.stdout), text(out.stderr))
}

/// A shorter exterior run that keeps every check meaningful.
fn short_config() -> ExperimentConfig {
    parse_config_str(
        "output = \"short\"
[kernel]
family = \"poly3\"
d = 1.0
[grid]
half_extent = 40.0
h = 0.05
[evolution]
t_end = 200.0
snapshot_times = [50.0, 100.0, 200.0]
[verify]
near_probes = [1.0, 1.5]
tail_window = [50.0, 200.0]
check_times = [50.0, 100.0, 200.0]
momentum_early = [25.0, 50.0]
momentum_late = [100.0, 200.0]
v_residual_times = [25.0, 50.0]
barriers = false
",
    )
    .unwrap()
}

#[test]
fn default_run_passes_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let outcome = run_pipeline(&ExperimentConfig::default(), &ALL, dir.path(), false).unwrap();
    assert!(start.elapsed() < Duration::from_secs(300), "{:?}", start.elapsed());
    for c in &outcome.checks {
        assert!(c.pass, "{} failed: {}", c.name, c.detail);
    }
    assert_eq!(outcome.checks.len(), 10);
    let m = &outcome.manifest;
    assert_eq!(m.outcome, "pass");
    assert_eq!(m.config_hash, ExperimentConfig::default().hash());
    // every file in the directory is in the inventory, and vice versa
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let listed: Vec<String> = m.files.iter().map(|f| f.path.clone()).collect();
    assert_eq!(on_disk, listed);
    for f in m.files.iter().filter(|f| f.path.ends_with(".csv")) {
        let text = std::fs::read_to_string(dir.path().join(&f.path)).unwrap();
        assert!(text.starts_with(&format!("{HASH_PREFIX}{}\n", m.config_hash)), "{}", f.path);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let config = short_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let stages = [Stage::Stationary, Stage::Evolve];
    run_pipeline(&config, &stages, a.path(), false).unwrap();
    run_pipeline(&config, &stages, b.path(), false).unwrap();
    for name in [DIAG_FILE, "snap_t200.csv", "stationary.csv"] {
        let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
    let (ma, mb) = (RunManifest::read(a.path()).unwrap(), RunManifest::read(b.path()).unwrap());
    assert_eq!(ma.files, mb.files);
}

#[test]
fn verify_reuses_a_stored_trajectory() {
    let config = short_config();
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&config, &[Stage::Stationary, Stage::Evolve], dir.path(), false).unwrap();
    let stored = std::fs::read(dir.path().join(DIAG_FILE)).unwrap();
    let reused = run_pipeline(&config, &ALL, dir.path(), true).unwrap();
    assert_eq!(reused.manifest.phase("evolve").unwrap().status, "reused");
    assert_eq!(std::fs::read(dir.path().join(DIAG_FILE)).unwrap(), stored);
    assert!(reused.manifest.files.iter().any(|f| f.path == DIAG_FILE));
    let fresh = run_pipeline(&config, &ALL, tempfile::tempdir().unwrap().path(), false).unwrap();
    assert_eq!(fresh.manifest.phase("evolve").unwrap().status, "ran");
    let details = |o: &nldiff_cli::RunOutcome| o.checks.iter().map(|c| (c.pass, c.detail.clone())).collect::<Vec<_>>();
    assert_eq!(details(&reused), details(&fresh));
    assert!(reused.passed(), "{:?}", details(&reused));
}

#[test]
fn a_changed_config_is_not_reused() {
    let config = short_config();
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&config, &[Stage::Stationary, Stage::Evolve], dir.path(), false).unwrap();
    let mut other = config.clone();
    other.initial = nldiff_core::evolution::InitialProfile::GaussianBump { center: 3.0, width: 0.5, amplitude: 1.0 };
    let run = run_pipeline(&other, &ALL, dir.path(), true).unwrap();
    assert_eq!(run.manifest.phase("evolve").unwrap().status, "ran");
    let (_, rows) = read_csv(&dir.path().join(DIAG_FILE), &other.hash()).unwrap();
    assert!(!rows.is_empty());
}

#[test]
fn cauchy_run_matches_the_oracle() {
    let config = nldiff_cli::parse_config(&repo_config("cauchy.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_pipeline(&config, &ALL, dir.path(), false).unwrap();
    assert_eq!(outcome.manifest.phase("stationary").unwrap().status, "skipped");
    let names: Vec<&str> = outcome.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["oracle", "mass-conservation"]);
    assert!(outcome.passed(), "{:?}", outcome.checks);
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = root.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    };
    let (code, out, _) =
        nldiff(root.path(), &["kernel-info", "--config", &repo_config("minimal.toml").display().to_string()]);
    assert_eq!(code, 0);
    assert!(out.contains("\"q\": 0.0555"), "{out}");

    let bad = write("bad.toml", "[evolution]\ndt = 0.9\nt_end = 9.0\nsnapshot_times = [9.0]\n");
    let (code, _, err) = nldiff(root.path(), &["verify", "--config", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("stability"), "{err}");

    let short = short_config();
    let strict = toml::to_string(&ExperimentConfig {
        output: "strict".into(),
        verify: nldiff_cli::config::VerifyConfig { near_range: (0.999, 1.001), ..short.verify.clone() },
        ..short.clone()
    })
    .unwrap();
    let (code, out, _) = nldiff(root.path(), &["verify", "--config", &write("strict.toml", &strict)]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("FAIL near-field"), "{out}");
    let manifest = RunManifest::read(&root.path().join("strict")).unwrap();
    assert_eq!(manifest.outcome, "check-failure");

    let tight = toml::to_string(&ExperimentConfig {
        output: "tight".into(),
        stationary: nldiff_core::stationary::SolverOptions { tol: 1e-300, ..Default::default() },
        ..short
    })
    .unwrap();
    let (code, _, err) = nldiff(root.path(), &["stationary", "--config", &write("tight.toml", &tight)]);
    assert_eq!(code, 3, "{err}");
    let manifest = RunManifest::read(&root.path().join("tight")).unwrap();
    assert_eq!(manifest.phases[0].status, "failed");
    assert!(manifest.outcome.contains("residual"), "{}", manifest.outcome);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let root = tempfile::tempdir().unwrap();
    let base = toml::to_string(&ExperimentConfig { output: "sweep".into(), ..short_config() }).unwrap();
    let path = root.path().join("base.toml");
    std::fs::write(&path, base).unwrap();
    let (code, out, err) =
        nldiff(root.path(), &["sweep", "--config", path.to_str().unwrap(), "--set", "kernel.d=1.0,1.5"]);
    assert_eq!(code, 0, "{out}{err}");
    for v in ["1.0", "1.5"] {
        let m = RunManifest::read(&root.path().join("sweep").join(format!("kernel.d={v}"))).unwrap();
        assert_eq!(m.outcome, "pass");
    }
    let summary = std::fs::read_to_string(root.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
}
