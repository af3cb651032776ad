use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fkpp_cli::config::{validate_config, ExperimentConfig};
use fkpp_cli::output::{Manifest, Table};

mod common;
use common::lanczos_gamma;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fkpp"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fkpp-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::two_particle_example();
    cfg.alphas = vec![0.5, 1.0];
    cfg.time.spacing = 1e-3;
    cfg.space.points = 400;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn shipped_configs_validate() {
    let raw = fs::read_to_string(repo_file("configs/two_particle.json")).unwrap();
    let cfg = validate_config(&raw).unwrap();
    let example = ExperimentConfig::two_particle_example();
    assert_eq!(cfg.params, example.params);
    assert_eq!(cfg.alphas.len(), example.alphas.len());
    for (a, b) in cfg.alphas.iter().zip(&example.alphas) {
        assert!((a - b).abs() <= 1e-15);
    }
    let raw = fs::read_to_string(repo_file("configs/continuum_compare.json")).unwrap();
    assert!(validate_config(&raw).unwrap().reference.is_some());
}

#[test]
fn schema_matches_the_validator() {
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo_file("docs/config.schema.json")).unwrap()).unwrap();
    let keys: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    let canonical: serde_json::Value = serde_json::from_str(&ExperimentConfig::two_particle_example().to_json()).unwrap();
    for key in canonical.as_object().unwrap().keys() {
        assert!(keys.contains(&key), "{key} missing from the schema");
    }
    for key in &keys {
        let mut value = canonical.clone();
        value.as_object_mut().unwrap().remove(key.as_str());
        if key.as_str() != "params" {
            assert!(validate_config(&value.to_string()).is_ok(), "{key} should be optional");
        }
    }
    let required: Vec<&str> = schema["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(required, ["params"]);
}

#[test]
fn run_is_deterministic_and_manifest_complete() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, &small_config());
    let (a, b) = (dir.join("a"), dir.join("b"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma: Manifest = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: Manifest = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    ma.verify(&a).unwrap();
    for e in &ma.files {
        assert_eq!(fs::read(a.join(&e.path)).unwrap(), fs::read(b.join(&e.path)).unwrap(), "{}", e.path);
    }
    assert_eq!(ma.files.len(), 2 * 5);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn moments_file_has_the_documented_columns() {
    let dir = scratch("columns");
    let cfg = write_config(&dir, &small_config());
    let out = dir.join("o");
    let o = run(&["flees", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let table = Table::from_csv(&fs::read(out.join("alpha_1.000000/moments.csv")).unwrap()).unwrap();
    assert_eq!(
        table.header,
        ["t", "S", "chi", "mu_1", "x_1", "alpha2_1", "mu_2", "x_2", "alpha2_2", "mu_total"]
    );
    let t = table.column("t").unwrap();
    let s = table.column("S").unwrap();
    assert_eq!(t[0], 0.0);
    assert_eq!(*t.last().unwrap(), 1.0);
    for (a, b) in t.iter().zip(&s) {
        assert!((a - b).abs() < 1e-12);
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = scratch("config-error");
    let mut cfg = small_config();
    cfg.alphas = vec![1.2];
    let path = write_config(&dir, &cfg);
    let o = run(&["run", "--config", path.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alphas[0]") && err.contains("(0, 1]"), "{err}");
    assert!(!dir.join("o").exists());

    let mut three = small_config();
    three.params.particles.push(three.params.particles[0].clone());
    let path = write_config(&dir, &three);
    let o = run(&["flees", "--config", path.to_str().unwrap(), "--closure", "paper"]);
    assert_eq!(o.status.code(), Some(2));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn numerical_failures_exit_with_code_three_and_clean_up() {
    let dir = scratch("numerical");
    let mut cfg = small_config();
    cfg.alphas = vec![1.0, 0.5];
    cfg.params.a = 1e300;
    let path = write_config(&dir, &cfg);
    let out = dir.join("o");
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha = 1"));
    assert!(!out.exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_calculus_passes() {
    let o = run(&["verify-calculus", "--alpha", "0.6309297535714574", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 11);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn staircase_reaches_the_total_mass() {
    let o = run(&["staircase", "--alpha", "0.6309297535714574", "--samples", "11"]);
    assert!(o.status.success());
    let table = Table::from_csv(&o.stdout).unwrap();
    assert_eq!(table.rows.len(), 11);
    let s = table.column("S").unwrap();
    let total = 1.0 / lanczos_gamma(1.6309297535714574);
    assert!((s[10] - total).abs() < 1e-12, "{} {}", s[10], total);
    assert!(s.windows(2).all(|w| w[1] >= w[0]));
    assert!(String::from_utf8_lossy(&o.stderr).contains("32 intervals"));
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["staircase", "verify-calculus", "flees", "simulate", "reference", "compare", "run"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    for flag in ["--config", "--out", "--workers", "--closure"] {
        assert!(text.contains(flag), "{flag}");
    }
}
