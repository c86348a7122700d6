mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use common::TINY_RUN;

fn voxgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxgen")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir` with its bytes, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn unknown_subcommand_is_a_usage_error_with_help() {
    let o = voxgen(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("frobnicate"));
    assert!(err.contains("Commands:") && err.contains("gen-data"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn bad_flag_prints_that_subcommand_help() {
    let o = voxgen(&["generate", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Sample designs for the held-out evaluation conditions"));
    assert_eq!(voxgen(&[]).status.code(), Some(1));
    assert_eq!(voxgen(&["--help"]).status.code(), Some(0));
}

#[test]
fn evaluate_names_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = voxgen(&["evaluate", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&dir.path().join("data.json").display().to_string()), "{}", stderr(&o));

    // a manifest whose dataset file is gone
    let manifest = simpgen::DatasetManifest {
        format_version: simpgen::DATASET_VERSION,
        dataset_file: "gone.voxd".into(),
        dims: voxfem::GridDims::cube(16),
        sample_count: 0,
        train_count: 0,
        test_count: 0,
        sampler: Default::default(),
        simp: Default::default(),
        samples: Vec::new(),
        failures: Vec::new(),
    };
    manifest.save(&dir.path().join("data.json")).unwrap();
    let o = voxgen(&["evaluate", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&dir.path().join("gone.voxd").display().to_string()), "{}", stderr(&o));
}

#[test]
fn malformed_config_is_a_runtime_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"resolution": 16, "bogus": 1}"#).unwrap();
    let o = voxgen(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.json") && stderr(&o).contains("bogus"));
}

fn full_run(out: &Path, config: &Path) {
    let (o, c) = (out.to_str().unwrap(), config.to_str().unwrap());
    for cmd in ["gen-data", "train-vae", "train-ldm", "generate", "translate", "evaluate", "export-mesh"] {
        let r = voxgen(&[cmd, "--config", c, "--seed", "7", "--out", o, "--deterministic"]);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", stderr(&r));
    }
}

#[test]
fn seeded_pipeline_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, TINY_RUN).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    full_run(&a, &config);
    full_run(&b, &config);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    for name in [
        "data.voxd",
        "data.json",
        "vae.ckpt",
        "vae_log.json",
        "ldm.ckpt",
        "ldm_log.json",
        "designs.voxd",
        "translations.voxd",
        "report/report.csv",
        "report/summary.json",
    ] {
        assert!(sa.contains_key(name), "missing {name}");
    }
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs between runs");
    }

    // 2 conditions × 2 designs
    let designs = simpgen::Dataset::read(&a.join("designs.voxd")).unwrap();
    assert_eq!(designs.samples.len(), 4);
    let report = std::fs::read_to_string(a.join("report/report.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.contains(",ldm,")).count(), 4);
    assert!(sa.keys().any(|k| k.starts_with("meshes/") && k.ends_with(".obj")));

    // regenerating with the same seed leaves the designs unchanged
    let r = voxgen(&["generate", "--config", config.to_str().unwrap(), "--seed", "7", "--out", a.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    assert!(std::fs::read(a.join("designs.voxd")).unwrap() == sa["designs.voxd"]);
}
