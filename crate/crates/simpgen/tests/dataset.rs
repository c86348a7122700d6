use simpgen::*;
use voxfem::GridDims;

fn small_cfg(seed: u64) -> (ProblemSamplerConfig, SimpConfig) {
    (
        ProblemSamplerConfig {
            dims: GridDims::cube(8),
            seed,
            ..Default::default()
        },
        SimpConfig { max_iters: 15, ..Default::default() },
    )
}

#[test]
fn generation_is_reproducible_and_split_eighty_twenty() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, simp) = small_cfg(5);
    let a = dir.path().join("a.voxd");
    let b = dir.path().join("b.voxd");
    let ma = generate_dataset(10, &cfg, &simp, &a).unwrap();
    let mb = generate_dataset(10, &cfg, &simp, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ma.samples, mb.samples);
    assert!(ma.failures.is_empty());
    assert_eq!((ma.train_count, ma.test_count), (8, 2));
    assert_eq!(ma.ids(Split::Train).len(), 8);

    let loaded = DatasetManifest::load(&DatasetManifest::manifest_path(&a)).unwrap();
    assert_eq!(loaded.samples, ma.samples);
    assert_eq!(loaded.dataset_path(&DatasetManifest::manifest_path(&a)), a);

    let data = Dataset::read(&a).unwrap();
    assert_eq!(data.samples.len(), 10);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], DATASET_MAGIC);
    for (entry, sample) in ma.samples.iter().zip(&data.samples) {
        assert_eq!(entry.id, sample.id);
        assert_eq!(entry.seed, sample_seed(5, entry.id));
        assert_eq!(sample.volfrac, entry.volfrac as f32);
        assert!(sample.condition.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(sample.condition.iter().cloned().fold(f32::MIN, f32::max), 1.0);
        assert!(sample.density.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = sample.density.iter().map(|&v| v as f64).sum::<f64>() / sample.density.len() as f64;
        assert!((mean - entry.volfrac).abs() < 1e-4);
        // offset points at this record's id
        let off = entry.offset as usize;
        assert_eq!(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()), entry.id);
    }
}

#[test]
fn different_seed_changes_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, simp) = small_cfg(1);
    let (cfg2, _) = small_cfg(2);
    let a = generate_dataset(3, &cfg, &simp, &dir.path().join("a.voxd")).unwrap();
    let b = generate_dataset(3, &cfg2, &simp, &dir.path().join("b.voxd")).unwrap();
    assert_ne!(a.samples[0].problem, b.samples[0].problem);
}

#[test]
fn split_sizes_follow_eighty_twenty() {
    for n in 1..200u64 {
        let ids: Vec<u64> = (0..n).collect();
        let splits = split_for(&ids);
        let test = splits.iter().filter(|s| **s == Split::Test).count() as f64;
        assert!((test - 0.2 * n as f64).abs() <= 1.0, "n = {n}: {test} test");
    }
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.voxd");
    std::fs::write(&path, b"VOXX\x01\x00").unwrap();
    assert!(matches!(Dataset::read(&path), Err(SimpError::Format { .. })));
    let missing = dir.path().join("missing.voxd");
    assert!(matches!(Dataset::read(&missing), Err(SimpError::Io { .. })));
}
