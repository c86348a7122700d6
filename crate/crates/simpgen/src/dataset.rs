//! Dataset generation and the `VOXD` container.
//!
//! Layout (little-endian): magic `VOXD`, version `u16`, dims `3 × u32`,
//! sample count `u32`, then per sample: id `u64`, volfrac `f32`, the
//! normalized initial strain energy and the optimized density as
//! `f32` arrays in x-fastest element order. A JSON manifest sits next to
//! the file with the same stem.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use voxfem::{FemProblem, GridDims};

use crate::{run_simp, sample_problem, sample_volfrac, ProblemSamplerConfig, SimpConfig, SimpError};

pub const DATASET_MAGIC: &[u8; 4] = b"VOXD";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: u64 = 4 + 2 + 12 + 4;
const TEST_FRACTION: f64 = 0.2;
const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: u64,
    pub seed: u64,
    pub problem: FemProblem,
    pub volfrac: f64,
    pub compliance: f64,
    pub simp_iterations: usize,
    /// Byte offset of the record in the dataset file.
    pub offset: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub id: u64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u16,
    /// File name of the dataset, relative to the manifest.
    pub dataset_file: String,
    pub dims: GridDims,
    pub sample_count: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub sampler: ProblemSamplerConfig,
    pub simp: SimpConfig,
    pub samples: Vec<SampleEntry>,
    pub failures: Vec<FailedSample>,
}

impl DatasetManifest {
    pub fn manifest_path(dataset: &Path) -> PathBuf {
        dataset.with_extension("json")
    }

    pub fn load(path: &Path) -> Result<Self, SimpError> {
        let text = fs::read_to_string(path).map_err(|e| SimpError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SimpError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SimpError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| SimpError::io(path, e))
    }

    /// Location of the dataset file for a manifest stored at `manifest_path`.
    pub fn dataset_path(&self, manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.dataset_file)
    }

    pub fn entry(&self, id: u64) -> Option<&SampleEntry> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.samples.iter().filter(|s| s.split == split).map(|s| s.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub volfrac: f32,
    /// Normalized initial strain energy.
    pub condition: Vec<f32>,
    /// Optimized density.
    pub density: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dims: GridDims,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn record_len(dims: &GridDims) -> u64 {
        8 + 4 + 2 * 4 * dims.n_elements() as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.dims.n_elements();
        let mut out = Vec::with_capacity((HEADER_LEN + Self::record_len(&self.dims) * self.samples.len() as u64) as usize);
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        for d in [self.dims.nx, self.dims.ny, self.dims.nz] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        for s in &self.samples {
            assert_eq!(s.condition.len(), n);
            assert_eq!(s.density.len(), n);
            out.extend_from_slice(&s.id.to_le_bytes());
            out.extend_from_slice(&s.volfrac.to_le_bytes());
            for v in s.condition.iter().chain(&s.density) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), SimpError> {
        let file = fs::File::create(path).map_err(|e| SimpError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(|e| SimpError::io(path, e))?;
        w.flush().map_err(|e| SimpError::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, SimpError> {
        let fail = |reason: String| SimpError::Format {
            path: origin.to_string(),
            reason,
        };
        if bytes.len() < HEADER_LEN as usize {
            return Err(fail("truncated header".into()));
        }
        if &bytes[0..4] != DATASET_MAGIC {
            return Err(fail(format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DATASET_VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let dims = GridDims::new(u32_at(6), u32_at(10), u32_at(14));
        let count = u32_at(18);
        let n = dims.n_elements();
        let rec = Self::record_len(&dims) as usize;
        let expected = HEADER_LEN as usize + rec * count;
        if bytes.len() != expected {
            return Err(fail(format!("expected {expected} bytes for {count} samples, found {}", bytes.len())));
        }
        let floats = |o: usize, len: usize| -> Vec<f32> {
            bytes[o..o + 4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let mut samples = Vec::with_capacity(count);
        for s in 0..count {
            let o = HEADER_LEN as usize + s * rec;
            let id = u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
            let volfrac = f32::from_le_bytes(bytes[o + 8..o + 12].try_into().unwrap());
            samples.push(Sample {
                id,
                volfrac,
                condition: floats(o + 12, n),
                density: floats(o + 12 + 4 * n, n),
            });
        }
        Ok(Self { dims, samples })
    }

    pub fn read(path: &Path) -> Result<Self, SimpError> {
        let bytes = fs::read(path).map_err(|e| SimpError::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn get(&self, id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of sample `id` under master seed `seed`.
pub fn sample_seed(seed: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(id))
}

/// Train/test assignment: the `round(0.2 n)` ids with the smallest hash go
/// to the test split.
pub fn split_for(ids: &[u64]) -> Vec<Split> {
    let n_test = (TEST_FRACTION * ids.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (splitmix64(ids[i]), ids[i]));
    let mut out = vec![Split::Train; ids.len()];
    for &i in order.iter().take(n_test) {
        out[i] = Split::Test;
    }
    out
}

/// Runs `n` independent sample → SIMP jobs on the rayon pool and writes the
/// dataset to `out_path` plus its JSON manifest. Output bytes depend only on
/// the configs, never on scheduling.
pub fn generate_dataset(
    n: usize,
    cfg: &ProblemSamplerConfig,
    simp_cfg: &SimpConfig,
    out_path: &Path,
) -> Result<DatasetManifest, SimpError> {
    cfg.validate()?;
    let results: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let seed = sample_seed(cfg.seed, id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut job = || -> Result<_, SimpError> {
                let problem = sample_problem(&mut rng, cfg)?;
                let volfrac = sample_volfrac(&mut rng, cfg);
                let simp = SimpConfig {
                    volfrac,
                    ..simp_cfg.clone()
                };
                let outcome = run_simp(&problem, &simp)?;
                Ok((problem, volfrac, outcome))
            };
            let r = job();
            if let Err(e) = &r {
                log::warn!("sample {id} failed: {e}");
            }
            (id, seed, r)
        })
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (id, seed, r) in results {
        match r {
            Ok(v) => ok.push((id, seed, v)),
            Err(e) => failures.push(FailedSample {
                id,
                seed,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(SimpError::TooManyFailures {
            failed: failures.len(),
            total: n,
        });
    }

    let ids: Vec<u64> = ok.iter().map(|(id, _, _)| *id).collect();
    let splits = split_for(&ids);
    let dims = cfg.dims;
    let mut samples = Vec::with_capacity(ok.len());
    let mut entries = Vec::with_capacity(ok.len());
    for (k, ((id, seed, (problem, volfrac, outcome)), split)) in ok.into_iter().zip(splits).enumerate() {
        entries.push(SampleEntry {
            id,
            seed,
            problem,
            volfrac,
            compliance: outcome.compliance,
            simp_iterations: outcome.history.iterations(),
            offset: HEADER_LEN + k as u64 * Dataset::record_len(&dims),
            split,
        });
        samples.push(Sample {
            id,
            volfrac: volfrac as f32,
            condition: outcome.initial_energy.values().iter().map(|&v| v as f32).collect(),
            density: outcome.density.values().iter().map(|&v| v as f32).collect(),
        });
    }
    let dataset = Dataset { dims, samples };
    dataset.write(out_path)?;

    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        dataset_file: out_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        dims,
        sample_count: entries.len(),
        train_count: entries.iter().filter(|e| e.split == Split::Train).count(),
        test_count: entries.iter().filter(|e| e.split == Split::Test).count(),
        sampler: cfg.clone(),
        simp: simp_cfg.clone(),
        samples: entries,
        failures,
    };
    manifest.save(&DatasetManifest::manifest_path(out_path))?;
    Ok(manifest)
}
