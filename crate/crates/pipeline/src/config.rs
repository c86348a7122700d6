use std::path::{Path, PathBuf};

use genvae::{VaeConfig, VaeTrainConfig, LATENT_STRIDE};
use latdiff::{LdmConfig, LdmTrainConfig};
use serde::{Deserialize, Serialize};
use simpgen::{sample_seed, LoadRanges, ProblemSamplerConfig, SimpConfig, DEFAULT_VOLFRACS};
use voxfem::{GridDims, Preconditioner, SolverOptions};

use crate::PipelineError;

pub const SUPPORTED_RESOLUTIONS: [usize; 3] = [16, 32, 64];

/// Everything a run needs besides the seed. Unset fields take defaults, so
/// `{}` is a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cubic grid edge length.
    pub resolution: usize,
    /// Problems drawn by `gen-data`.
    pub samples: usize,
    pub volfracs: Vec<f64>,
    pub loads: LoadRanges,
    pub simp: SimpConfig,
    pub vae: VaeConfig,
    pub vae_train: VaeTrainConfig,
    /// Coarse-to-fine VAE stages; empty trains at `resolution` only.
    pub multigrid: Vec<MultigridStageConfig>,
    pub ldm: LdmConfig,
    pub ldm_train: LdmTrainConfig,
    /// Held-out conditions used by `generate`, `translate` and `evaluate`.
    pub eval_conditions: usize,
    pub designs_per_condition: usize,
    pub threshold: f64,
    pub translation_strength: f64,
    pub eval_solver: EvalSolverConfig,
    pub paths: PathsConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resolution: 16,
            samples: 250,
            volfracs: DEFAULT_VOLFRACS.to_vec(),
            loads: LoadRanges::default(),
            simp: SimpConfig::default(),
            vae: VaeConfig::default(),
            vae_train: VaeTrainConfig::default(),
            multigrid: Vec::new(),
            ldm: LdmConfig::default(),
            ldm_train: LdmTrainConfig::default(),
            eval_conditions: 10,
            designs_per_condition: 20,
            threshold: 0.5,
            translation_strength: 0.5,
            eval_solver: EvalSolverConfig::default(),
            paths: PathsConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultigridStageConfig {
    /// Dataset file (`.voxd`) of this stage.
    pub dataset: PathBuf,
    pub epochs: usize,
}

/// Conjugate-gradient settings for scoring generated designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSolverConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for EvalSolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iters: 2000,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

impl EvalSolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            max_iters: Some(self.max_iters),
            preconditioner: self.preconditioner,
        }
    }
}

/// Artifact locations. Relative paths resolve against the output
/// directory; unset ones use the default file names there.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub vae: Option<PathBuf>,
    pub ldm: Option<PathBuf>,
    pub designs: Option<PathBuf>,
    pub translations: Option<PathBuf>,
}

/// Resolved artifact paths of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub out: PathBuf,
    pub dataset: PathBuf,
    pub vae: PathBuf,
    pub vae_log: PathBuf,
    pub ldm: PathBuf,
    pub ldm_log: PathBuf,
    pub designs: PathBuf,
    pub translations: PathBuf,
    pub report_dir: PathBuf,
    pub mesh_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path, paths: &PathsConfig) -> Self {
        let pick = |p: &Option<PathBuf>, default: &str| match p {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => out.join(p),
            None => out.join(default),
        };
        Self {
            out: out.to_path_buf(),
            dataset: pick(&paths.dataset, "data.voxd"),
            vae: pick(&paths.vae, "vae.ckpt"),
            vae_log: out.join("vae_log.json"),
            ldm: pick(&paths.ldm, "ldm.ckpt"),
            ldm_log: out.join("ldm_log.json"),
            designs: pick(&paths.designs, "designs.voxd"),
            translations: pick(&paths.translations, "translations.voxd"),
            report_dir: out.join("report"),
            mesh_dir: out.join("meshes"),
        }
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    VaeInit = 2,
    VaeTrain = 3,
    LdmTrain = 4,
    Generate = 5,
    Translate = 6,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) || self.resolution % LATENT_STRIDE != 0 {
            return bad(format!("resolution {} not one of {SUPPORTED_RESOLUTIONS:?}", self.resolution));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.translation_strength) {
            return bad(format!("translation strength {} outside [0, 1]", self.translation_strength));
        }
        if self.designs_per_condition == 0 || self.eval_conditions == 0 {
            return bad("evaluation needs at least one condition and one design".into());
        }
        if self.designs_per_condition > 1 << 16 {
            return bad("at most 65536 designs per condition".into());
        }
        if self.vae.latent_channels != self.ldm.denoiser.latent_channels {
            return bad(format!(
                "VAE latent channels {} differ from the denoiser's {}",
                self.vae.latent_channels, self.ldm.denoiser.latent_channels
            ));
        }
        self.vae.validate()?;
        self.vae_train.validate()?;
        self.ldm.validate()?;
        self.simp.validate()?;
        self.sampler().validate()?;
        Ok(())
    }

    pub fn dims(&self) -> GridDims {
        GridDims::cube(self.resolution)
    }

    pub fn sampler(&self) -> ProblemSamplerConfig {
        ProblemSamplerConfig {
            dims: self.dims(),
            ranges: self.loads.clone(),
            volfracs: self.volfracs.clone(),
            seed: self.stream_seed(Stream::Data),
        }
    }

    pub fn stream_seed(&self, stream: Stream) -> u64 {
        sample_seed(self.seed, stream as u64)
    }

    /// Training configs with their seeds taken from the run seed.
    pub fn seeded_vae_train(&self) -> VaeTrainConfig {
        VaeTrainConfig {
            seed: self.stream_seed(Stream::VaeTrain),
            ..self.vae_train.clone()
        }
    }

    pub fn seeded_ldm_train(&self) -> LdmTrainConfig {
        LdmTrainConfig {
            seed: self.stream_seed(Stream::LdmTrain),
            ..self.ldm_train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_the_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.designs_per_condition, 20);
        assert_eq!(cfg.threshold, 0.5);
    }

    #[test]
    fn rejects_unsupported_resolution_and_unknown_fields() {
        let cfg = RunConfig {
            resolution: 18,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(PipelineError::InvalidConfig(_))));
        assert!(serde_json::from_str::<RunConfig>(r#"{"resolutoin": 16}"#).is_err());
    }

    #[test]
    fn streams_differ_and_follow_the_seed() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..Default::default() };
        assert_ne!(a.stream_seed(Stream::Data), a.stream_seed(Stream::VaeTrain));
        assert_ne!(a.stream_seed(Stream::Data), b.stream_seed(Stream::Data));
        assert_eq!(a.seeded_vae_train().seed, a.stream_seed(Stream::VaeTrain));
    }

    #[test]
    fn relative_paths_resolve_under_out() {
        let p = RunPaths::new(
            Path::new("/runs/a"),
            &PathsConfig {
                dataset: Some("../shared/d.voxd".into()),
                vae: Some("/abs/v.ckpt".into()),
                ..Default::default()
            },
        );
        assert_eq!(p.dataset, Path::new("/runs/a/../shared/d.voxd"));
        assert_eq!(p.vae, Path::new("/abs/v.ckpt"));
        assert_eq!(p.designs, Path::new("/runs/a/designs.voxd"));
    }
}
