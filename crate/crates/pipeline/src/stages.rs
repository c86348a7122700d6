//! The pipeline steps behind each CLI subcommand, reading and writing the
//! artifacts named by [`RunPaths`].

use std::ops::ControlFlow;
use std::path::Path;

use genvae::{EpochLog, Vae};
use latdiff::{train_ldm, EncodedSet, LatentDiffusion, LdmEpochLog, LdmTrainLog};
use serde::{Deserialize, Serialize};
use simpgen::{generate_dataset, Dataset, DatasetManifest, Split};
use voxfem::DensityField;

use crate::config::{RunConfig, RunPaths, Stream};
use crate::eval::{cases_from, evaluate_designs, write_report, EvalReport};
use crate::generate::{evaluation_conditions, generate_designs, translate_designs};
use crate::mesh::export_mesh;
use crate::multigrid::{multigrid_schedule, MultigridLog, StageData};
use crate::PipelineError;

/// Manifest and records of the dataset file at `path`.
pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, Dataset), PipelineError> {
    let manifest_path = DatasetManifest::manifest_path(path);
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = Dataset::read(&manifest.dataset_path(&manifest_path))?;
    if dataset.dims != manifest.dims {
        return Err(PipelineError::Format {
            path: path.to_path_buf(),
            reason: format!("grid {} differs from the manifest's {}", dataset.dims, manifest.dims),
        });
    }
    Ok((manifest, dataset))
}

/// The run's dataset, which must be at the configured resolution.
pub fn run_dataset(cfg: &RunConfig, paths: &RunPaths) -> Result<(DatasetManifest, Dataset), PipelineError> {
    let (manifest, dataset) = load_dataset(&paths.dataset)?;
    if dataset.dims != cfg.dims() {
        return Err(PipelineError::InvalidConfig(format!(
            "{} holds a {} grid but the run resolution is {}",
            paths.dataset.display(),
            dataset.dims,
            cfg.resolution
        )));
    }
    Ok((manifest, dataset))
}

pub fn gen_data(cfg: &RunConfig, paths: &RunPaths) -> Result<DatasetManifest, PipelineError> {
    Ok(generate_dataset(cfg.samples, &cfg.sampler(), &cfg.simp, &paths.dataset)?)
}

/// Log written by `train-vae`: a single run or a multigrid schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VaeRunLog {
    Single(genvae::TrainLog),
    Multigrid(MultigridLog),
}

impl VaeRunLog {
    /// Epochs of the last (finest) stage.
    pub fn final_epochs(&self) -> &[EpochLog] {
        match self {
            VaeRunLog::Single(l) => &l.epochs,
            VaeRunLog::Multigrid(m) => m.stages.last().map(|s| &s.log.epochs[..]).unwrap_or(&[]),
        }
    }
}

/// Trains the VAE on the training split (validating on the test split) and
/// saves the checkpoint and log. `on_epoch` gets the stage index (0 without
/// a multigrid plan).
pub fn train_vae(
    cfg: &RunConfig,
    paths: &RunPaths,
    mut on_epoch: impl FnMut(usize, &EpochLog) -> ControlFlow<()>,
) -> Result<(Vae, VaeRunLog), PipelineError> {
    let train_cfg = cfg.seeded_vae_train();
    let init_seed = cfg.stream_seed(Stream::VaeInit);
    if cfg.multigrid.is_empty() {
        let (manifest, dataset) = run_dataset(cfg, paths)?;
        let mut vae = Vae::new(cfg.vae.clone(), init_seed)?;
        let (train, val) = (manifest.ids(Split::Train), manifest.ids(Split::Test));
        let log = genvae::train_vae(&mut vae, &dataset, &train, &val, &train_cfg, |e| on_epoch(0, e))?;
        vae.save(&paths.vae)?;
        log.save(&paths.vae_log)?;
        return Ok((vae, VaeRunLog::Single(log)));
    }
    let loaded = cfg
        .multigrid
        .iter()
        .map(|s| {
            let path = if s.dataset.is_absolute() {
                s.dataset.clone()
            } else {
                paths.out.join(&s.dataset)
            };
            load_dataset(&path)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ids: Vec<(Vec<u64>, Vec<u64>)> = loaded
        .iter()
        .map(|(m, _)| (m.ids(Split::Train), m.ids(Split::Test)))
        .collect();
    let stages: Vec<StageData> = loaded
        .iter()
        .zip(&ids)
        .zip(&cfg.multigrid)
        .map(|(((_, d), (t, v)), s)| StageData {
            dataset: d,
            train_ids: t,
            val_ids: v,
            epochs: s.epochs,
        })
        .collect();
    let (vae, log) = multigrid_schedule(&cfg.vae, &train_cfg, &stages, &paths.vae, init_seed, on_epoch)?;
    log.save(&paths.vae_log)?;
    Ok((vae, VaeRunLog::Multigrid(log)))
}

/// Trains the diffusion model on latents of the frozen VAE and saves it.
pub fn train_diffusion(
    cfg: &RunConfig,
    paths: &RunPaths,
    on_epoch: impl FnMut(&LdmEpochLog) -> ControlFlow<()>,
) -> Result<(LatentDiffusion, LdmTrainLog), PipelineError> {
    let (manifest, dataset) = run_dataset(cfg, paths)?;
    let vae = Vae::load(cfg.vae.clone(), &paths.vae)?;
    let train = EncodedSet::encode(&vae, &dataset, &manifest.ids(Split::Train))?;
    let val = EncodedSet::encode(&vae, &dataset, &manifest.ids(Split::Test))?;
    let val = (!val.is_empty()).then_some(val);
    let (model, log) = train_ldm(cfg.ldm.clone(), &train, val.as_ref(), &cfg.seeded_ldm_train(), on_epoch)?;
    model.save(&paths.ldm)?;
    log.save(&paths.ldm_log)?;
    Ok((model, log))
}

pub fn load_models(cfg: &RunConfig, paths: &RunPaths) -> Result<(Vae, LatentDiffusion), PipelineError> {
    Ok((
        Vae::load(cfg.vae.clone(), &paths.vae)?,
        LatentDiffusion::load(cfg.ldm.clone(), &paths.ldm)?,
    ))
}

/// Samples `designs_per_condition` designs for each evaluation condition
/// and writes them to the designs file.
pub fn generate(cfg: &RunConfig, paths: &RunPaths) -> Result<Dataset, PipelineError> {
    let (manifest, dataset) = run_dataset(cfg, paths)?;
    let (vae, ldm) = load_models(cfg, paths)?;
    let conditions = evaluation_conditions(&manifest, cfg.eval_conditions);
    let designs = generate_designs(
        &vae,
        &ldm,
        &dataset,
        &conditions,
        cfg.designs_per_condition,
        cfg.stream_seed(Stream::Generate),
    )?;
    designs.write(&paths.designs)?;
    Ok(designs)
}

pub fn translate(cfg: &RunConfig, paths: &RunPaths, strength: f64) -> Result<Dataset, PipelineError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(PipelineError::InvalidConfig(format!(
            "translation strength {strength} outside [0, 1]"
        )));
    }
    let (manifest, dataset) = run_dataset(cfg, paths)?;
    let (vae, ldm) = load_models(cfg, paths)?;
    let conditions = evaluation_conditions(&manifest, cfg.eval_conditions);
    let edits = translate_designs(
        &vae,
        &ldm,
        &dataset,
        &conditions,
        strength,
        cfg.designs_per_condition,
        cfg.stream_seed(Stream::Translate),
    )?;
    edits.write(&paths.translations)?;
    Ok(edits)
}

/// Scores the designs at `designs_path` and writes the report directory.
pub fn evaluate(cfg: &RunConfig, paths: &RunPaths, designs_path: &Path) -> Result<EvalReport, PipelineError> {
    let (manifest, dataset) = load_dataset(&paths.dataset)?;
    let designs = Dataset::read(designs_path)?;
    let cases = cases_from(&manifest, &dataset, &designs)?;
    let report = evaluate_designs(&cases, cfg.threshold, &cfg.eval_solver.options())?;
    write_report(&report, &paths.report_dir)?;
    Ok(report)
}

/// Writes `<mesh_dir>/<id>.obj` for one record, or for every non-empty
/// record when `id` is `None`. Returns the number of meshes written.
pub fn export_meshes(cfg: &RunConfig, paths: &RunPaths, input: &Path, id: Option<u64>) -> Result<usize, PipelineError> {
    let designs = Dataset::read(input)?;
    let selected: Vec<_> = match id {
        Some(id) => vec![designs
            .get(id)
            .ok_or_else(|| PipelineError::InvalidConfig(format!("no record {id} in {}", input.display())))?],
        None => designs.samples.iter().collect(),
    };
    std::fs::create_dir_all(&paths.mesh_dir).map_err(|e| PipelineError::io(&paths.mesh_dir, e))?;
    let mut written = 0;
    for s in &selected {
        let field = DensityField::new(designs.dims, s.density.iter().map(|&v| v as f64).collect())?;
        match export_mesh(&field, cfg.threshold, &paths.mesh_dir.join(format!("{}.obj", s.id))) {
            Ok(_) => written += 1,
            // an empty design among many is skipped, not fatal
            Err(PipelineError::EmptyDesign { .. }) if id.is_none() => {
                log::warn!("record {} is empty at threshold {}", s.id, cfg.threshold)
            }
            Err(e) => return Err(e),
        }
    }
    if written == 0 {
        return Err(PipelineError::EmptyDesign {
            threshold: cfg.threshold,
        });
    }
    Ok(written)
}
