//! The `voxgen` command line. Exit status 0 on success, 1 on usage errors
//! (with the relevant help on stderr) and 2 on runtime errors.

use std::ffi::OsString;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use crate::config::{RunConfig, RunPaths};
use crate::{stages, PipelineError};

#[derive(Debug, Parser)]
#[command(name = "voxgen", version, about = "Generate, train on and evaluate voxel topology designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; omitted fields take defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Run on a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample load cases, run SIMP on each and write the dataset.
    GenData,
    /// Train the autoencoder on the dataset's training split.
    TrainVae,
    /// Train the latent diffusion model with the autoencoder frozen.
    TrainLdm,
    /// Sample designs for the held-out evaluation conditions.
    Generate,
    /// Edit the SIMP designs of the evaluation conditions.
    Translate {
        /// Noise strength in [0, 1]; overrides the config's.
        #[arg(long)]
        strength: Option<f64>,
    },
    /// FEM-score generated designs and write the report.
    Evaluate {
        /// Design file to score instead of the run's generated designs.
        #[arg(long, value_name = "PATH")]
        designs: Option<PathBuf>,
    },
    /// Write OBJ surfaces of thresholded designs.
    ExportMesh {
        /// Design file; defaults to the run's generated designs.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Record id; all records when omitted.
        #[arg(long)]
        id: Option<u64>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{}", help_for(&argv));
            return 1;
        }
    };
    let result = if cli.deterministic {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(PipelineError::InvalidConfig(format!("thread pool: {e}"))),
        }
    } else {
        execute(&cli)
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            2
        }
    }
}

/// Help of the first subcommand named in `argv`, else the top-level help.
fn help_for(argv: &[OsString]) -> String {
    let mut cmd = Cli::command();
    let name = argv
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| cmd.find_subcommand(a).is_some())
        .map(str::to_owned);
    match name.and_then(|n| cmd.find_subcommand_mut(n)) {
        Some(sub) => sub.render_help().to_string(),
        None => cmd.render_help().to_string(),
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out).map_err(|e| PipelineError::io(&cli.out, e))?;
    let paths = RunPaths::new(&cli.out, &cfg.paths);
    match &cli.command {
        Command::GenData => gen_data(&cfg, &paths),
        Command::TrainVae => train_vae_cmd(&cfg, &paths),
        Command::TrainLdm => train_ldm_cmd(&cfg, &paths),
        Command::Generate => generate_cmd(&cfg, &paths),
        Command::Translate { strength } => translate_cmd(&cfg, &paths, strength.unwrap_or(cfg.translation_strength)),
        Command::Evaluate { designs } => evaluate_cmd(&cfg, &paths, designs.as_deref().unwrap_or(&paths.designs)),
        Command::ExportMesh { input, id } => export_cmd(&cfg, &paths, input.as_deref().unwrap_or(&paths.designs), *id),
    }
}

fn gen_data(cfg: &RunConfig, paths: &RunPaths) -> Result<(), PipelineError> {
    let manifest = stages::gen_data(cfg, paths)?;
    println!(
        "wrote {} samples ({} train, {} test, {} failed) to {}",
        manifest.sample_count,
        manifest.train_count,
        manifest.test_count,
        manifest.failures.len(),
        paths.dataset.display()
    );
    Ok(())
}

fn train_vae_cmd(cfg: &RunConfig, paths: &RunPaths) -> Result<(), PipelineError> {
    let (_, log) = stages::train_vae(cfg, paths, |_, _| ControlFlow::Continue(()))?;
    let last = log.final_epochs().last();
    println!(
        "final epoch recon {:?}, held-out recon {:?}; wrote {}",
        last.map(|e| e.train.recon),
        last.and_then(|e| e.val_recon),
        paths.vae.display()
    );
    Ok(())
}

fn train_ldm_cmd(cfg: &RunConfig, paths: &RunPaths) -> Result<(), PipelineError> {
    let (_, log) = stages::train_diffusion(cfg, paths, |_| ControlFlow::Continue(()))?;
    println!(
        "trained {} epochs, final loss {:?}; wrote {}",
        log.epochs.len(),
        log.epochs.last().map(|e| e.loss),
        paths.ldm.display()
    );
    Ok(())
}

fn generate_cmd(cfg: &RunConfig, paths: &RunPaths) -> Result<(), PipelineError> {
    let designs = stages::generate(cfg, paths)?;
    println!("wrote {} designs to {}", designs.samples.len(), paths.designs.display());
    Ok(())
}

fn translate_cmd(cfg: &RunConfig, paths: &RunPaths, strength: f64) -> Result<(), PipelineError> {
    let edits = stages::translate(cfg, paths, strength)?;
    println!("wrote {} edited designs to {}", edits.samples.len(), paths.translations.display());
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, paths: &RunPaths, designs_path: &Path) -> Result<(), PipelineError> {
    let report = stages::evaluate(cfg, paths, designs_path)?;
    let s = &report.summary;
    println!(
        "{} designs over {} conditions: VF MAE {:.4}, median compliance {:?} vs SIMP {:?}, {} failed solves; report in {}",
        s.generated_designs,
        s.conditions,
        s.volume_fraction_mae,
        s.median_compliance_ldm,
        s.median_compliance_simp,
        s.failed_solves,
        paths.report_dir.display()
    );
    Ok(())
}

fn export_cmd(cfg: &RunConfig, paths: &RunPaths, input: &Path, id: Option<u64>) -> Result<(), PipelineError> {
    let written = stages::export_meshes(cfg, paths, input, id)?;
    println!("wrote {written} meshes to {}", paths.mesh_dir.display());
    Ok(())
}
