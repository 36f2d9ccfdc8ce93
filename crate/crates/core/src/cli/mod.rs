//! Command-line front end and on-disk formats.

mod commands;
mod config;
mod image_io;
mod landmarks;
mod model_file;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_eval, cmd_fit, cmd_synth, cmd_train, load_pairs, rerender, CommandError, EvalArgs, FitArgs,
    FitReport, Manifest, ManifestEntry, SynthArgs, TrainArgs, TrainSummary, EXIT_FIT, EXIT_INPUT,
    EXIT_OK, MANIFEST_NAME,
};
pub use config::{parse_run_config, read_run_config, DataSource, RunConfig, SyntheticTest, TestSource};
pub use image_io::{quantize, read_image, write_pgm16, PGM_MAX};
pub use landmarks::{format_landmarks, parse_landmarks, read_landmarks, write_landmarks, LANDMARK_VERSION};
pub use model_file::{load_model, save_model, ModelFile, ModelHeader, MODEL_FORMAT_VERSION};

use crate::eval::{GlobalDistortion, SyntheticSpec};
use crate::fitting::{Algorithm, FitterConfig};
use crate::geometry::GlobalKind;
use crate::model::BasisMode;

#[derive(Debug, Parser)]
#[command(name = "aam", version, about = "Active appearance model training and fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from matching image and landmark files.
    Train(TrainCli),
    /// Fit a model to one image.
    Fit(FitCli),
    /// Run a cross-validated experiment from a configuration file.
    Eval(EvalCli),
    /// Write a synthetic dataset.
    Synth(SynthCli),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GlobalArg {
    Sim,
    Affine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Appended,
    Separate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlgoArg {
    Ica,
    Po,
    Sic,
}

#[derive(Debug, Args)]
pub struct TrainCli {
    /// Directory of images (pgm, pnm, ppm or png).
    #[arg(long)]
    pub images: PathBuf,
    /// Directory of `.pts` files named like the images.
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Fraction of shape variance to keep.
    #[arg(long, default_value_t = 0.95)]
    pub variance: f64,
    /// Fraction of appearance variance to keep (defaults to --variance).
    #[arg(long)]
    pub appearance_variance: Option<f64>,
    #[arg(long, value_enum, default_value = "sim")]
    pub global: GlobalArg,
    #[arg(long, value_enum, default_value = "separate")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCli {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Initial landmarks.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long, value_enum, default_value = "sic")]
    pub algo: AlgoArg,
    /// Bidirectional warping (needs a separate-mode model).
    #[arg(long)]
    pub bi: bool,
    /// Clamp shape parameters to three standard deviations.
    #[arg(long)]
    pub constrain: bool,
    #[arg(long, default_value_t = FitterConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = FitterConfig::default().param_tol)]
    pub tol: f64,
    /// Output prefix for `.pts`, `.report.json` and `.errors.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalCli {
    pub config: PathBuf,
    /// Directory for `cells.csv` and `aggregate.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthCli {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed of the family: layout, modes and textures.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the per-sample draws.
    #[arg(long)]
    pub sample_seed: Option<u64>,
    #[arg(long)]
    pub landmark_count: Option<usize>,
    #[arg(long)]
    pub size: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub shape_amplitudes: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub texture_amplitudes: Option<Vec<f64>>,
    #[arg(long)]
    pub texture_wavelength: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub rotation_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.0)]
    pub shear: f64,
    #[arg(long, default_value_t = 0.0)]
    pub translation_px: f64,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

impl SynthCli {
    pub fn spec(&self) -> SyntheticSpec {
        let d = SyntheticSpec::default();
        SyntheticSpec {
            landmark_count: self.landmark_count.unwrap_or(d.landmark_count),
            size: self.size.unwrap_or(d.size),
            image_width: self.width.unwrap_or(d.image_width),
            image_height: self.height.unwrap_or(d.image_height),
            shape_amplitudes: self.shape_amplitudes.clone().unwrap_or(d.shape_amplitudes),
            texture_amplitudes: self.texture_amplitudes.clone().unwrap_or(d.texture_amplitudes),
            texture_wavelength: self.texture_wavelength.unwrap_or(d.texture_wavelength),
            global_distortion: GlobalDistortion::affine(
                self.shear,
                self.rotation_deg,
                self.scale,
                self.translation_px,
            ),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            count: self.count.unwrap_or(d.count),
            seed: self.seed.unwrap_or(d.seed),
            sample_seed: self.sample_seed.unwrap_or(d.sample_seed),
        }
    }
}

fn dispatch(command: Command) -> Result<(), CommandError> {
    match command {
        Command::Train(c) => {
            let s = cmd_train(&TrainArgs {
                images: c.images,
                landmarks: c.landmarks,
                variance: c.variance,
                appearance_variance: c.appearance_variance,
                global: match c.global {
                    GlobalArg::Sim => GlobalKind::Similarity,
                    GlobalArg::Affine => GlobalKind::Affine,
                },
                mode: match c.mode {
                    ModeArg::Appended => BasisMode::Appended,
                    ModeArg::Separate => BasisMode::Separate,
                },
                out: c.out,
            })?;
            println!("n = {}", s.n);
            println!("m = {}", s.m);
            println!("shape variance retained = {:.6}", s.shape_variance);
            println!("appearance variance retained = {:.6}", s.appearance_variance);
            if s.rejected > 0 {
                println!("rejected appearance samples = {}", s.rejected);
            }
        }
        Command::Fit(c) => {
            let r = cmd_fit(&FitArgs {
                model: c.model,
                image: c.image,
                init: c.init,
                algorithm: match c.algo {
                    AlgoArg::Ica => Algorithm::Ica,
                    AlgoArg::Po => Algorithm::Po,
                    AlgoArg::Sic => Algorithm::Sic,
                },
                bidirectional: c.bi,
                constrained: c.constrain,
                max_iters: c.max_iters,
                tol: c.tol,
                out: c.out,
            })?;
            println!(
                "{}: {} iterations, converged = {}, final sse = {}",
                r.algorithm,
                r.iterations,
                r.converged,
                r.final_sse.map_or("n/a".into(), |e| format!("{e:.6e}"))
            );
        }
        Command::Eval(c) => {
            let r = cmd_eval(&EvalArgs { config: c.config, out: c.out })?;
            println!("algorithm,training_size,n,percent_fitted,mean_rmse,median_rmse,failed");
            for a in &r.aggregates {
                println!(
                    "{},{},{},{:.2},{:.4},{:.4},{}",
                    a.algorithm, a.training_size, a.n, a.percent_fitted, a.mean_rmse, a.median_rmse, a.n_failed
                );
            }
        }
        Command::Synth(c) => {
            let spec = c.spec();
            let m = cmd_synth(&SynthArgs { spec, out: c.out.clone() })?;
            println!("wrote {} samples to {}", m.samples.len(), c.out.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
