use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{read_run_config, DataSource, TestSource};
use super::image_io::{read_image, write_pgm16, PGM_MAX};
use super::landmarks::{read_landmarks, write_landmarks};
use super::model_file::{load_model, save_model};
use crate::error::AamError;
use crate::eval::{
    run_experiment, write_aggregate_csv, write_cells_csv, Dataset, ExperimentResult, SampleParams,
    SyntheticFamily, SyntheticSpec,
};
use crate::fitting::{fit, Algorithm, FitFailure, FitInit, FitState, FitterConfig, StopReason};
use crate::geometry::{GlobalKind, RasterImage, Shape};
use crate::model::{train_aam, Aam, BasisMode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;

const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "pnm", "ppm", "png"];
const LANDMARK_EXTENSION: &str = "pts";

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Input(#[from] AamError),
    /// One diagnostic per offending file.
    #[error("{}", .0.join("\n"))]
    Files(Vec<String>),
    #[error("fit failed: {0}")]
    Fit(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Fit(_) => EXIT_FIT,
            _ => EXIT_INPUT,
        }
    }
}

type CmdResult<T> = std::result::Result<T, CommandError>;

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(OsStr::to_str)
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn files_by_stem(dir: &Path, exts: &[&str]) -> CmdResult<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| AamError::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| AamError::io(dir, e))?.path();
        if !path.is_file() || !has_extension(&path, exts) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(OsStr::to_str) {
            if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
                return Err(CommandError::Files(vec![format!(
                    "{}: same name as {}",
                    path.display(),
                    prev.display()
                )]));
            }
        }
    }
    Ok(out)
}

/// Loads image/landmark pairs matched by file stem, in stem order. Every
/// unmatched or unreadable file is reported.
pub fn load_pairs(images: &Path, landmarks: &Path) -> CmdResult<Dataset> {
    let imgs = files_by_stem(images, &IMAGE_EXTENSIONS)?;
    let pts = files_by_stem(landmarks, &[LANDMARK_EXTENSION])?;
    let mut problems = Vec::new();
    for (stem, path) in &imgs {
        if !pts.contains_key(stem) {
            let want = landmarks.join(format!("{stem}.{LANDMARK_EXTENSION}"));
            problems.push(format!("{}: missing landmark file {}", path.display(), want.display()));
        }
    }
    for (stem, path) in &pts {
        if !imgs.contains_key(stem) {
            problems.push(format!("{}: no matching image in {}", path.display(), images.display()));
        }
    }
    let mut data = Dataset::default();
    for (stem, ipath) in &imgs {
        let Some(ppath) = pts.get(stem) else { continue };
        match (read_image(ipath), read_landmarks(ppath)) {
            (Ok(i), Ok(s)) => {
                data.images.push(i);
                data.shapes.push(s);
            }
            (i, s) => {
                problems.extend(i.err().map(|e| e.to_string()));
                problems.extend(s.err().map(|e| e.to_string()));
            }
        }
    }
    if let Some(v) = data.shapes.first().map(Shape::n_points) {
        for ((stem, _), s) in imgs.iter().filter(|(k, _)| pts.contains_key(*k)).zip(&data.shapes) {
            if s.n_points() != v {
                problems.push(format!("{}: {} landmarks, expected {v}", pts[stem].display(), s.n_points()));
            }
        }
    }
    if imgs.is_empty() && pts.is_empty() {
        problems.push(format!("{}: no image/landmark pairs found", images.display()));
    }
    if problems.is_empty() {
        Ok(data)
    } else {
        Err(CommandError::Files(problems))
    }
}

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub images: PathBuf,
    pub landmarks: PathBuf,
    pub variance: f64,
    pub appearance_variance: Option<f64>,
    pub global: GlobalKind,
    pub mode: BasisMode,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub n: usize,
    pub m: usize,
    pub shape_variance: f64,
    pub appearance_variance: f64,
    pub rejected: usize,
}

pub fn cmd_train(args: &TrainArgs) -> CmdResult<TrainSummary> {
    let data = load_pairs(&args.images, &args.landmarks)?;
    let cfg = TrainConfig {
        shape_variance: args.variance,
        appearance_variance: args.appearance_variance.unwrap_or(args.variance),
        global_kind: args.global,
        mode: args.mode,
    };
    let trained = train_aam(&data.images, &data.shapes, &cfg)?;
    save_model(&args.out, &trained.aam)?;
    let aam = &trained.aam;
    Ok(TrainSummary {
        n: aam.shape_model().n_modes(),
        m: aam.n_appearance(),
        shape_variance: aam.shape_model().retained_variance,
        appearance_variance: aam.appearance().retained_variance,
        rejected: trained.rejected.len(),
    })
}

#[derive(Clone, Debug)]
pub struct FitArgs {
    pub model: PathBuf,
    pub image: PathBuf,
    pub init: PathBuf,
    pub algorithm: Algorithm,
    pub bidirectional: bool,
    pub constrained: bool,
    pub max_iters: usize,
    pub tol: f64,
    /// Output prefix: `<out>.pts`, `<out>.report.json`, `<out>.errors.csv`.
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub algorithm: String,
    pub iterations: usize,
    pub final_sse: Option<f64>,
    pub converged: bool,
    pub stop: StopReason,
    pub error: Option<String>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub singular_h2: usize,
    pub deficient_h: usize,
    pub damped_steps: usize,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_fit_outputs(aam: &Aam, out: &Path, state: &FitState, report: &FitReport) -> CmdResult<()> {
    if let Ok(shape) = aam.shape_from_params(&state.params()) {
        write_landmarks(&with_suffix(out, ".pts"), &shape)?;
    }
    let rpath = with_suffix(out, ".report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| AamError::Format(e.to_string()))?;
    std::fs::write(&rpath, text + "\n").map_err(|e| AamError::io(&rpath, e))?;
    let epath = with_suffix(out, ".errors.csv");
    let mut w = csv::Writer::from_path(&epath).map_err(|e| csv_error(&epath, e))?;
    let row = |w: &mut csv::Writer<_>, r: [String; 2]| w.write_record(r).map_err(|e| csv_error(&epath, e));
    row(&mut w, ["iteration".into(), "sse".into()])?;
    for (i, e) in state.error_history.iter().enumerate() {
        row(&mut w, [i.to_string(), format!("{e:?}")])?;
    }
    w.flush().map_err(|e| AamError::io(&epath, e))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> AamError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AamError::io(path, io),
        other => AamError::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Fits the model and writes landmarks, report and error history. Fits that
/// lose tracking or fold over still write what they reached and then fail.
pub fn cmd_fit(args: &FitArgs) -> CmdResult<FitReport> {
    let aam = load_model(&args.model)?;
    let image = read_image(&args.image)?;
    let init = read_landmarks(&args.init)?;
    let config = FitterConfig {
        algorithm: args.algorithm,
        bidirectional: args.bidirectional,
        global_kind: aam.global_kind(),
        constrained: args.constrained,
        max_iters: args.max_iters,
        param_tol: args.tol,
        ..Default::default()
    };
    config.validate()?;
    let name = config.name();
    let report_of = |s: &FitState, error: Option<String>| FitReport {
        algorithm: name.clone(),
        iterations: s.iteration,
        final_sse: s.final_error(),
        converged: s.converged,
        stop: s.stop,
        error,
        p: s.p.clone(),
        q: s.q.clone(),
        lambda: s.lambda.clone(),
        singular_h2: s.singular_h2,
        deficient_h: s.deficient_h,
        damped_steps: s.damped_steps,
    };
    match fit(&image, &aam, &FitInit::Shape(init), config) {
        Ok(state) => {
            let report = report_of(&state, None);
            write_fit_outputs(&aam, &args.out, &state, &report)?;
            if state.stop == StopReason::FoldOver {
                return Err(CommandError::Fit("every damped update folded the mesh".into()));
            }
            Ok(report)
        }
        Err(FitFailure { error, partial: Some(state) }) => {
            let report = report_of(&state, Some(error.to_string()));
            write_fit_outputs(&aam, &args.out, &state, &report)?;
            Err(CommandError::Fit(error.to_string()))
        }
        Err(FitFailure { error, partial: None }) => Err(error.into()),
    }
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub config: PathBuf,
    /// Receives `cells.csv` and `aggregate.csv`.
    pub out: PathBuf,
}

/// Runs the experiment described by a configuration file and writes the
/// cell and aggregate tables.
pub fn cmd_eval(args: &EvalArgs) -> CmdResult<ExperimentResult> {
    let cfg = read_run_config(&args.config)?;
    let mut experiment = cfg.experiment.clone();
    let (train, family) = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let family = SyntheticFamily::new(spec)?;
            let data: Dataset = family.generate(spec.count, spec.sample_seed)?.into();
            if !cfg.anchors_given {
                experiment.anchor_indices = family.anchor_indices();
            }
            (data, Some(family))
        }
        DataSource::Files { images, landmarks } => (load_pairs(images, landmarks)?, None),
    };
    let test = match &cfg.test {
        TestSource::HeldOut => None,
        TestSource::InSample => Some(train.clone()),
        TestSource::Files { images, landmarks } => Some(load_pairs(images, landmarks)?),
        TestSource::Synthetic(t) => {
            let family = family.as_ref().expect("synthetic test pool needs synthetic data");
            let spec = SyntheticSpec {
                global_distortion: t.global_distortion,
                noise_sigma: t.noise_sigma,
                ..family.spec.clone()
            };
            Some(SyntheticFamily::new(&spec)?.generate(t.count, t.sample_seed)?.into())
        }
    };
    let result = run_experiment(&train, test.as_ref(), &experiment)?;
    std::fs::create_dir_all(&args.out).map_err(|e| AamError::io(&args.out, e))?;
    let write = |name: &str, f: &dyn Fn(std::fs::File) -> crate::Result<()>| -> CmdResult<()> {
        let path = args.out.join(name);
        let file = std::fs::File::create(&path).map_err(|e| AamError::io(&path, e))?;
        Ok(f(file)?)
    };
    write("cells.csv", &|f| write_cells_csv(&result.cells, f))?;
    write("aggregate.csv", &|f| write_aggregate_csv(&result.aggregates, f))?;
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub spec: SyntheticSpec,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub landmarks: String,
    pub params: SampleParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticSpec,
    /// How stored pixel codes relate to rendered intensities.
    pub quantization: String,
    /// Anchor landmarks for perturbed initialisation.
    pub anchors: [usize; 3],
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Renders a synthetic dataset to `out`: one 16-bit PGM and landmark file
/// per sample plus a manifest holding the generating coefficients.
pub fn cmd_synth(args: &SynthArgs) -> CmdResult<Manifest> {
    args.spec.validate()?;
    let family = SyntheticFamily::new(&args.spec)?;
    let data = family.generate(args.spec.count, args.spec.sample_seed)?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| AamError::io(out, e))?;
    let width = args.spec.count.saturating_sub(1).max(1).to_string().len().max(4);
    let mut samples = Vec::with_capacity(data.images.len());
    for (i, ((image, shape), params)) in data.images.iter().zip(&data.shapes).zip(&data.params).enumerate() {
        let image_name = format!("{i:0width$}.pgm");
        let pts_name = format!("{i:0width$}.{LANDMARK_EXTENSION}");
        write_pgm16(&out.join(&image_name), image)?;
        write_landmarks(&out.join(&pts_name), shape)?;
        samples.push(ManifestEntry {
            image: image_name,
            landmarks: pts_name,
            params: params.clone(),
        });
    }
    let manifest = Manifest {
        spec: args.spec.clone(),
        quantization: format!(
            "16-bit PGM, code = round(clamp(intensity, 0, 1) * {PGM_MAX}){}",
            if args.spec.noise_sigma > 0.0 { "; gaussian noise added before quantization" } else { "" }
        ),
        anchors: family.anchor_indices(),
        samples,
    };
    let path = out.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| AamError::Format(e.to_string()))?;
    let mut f = std::fs::File::create(&path).map_err(|e| AamError::io(&path, e))?;
    writeln!(f, "{text}").map_err(|e| AamError::io(&path, e))?;
    Ok(manifest)
}

/// Re-renders a manifest entry without noise or quantization.
pub fn rerender(manifest: &Manifest, index: usize) -> crate::Result<(RasterImage, Shape)> {
    let family = SyntheticFamily::new(&manifest.spec)?;
    let entry = manifest.samples.get(index).ok_or_else(|| {
        AamError::InvalidConfig(format!("manifest has no sample {index}"))
    })?;
    family.render(&entry.params)
}
