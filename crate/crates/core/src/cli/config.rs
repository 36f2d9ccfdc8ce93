//! Experiment description files.
//!
//! ```text
//! # comment
//! [data]
//! source = synthetic
//!
//! [synthetic]
//! count = 40
//! shape_amplitudes = 4, 3, 2
//! rotation_deg = 10
//!
//! [test]
//! count = 20
//! sample_seed = 7
//!
//! [experiment]
//! algorithms = sic, bi-sic-ac
//! training_sizes = 10, 20
//! seed = 3
//! ```
//!
//! Paths in `[data]` are relative to the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{AamError, Result};
use crate::eval::{ExperimentConfig, GlobalDistortion, SyntheticSpec};
use crate::fitting::FitterConfig;

/// Held-out synthetic test pool drawn from the training family.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTest {
    pub count: usize,
    pub sample_seed: u64,
    pub global_distortion: GlobalDistortion,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestSource {
    /// Held out of the training pool in each fold.
    HeldOut,
    /// The training pool itself.
    InSample,
    Synthetic(SyntheticTest),
    Files { images: PathBuf, landmarks: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files { images: PathBuf, landmarks: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub test: TestSource,
    pub experiment: ExperimentConfig,
    /// Whether `anchors` was given; synthetic runs otherwise use the family's.
    pub anchors_given: bool,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

struct Ctx<'a> {
    origin: &'a str,
}

impl Ctx<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> AamError {
        AamError::Parse {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn scalar<T: FromStr>(&self, e: &Entry) -> Result<T> {
        e.value
            .parse()
            .map_err(|_| self.err(e.line, format!("bad value `{}` for `{}`", e.value, e.key)))
    }

    fn real(&self, e: &Entry) -> Result<f64> {
        let v: f64 = self.scalar(e)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(e.line, format!("`{}` must be finite", e.key)))
        }
    }

    fn list<T: FromStr>(&self, e: &Entry) -> Result<Vec<T>> {
        if e.value.trim().is_empty() {
            return Ok(Vec::new());
        }
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.err(e.line, format!("bad list item `{}` in `{}`", s.trim(), e.key)))
            })
            .collect()
    }

    fn unknown(&self, section: &str, e: &Entry) -> AamError {
        self.err(e.line, format!("unknown key `{}` in [{section}]", e.key))
    }
}

fn split_sections(text: &str, ctx: &Ctx) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ctx.err(line, "unterminated section header"))?
                .trim();
            if sections.iter().any(|s| s.name == name) {
                return Err(ctx.err(line, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| ctx.err(line, format!("expected `key = value`, found `{l}`")))?;
        let sec = sections
            .last_mut()
            .ok_or_else(|| ctx.err(line, "key outside of any section"))?;
        let key = k.trim().to_string();
        if sec.entries.iter().any(|e| e.key == key) {
            return Err(ctx.err(line, format!("duplicate key `{key}`")));
        }
        sec.entries.push(Entry {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn distortion_key(ctx: &Ctx, d: &mut GlobalDistortion, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "rotation_deg" => d.rotation_deg = ctx.real(e)?,
        "scale" => d.scale = ctx.real(e)?,
        "shear" => {
            let v: Vec<f64> = ctx.list(e)?;
            d.shear = match v.as_slice() {
                [s] => (*s, *s),
                [lo, hi] => (*lo, *hi),
                _ => return Err(ctx.err(e.line, "`shear` takes one value or a `lo, hi` pair")),
            };
        }
        "translation_px" => d.translation_px = ctx.real(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn synthetic_section(ctx: &Ctx, s: &Section) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec::default();
    for e in &s.entries {
        if distortion_key(ctx, &mut spec.global_distortion, e)? {
            continue;
        }
        match e.key.as_str() {
            "landmark_count" => spec.landmark_count = ctx.scalar(e)?,
            "size" => spec.size = ctx.real(e)?,
            "image_width" => spec.image_width = ctx.scalar(e)?,
            "image_height" => spec.image_height = ctx.scalar(e)?,
            "shape_amplitudes" => spec.shape_amplitudes = ctx.list(e)?,
            "texture_amplitudes" => spec.texture_amplitudes = ctx.list(e)?,
            "texture_wavelength" => spec.texture_wavelength = ctx.real(e)?,
            "noise_sigma" => spec.noise_sigma = ctx.real(e)?,
            "count" => spec.count = ctx.scalar(e)?,
            "seed" => spec.seed = ctx.scalar(e)?,
            "sample_seed" => spec.sample_seed = ctx.scalar(e)?,
            _ => return Err(ctx.unknown(&s.name, e)),
        }
    }
    spec.validate().map_err(|e| ctx.err(s.line, e.to_string()))?;
    Ok(spec)
}

fn experiment_section(ctx: &Ctx, s: &Section, cfg: &mut ExperimentConfig) -> Result<(bool, bool)> {
    let mut anchors_given = false;
    let mut in_sample = false;
    let mut max_iters = None;
    let mut param_tol = None;
    for e in &s.entries {
        match e.key.as_str() {
            "algorithms" => {
                let names: Vec<String> = ctx.list(e)?;
                cfg.algorithms = names
                    .iter()
                    .map(|n| FitterConfig::parse_name(n).map_err(|err| ctx.err(e.line, err.to_string())))
                    .collect::<Result<_>>()?;
            }
            "training_sizes" => cfg.training_sizes = ctx.list(e)?,
            "folds" => cfg.folds = ctx.scalar(e)?,
            "test_size" => cfg.test_size = ctx.scalar(e)?,
            "trials" => cfg.trials = ctx.scalar(e)?,
            "perturbation_px" => cfg.perturbation_px = ctx.real(e)?,
            "anchors" => {
                let a: Vec<usize> = ctx.list(e)?;
                cfg.anchor_indices = a
                    .try_into()
                    .map_err(|_| ctx.err(e.line, "`anchors` takes three landmark indices"))?;
                anchors_given = true;
            }
            "fitted_threshold_px" => cfg.fitted_threshold_px = ctx.real(e)?,
            "shape_variance" => cfg.shape_variance = ctx.real(e)?,
            "appearance_variance" => cfg.appearance_variance = ctx.real(e)?,
            "seed" => cfg.rng_seed = ctx.scalar(e)?,
            "max_iters" => max_iters = Some(ctx.scalar(e)?),
            "param_tol" => param_tol = Some(ctx.real(e)?),
            "in_sample" => in_sample = ctx.scalar(e)?,
            _ => return Err(ctx.unknown(&s.name, e)),
        }
    }
    for a in &mut cfg.algorithms {
        if let Some(m) = max_iters {
            a.max_iters = m;
        }
        if let Some(t) = param_tol {
            a.param_tol = t;
        }
    }
    Ok((anchors_given, in_sample))
}

/// Parses a run configuration; `base` resolves relative paths.
pub fn parse_run_config(text: &str, origin: &str, base: &Path) -> Result<RunConfig> {
    let ctx = Ctx { origin };
    let sections = split_sections(text, &ctx)?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    if let Some(s) = sections
        .iter()
        .find(|s| !matches!(s.name.as_str(), "data" | "synthetic" | "test" | "experiment"))
    {
        return Err(ctx.err(s.line, format!("unknown section [{}]", s.name)));
    }
    let data_sec = find("data").ok_or_else(|| ctx.err(0, "missing [data] section"))?;
    let mut source = None;
    let mut paths: [Option<PathBuf>; 4] = Default::default();
    for e in &data_sec.entries {
        let slot = match e.key.as_str() {
            "source" => {
                source = Some((e.value.clone(), e.line));
                continue;
            }
            "images" => 0,
            "landmarks" => 1,
            "test_images" => 2,
            "test_landmarks" => 3,
            _ => return Err(ctx.unknown("data", e)),
        };
        paths[slot] = Some(base.join(&e.value));
    }
    let (source, source_line) = source.ok_or_else(|| ctx.err(data_sec.line, "missing `source`"))?;
    let data = match source.as_str() {
        "synthetic" => {
            if let Some(e) = data_sec.entries.iter().find(|e| e.key != "source") {
                return Err(ctx.err(e.line, format!("`{}` needs `source = files`", e.key)));
            }
            let spec = match find("synthetic") {
                Some(s) => synthetic_section(&ctx, s)?,
                None => SyntheticSpec::default(),
            };
            DataSource::Synthetic(spec)
        }
        "files" => {
            if let Some(s) = find("synthetic") {
                return Err(ctx.err(s.line, "[synthetic] needs `source = synthetic`"));
            }
            let [Some(images), Some(landmarks), ..] = paths.clone() else {
                return Err(ctx.err(data_sec.line, "`images` and `landmarks` are required"));
            };
            DataSource::Files { images, landmarks }
        }
        other => return Err(ctx.err(source_line, format!("unknown source `{other}`"))),
    };

    let mut experiment = ExperimentConfig::default();
    let (anchors_given, in_sample) = match find("experiment") {
        Some(s) => experiment_section(&ctx, s, &mut experiment)?,
        None => (false, false),
    };
    if !anchors_given && matches!(data, DataSource::Files { .. }) {
        return Err(ctx.err(0, "`anchors` is required for file data"));
    }

    let file_test = match (&paths[2], &paths[3]) {
        (Some(i), Some(l)) => Some((i.clone(), l.clone())),
        (None, None) => None,
        _ => return Err(ctx.err(data_sec.line, "`test_images` and `test_landmarks` go together")),
    };
    let test_sec = find("test");
    let sources = [in_sample, file_test.is_some(), test_sec.is_some()];
    if sources.iter().filter(|&&b| b).count() > 1 {
        return Err(ctx.err(0, "at most one of `in_sample`, test files and [test] may be given"));
    }
    let test = if in_sample {
        TestSource::InSample
    } else if let Some((images, landmarks)) = file_test {
        TestSource::Files { images, landmarks }
    } else if let Some(s) = test_sec {
        let DataSource::Synthetic(spec) = &data else {
            return Err(ctx.err(s.line, "[test] needs `source = synthetic`"));
        };
        let mut t = SyntheticTest {
            count: experiment.test_size,
            sample_seed: spec.sample_seed.wrapping_add(1),
            global_distortion: spec.global_distortion,
            noise_sigma: spec.noise_sigma,
        };
        for e in &s.entries {
            if distortion_key(&ctx, &mut t.global_distortion, e)? {
                continue;
            }
            match e.key.as_str() {
                "count" => t.count = ctx.scalar(e)?,
                "sample_seed" => t.sample_seed = ctx.scalar(e)?,
                "noise_sigma" => t.noise_sigma = ctx.real(e)?,
                _ => return Err(ctx.unknown("test", e)),
            }
        }
        TestSource::Synthetic(t)
    } else {
        TestSource::HeldOut
    };
    Ok(RunConfig {
        data,
        test,
        experiment,
        anchors_given,
    })
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AamError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_run_config(&text, &path.display().to_string(), base)
}
