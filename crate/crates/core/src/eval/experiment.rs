use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::synthetic::SyntheticDataset;
use super::{perturb_anchors, rmse};
use crate::error::{AamError, Result};
use crate::fitting::{initialize_from_anchor_points, Fitter, FitterConfig};
use crate::geometry::{RasterImage, Shape, Triangulation};
use crate::model::{
    assemble_aam, train_appearance_model, train_shape_model, Aam, AppearanceModel, BasisMode,
    ShapeModel,
};

/// Annotated images.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub images: Vec<RasterImage>,
    pub shapes: Vec<Shape>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl From<SyntheticDataset> for Dataset {
    fn from(d: SyntheticDataset) -> Self {
        Dataset {
            images: d.images,
            shapes: d.shapes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algorithms: Vec<FitterConfig>,
    pub training_sizes: Vec<usize>,
    pub folds: usize,
    /// Test images per fold.
    pub test_size: usize,
    /// Perturbed initialisations per test image.
    pub trials: usize,
    pub perturbation_px: f64,
    pub anchor_indices: [usize; 3],
    pub fitted_threshold_px: f64,
    pub shape_variance: f64,
    pub appearance_variance: f64,
    pub rng_seed: u64,
    /// Keep every fit's `p` history and shape eigenvalues in the results.
    pub record_histories: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithms: vec![FitterConfig::default()],
            training_sizes: vec![10],
            folds: 1,
            test_size: 10,
            trials: 1,
            perturbation_px: 5.0,
            anchor_indices: [0, 1, 2],
            fitted_threshold_px: 5.0,
            shape_variance: 0.95,
            appearance_variance: 0.95,
            rng_seed: 0,
            record_histories: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, pool: usize, separate_test: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(AamError::InvalidConfig(m));
        if self.algorithms.is_empty() || self.training_sizes.is_empty() {
            return bad("at least one algorithm and one training size are needed".into());
        }
        if self.folds == 0 || self.test_size == 0 || self.trials == 0 {
            return bad("folds, test_size and trials must be positive".into());
        }
        if !(self.perturbation_px >= 0.0) || !(self.fitted_threshold_px > 0.0) {
            return bad("perturbation must be non-negative and the threshold positive".into());
        }
        for a in &self.algorithms {
            a.validate()?;
        }
        let (available, tests) = match separate_test {
            Some(t) => (pool, t),
            None => (pool.saturating_sub(self.test_size), pool),
        };
        if tests < self.test_size {
            return bad(format!("{} test images requested but only {tests} available", self.test_size));
        }
        if let Some(&t) = self.training_sizes.iter().find(|&&t| t < 2 || t > available) {
            return bad(format!("training size {t} outside [2, {available}]"));
        }
        Ok(())
    }
}

/// Outcome of one fit.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub algorithm: String,
    pub training_size: usize,
    pub fold: usize,
    /// Index of the test image in its pool.
    pub image: usize,
    pub trial: usize,
    /// `+inf` when the fit failed.
    pub rmse: f64,
    pub converged: bool,
    pub iterations: usize,
    pub p_history: Option<Vec<Vec<f64>>>,
    /// Eigenvalue of each fitted parameter (`None` for global directions).
    pub eigenvalues: Option<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub training_size: usize,
    pub n: usize,
    pub n_fitted: usize,
    pub percent_fitted: f64,
    /// Mean over finished fits.
    pub mean_rmse: f64,
    pub median_rmse: f64,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

/// Percentage of `rmses` strictly below `threshold`.
pub fn percent_fitted(rmses: &[f64], threshold: f64) -> f64 {
    if rmses.is_empty() {
        return 0.0;
    }
    100.0 * rmses.iter().filter(|&&r| r < threshold).count() as f64 / rmses.len() as f64
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else if v[n / 2].is_infinite() {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row per `(algorithm, training_size)` in configuration order.
pub fn aggregate(cells: &[CellResult], config: &ExperimentConfig) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for algo in &config.algorithms {
        let name = algo.name();
        for &size in &config.training_sizes {
            let r: Vec<f64> = cells
                .iter()
                .filter(|c| c.algorithm == name && c.training_size == size)
                .map(|c| c.rmse)
                .collect();
            let finite: Vec<f64> = r.iter().copied().filter(|x| x.is_finite()).collect();
            rows.push(AggregateRow {
                algorithm: name.clone(),
                training_size: size,
                n: r.len(),
                n_fitted: r.iter().filter(|&&x| x < config.fitted_threshold_px).count(),
                percent_fitted: percent_fitted(&r, config.fitted_threshold_px),
                mean_rmse: if finite.is_empty() {
                    f64::INFINITY
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                },
                median_rmse: median(&r),
                n_failed: r.len() - finite.len(),
            });
        }
    }
    rows
}

struct Trained {
    shape: ShapeModel,
    appearance: AppearanceModel,
    tri: Triangulation,
}

fn train_components(data: &Dataset, idx: &[usize], config: &ExperimentConfig) -> Result<Trained> {
    let images: Vec<RasterImage> = idx.iter().map(|&i| data.images[i].clone()).collect();
    let shapes: Vec<Shape> = idx.iter().map(|&i| data.shapes[i].clone()).collect();
    let shape = train_shape_model(&shapes, config.shape_variance)?;
    let tri = Triangulation::delaunay(&shape.s0)?;
    let app = train_appearance_model(&images, &shapes, &shape.s0, &tri, config.appearance_variance)?;
    Ok(Trained {
        shape,
        appearance: app.model,
        tri,
    })
}

fn variant(trained: &Trained, algo: &FitterConfig) -> Result<Aam> {
    let mode = if algo.bidirectional {
        BasisMode::Separate
    } else {
        BasisMode::Appended
    };
    assemble_aam(
        trained.shape.clone(),
        trained.appearance.clone(),
        algo.global_kind,
        mode,
        trained.tri.clone(),
    )
}

struct Job {
    fold: usize,
    training_size: usize,
    image: usize,
    trial: usize,
    algo: usize,
    targets: [[f64; 2]; 3],
}

fn failed(algo: &FitterConfig, job: &Job, iterations: usize) -> CellResult {
    CellResult {
        algorithm: algo.name(),
        training_size: job.training_size,
        fold: job.fold,
        image: job.image,
        trial: job.trial,
        rmse: f64::INFINITY,
        converged: false,
        iterations,
        p_history: None,
        eigenvalues: None,
    }
}

/// Runs the cross-validated sweep. Test images come from `test_pool` when
/// given, otherwise they are held out of `pool`. Results are identical for
/// a fixed seed regardless of thread scheduling.
pub fn run_experiment(
    pool: &Dataset,
    test_pool: Option<&Dataset>,
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    config.validate(pool.len(), test_pool.map(Dataset::len))?;
    let mut cells = Vec::new();
    for fold in 0..config.folds {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(fold as u64);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let (tests, train_order): (Vec<usize>, Vec<usize>) = match test_pool {
            Some(tp) => {
                let mut t: Vec<usize> = (0..tp.len()).collect();
                t.shuffle(&mut rng);
                t.truncate(config.test_size);
                (t, order)
            }
            None => (
                order[..config.test_size].to_vec(),
                order[config.test_size..].to_vec(),
            ),
        };
        let test_data = test_pool.unwrap_or(pool);

        for &size in &config.training_sizes {
            let mut jobs = Vec::new();
            for &image in &tests {
                for trial in 0..config.trials {
                    let truth = &test_data.shapes[image];
                    let targets =
                        perturb_anchors(truth, config.anchor_indices, config.perturbation_px, &mut rng)?;
                    for algo in 0..config.algorithms.len() {
                        jobs.push(Job {
                            fold,
                            training_size: size,
                            image,
                            trial,
                            algo,
                            targets,
                        });
                    }
                }
            }
            let trained = match train_components(pool, &train_order[..size], config) {
                Ok(t) => t,
                Err(e) => {
                    warn!("fold {fold}, training size {size}: training failed: {e}");
                    cells.extend(jobs.iter().map(|j| failed(&config.algorithms[j.algo], j, 0)));
                    continue;
                }
            };
            let variants: Vec<Result<Aam>> = config.algorithms.iter().map(|a| variant(&trained, a)).collect();
            let fitters: Vec<Option<Fitter>> = variants
                .iter()
                .zip(&config.algorithms)
                .map(|(v, a)| v.as_ref().ok().and_then(|aam| Fitter::new(aam, *a).ok()))
                .collect();

            let results: Vec<CellResult> = jobs
                .par_iter()
                .map(|job| {
                    let algo = &config.algorithms[job.algo];
                    let Some(fitter) = &fitters[job.algo] else {
                        return failed(algo, job, 0);
                    };
                    let aam = fitter.aam();
                    let truth = &test_data.shapes[job.image];
                    let Ok(init) = initialize_from_anchor_points(aam, config.anchor_indices, job.targets) else {
                        return failed(algo, job, 0);
                    };
                    let state = match fitter.fit(&test_data.images[job.image], &init) {
                        Ok(s) => s,
                        Err(f) => {
                            let mut cell = failed(algo, job, f.partial.as_ref().map_or(0, |s| s.iteration));
                            if let Some(s) = f.partial.filter(|_| config.record_histories) {
                                cell.p_history = Some(s.p_history);
                                cell.eigenvalues = Some(aam.eigenvalues().to_vec());
                            }
                            return cell;
                        }
                    };
                    let err = aam
                        .shape_from_params(&state.params())
                        .and_then(|s| rmse(&s, truth))
                        .unwrap_or(f64::INFINITY);
                    CellResult {
                        algorithm: algo.name(),
                        training_size: job.training_size,
                        fold: job.fold,
                        image: job.image,
                        trial: job.trial,
                        rmse: if err.is_finite() { err } else { f64::INFINITY },
                        converged: state.converged,
                        iterations: state.iteration,
                        p_history: config.record_histories.then(|| state.p_history.clone()),
                        eigenvalues: config.record_histories.then(|| aam.eigenvalues().to_vec()),
                    }
                })
                .collect();
            cells.extend(results);
        }
    }
    let aggregates = aggregate(&cells, config);
    Ok(ExperimentResult { cells, aggregates })
}

#[derive(Serialize)]
struct CellRow<'a> {
    algorithm: &'a str,
    training_size: usize,
    fold: usize,
    image: usize,
    trial: usize,
    rmse: f64,
    converged: bool,
    iterations: usize,
}

fn csv_error(e: csv::Error) -> AamError {
    AamError::Format(format!("csv: {e}"))
}

/// Per-fit table.
pub fn write_cells_csv(cells: &[CellResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(CellRow {
            algorithm: &c.algorithm,
            training_size: c.training_size,
            fold: c.fold,
            image: c.image,
            trial: c.trial,
            rmse: c.rmse,
            converged: c.converged,
            iterations: c.iterations,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| AamError::Format(format!("csv: {e}")))
}

/// One row per `(algorithm, training_size)`.
pub fn write_aggregate_csv(rows: &[AggregateRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush().map_err(|e| AamError::Format(format!("csv: {e}")))
}
