//! Synthetic data, the perturbed-initialisation protocol, RMSE and the
//! cross-validated experiment harness.

mod experiment;
mod synthetic;

use rand::Rng;

pub use experiment::{
    aggregate, percent_fitted, run_experiment, write_aggregate_csv, write_cells_csv, AggregateRow,
    CellResult, Dataset, ExperimentConfig, ExperimentResult,
};
pub use synthetic::{
    generate_synthetic_dataset, GlobalDistortion, SampleParams, SyntheticDataset, SyntheticFamily,
    SyntheticSpec,
};

use crate::error::{AamError, Result};
use crate::fitting::initialize_from_anchor_points;
use crate::geometry::{Shape, WarpParams};
use crate::model::Aam;

/// Root mean square landmark distance in pixels.
pub fn rmse(fitted: &Shape, truth: &Shape) -> Result<f64> {
    if fitted.n_points() != truth.n_points() {
        return Err(AamError::DimensionMismatch {
            what: "landmark count",
            expected: truth.n_points(),
            got: fitted.n_points(),
        });
    }
    let sum: f64 = fitted
        .points()
        .zip(truth.points())
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    Ok((sum / truth.n_points() as f64).sqrt())
}

/// The anchor landmarks of `truth`, each moved by a vector drawn uniformly
/// from the disk of radius `radius_px`.
pub fn perturb_anchors(
    truth: &Shape,
    anchors: [usize; 3],
    radius_px: f64,
    rng: &mut impl Rng,
) -> Result<[[f64; 2]; 3]> {
    if let Some(&bad) = anchors.iter().find(|&&i| i >= truth.n_points()) {
        return Err(AamError::InvalidConfig(format!("anchor index {bad} out of range")));
    }
    Ok(anchors.map(|i| {
        let r = radius_px * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let p = truth.point(i);
        [p[0] + r * a.cos(), p[1] + r * a.sin()]
    }))
}

/// Perturbs the anchors of `truth` and places the mean shape on them.
pub fn perturb_initialization(
    aam: &Aam,
    truth: &Shape,
    anchors: [usize; 3],
    radius_px: f64,
    rng: &mut impl Rng,
) -> Result<WarpParams> {
    let targets = perturb_anchors(truth, anchors, radius_px, rng)?;
    initialize_from_anchor_points(aam, anchors, targets)
}
