use serde::{Deserialize, Serialize};

use super::pca::pca;
use super::procrustes::procrustes_align;
use crate::error::{AamError, Result};
use crate::geometry::Shape;

/// Procrustes settings used by shape training.
pub const PROCRUSTES_TOL: f64 = 1e-12;
pub const PROCRUSTES_MAX_ITERS: usize = 100;

/// Point distribution model `s = s0 + sum_i p_i s_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    /// Mean shape, centred at the origin, at the mean size of the training
    /// shapes in pixels.
    pub s0: Shape,
    /// Orthonormal modes, strongest first.
    pub basis: Vec<Vec<f64>>,
    /// Variance `b_i` of each mode in square pixels.
    pub eigenvalues: Vec<f64>,
    /// Fraction of the aligned training variance the kept modes explain.
    pub retained_variance: f64,
}

impl ShapeModel {
    #[inline]
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.s0.n_points()
    }
}

/// Procrustes-aligns `shapes`, projects them into the tangent space of the
/// mean, rescales to the average training size and runs PCA.
pub fn train_shape_model(shapes: &[Shape], retained_variance: f64) -> Result<ShapeModel> {
    let aligned = procrustes_align(shapes, PROCRUSTES_TOL, PROCRUSTES_MAX_ITERS)?;
    let size = shapes
        .iter()
        .map(|s| {
            let c = s.centroid();
            s.points()
                .map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / shapes.len() as f64;
    let mean = aligned.mean.coords();
    let samples: Vec<Vec<f64>> = aligned
        .aligned
        .iter()
        .map(|s| {
            let along: f64 = s.coords().iter().zip(mean).map(|(a, b)| a * b).sum();
            s.coords().iter().map(|x| x * size / along).collect()
        })
        .collect();
    let model = pca(&samples, retained_variance)?;
    if model.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(AamError::DegenerateShape("non-positive shape eigenvalue".into()));
    }
    let explained = model.retained_fraction();
    Ok(ShapeModel {
        s0: Shape::new(model.mean)?,
        basis: model.components,
        eigenvalues: model.eigenvalues,
        retained_variance: explained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Shape {
        Shape::from_points(&[[0.0, 0.0], [20.0, 0.0], [20.0, 10.0], [0.0, 10.0], [10.0, 5.0]]).unwrap()
    }

    #[test]
    fn identical_shapes_give_no_modes() {
        let m = train_shape_model(&[base(), base()], 0.95).unwrap();
        assert_eq!(m.n_modes(), 0);
        let c = m.s0.centroid();
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
    }

    #[test]
    fn two_distinct_shapes_give_one_mode() {
        let mut other = base().into_coords();
        other[8] += 2.0;
        let m = train_shape_model(&[base(), Shape::new(other).unwrap()], 0.95).unwrap();
        assert_eq!(m.n_modes(), 1);
        assert!(m.eigenvalues[0] > 0.0);
    }
}
