use serde::{Deserialize, Serialize};

use crate::error::{AamError, Result};

/// Landmark configuration stored as interleaved `(x1, y1, ..., xv, yv)` pixel
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Shape {
    coords: Vec<f64>,
}

impl Shape {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(AamError::InvalidShape(format!(
                "odd coordinate count {}",
                coords.len()
            )));
        }
        if coords.len() < 6 {
            return Err(AamError::InvalidShape(format!(
                "need at least 3 landmarks, got {}",
                coords.len() / 2
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(AamError::InvalidShape(format!(
                "coordinate {i} is not finite"
            )));
        }
        Ok(Shape { coords })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        Shape::new(points.iter().flat_map(|p| [p[0], p[1]]).collect())
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.coords.len() / 2
    }

    #[inline]
    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[2 * i], self.coords[2 * i + 1]]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = [f64; 2]> + '_ {
        self.coords.chunks_exact(2).map(|c| [c[0], c[1]])
    }

    pub fn centroid(&self) -> [f64; 2] {
        let v = self.n_points() as f64;
        let (sx, sy) = self
            .points()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / v, sy / v]
    }

    /// Applies `f` to every landmark.
    pub fn map_points(&self, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Shape {
        let coords = self
            .points()
            .flat_map(|p| {
                let q = f(p);
                [q[0], q[1]]
            })
            .collect();
        Shape { coords }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Shape {
        self.map_points(|[x, y]| [x + dx, y + dy])
    }

    /// `self + sum_i weights[i] * vectors[i]`, validated for finiteness.
    pub fn displaced(&self, vectors: &[Vec<f64>], weights: &[f64]) -> Result<Shape> {
        if vectors.len() != weights.len() {
            return Err(AamError::DimensionMismatch {
                what: "parameter vector",
                expected: vectors.len(),
                got: weights.len(),
            });
        }
        let mut coords = self.coords.clone();
        for (vec, &w) in vectors.iter().zip(weights) {
            if vec.len() != coords.len() {
                return Err(AamError::DimensionMismatch {
                    what: "basis vector length",
                    expected: coords.len(),
                    got: vec.len(),
                });
            }
            if w == 0.0 {
                continue;
            }
            for (c, b) in coords.iter_mut().zip(vec) {
                *c += w * b;
            }
        }
        Shape::new(coords)
    }

    /// Largest per-landmark Euclidean distance to `other`.
    pub fn max_point_distance(&self, other: &Shape) -> f64 {
        self.points()
            .zip(other.points())
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Shape {
    type Error = AamError;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Shape::new(coords)
    }
}

impl From<Shape> for Vec<f64> {
    fn from(s: Shape) -> Self {
        s.coords
    }
}

#[inline]
pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Twice the signed area of `(a, b, c)`; positive for counter-clockwise order
/// in a right-handed `(x, y)` frame.
#[inline]
pub fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    cross(sub(b, a), sub(c, a))
}

/// Barycentric weights of `p` in triangle `(a, b, c)`; `None` when the
/// triangle is degenerate.
#[inline]
pub fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let det = cross(ab, ac);
    let scale = (ab[0].abs() + ab[1].abs()) * (ac[0].abs() + ac[1].abs());
    if det.abs() <= 1e-14 * scale || det == 0.0 {
        return None;
    }
    let ap = sub(p, a);
    let u = cross(ap, ac) / det;
    let v = cross(ab, ap) / det;
    Some([1.0 - u - v, u, v])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_odd_vectors() {
        assert!(Shape::new(vec![0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(Shape::new(vec![0.0; 7]).is_err());
        assert!(Shape::new(vec![0.0, 0.0, 1.0, 0.0, f64::NAN, 1.0]).is_err());
        assert!(Shape::new(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn barycentric_reconstructs_point() {
        let (a, b, c) = ([1.0, 2.0], [5.0, 1.0], [2.0, 6.0]);
        let p = [2.5, 3.0];
        let w = barycentric(p, a, b, c).unwrap();
        let x = w[0] * a[0] + w[1] * b[0] + w[2] * c[0];
        let y = w[0] * a[1] + w[1] * b[1] + w[2] * c[1];
        assert!((x - p[0]).abs() < 1e-12 && (y - p[1]).abs() < 1e-12);
        assert!(barycentric(p, a, a, c).is_none());
    }
}
