use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::shape::Shape;
use crate::error::{AamError, Result};

/// Family of the global transform `N(x; q)` applied after the local warp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalKind {
    /// Rotation, uniform scale and translation (k = 4).
    Similarity,
    /// Full 2x3 affine map (k = 6).
    Affine,
}

impl GlobalKind {
    #[inline]
    pub fn dim(self) -> usize {
        match self {
            GlobalKind::Similarity => 4,
            GlobalKind::Affine => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GlobalKind::Similarity => "similarity",
            GlobalKind::Affine => "affine",
        }
    }

    /// Value of every basis vector at a single landmark position.
    ///
    /// Similarity: `(x, y), (-y, x), (1, 0), (0, 1)`.
    /// Affine: `(x, 0), (y, 0), (0, x), (0, y), (1, 0), (0, 1)`.
    #[inline]
    pub fn columns(self, [x, y]: [f64; 2]) -> impl Iterator<Item = [f64; 2]> {
        let cols: [[f64; 2]; 6] = match self {
            GlobalKind::Similarity => [[x, y], [-y, x], [1.0, 0.0], [0.0, 1.0], [0.0; 2], [0.0; 2]],
            GlobalKind::Affine => [[x, 0.0], [y, 0.0], [0.0, x], [0.0, y], [1.0, 0.0], [0.0, 1.0]],
        };
        cols.into_iter().take(self.dim())
    }

    /// The 2x3 matrix `[A | t]` such that `N(x; q) = A x + t`.
    pub fn matrix(self, q: &[f64]) -> [[f64; 3]; 2] {
        debug_assert_eq!(q.len(), self.dim());
        match self {
            GlobalKind::Similarity => [
                [1.0 + q[0], -q[1], q[2]],
                [q[1], 1.0 + q[0], q[3]],
            ],
            GlobalKind::Affine => [
                [1.0 + q[0], q[1], q[4]],
                [q[2], 1.0 + q[3], q[5]],
            ],
        }
    }

    /// Parameters reproducing the map `m`. Fails for a similarity basis when
    /// `m` is not a similarity.
    pub fn params_from_matrix(self, m: [[f64; 3]; 2]) -> Result<Vec<f64>> {
        match self {
            GlobalKind::Affine => Ok(vec![
                m[0][0] - 1.0,
                m[0][1],
                m[1][0],
                m[1][1] - 1.0,
                m[0][2],
                m[1][2],
            ]),
            GlobalKind::Similarity => {
                let tol = 1e-9 * (1.0 + m[0][0].abs() + m[0][1].abs());
                if (m[0][0] - m[1][1]).abs() > tol || (m[0][1] + m[1][0]).abs() > tol {
                    return Err(AamError::InvalidConfig(
                        "map is not a similarity transform".into(),
                    ));
                }
                Ok(vec![m[0][0] - 1.0, m[1][0], m[0][2], m[1][2]])
            }
        }
    }

    #[inline]
    pub fn apply_point(self, q: &[f64], [x, y]: [f64; 2]) -> [f64; 2] {
        let m = self.matrix(q);
        [
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        ]
    }

    /// Least-squares parameters of the map taking `src` onto `dst`, or `None`
    /// when the points do not determine it.
    pub fn fit(self, src: &Shape, dst: &Shape) -> Option<Vec<f64>> {
        if src.n_points() != dst.n_points() {
            return None;
        }
        let k = self.dim();
        let mut ata = DMatrix::<f64>::zeros(k, k);
        let mut atb = DVector::<f64>::zeros(k);
        for (s, d) in src.points().zip(dst.points()) {
            let cols: Vec<[f64; 2]> = self.columns(s).collect();
            let r = [d[0] - s[0], d[1] - s[1]];
            for i in 0..k {
                atb[i] += cols[i][0] * r[0] + cols[i][1] * r[1];
                for j in 0..k {
                    ata[(i, j)] += cols[i][0] * cols[j][0] + cols[i][1] * cols[j][1];
                }
            }
        }
        let scale = ata.diagonal().max();
        let eig = ata.clone().symmetric_eigen();
        if !(scale > 0.0) || eig.eigenvalues.min() <= 1e-12 * scale {
            return None;
        }
        ata.cholesky().map(|c| c.solve(&atb).iter().copied().collect())
    }

    /// Parameters of the inverse map, if it exists.
    pub fn invert(self, q: &[f64]) -> Option<Vec<f64>> {
        let m = self.matrix(q);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() <= 1e-14 * (m[0][0].abs() + m[0][1].abs() + m[1][0].abs() + m[1][1].abs()) {
            return None;
        }
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        let inv = [
            [a, b, -(a * m[0][2] + b * m[1][2])],
            [c, d, -(c * m[0][2] + d * m[1][2])],
        ];
        match self {
            GlobalKind::Affine => self.params_from_matrix(inv).ok(),
            GlobalKind::Similarity => Some(vec![inv[0][0] - 1.0, inv[1][0], inv[0][2], inv[1][2]]),
        }
    }

    /// Basis vectors evaluated at every landmark of `shape`.
    pub fn vectors_at(self, shape: &Shape) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(shape.coords().len()); self.dim()];
        for p in shape.points() {
            for (v, col) in out.iter_mut().zip(self.columns(p)) {
                v.extend_from_slice(&col);
            }
        }
        out
    }
}

/// The global-transform vectors `s_i*` built on the base shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBasis {
    kind: GlobalKind,
    vectors: Vec<Vec<f64>>,
}

impl GlobalBasis {
    pub fn new(kind: GlobalKind, s0: &Shape) -> Self {
        GlobalBasis {
            kind,
            vectors: kind.vectors_at(s0),
        }
    }

    #[inline]
    pub fn kind(&self) -> GlobalKind {
        self.kind
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    #[inline]
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Applies `N(.; q)` to every landmark of `shape`.
    pub fn apply(&self, q: &[f64], shape: &Shape) -> Result<Shape> {
        if q.len() != self.dim() {
            return Err(AamError::DimensionMismatch {
                what: "global parameter vector",
                expected: self.dim(),
                got: q.len(),
            });
        }
        Shape::new(shape.map_points(|p| self.kind.apply_point(q, p)).into_coords())
    }
}
