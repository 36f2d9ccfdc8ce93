use serde::{Deserialize, Serialize};

use super::appearance::{train_appearance_model, AppearanceModel};
use super::pca::gram_schmidt;
use super::shape::{train_shape_model, ShapeModel};
use crate::error::{AamError, Result};
use crate::geometry::{
    instantiate_shape, project_onto_basis, GlobalBasis, GlobalKind, MeshRaster, RasterImage, Shape,
    Triangulation, WarpParams,
};

/// Relative residual below which a vector is dropped during Gram-Schmidt.
pub const DROP_TOL: f64 = 1e-10;

/// How the global transform vectors relate to the local shape basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMode {
    /// Global vectors prepended to the shape modes and orthonormalised with
    /// them; fitting works on one combined parameter vector and `q` stays 0.
    Appended,
    /// Shape modes in their own parameter vector; `q` drives `N(x; q)`
    /// separately. Under an affine `N` the modes are first orthonormalised
    /// against the affine vectors.
    Separate,
}

impl BasisMode {
    pub fn name(self) -> &'static str {
        match self {
            BasisMode::Appended => "appended",
            BasisMode::Separate => "separate",
        }
    }
}

/// A trained active appearance model ready for fitting.
#[derive(Clone, Debug)]
pub struct Aam {
    shape: ShapeModel,
    appearance: AppearanceModel,
    global: GlobalBasis,
    mode: BasisMode,
    triangulation: Triangulation,
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<Option<f64>>,
    raster: MeshRaster,
}

/// Combines trained components into an [`Aam`].
///
/// Gram-Schmidt runs over `[s1*..sk*, s1..sn]` in that order. Appended mode
/// uses the whole result. Separate mode keeps the trained modes under a
/// similarity `N` (alignment already made them orthogonal to it) and only the
/// local directions of the result under an affine `N`; `N(x; q)` always acts
/// on the raw global vectors. Each local direction `u` gets the shape-model
/// variance `sum_j b_j (u . s_j)^2` for the constraint, which is `b_i` when
/// `s_i` was already orthogonal to the global span.
pub fn assemble_aam(
    shape: ShapeModel,
    appearance: AppearanceModel,
    global_kind: GlobalKind,
    mode: BasisMode,
    triangulation: Triangulation,
) -> Result<Aam> {
    let s0 = &shape.s0;
    if triangulation.n_points() != s0.n_points() {
        return Err(AamError::DimensionMismatch {
            what: "triangulation vertex count",
            expected: s0.n_points(),
            got: triangulation.n_points(),
        });
    }
    if shape.eigenvalues.len() != shape.basis.len() {
        return Err(AamError::DimensionMismatch {
            what: "shape eigenvalue count",
            expected: shape.basis.len(),
            got: shape.eigenvalues.len(),
        });
    }
    if let Some(v) = shape.basis.iter().find(|v| v.len() != s0.coords().len()) {
        return Err(AamError::DimensionMismatch {
            what: "shape basis vector length",
            expected: s0.coords().len(),
            got: v.len(),
        });
    }
    if appearance.eigenvalues.len() != appearance.basis.len() {
        return Err(AamError::DimensionMismatch {
            what: "appearance eigenvalue count",
            expected: appearance.basis.len(),
            got: appearance.eigenvalues.len(),
        });
    }
    let raster = MeshRaster::new(appearance.frame, s0, &triangulation)?;
    if raster.mask() != appearance.mask.as_slice() {
        return Err(AamError::Format("appearance mask does not match the base mesh".into()));
    }
    let global = GlobalBasis::new(global_kind, s0);
    let (basis, eigenvalues): (Vec<Vec<f64>>, Vec<Option<f64>>) =
        if mode == BasisMode::Separate && global_kind == GlobalKind::Similarity {
            (shape.basis.clone(), shape.eigenvalues.iter().copied().map(Some).collect())
        } else {
            let k = global.dim();
            let all: Vec<Vec<f64>> = global.vectors().iter().chain(&shape.basis).cloned().collect();
            let (vectors, kept) = gram_schmidt(&all, DROP_TOL);
            let variance = |u: &[f64]| -> f64 {
                shape
                    .basis
                    .iter()
                    .zip(&shape.eigenvalues)
                    .map(|(s, b)| b * s.iter().zip(u).map(|(x, y)| x * y).sum::<f64>().powi(2))
                    .sum()
            };
            vectors
                .into_iter()
                .zip(&kept)
                .filter(|(_, &i)| mode == BasisMode::Appended || i >= k)
                .map(|(u, &i)| {
                    let b = (i >= k).then(|| variance(&u));
                    (u, b)
                })
                .unzip()
        };
    Ok(Aam {
        shape,
        appearance,
        global,
        mode,
        triangulation,
        basis,
        eigenvalues,
        raster,
    })
}

impl Aam {
    #[inline]
    pub fn shape_model(&self) -> &ShapeModel {
        &self.shape
    }

    #[inline]
    pub fn appearance(&self) -> &AppearanceModel {
        &self.appearance
    }

    #[inline]
    pub fn global(&self) -> &GlobalBasis {
        &self.global
    }

    #[inline]
    pub fn global_kind(&self) -> GlobalKind {
        self.global.kind()
    }

    #[inline]
    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    #[inline]
    pub fn triangulation(&self) -> &Triangulation {
        &self.triangulation
    }

    #[inline]
    pub fn s0(&self) -> &Shape {
        &self.shape.s0
    }

    /// Basis the local parameters `p` act on (combined in appended mode).
    #[inline]
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Shape eigenvalue of each fitting parameter; `None` for directions that
    /// came from the global basis.
    #[inline]
    pub fn eigenvalues(&self) -> &[Option<f64>] {
        &self.eigenvalues
    }

    /// Mesh pixels of the template frame.
    #[inline]
    pub fn raster(&self) -> &MeshRaster {
        &self.raster
    }

    /// Number of fitting parameters in `p`.
    #[inline]
    pub fn n_params(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    pub fn n_global(&self) -> usize {
        self.global.dim()
    }

    #[inline]
    pub fn n_appearance(&self) -> usize {
        self.appearance.n_modes()
    }

    /// Zero parameters of the right sizes.
    pub fn identity_params(&self) -> WarpParams {
        WarpParams {
            p: vec![0.0; self.n_params()],
            q: vec![0.0; self.n_global()],
        }
    }

    /// `N(W(s0; p); q)` in image coordinates.
    pub fn shape_from_params(&self, params: &WarpParams) -> Result<Shape> {
        if params.p.len() != self.n_params() {
            return Err(AamError::DimensionMismatch {
                what: "shape parameter vector",
                expected: self.n_params(),
                got: params.p.len(),
            });
        }
        instantiate_shape(&self.shape.s0, &self.basis, &params.p, &self.global, &params.q)
    }

    /// Least-squares parameters reproducing `shape`. In separate mode the
    /// global transform is fitted first and the remainder projected onto the
    /// shape basis.
    pub fn params_from_shape(&self, shape: &Shape) -> Result<WarpParams> {
        let s0 = &self.shape.s0;
        if shape.n_points() != s0.n_points() {
            return Err(AamError::DimensionMismatch {
                what: "landmark count",
                expected: s0.n_points(),
                got: shape.n_points(),
            });
        }
        match self.mode {
            BasisMode::Appended => Ok(WarpParams {
                p: project_onto_basis(s0, &self.basis, shape.coords()),
                q: vec![0.0; self.n_global()],
            }),
            BasisMode::Separate => {
                let kind = self.global.kind();
                let q = kind
                    .fit(s0, shape)
                    .ok_or_else(|| AamError::DegenerateShape("cannot fit global transform".into()))?;
                let inv = kind
                    .invert(&q)
                    .ok_or_else(|| AamError::DegenerateShape("global transform is singular".into()))?;
                let local = self.global.apply(&inv, shape)?;
                Ok(WarpParams {
                    p: project_onto_basis(s0, &self.basis, local.coords()),
                    q,
                })
            }
        }
    }

    /// Renders the model instance `(params, lambda)` into an image of the
    /// given size; pixels not covered by the mesh take `background`.
    pub fn render(
        &self,
        params: &WarpParams,
        lambda: &[f64],
        width: usize,
        height: usize,
        background: f64,
    ) -> Result<RasterImage> {
        let shape = self.shape_from_params(params)?;
        let texture = self.appearance.instance(lambda)?;
        let dst_frame = crate::geometry::TemplateFrame {
            width,
            height,
            origin: [0.0, 0.0],
        };
        let dst_raster = MeshRaster::new(dst_frame, &shape, &self.triangulation)?;
        let mut out = RasterImage::filled(width, height, background);
        let frame = self.appearance.frame;
        let (values, valid) = dst_raster.sample(
            &texture,
            &self.triangulation,
            &self.shape.s0.map_points(|p| [p[0] - frame.origin[0], p[1] - frame.origin[1]]),
        );
        for ((px, v), ok) in dst_raster.pixels().iter().zip(values).zip(valid) {
            if ok {
                out.set(px.col, px.row, v);
            }
        }
        Ok(out)
    }
}

/// Settings for [`train_aam`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub shape_variance: f64,
    pub appearance_variance: f64,
    pub global_kind: GlobalKind,
    pub mode: BasisMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            shape_variance: 0.95,
            appearance_variance: 0.95,
            global_kind: GlobalKind::Similarity,
            mode: BasisMode::Separate,
        }
    }
}

/// Trained model plus the indices of appearance samples that were rejected.
#[derive(Clone, Debug)]
pub struct TrainedAam {
    pub aam: Aam,
    pub rejected: Vec<usize>,
}

/// Full training pipeline: shape model, Delaunay mesh on `s0`, appearance
/// model, assembly.
pub fn train_aam(images: &[RasterImage], shapes: &[Shape], config: &TrainConfig) -> Result<TrainedAam> {
    if images.len() != shapes.len() {
        return Err(AamError::DimensionMismatch {
            what: "landmark sets per image",
            expected: images.len(),
            got: shapes.len(),
        });
    }
    let shape = train_shape_model(shapes, config.shape_variance)?;
    let tri = Triangulation::delaunay(&shape.s0)?;
    let app = train_appearance_model(images, shapes, &shape.s0, &tri, config.appearance_variance)?;
    let aam = assemble_aam(shape, app.model, config.global_kind, config.mode, tri)?;
    Ok(TrainedAam {
        aam,
        rejected: app.rejected,
    })
}
