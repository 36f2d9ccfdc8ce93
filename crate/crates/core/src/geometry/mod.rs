//! Shapes, triangulations, piecewise-affine warps, global transform bases and
//! warp Jacobians. Everything here is immutable once built.

mod global;
mod raster;
mod shape;
mod triangulation;
mod warp;

pub use global::{GlobalBasis, GlobalKind};
pub use raster::{masked_gradient, RasterImage};
pub use shape::{barycentric, orient, Shape};
pub use triangulation::Triangulation;
pub use warp::{
    compose_inverse_update, global_jacobian, instantiate_shape, piecewise_affine_warp,
    project_onto_basis, warp_jacobian, MeshPixel, MeshRaster, PixelJacobian, TemplateFrame,
    WarpedImage,
};

/// Local shape parameters `p` and global transform parameters `q`.
#[derive(Clone, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct WarpParams {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}
