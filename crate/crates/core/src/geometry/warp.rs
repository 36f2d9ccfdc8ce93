//! Piecewise-affine warps over a triangulated mesh.

use serde::{Deserialize, Serialize};

use super::global::GlobalBasis;
use super::raster::RasterImage;
use super::shape::{barycentric, Shape};
use super::triangulation::Triangulation;
use crate::error::{AamError, Result};

/// Raster grid whose pixel `(col, row)` sits at model coordinates
/// `(origin_x + col, origin_y + row)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateFrame {
    pub width: usize,
    pub height: usize,
    pub origin: [f64; 2],
}

impl TemplateFrame {
    /// Smallest integer-aligned frame covering `shape` plus `margin` pixels.
    pub fn enclosing(shape: &Shape, margin: usize) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in shape.points() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let m = margin as f64;
        let origin = [lo[0].floor() - m, lo[1].floor() - m];
        TemplateFrame {
            width: (hi[0].ceil() - origin[0] + m) as usize + 1,
            height: (hi[1].ceil() - origin[1] + m) as usize + 1,
            origin,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn position(&self, col: usize, row: usize) -> [f64; 2] {
        [self.origin[0] + col as f64, self.origin[1] + row as f64]
    }
}

/// A frame pixel covered by the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshPixel {
    /// Row-major index into the frame.
    pub index: usize,
    pub col: usize,
    pub row: usize,
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Rasterisation of a triangulated shape onto a frame. Each covered pixel
/// belongs to exactly one triangle: the first one, in triangulation order,
/// that contains it.
#[derive(Clone, Debug)]
pub struct MeshRaster {
    frame: TemplateFrame,
    pixels: Vec<MeshPixel>,
    mask: Vec<bool>,
}

const INSIDE_EPS: f64 = 1e-9;

impl MeshRaster {
    pub fn new(frame: TemplateFrame, shape: &Shape, tri: &Triangulation) -> Result<Self> {
        if shape.n_points() != tri.n_points() {
            return Err(AamError::DimensionMismatch {
                what: "landmark count of triangulated shape",
                expected: tri.n_points(),
                got: shape.n_points(),
            });
        }
        let mut owner: Vec<Option<(usize, [f64; 3])>> = vec![None; frame.len()];
        for (t, &[a, b, c]) in tri.triangles().iter().enumerate() {
            let (pa, pb, pc) = (shape.point(a), shape.point(b), shape.point(c));
            let Some(_) = barycentric(pa, pa, pb, pc) else {
                continue;
            };
            let xs = [pa[0], pb[0], pc[0]];
            let ys = [pa[1], pb[1], pc[1]];
            let span = |vals: [f64; 3], origin: f64, len: usize| {
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min) - origin;
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - origin;
                let lo = lo.ceil().max(0.0) as usize;
                let hi = (hi.floor().max(-1.0) + 1.0).min(len as f64) as usize;
                lo..hi
            };
            for row in span(ys, frame.origin[1], frame.height) {
                for col in span(xs, frame.origin[0], frame.width) {
                    let idx = row * frame.width + col;
                    if owner[idx].is_some() {
                        continue;
                    }
                    let p = frame.position(col, row);
                    if let Some(w) = barycentric(p, pa, pb, pc) {
                        if w.iter().all(|&x| x >= -INSIDE_EPS) {
                            owner[idx] = Some((t, w));
                        }
                    }
                }
            }
        }
        let mut pixels = Vec::new();
        let mut mask = vec![false; frame.len()];
        for (index, o) in owner.into_iter().enumerate() {
            if let Some((triangle, bary)) = o {
                mask[index] = true;
                pixels.push(MeshPixel {
                    index,
                    col: index % frame.width,
                    row: index / frame.width,
                    triangle,
                    bary,
                });
            }
        }
        Ok(MeshRaster {
            frame,
            pixels,
            mask,
        })
    }

    #[inline]
    pub fn frame(&self) -> &TemplateFrame {
        &self.frame
    }

    #[inline]
    pub fn pixels(&self) -> &[MeshPixel] {
        &self.pixels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Frame-sized flags of covered pixels.
    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Position of every mesh pixel after moving the mesh vertices to `dst`.
    pub fn map_positions(&self, tri: &Triangulation, dst: &Shape) -> Vec<[f64; 2]> {
        self.pixels
            .iter()
            .map(|px| interpolate(dst, tri.triangles()[px.triangle], px.bary))
            .collect()
    }

    /// Samples `image` at the images of mesh pixels under the piecewise-affine
    /// map to `dst`. Pixels landing outside the image or inside a degenerate
    /// destination triangle are flagged invalid and set to zero.
    pub fn sample(&self, image: &RasterImage, tri: &Triangulation, dst: &Shape) -> (Vec<f64>, Vec<bool>) {
        let degenerate: Vec<bool> = tri
            .triangles()
            .iter()
            .map(|&[a, b, c]| barycentric(dst.point(a), dst.point(a), dst.point(b), dst.point(c)).is_none())
            .collect();
        let mut values = Vec::with_capacity(self.pixels.len());
        let mut valid = Vec::with_capacity(self.pixels.len());
        for px in &self.pixels {
            let sample = if degenerate[px.triangle] {
                None
            } else {
                let [x, y] = interpolate(dst, tri.triangles()[px.triangle], px.bary);
                image.sample(x, y)
            };
            values.push(sample.unwrap_or(0.0));
            valid.push(sample.is_some());
        }
        (values, valid)
    }

    /// Scatters per-mesh-pixel `values` into a frame-sized raster.
    pub fn scatter(&self, values: &[f64], fill: f64) -> RasterImage {
        let mut out = RasterImage::filled(self.frame.width, self.frame.height, fill);
        for (px, &v) in self.pixels.iter().zip(values) {
            out.set(px.col, px.row, v);
        }
        out
    }

    /// Gathers mesh-pixel values from a frame-sized raster.
    pub fn gather(&self, image: &RasterImage) -> Vec<f64> {
        self.pixels.iter().map(|px| image.data()[px.index]).collect()
    }
}

#[inline]
pub(crate) fn interpolate(shape: &Shape, [a, b, c]: [usize; 3], w: [f64; 3]) -> [f64; 2] {
    let (pa, pb, pc) = (shape.point(a), shape.point(b), shape.point(c));
    [
        w[0] * pa[0] + w[1] * pb[0] + w[2] * pc[0],
        w[0] * pa[1] + w[1] * pb[1] + w[2] * pc[1],
    ]
}

/// Result of warping an image into a frame.
#[derive(Clone, Debug)]
pub struct WarpedImage {
    pub image: RasterImage,
    /// Frame-sized validity flags; false outside the mesh or where the source
    /// sample was unavailable.
    pub mask: Vec<bool>,
}

/// Warps `image` into `frame`: each frame pixel inside the mesh of
/// `src_shape` takes the bilinear sample of `image` at its piecewise-affine
/// image on `dst_shape`.
pub fn piecewise_affine_warp(
    image: &RasterImage,
    src_shape: &Shape,
    dst_shape: &Shape,
    tri: &Triangulation,
    frame: TemplateFrame,
) -> Result<WarpedImage> {
    if src_shape.n_points() != dst_shape.n_points() {
        return Err(AamError::DimensionMismatch {
            what: "destination landmark count",
            expected: src_shape.n_points(),
            got: dst_shape.n_points(),
        });
    }
    let raster = MeshRaster::new(frame, src_shape, tri)?;
    let (values, valid) = raster.sample(image, tri, dst_shape);
    let mut mask = vec![false; frame.len()];
    for (px, &ok) in raster.pixels().iter().zip(&valid) {
        mask[px.index] = ok;
    }
    Ok(WarpedImage {
        image: raster.scatter(&values, 0.0),
        mask,
    })
}

/// Per-pixel 2 x `cols` Jacobians, stored row-major per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelJacobian {
    cols: usize,
    data: Vec<f64>,
}

impl PixelJacobian {
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / (2 * self.cols)
        }
    }

    /// `(d x / d params, d y / d params)` at mesh pixel `pix`.
    #[inline]
    pub fn rows(&self, pix: usize) -> (&[f64], &[f64]) {
        let base = 2 * pix * self.cols;
        (
            &self.data[base..base + self.cols],
            &self.data[base + self.cols..base + 2 * self.cols],
        )
    }
}

/// Jacobian of the mesh-pixel positions with respect to coefficients on
/// `vectors`: barycentric interpolation of each vector's vertex displacements.
pub fn warp_jacobian(raster: &MeshRaster, tri: &Triangulation, vectors: &[Vec<f64>]) -> PixelJacobian {
    let cols = vectors.len();
    let mut data = Vec::with_capacity(raster.len() * 2 * cols);
    for px in raster.pixels() {
        let [a, b, c] = tri.triangles()[px.triangle];
        let w = px.bary;
        for axis in 0..2 {
            for v in vectors {
                data.push(w[0] * v[2 * a + axis] + w[1] * v[2 * b + axis] + w[2] * v[2 * c + axis]);
            }
        }
    }
    PixelJacobian { cols, data }
}

/// Jacobian of `N(W(x; p); q)` with respect to `q`, where `current` is the
/// locally deformed mesh `W(s0; p)`.
pub fn global_jacobian(
    raster: &MeshRaster,
    tri: &Triangulation,
    current: &Shape,
    basis: &GlobalBasis,
) -> PixelJacobian {
    warp_jacobian(raster, tri, &basis.kind().vectors_at(current))
}

/// `N(W(s0; p); q)`: local deformation first, then the global transform.
pub fn instantiate_shape(
    s0: &Shape,
    shape_basis: &[Vec<f64>],
    p: &[f64],
    global: &GlobalBasis,
    q: &[f64],
) -> Result<Shape> {
    let local = s0.displaced(shape_basis, p)?;
    global.apply(q, &local)
}

/// Projects `shape - s0` onto an orthonormal basis.
pub fn project_onto_basis(s0: &Shape, basis: &[Vec<f64>], shape: &[f64]) -> Vec<f64> {
    basis
        .iter()
        .map(|b| {
            b.iter()
                .zip(shape.iter().zip(s0.coords()))
                .map(|(bi, (si, s0i))| bi * (si - s0i))
                .sum()
        })
        .collect()
}

/// First-order inverse-compositional update `W(x; p) o W(x; dp)^-1`.
///
/// The vertices of `s0` are moved by `-dp`, pushed through the current warp
/// (each vertex averaged over the affine maps of its incident triangles), and
/// the resulting displacements are projected back onto the orthonormal
/// `basis`.
pub fn compose_inverse_update(
    p: &[f64],
    dp: &[f64],
    s0: &Shape,
    basis: &[Vec<f64>],
    tri: &Triangulation,
) -> Result<Vec<f64>> {
    if p.len() != basis.len() || dp.len() != basis.len() {
        return Err(AamError::DimensionMismatch {
            what: "shape parameter vector",
            expected: basis.len(),
            got: if p.len() != basis.len() { p.len() } else { dp.len() },
        });
    }
    if dp.iter().all(|&d| d == 0.0) {
        return Ok(p.to_vec());
    }
    let current = s0.displaced(basis, p)?;
    let neg: Vec<f64> = dp.iter().map(|d| -d).collect();
    let moved = s0.displaced(basis, &neg)?;
    let incident = tri.vertex_triangles();
    let mut composed = Vec::with_capacity(s0.coords().len());
    for (j, tris) in incident.iter().enumerate() {
        let target = moved.point(j);
        let mut acc = [0.0, 0.0];
        let mut count = 0usize;
        for &t in tris {
            let [a, b, c] = tri.triangles()[t];
            if let Some(w) = barycentric(target, s0.point(a), s0.point(b), s0.point(c)) {
                let q = interpolate(&current, [a, b, c], w);
                acc[0] += q[0];
                acc[1] += q[1];
                count += 1;
            }
        }
        if count == 0 {
            let (cur, base) = (current.point(j), s0.point(j));
            composed.extend_from_slice(&[cur[0] + target[0] - base[0], cur[1] + target[1] - base[1]]);
        } else {
            composed.extend_from_slice(&[acc[0] / count as f64, acc[1] / count as f64]);
        }
    }
    let p_new = project_onto_basis(s0, basis, &composed);
    let shape = s0.displaced(basis, &p_new)?;
    if let Some(triangle) = tri.first_flipped(&shape) {
        return Err(AamError::NonDiffeomorphicUpdate { triangle });
    }
    Ok(p_new)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (Shape, Triangulation) {
        let s = Shape::from_points(&[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]).unwrap();
        let t = Triangulation::delaunay(&s).unwrap();
        (s, t)
    }

    #[test]
    fn every_covered_pixel_has_one_owner() {
        let (s, t) = square();
        let frame = TemplateFrame::enclosing(&s, 1);
        let raster = MeshRaster::new(frame, &s, &t).unwrap();
        assert_eq!(raster.len(), 121);
        let mut seen = vec![0; frame.len()];
        for px in raster.pixels() {
            seen[px.index] += 1;
        }
        assert!(seen.iter().all(|&c| c <= 1));
    }

    #[test]
    fn identity_warp_copies_mesh_pixels() {
        let (s, t) = square();
        let img = RasterImage::from_fn(14, 14, |c, r| ((c * 7 + r * 3) % 11) as f64);
        let frame = TemplateFrame {
            width: 14,
            height: 14,
            origin: [0.0, 0.0],
        };
        let out = piecewise_affine_warp(&img, &s, &s, &t, frame).unwrap();
        for r in 0..14 {
            for c in 0..14 {
                if out.mask[r * 14 + c] {
                    assert!((out.image.get(c, r) - img.get(c, r)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_destination_triangle_is_masked() {
        let (s, t) = square();
        let collapsed = Shape::from_points(&[[0.0, 0.0], [10.0, 0.0], [10.0, 0.0], [0.0, 0.0]]).unwrap();
        let img = RasterImage::filled(20, 20, 1.0);
        let out = piecewise_affine_warp(&img, &s, &collapsed, &t, TemplateFrame::enclosing(&s, 0)).unwrap();
        assert!(out.mask.iter().all(|&m| !m));
    }

    #[test]
    fn compose_zero_step_is_identity() {
        let (s, t) = square();
        let basis = vec![vec![0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]];
        assert_eq!(compose_inverse_update(&[1.7], &[0.0], &s, &basis, &t).unwrap(), vec![1.7]);
    }

    #[test]
    fn fold_over_is_reported() {
        let (s, t) = square();
        // moves vertex 2 across the opposite corner
        let basis = vec![vec![0.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0]
            .into_iter()
            .map(|x: f64| x / 2f64.sqrt())
            .collect::<Vec<_>>()];
        let r = compose_inverse_update(&[0.0], &[-30.0], &s, &basis, &t);
        assert!(matches!(r, Err(AamError::NonDiffeomorphicUpdate { .. })));
    }
}
