use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Algorithm;
use crate::geometry::{masked_gradient, warp_jacobian, PixelJacobian};
use crate::model::Aam;

/// Eigenvalues below this fraction of the largest are dropped by the
/// pseudo-inverse.
pub const PINV_TOL: f64 = 1e-10;

/// Template-side quantities that do not change between iterations.
#[derive(Clone, Debug)]
pub struct Precomputed {
    /// Mean appearance over mesh pixels.
    pub a0: Vec<f64>,
    /// Appearance basis over mesh pixels.
    pub appearance: Vec<Vec<f64>>,
    /// Gradient of `A0` at each mesh pixel.
    pub grad_a0: Vec<[f64; 2]>,
    /// Gradient of each `A_i` at each mesh pixel (empty unless SIC).
    pub grad_appearance: Vec<Vec<[f64; 2]>>,
    pub dw_dp: PixelJacobian,
    /// Steepest-descent images over mesh pixels, one per shape parameter;
    /// projected out for PO.
    pub sd: Vec<Vec<f64>>,
    pub h1: DMatrix<f64>,
    pub h1_pinv: DMatrix<f64>,
    /// Photometric reference direction over mesh pixels, if the model has one.
    pub reference: Option<Vec<f64>>,
}

/// Moore-Penrose inverse of a symmetric matrix. The flag is set when any
/// direction was dropped.
pub fn pseudo_inverse(h: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = h.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let mut inv_diag = DVector::zeros(n);
    let mut deficient = false;
    for i in 0..n {
        let e = eig.eigenvalues[i];
        if max > 0.0 && e.abs() > PINV_TOL * max {
            inv_diag[i] = 1.0 / e;
        } else {
            deficient = true;
        }
    }
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv_diag) * v.transpose(), deficient)
}

/// `sum_x SD(x)^T SD(x)` for images stored one per column.
pub fn gauss_newton_hessian(sd: &[Vec<f64>]) -> DMatrix<f64> {
    let n = sd.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = sd[i].iter().zip(&sd[j]).map(|(a, b)| a * b).sum();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Removes the span of an orthonormal `basis` from each image.
pub fn project_out_sd(sd: &[Vec<f64>], basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sd.iter()
        .map(|s| {
            let mut out = s.clone();
            for a in basis {
                let c: f64 = a.iter().zip(s).map(|(x, y)| x * y).sum();
                out.iter_mut().zip(a).for_each(|(o, x)| *o -= c * x);
            }
            out
        })
        .collect()
}

/// Gradient of a frame image at each mesh pixel, differenced over the mask.
pub(crate) fn mesh_gradient(aam: &Aam, frame_values: &[f64], mask: &[bool]) -> Vec<[f64; 2]> {
    let frame = aam.raster().frame();
    let (gx, gy) = masked_gradient(frame.width, frame.height, frame_values, mask);
    aam.raster().pixels().iter().map(|px| [gx[px.index], gy[px.index]]).collect()
}

/// Steepest-descent images `g(x) . dW/dp_j` for per-pixel gradients `g`.
pub(crate) fn steepest_descent(grad: &[[f64; 2]], jac: &PixelJacobian) -> Vec<Vec<f64>> {
    let n = jac.cols();
    let mut sd = vec![vec![0.0; grad.len()]; n];
    for (pix, g) in grad.iter().enumerate() {
        let (jx, jy) = jac.rows(pix);
        for j in 0..n {
            sd[j][pix] = g[0] * jx[j] + g[1] * jy[j];
        }
    }
    sd
}

/// Gradients, steepest-descent images and `H1` for `aam` under `algorithm`.
pub fn precompute(aam: &Aam, algorithm: Algorithm) -> Precomputed {
    let raster = aam.raster();
    let app = aam.appearance();
    let a0 = raster.gather(&app.mean);
    let appearance: Vec<Vec<f64>> = app.basis.iter().map(|a| raster.gather(a)).collect();
    let grad_a0 = mesh_gradient(aam, app.mean.data(), &app.mask);
    let grad_appearance = if algorithm == Algorithm::Sic {
        app.basis.iter().map(|a| mesh_gradient(aam, a.data(), &app.mask)).collect()
    } else {
        Vec::new()
    };
    let dw_dp = warp_jacobian(raster, aam.triangulation(), aam.basis());
    let mut sd = steepest_descent(&grad_a0, &dw_dp);
    if algorithm == Algorithm::Po {
        sd = project_out_sd(&sd, &appearance);
    }
    let h1 = gauss_newton_hessian(&sd);
    let (h1_pinv, _) = pseudo_inverse(&h1);
    let reference = app.photometric.as_ref().map(|ph| raster.gather(&ph.reference));
    Precomputed {
        reference,
        a0,
        appearance,
        grad_a0,
        grad_appearance,
        dw_dp,
        sd,
        h1,
        h1_pinv,
    }
}
