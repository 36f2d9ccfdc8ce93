use log::debug;
use nalgebra::{DMatrix, DVector};

use super::precompute::{
    gauss_newton_hessian, mesh_gradient, precompute, project_out_sd, pseudo_inverse, steepest_descent,
    Precomputed,
};
use super::{Algorithm, FitFailure, FitState, FitterConfig, StopReason};
use crate::error::{AamError, Result};
use crate::geometry::{
    compose_inverse_update, global_jacobian, orient, RasterImage, Shape, WarpParams,
};
use crate::model::{Aam, BasisMode};

/// Maximum number of damped retries after a fold-over.
pub const MAX_DAMPING_RETRIES: usize = 5;

/// Error image of one parameter setting.
#[derive(Clone, Debug)]
pub struct Residual {
    /// `I(N(W(x; p); q)) - A(x)` per mesh pixel; zero where invalid.
    pub error: Vec<f64>,
    /// Warped (and normalised) input per mesh pixel; zero where invalid.
    pub warped: Vec<f64>,
    pub valid: Vec<bool>,
    pub sse: f64,
    /// `W(s0; p)`.
    pub local: Shape,
    /// `N(W(s0; p); q)`.
    pub shape: Shape,
}

impl Residual {
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Parameter increments proposed by one iteration.
#[derive(Clone, Debug, Default)]
pub struct StepUpdate {
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub dlambda: Vec<f64>,
    /// Template-side Hessian actually solved (`H1` or `H_sim`).
    pub h: DMatrix<f64>,
    /// Image-side Hessian `H2`; present for bidirectional steps.
    pub h2: Option<DMatrix<f64>>,
    pub h_deficient: bool,
    pub h2_singular: bool,
}

impl StepUpdate {
    pub fn norm(&self) -> f64 {
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        n(&self.dp) + n(&self.dq) + n(&self.dlambda)
    }

    fn scaled(&self, f: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = |v: &[f64]| v.iter().map(|x| x * f).collect::<Vec<_>>();
        (s(&self.dp), s(&self.dq), s(&self.dlambda))
    }
}

/// A model paired with a configuration and its precomputed template terms.
#[derive(Clone, Debug)]
pub struct Fitter<'a> {
    aam: &'a Aam,
    config: FitterConfig,
    pre: Precomputed,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve(pinv: &DMatrix<f64>, rhs: &[f64]) -> Vec<f64> {
    (pinv * DVector::from_column_slice(rhs)).iter().copied().collect()
}

impl<'a> Fitter<'a> {
    pub fn new(aam: &'a Aam, config: FitterConfig) -> Result<Self> {
        config.validate()?;
        if config.global_kind != aam.global_kind() {
            return Err(AamError::InvalidConfig(format!(
                "fitter expects a {} global basis but the model has {}",
                config.global_kind.name(),
                aam.global_kind().name()
            )));
        }
        if config.bidirectional && aam.mode() != BasisMode::Separate {
            return Err(AamError::InvalidConfig(
                "bidirectional fitting needs a model with a separate global basis".into(),
            ));
        }
        let pre = precompute(aam, config.algorithm);
        Ok(Fitter { aam, config, pre })
    }

    #[inline]
    pub fn aam(&self) -> &Aam {
        self.aam
    }

    #[inline]
    pub fn config(&self) -> &FitterConfig {
        &self.config
    }

    #[inline]
    pub fn precomputed(&self) -> &Precomputed {
        &self.pre
    }

    fn uses_appearance(&self) -> bool {
        self.config.algorithm == Algorithm::Sic
    }

    /// Current model appearance over mesh pixels.
    fn model_appearance(&self, lambda: &[f64]) -> Vec<f64> {
        let mut a = self.pre.a0.clone();
        if self.uses_appearance() {
            for (ai, &l) in self.pre.appearance.iter().zip(lambda) {
                a.iter_mut().zip(ai).for_each(|(x, y)| *x += l * y);
            }
        }
        a
    }

    /// Warps `image` through the current parameters, maps it to model units
    /// when the model carries a photometric normalisation, and subtracts the
    /// model appearance. Fails with `TrackingLost` when more than half the mesh
    /// pixels are unavailable.
    pub fn residual(&self, image: &RasterImage, params: &WarpParams, lambda: &[f64]) -> Result<Residual> {
        let aam = self.aam;
        if params.q.len() != aam.n_global() {
            return Err(AamError::DimensionMismatch {
                what: "global parameter vector",
                expected: aam.n_global(),
                got: params.q.len(),
            });
        }
        if lambda.len() != aam.n_appearance() {
            return Err(AamError::DimensionMismatch {
                what: "appearance parameter vector",
                expected: aam.n_appearance(),
                got: lambda.len(),
            });
        }
        let local = aam.s0().displaced(aam.basis(), &params.p)?;
        let shape = aam.global().apply(&params.q, &local)?;
        let (mut warped, valid) = aam.raster().sample(image, aam.triangulation(), &shape);
        if let (Some(ph), Some(r)) = (&aam.appearance().photometric, &self.pre.reference) {
            ph.normalize(&mut warped, &valid, r);
        }
        let total = valid.len();
        let masked = valid.iter().filter(|&&v| !v).count();
        if 2 * masked > total {
            return Err(AamError::TrackingLost { masked, total });
        }
        let model = self.model_appearance(lambda);
        let error: Vec<f64> = warped
            .iter()
            .zip(&model)
            .zip(&valid)
            .map(|((w, a), &ok)| if ok { w - a } else { 0.0 })
            .collect();
        let sse = error.iter().map(|e| e * e).sum();
        Ok(Residual {
            error,
            warped,
            valid,
            sse,
            local,
            shape,
        })
    }

    /// Template-side update `(dp, dlambda)` with the Hessian used.
    fn template_update(&self, res: &Residual, lambda: &[f64]) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, bool) {
        let pre = &self.pre;
        if self.uses_appearance() {
            // simultaneous solve over shape and appearance parameters
            let n = self.aam.n_params();
            let grad: Vec<[f64; 2]> = pre
                .grad_a0
                .iter()
                .enumerate()
                .map(|(pix, g0)| {
                    let mut g = *g0;
                    for (ga, &l) in pre.grad_appearance.iter().zip(lambda) {
                        g[0] += l * ga[pix][0];
                        g[1] += l * ga[pix][1];
                    }
                    g
                })
                .collect();
            let mut sd = steepest_descent(&grad, &pre.dw_dp);
            sd.extend(pre.appearance.iter().cloned());
            for img in &mut sd {
                img.iter_mut().zip(&res.valid).for_each(|(x, &ok)| {
                    if !ok {
                        *x = 0.0
                    }
                });
            }
            let h = gauss_newton_hessian(&sd);
            let (pinv, deficient) = pseudo_inverse(&h);
            let rhs: Vec<f64> = sd.iter().map(|s| dot(s, &res.error)).collect();
            let mut dr = solve(&pinv, &rhs);
            let dl = dr.split_off(n);
            (dr, dl, h, deficient)
        } else {
            let rhs: Vec<f64> = pre.sd.iter().map(|s| dot(s, &res.error)).collect();
            if res.valid.iter().all(|&v| v) {
                let dp = solve(&pre.h1_pinv, &rhs);
                (dp, Vec::new(), pre.h1.clone(), false)
            } else {
                let mut h = pre.h1.clone();
                let n = pre.sd.len();
                for (pix, _) in res.valid.iter().enumerate().filter(|(_, &ok)| !ok) {
                    for i in 0..n {
                        for j in 0..n {
                            h[(i, j)] -= pre.sd[i][pix] * pre.sd[j][pix];
                        }
                    }
                }
                let (pinv, deficient) = pseudo_inverse(&h);
                (solve(&pinv, &rhs), Vec::new(), h, deficient)
            }
        }
    }

    /// Image-side steepest-descent images `grad I . dN/dq` over mesh pixels.
    ///
    /// `grad I` is taken from the warped image in the template frame and
    /// mapped back to image axes through the inverse of each triangle's
    /// linear part. Zero at invalid pixels.
    pub fn image_side_sd(&self, res: &Residual) -> Vec<Vec<f64>> {
        let aam = self.aam;
        let raster = aam.raster();
        let frame = raster.frame();
        let tri = aam.triangulation();
        let s0 = aam.s0();
        let mut mask = vec![false; frame.len()];
        for (px, &ok) in raster.pixels().iter().zip(&res.valid) {
            mask[px.index] = ok;
        }
        let warped = raster.scatter(&res.warped, 0.0);
        let grad = mesh_gradient(aam, warped.data(), &mask);

        // inverse transpose of the template-to-image linear part per triangle
        let inv: Vec<Option<[[f64; 2]; 2]>> = tri
            .triangles()
            .iter()
            .map(|&[a, b, c]| {
                let (p0, p1, p2) = (s0.point(a), s0.point(b), s0.point(c));
                let (d0, d1, d2) = (res.shape.point(a), res.shape.point(b), res.shape.point(c));
                let e = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
                let d = [[d1[0] - d0[0], d2[0] - d0[0]], [d1[1] - d0[1], d2[1] - d0[1]]];
                if orient(d0, d1, d2).abs() <= 1e-12 * orient(p0, p1, p2).abs() {
                    return None;
                }
                // M = D E^-1, and grad_img = grad_tpl M^-1 = grad_tpl E D^-1
                let det_d = d[0][0] * d[1][1] - d[0][1] * d[1][0];
                let d_inv = [[d[1][1] / det_d, -d[0][1] / det_d], [-d[1][0] / det_d, d[0][0] / det_d]];
                let mut m = [[0.0; 2]; 2];
                for (i, row) in m.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = e[i][0] * d_inv[0][j] + e[i][1] * d_inv[1][j];
                    }
                }
                Some(m)
            })
            .collect();

        let jac = global_jacobian(raster, tri, &res.local, aam.global());
        let k = jac.cols();
        let mut sd = vec![vec![0.0; raster.len()]; k];
        for (pix, px) in raster.pixels().iter().enumerate() {
            if !res.valid[pix] {
                continue;
            }
            let Some(m) = inv[px.triangle] else { continue };
            let g = grad[pix];
            let gi = [g[0] * m[0][0] + g[1] * m[1][0], g[0] * m[0][1] + g[1] * m[1][1]];
            let (jx, jy) = jac.rows(pix);
            for j in 0..k {
                sd[j][pix] = gi[0] * jx[j] + gi[1] * jy[j];
            }
        }
        sd
    }

    /// One iteration's increments from the residual at `state`.
    pub fn step(&self, state: &FitState, res: &Residual) -> StepUpdate {
        let (dp, dlambda, h, h_deficient) = self.template_update(res, &state.lambda);
        let mut update = StepUpdate {
            dp,
            dq: vec![0.0; state.q.len()],
            dlambda,
            h,
            h2: None,
            h_deficient,
            h2_singular: false,
        };
        if self.config.bidirectional {
            let mut sd = self.image_side_sd(res);
            if self.config.algorithm == Algorithm::Po {
                sd = project_out_sd(&sd, &self.pre.appearance);
            }
            let h2 = gauss_newton_hessian(&sd);
            let max = h2.diagonal().iter().fold(0.0f64, |m, &x| m.max(x));
            let eig = h2.clone().symmetric_eigen();
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
            if !(max > 0.0) || min <= 1e-12 * max {
                update.h2_singular = true;
            } else {
                let rhs: Vec<f64> = sd.iter().map(|s| -dot(s, &res.error)).collect();
                if let Some(chol) = h2.clone().cholesky() {
                    update.dq = chol.solve(&DVector::from_column_slice(&rhs)).iter().copied().collect();
                } else {
                    update.h2_singular = true;
                }
            }
            update.h2 = Some(h2);
        }
        update
    }

    /// Applies `update` with fold-over damping and the optional constraint.
    /// Returns the factor that was finally used, or `None` if every damped
    /// attempt folded the mesh.
    pub fn apply(&self, state: &mut FitState, update: &StepUpdate) -> Result<Option<f64>> {
        let aam = self.aam;
        let mut factor = 1.0;
        for attempt in 0..=MAX_DAMPING_RETRIES {
            let (dp, dq, dl) = update.scaled(factor);
            match compose_inverse_update(&state.p, &dp, aam.s0(), aam.basis(), aam.triangulation()) {
                Ok(p) => {
                    state.p = p;
                    state.q.iter_mut().zip(&dq).for_each(|(q, d)| *q += d);
                    state.lambda.iter_mut().zip(&dl).for_each(|(l, d)| *l += d);
                    if self.config.constrained {
                        apply_constraint(&mut state.p, aam.eigenvalues());
                    }
                    if attempt > 0 {
                        state.damped_steps += 1;
                    }
                    return Ok(Some(factor));
                }
                Err(AamError::NonDiffeomorphicUpdate { triangle }) => {
                    debug!("update folds triangle {triangle}, damping");
                    factor *= self.config.step_damping;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    /// Runs the fit from `init` until convergence or `max_iters`.
    pub fn fit(&self, image: &RasterImage, init: &WarpParams) -> std::result::Result<FitState, FitFailure> {
        let aam = self.aam;
        let fail = |error, state: Option<FitState>| FitFailure {
            error,
            partial: state.map(Box::new),
        };
        if init.p.len() != aam.n_params() {
            return Err(fail(
                AamError::DimensionMismatch {
                    what: "shape parameter vector",
                    expected: aam.n_params(),
                    got: init.p.len(),
                },
                None,
            ));
        }
        let mut state = FitState::new(init.clone(), aam.n_appearance());
        if self.config.constrained {
            apply_constraint(&mut state.p, aam.eigenvalues());
        }
        state.p_history.push(state.p.clone());
        let mut res = match self.residual(image, &state.params(), &state.lambda) {
            Ok(r) => r,
            Err(e) => {
                state.stop = StopReason::TrackingLost;
                return Err(fail(e, Some(state)));
            }
        };
        state.error_history.push(res.sse);
        state.stop = StopReason::MaxIterations;
        while state.iteration < self.config.max_iters {
            let update = self.step(&state, &res);
            if update.h_deficient {
                state.deficient_h += 1;
            }
            if update.h2_singular {
                state.singular_h2 += 1;
            }
            let factor = match self.apply(&mut state, &update) {
                Ok(Some(f)) => f,
                Ok(None) => {
                    state.stop = StopReason::FoldOver;
                    break;
                }
                Err(e) => return Err(fail(e, Some(state))),
            };
            state.iteration += 1;
            state.p_history.push(state.p.clone());
            res = match self.residual(image, &state.params(), &state.lambda) {
                Ok(r) => r,
                Err(e) => {
                    state.stop = StopReason::TrackingLost;
                    return Err(fail(e, Some(state)));
                }
            };
            state.error_history.push(res.sse);
            if factor * update.norm() < self.config.param_tol {
                state.converged = true;
                state.stop = StopReason::Converged;
                break;
            }
        }
        Ok(state)
    }
}

/// Clamps each constrained `p_i` to `[-3 sqrt(b_i), 3 sqrt(b_i)]`; entries
/// with no eigenvalue (global directions) are left alone.
pub fn apply_constraint(p: &mut [f64], eigenvalues: &[Option<f64>]) {
    for (pi, b) in p.iter_mut().zip(eigenvalues) {
        if let Some(b) = b {
            let limit = 3.0 * b.sqrt();
            *pi = pi.clamp(-limit, limit);
        }
    }
}
