//! The fitting family: ICA, PO and SIC, each unidirectional or bidirectional,
//! with an optional 3-sigma shape constraint.

mod fitter;
mod init;
mod precompute;

use serde::{Deserialize, Serialize};

pub use fitter::{apply_constraint, Fitter, Residual, StepUpdate, MAX_DAMPING_RETRIES};
pub use init::initialize_from_anchor_points;
pub use precompute::{
    gauss_newton_hessian, precompute, project_out_sd, pseudo_inverse, Precomputed, PINV_TOL,
};

use crate::error::{AamError, Result};
use crate::geometry::{GlobalKind, RasterImage, Shape, WarpParams};
use crate::model::Aam;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Inverse compositional against the mean appearance.
    Ica,
    /// Project-out: appearance variation removed from the steepest-descent
    /// images.
    Po,
    /// Simultaneous inverse compositional: joint shape and appearance update.
    Sic,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ica => "ica",
            Algorithm::Po => "po",
            Algorithm::Sic => "sic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ica" => Some(Algorithm::Ica),
            "po" => Some(Algorithm::Po),
            "sic" => Some(Algorithm::Sic),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitterConfig {
    pub algorithm: Algorithm,
    pub bidirectional: bool,
    pub global_kind: GlobalKind,
    pub constrained: bool,
    pub max_iters: usize,
    /// Convergence threshold on `|dp| + |dq| + |dlambda|`.
    pub param_tol: f64,
    /// Step scale applied after a fold-over.
    pub step_damping: f64,
}

impl Default for FitterConfig {
    fn default() -> Self {
        FitterConfig {
            algorithm: Algorithm::Ica,
            bidirectional: false,
            global_kind: GlobalKind::Similarity,
            constrained: false,
            max_iters: 50,
            param_tol: 1e-6,
            step_damping: 0.5,
        }
    }
}

impl FitterConfig {
    pub fn new(algorithm: Algorithm, bidirectional: bool) -> Self {
        FitterConfig {
            algorithm,
            bidirectional,
            ..Default::default()
        }
    }

    pub fn with_affine(mut self, affine: bool) -> Self {
        self.global_kind = if affine { GlobalKind::Affine } else { GlobalKind::Similarity };
        self
    }

    pub fn with_constraint(mut self, constrained: bool) -> Self {
        self.constrained = constrained;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(AamError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.param_tol > 0.0) {
            return Err(AamError::InvalidConfig("param_tol must be positive".into()));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(AamError::InvalidConfig("step_damping must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Name such as `bi-sic-ac`: `bi-` for bidirectional, `-a` for the
    /// affine basis, `-c` for the constraint.
    pub fn name(&self) -> String {
        let mut s = String::new();
        if self.bidirectional {
            s.push_str("bi-");
        }
        s.push_str(self.algorithm.name());
        let suffix = match (self.global_kind == GlobalKind::Affine, self.constrained) {
            (true, true) => "-ac",
            (true, false) => "-a",
            (false, true) => "-c",
            (false, false) => "",
        };
        s.push_str(suffix);
        s
    }

    /// Inverse of [`FitterConfig::name`].
    pub fn parse_name(name: &str) -> Result<Self> {
        let bad = || AamError::InvalidConfig(format!("unknown algorithm name {name:?}"));
        let lower = name.trim().to_ascii_lowercase();
        let (bidirectional, rest) = match lower.strip_prefix("bi-") {
            Some(r) => (true, r),
            None => (false, lower.as_str()),
        };
        let (algo, suffix) = rest.split_once('-').unwrap_or((rest, ""));
        let algorithm = Algorithm::parse(algo).ok_or_else(bad)?;
        let (affine, constrained) = match suffix {
            "" => (false, false),
            "a" => (true, false),
            "c" => (false, true),
            "ac" | "ca" => (true, true),
            _ => return Err(bad()),
        };
        Ok(FitterConfig::new(algorithm, bidirectional)
            .with_affine(affine)
            .with_constraint(constrained))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// Every damped retry of an update folded the mesh.
    FoldOver,
    TrackingLost,
}

/// Parameters and history of one fitting run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iteration: usize,
    /// Sum of squared errors before the first step and after each step.
    pub error_history: Vec<f64>,
    pub converged: bool,
    /// `p` at the start and after each step.
    pub p_history: Vec<Vec<f64>>,
    pub stop: StopReason,
    /// Iterations whose template-side Hessian needed the pseudo-inverse.
    pub deficient_h: usize,
    /// Iterations whose `H2` was singular and `q` was left unchanged.
    pub singular_h2: usize,
    /// Iterations that needed at least one damped retry.
    pub damped_steps: usize,
}

impl FitState {
    pub fn new(init: WarpParams, n_appearance: usize) -> Self {
        FitState {
            p: init.p,
            q: init.q,
            lambda: vec![0.0; n_appearance],
            iteration: 0,
            error_history: Vec::new(),
            converged: false,
            p_history: Vec::new(),
            stop: StopReason::MaxIterations,
            deficient_h: 0,
            singular_h2: 0,
            damped_steps: 0,
        }
    }

    pub fn params(&self) -> WarpParams {
        WarpParams {
            p: self.p.clone(),
            q: self.q.clone(),
        }
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_history.last().copied()
    }
}

/// A fit that stopped with an error, with the state reached so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct FitFailure {
    pub error: AamError,
    pub partial: Option<Box<FitState>>,
}

/// Starting point of a fit.
#[derive(Clone, Debug)]
pub enum FitInit {
    Shape(Shape),
    Params(WarpParams),
}

/// Precomputes for `aam` and runs a single fit.
pub fn fit(
    image: &RasterImage,
    aam: &Aam,
    init: &FitInit,
    config: FitterConfig,
) -> std::result::Result<FitState, FitFailure> {
    let wrap = |error| FitFailure { error, partial: None };
    let fitter = Fitter::new(aam, config).map_err(wrap)?;
    let params = match init {
        FitInit::Params(p) => p.clone(),
        FitInit::Shape(s) => aam.params_from_shape(s).map_err(wrap)?,
    };
    fitter.fit(image, &params)
}
