//! JSON model container. Floats are written in shortest round-trip form, so
//! loading a saved model reproduces every array bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AamError, Result};
use crate::geometry::{GlobalKind, RasterImage, Triangulation};
use crate::model::{assemble_aam, Aam, AppearanceModel, BasisMode, ShapeModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    /// Landmarks.
    pub v: usize,
    /// Shape modes.
    pub n: usize,
    /// Appearance modes.
    pub m: usize,
    /// Global transform parameters.
    pub k: usize,
    pub global: GlobalKind,
    pub mode: BasisMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub shape: ShapeModel,
    pub triangulation: Triangulation,
    pub appearance: AppearanceModel,
}

impl ModelFile {
    pub fn from_aam(aam: &Aam) -> Self {
        ModelFile {
            header: ModelHeader {
                format_version: MODEL_FORMAT_VERSION,
                v: aam.s0().n_points(),
                n: aam.shape_model().n_modes(),
                m: aam.n_appearance(),
                k: aam.global_kind().dim(),
                global: aam.global_kind(),
                mode: aam.mode(),
            },
            shape: aam.shape_model().clone(),
            triangulation: aam.triangulation().clone(),
            appearance: aam.appearance().clone(),
        }
    }

    /// Checks the header against the arrays and rebuilds the model.
    pub fn into_aam(self) -> Result<Aam> {
        let h = &self.header;
        if h.format_version != MODEL_FORMAT_VERSION {
            return Err(AamError::Format(format!(
                "unsupported format version {}",
                h.format_version
            )));
        }
        let check = |what: &'static str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(AamError::DimensionMismatch { what, expected, got })
            }
        };
        check("header v", h.v, self.shape.s0.n_points())?;
        check("header n", h.n, self.shape.basis.len())?;
        check("header m", h.m, self.appearance.basis.len())?;
        check("header k", h.k, h.global.dim())?;
        let frame = self.appearance.frame;
        check("appearance mask length", frame.len(), self.appearance.mask.len())?;
        let app = &self.appearance;
        let rasters = std::iter::once(&app.mean)
            .chain(&app.basis)
            .chain(app.photometric.as_ref().map(|p| &p.reference));
        for r in rasters {
            RasterImage::new(r.width(), r.height(), r.data().to_vec())?;
            if r.width() != frame.width || r.height() != frame.height {
                return Err(AamError::Format(format!(
                    "appearance image is {}x{}, frame is {}x{}",
                    r.width(),
                    r.height(),
                    frame.width,
                    frame.height
                )));
            }
        }
        let tri = Triangulation::from_triangles(&self.shape.s0, self.triangulation.triangles().to_vec())?;
        assemble_aam(self.shape, self.appearance, h.global, h.mode, tri)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| AamError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AamError::Format(e.to_string()))
    }
}

pub fn save_model(path: &Path, aam: &Aam) -> Result<()> {
    let text = ModelFile::from_aam(aam).to_json()?;
    std::fs::write(path, text).map_err(|e| AamError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Aam> {
    let text = std::fs::read_to_string(path).map_err(|e| AamError::io(path, e))?;
    ModelFile::from_json(&text)
        .map_err(|e| AamError::Format(format!("{}: {e}", path.display())))?
        .into_aam()
}
