use log::warn;
use serde::{Deserialize, Serialize};

use super::pca::pca;
use crate::error::{AamError, Result};
use crate::geometry::{MeshRaster, RasterImage, Shape, TemplateFrame, Triangulation};

/// Pixels of margin around the base mesh in the template frame.
pub const FRAME_MARGIN: usize = 1;

/// Gain and bias removal shared by training and fitting.
///
/// A mesh-pixel vector is centred, divided by its least-squares gain along
/// `reference`, then mapped to model units with the training-set mean
/// `gain` and `bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Photometric {
    /// Unit-norm, zero-mean direction over mesh pixels (zero off the mesh).
    pub reference: RasterImage,
    pub gain: f64,
    pub bias: f64,
}

impl Photometric {
    /// Normalises `values` in place over the `valid` pixels, with `reference`
    /// gathered to the same pixels. Returns false and leaves `values`
    /// untouched when the gain is not positive.
    pub fn normalize(&self, values: &mut [f64], valid: &[bool], reference: &[f64]) -> bool {
        let n = valid.iter().filter(|&&v| v).count();
        if n == 0 {
            return false;
        }
        let mean = values.iter().zip(valid).filter(|(_, &ok)| ok).map(|(v, _)| v).sum::<f64>() / n as f64;
        let (mut dot, mut rr, mut vv) = (0.0, 0.0, 0.0);
        for ((v, r), &ok) in values.iter().zip(reference).zip(valid) {
            if ok {
                dot += (v - mean) * r;
                rr += r * r;
                vv += (v - mean) * (v - mean);
            }
        }
        if !(rr > 0.0) || dot <= 1e-9 * (vv * rr).sqrt() || dot == 0.0 {
            return false;
        }
        let gain = dot / rr;
        for (v, &ok) in values.iter_mut().zip(valid) {
            if ok {
                *v = self.gain * (*v - mean) / gain + self.bias;
            }
        }
        true
    }
}

/// Linear appearance model over the template frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceModel {
    pub frame: TemplateFrame,
    /// Frame-sized flags of mesh pixels.
    pub mask: Vec<bool>,
    /// Mean appearance `A0` in image intensity units, zero outside the mask.
    pub mean: RasterImage,
    /// Appearance images `A_i`, orthonormal over the mask.
    pub basis: Vec<RasterImage>,
    pub eigenvalues: Vec<f64>,
    pub retained_variance: f64,
    /// Normalisation applied to samples; `None` compares raw intensities.
    pub photometric: Option<Photometric>,
}

impl AppearanceModel {
    #[inline]
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    /// `A0 + sum_i lambda_i A_i` as a frame raster.
    pub fn instance(&self, lambda: &[f64]) -> Result<RasterImage> {
        if lambda.len() != self.basis.len() {
            return Err(AamError::DimensionMismatch {
                what: "appearance parameter vector",
                expected: self.basis.len(),
                got: lambda.len(),
            });
        }
        let mut data = self.mean.data().to_vec();
        for (img, &l) in self.basis.iter().zip(lambda) {
            for (d, a) in data.iter_mut().zip(img.data()) {
                *d += l * a;
            }
        }
        RasterImage::new(self.frame.width, self.frame.height, data)
    }
}

/// Outcome of appearance training, including samples that were skipped.
#[derive(Clone, Debug)]
pub struct AppearanceTraining {
    pub model: AppearanceModel,
    /// Indices of training samples rejected (fold-over, out of image, flat).
    pub rejected: Vec<usize>,
}

/// Trains the appearance model: warps every image to the base shape, removes
/// per-sample gain and bias, then runs PCA over the mesh pixels.
///
/// Each warped sample is centred to zero mean and divided by its projection
/// onto the common unit reference direction (the normalised mean of the
/// centred, unit-norm samples). The stored mean is mapped back to intensity
/// units with the average gain and bias of the training set.
pub fn train_appearance_model(
    images: &[RasterImage],
    shapes: &[Shape],
    s0: &Shape,
    tri: &Triangulation,
    retained_variance: f64,
) -> Result<AppearanceTraining> {
    if images.len() != shapes.len() {
        return Err(AamError::DimensionMismatch {
            what: "training shapes per image",
            expected: images.len(),
            got: shapes.len(),
        });
    }
    let frame = TemplateFrame::enclosing(s0, FRAME_MARGIN);
    let raster = MeshRaster::new(frame, s0, tri)?;
    if raster.is_empty() {
        return Err(AamError::DegenerateShape("base mesh covers no pixels".into()));
    }

    let mut rejected = Vec::new();
    let mut centered = Vec::new();
    let mut offsets = Vec::new();
    for (i, (image, shape)) in images.iter().zip(shapes).enumerate() {
        if shape.n_points() != s0.n_points() {
            return Err(AamError::DimensionMismatch {
                what: "training shape landmark count",
                expected: s0.n_points(),
                got: shape.n_points(),
            });
        }
        if let Some(t) = tri.first_flipped(shape) {
            warn!("appearance sample {i}: triangle {t} is flipped, sample skipped");
            rejected.push(i);
            continue;
        }
        let (mut values, valid) = raster.sample(image, tri, shape);
        if valid.iter().any(|&v| !v) {
            warn!("appearance sample {i}: mesh extends outside the image, sample skipped");
            rejected.push(i);
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * (1.0 + mean.abs()) * (values.len() as f64).sqrt() {
            warn!("appearance sample {i}: texture is flat, sample skipped");
            rejected.push(i);
            continue;
        }
        centered.push((i, values, norm));
        offsets.push(mean);
    }
    if centered.is_empty() {
        return Err(AamError::EmptyTraining("every appearance sample was rejected".into()));
    }

    let dim = raster.len();
    let mut reference = vec![0.0; dim];
    for (_, values, norm) in &centered {
        for (r, v) in reference.iter_mut().zip(values) {
            *r += v / norm;
        }
    }
    let rn = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    reference.iter_mut().for_each(|r| *r /= rn);

    let mut samples = Vec::with_capacity(centered.len());
    let mut gains = Vec::with_capacity(centered.len());
    let mut biases = Vec::with_capacity(centered.len());
    for ((i, values, norm), bias) in centered.into_iter().zip(offsets) {
        let gain: f64 = values.iter().zip(&reference).map(|(v, r)| v * r).sum();
        if gain <= 1e-6 * norm {
            warn!("appearance sample {i}: texture anti-correlated with the mean, sample skipped");
            rejected.push(i);
            continue;
        }
        samples.push(values.into_iter().map(|v| v / gain).collect::<Vec<_>>());
        gains.push(gain);
        biases.push(bias);
    }
    rejected.sort_unstable();
    if samples.is_empty() {
        return Err(AamError::EmptyTraining("every appearance sample was rejected".into()));
    }
    let gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let bias = biases.iter().sum::<f64>() / biases.len() as f64;

    let (mean, components, eigenvalues, explained) = if samples.len() == 1 {
        (samples.pop().unwrap(), Vec::new(), Vec::new(), 1.0)
    } else {
        let p = pca(&samples, retained_variance)?;
        let f = p.retained_fraction();
        (p.mean, p.components, p.eigenvalues, f)
    };
    let mean_px: Vec<f64> = mean.iter().map(|m| gain * m + bias).collect();
    Ok(AppearanceTraining {
        model: AppearanceModel {
            frame,
            mask: raster.mask().to_vec(),
            mean: raster.scatter(&mean_px, 0.0),
            basis: components.iter().map(|c| raster.scatter(c, 0.0)).collect(),
            eigenvalues: eigenvalues.iter().map(|e| e * gain * gain).collect(),
            retained_variance: explained,
            photometric: Some(Photometric {
                reference: raster.scatter(&reference, 0.0),
                gain,
                bias,
            }),
        },
        rejected,
    })
}
