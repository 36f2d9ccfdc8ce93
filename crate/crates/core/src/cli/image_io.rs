//! Single-channel image loading and lossless 16-bit PGM output.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{AamError, Result};
use crate::geometry::RasterImage;

/// Full-scale value of written images: intensity 1.0 maps to this code.
pub const PGM_MAX: f64 = 65535.0;

/// Loads any format the `image` crate decodes, converted to luma and scaled
/// so that full white is 1.0.
pub fn read_image(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => AamError::io(path, io),
        other => AamError::InvalidImage(format!("{}: {other}", path.display())),
    })?;
    let luma = img.into_luma16();
    let (w, h) = luma.dimensions();
    let data = luma.into_raw().into_iter().map(|v| v as f64 / PGM_MAX).collect();
    RasterImage::new(w as usize, h as usize, data)
}

/// Intensities rounded to 16-bit codes, clamped to `[0, 1]`.
pub fn quantize(image: &RasterImage) -> Vec<u16> {
    image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * PGM_MAX).round() as u16)
        .collect()
}

pub fn write_pgm16(path: &Path, image: &RasterImage) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(image.width() as u32, image.height() as u32, quantize(image))
            .ok_or_else(|| AamError::InvalidImage("raster size overflow".into()))?;
    buf.save_with_format(path, image::ImageFormat::Pnm).map_err(|e| match e {
        image::ImageError::IoError(io) => AamError::io(path, io),
        other => AamError::InvalidImage(format!("{}: {other}", path.display())),
    })
}
