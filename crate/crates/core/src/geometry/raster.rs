use serde::{Deserialize, Serialize};

use crate::error::{AamError, Result};

/// Single-channel intensity grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(AamError::InvalidImage(format!(
                "zero-sized raster {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(AamError::DimensionMismatch {
                what: "raster data length",
                expected: width * height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AamError::InvalidImage("non-finite intensity".into()));
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        RasterImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Samples `f(col, row)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let v = f(c, r);
                assert!(v.is_finite(), "non-finite intensity at ({c}, {r})");
                data.push(v);
            }
        }
        RasterImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Bilinear interpolation at `(x, y)`; `None` outside `[0, w-1] x [0, h-1]`.
    /// Coordinates within `1e-9` of the grid are snapped to it.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < 1e-9 {
                r
            } else {
                v
            }
        };
        let (x, y) = (snap(x), snap(y));
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= xmax && y <= ymax) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Per-pixel gradient of `values` over the pixels flagged in `mask`.
///
/// Central differences where both neighbours are valid, one-sided where only
/// one is, zero otherwise. Entries outside the mask are zero.
pub fn masked_gradient(
    width: usize,
    height: usize,
    values: &[f64],
    mask: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(values.len(), width * height);
    debug_assert_eq!(mask.len(), width * height);
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    let diff = |center: usize, prev: Option<usize>, next: Option<usize>| -> f64 {
        let prev = prev.filter(|&i| mask[i]);
        let next = next.filter(|&i| mask[i]);
        match (prev, next) {
            (Some(a), Some(b)) => 0.5 * (values[b] - values[a]),
            (None, Some(b)) => values[b] - values[center],
            (Some(a), None) => values[center] - values[a],
            (None, None) => 0.0,
        }
    };
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if !mask[i] {
                continue;
            }
            let left = (c > 0).then(|| i - 1);
            let right = (c + 1 < width).then(|| i + 1);
            let up = (r > 0).then(|| i - width);
            let down = (r + 1 < height).then(|| i + width);
            gx[i] = diff(i, left, right);
            gy[i] = diff(i, up, down);
        }
    }
    (gx, gy)
}
