//! Deterministic synthetic face-like data: a jittered two-ring landmark
//! layout, smooth shape and texture modes, optional global distortion and
//! noise.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AamError, Result};
use crate::geometry::{barycentric, GlobalKind, MeshRaster, RasterImage, Shape, TemplateFrame, Triangulation};
use crate::model::gram_schmidt;

/// Pixels beyond the mesh that still receive the face texture.
const BLEED: f64 = 2.0;

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Range of the random global transform applied to each sample about the
/// image centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalDistortion {
    /// Rotation drawn uniformly from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    /// Scale drawn uniformly from `[1 - scale, 1 + scale]`.
    pub scale: f64,
    /// Horizontal shear magnitude drawn from `[shear.0, shear.1]`, random sign.
    pub shear: (f64, f64),
    /// Translation per axis drawn from `[-translation_px, translation_px]`.
    pub translation_px: f64,
}

impl GlobalDistortion {
    pub const NONE: GlobalDistortion = GlobalDistortion {
        rotation_deg: 0.0,
        scale: 0.0,
        shear: (0.0, 0.0),
        translation_px: 0.0,
    };

    pub fn similarity(rotation_deg: f64, scale: f64, translation_px: f64) -> Self {
        GlobalDistortion {
            rotation_deg,
            scale,
            shear: (0.0, 0.0),
            translation_px,
        }
    }

    pub fn affine(shear: f64, rotation_deg: f64, scale: f64, translation_px: f64) -> Self {
        GlobalDistortion {
            rotation_deg,
            scale,
            shear: (shear, shear),
            translation_px,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> [[f64; 3]; 2] {
        let sym = |rng: &mut dyn rand::RngCore, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let theta = sym(rng, self.rotation_deg).to_radians();
        let s = 1.0 + sym(rng, self.scale);
        let (lo, hi) = self.shear;
        let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let sh = sign * mag;
        let tx = sym(rng, self.translation_px);
        let ty = sym(rng, self.translation_px);
        let (c, sn) = (theta.cos(), theta.sin());
        // R(theta) * s * [[1, sh], [0, 1]]
        [
            [s * c, s * (c * sh - sn), tx],
            [s * sn, s * (sn * sh + c), ty],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub landmark_count: usize,
    /// Radius of the base face in pixels.
    pub size: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// Half-width of the uniform coefficient range of each shape mode, in
    /// pixels RMS per landmark.
    pub shape_amplitudes: Vec<f64>,
    /// Half-width of the uniform coefficient range of each texture mode, in
    /// peak intensity.
    pub texture_amplitudes: Vec<f64>,
    /// Shortest texture wavelength as a multiple of `size`.
    pub texture_wavelength: f64,
    pub global_distortion: GlobalDistortion,
    pub noise_sigma: f64,
    pub count: usize,
    /// Seed of the family (layout jitter, modes, textures).
    pub seed: u64,
    /// Seed of the per-sample draws.
    pub sample_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            landmark_count: 24,
            size: 30.0,
            image_width: 128,
            image_height: 128,
            shape_amplitudes: vec![4.0, 3.0, 2.0],
            texture_amplitudes: vec![0.1, 0.06],
            texture_wavelength: 1.0,
            global_distortion: GlobalDistortion::NONE,
            noise_sigma: 0.0,
            count: 20,
            seed: 1,
            sample_seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AamError::InvalidConfig(m.to_string()));
        if self.landmark_count < 3 {
            return bad("landmark_count must be at least 3");
        }
        if !(self.size > 0.0) || self.image_width == 0 || self.image_height == 0 {
            return bad("size and image dimensions must be positive");
        }
        if self.shape_amplitudes.len() + 4 > 2 * self.landmark_count {
            return bad("too many shape modes for the landmark count");
        }
        if !(self.texture_wavelength > 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("texture_wavelength must be positive and noise_sigma non-negative");
        }
        let amps = self.shape_amplitudes.iter().chain(&self.texture_amplitudes);
        if amps.clone().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("mode amplitudes must be finite and non-negative");
        }
        Ok(())
    }
}

/// Smooth scalar field: sum of plane waves and Gaussian blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Field {
    offset: f64,
    /// `(amplitude, kx, ky, phase)`
    waves: Vec<[f64; 4]>,
    /// `(amplitude, cx, cy, sigma)`
    blobs: Vec<[f64; 4]>,
}

impl Field {
    fn random(rng: &mut ChaCha8Rng, scale: f64, min_wavelength: f64, waves: usize, blobs: usize) -> Field {
        let waves = (0..waves)
            .map(|_| {
                let wl = min_wavelength * rng.random_range(1.0..3.0);
                let dir = rng.random_range(0.0..TAU);
                let k = TAU / wl;
                [rng.random_range(0.5..1.0), k * dir.cos(), k * dir.sin(), rng.random_range(0.0..TAU)]
            })
            .collect();
        let blobs = (0..blobs)
            .map(|_| {
                let r = scale * rng.random_range(0.0..0.7);
                let a = rng.random_range(0.0..TAU);
                let amp = rng.random_range(0.8..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                [amp, r * a.cos(), r * a.sin(), scale * rng.random_range(0.15..0.3)]
            })
            .collect();
        Field {
            offset: 0.0,
            waves,
            blobs,
        }
    }

    fn eval(&self, [x, y]: [f64; 2]) -> f64 {
        let w: f64 = self.waves.iter().map(|[a, kx, ky, ph]| a * (kx * x + ky * y + ph).sin()).sum();
        let b: f64 = self
            .blobs
            .iter()
            .map(|[a, cx, cy, s]| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        self.offset + w + b
    }

    /// Rescales the variation so that its largest magnitude over the square
    /// `[-extent, extent]^2` (sampled on a grid) is `peak`.
    fn with_peak(self, extent: f64, peak: f64, offset: f64) -> Field {
        const N: usize = 64;
        let mut max = 0.0f64;
        for i in 0..=N {
            for j in 0..=N {
                let x = extent * (2.0 * i as f64 / N as f64 - 1.0);
                let y = extent * (2.0 * j as f64 / N as f64 - 1.0);
                max = max.max((self.eval([x, y]) - self.offset).abs());
            }
        }
        let factor = if max > 0.0 { peak / max } else { 0.0 };
        self.scaled(factor, offset)
    }

    fn scaled(mut self, factor: f64, offset: f64) -> Field {
        self.waves.iter_mut().for_each(|w| w[0] *= factor);
        self.blobs.iter_mut().for_each(|b| b[0] *= factor);
        self.offset = offset;
        self
    }
}

/// The generating model shared by every sample of a dataset.
#[derive(Clone, Debug)]
pub struct SyntheticFamily {
    pub spec: SyntheticSpec,
    /// Base shape centred at the origin.
    pub base: Shape,
    pub triangulation: Triangulation,
    /// Shape modes, orthogonal to the similarity span of `base` and to each
    /// other, each with norm `sqrt(v)` (1 px RMS).
    pub shape_modes: Vec<Vec<f64>>,
    texture: Field,
    texture_modes: Vec<Field>,
    background: Field,
}

/// One rendered sample with its generating coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub shape_coeffs: Vec<f64>,
    pub texture_coeffs: Vec<f64>,
    /// Global 2x3 map applied about the image centre.
    pub global: [[f64; 3]; 2],
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub family: SyntheticFamily,
    pub images: Vec<RasterImage>,
    pub shapes: Vec<Shape>,
    pub params: Vec<SampleParams>,
}

/// Jittered outer and inner elliptical rings, centred at the origin.
fn base_layout(v: usize, size: f64) -> Vec<[f64; 2]> {
    let n_outer = if v < 7 { v } else { (3 * v + 4) / 5 };
    let n_inner = v - n_outer;
    let mut pts = Vec::with_capacity(v);
    for j in 0..n_outer {
        let jf = j as f64;
        let step = TAU / n_outer as f64;
        let a = step * jf + 0.15 * step * (2.3 * jf + 0.7).sin();
        let r = size * (1.0 + 0.05 * (1.3 * jf + 0.2).sin());
        pts.push([r * a.cos(), 1.2 * r * a.sin()]);
    }
    for j in 0..n_inner {
        let jf = j as f64;
        let step = TAU / n_inner as f64;
        let a = step * (jf + 0.5) + 0.12 * step * (1.7 * jf + 0.3).cos();
        let r = 0.5 * size * (1.0 + 0.08 * (1.9 * jf).cos());
        pts.push([r * a.cos(), 1.1 * r * a.sin()]);
    }
    pts
}

impl SyntheticFamily {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let v = spec.landmark_count;
        let base = Shape::from_points(&base_layout(v, spec.size))?;
        let triangulation = Triangulation::delaunay(&base)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

        let n_modes = spec.shape_amplitudes.len();
        let mut candidates = GlobalKind::Similarity.vectors_at(&base);
        let mut attempts = 0;
        let mut shape_modes = Vec::new();
        while shape_modes.len() < n_modes {
            attempts += 1;
            if attempts > 100 * (n_modes + 1) {
                return Err(AamError::InvalidConfig("could not build independent shape modes".into()));
            }
            let field_x = Field::random(&mut rng, spec.size, 1.5 * spec.size, 2, 0);
            let field_y = Field::random(&mut rng, spec.size, 1.5 * spec.size, 2, 0);
            let raw: Vec<f64> = base.points().flat_map(|p| [field_x.eval(p), field_y.eval(p)]).collect();
            let mut trial = candidates.clone();
            trial.push(raw);
            let (ortho, kept) = gram_schmidt(&trial, 1e-3);
            if kept.last() != Some(&(trial.len() - 1)) {
                continue;
            }
            let mode: Vec<f64> = ortho.last().unwrap().iter().map(|x| x * (v as f64).sqrt()).collect();
            candidates.push(mode.clone());
            shape_modes.push(mode);
        }

        let wl = spec.texture_wavelength * spec.size;
        let extent = 1.6 * spec.size;
        let texture = Field::random(&mut rng, spec.size, wl, 6, 4).with_peak(extent, 0.25, 0.5);
        let texture_modes = spec
            .texture_amplitudes
            .iter()
            .map(|_| Field::random(&mut rng, spec.size, wl, 4, 2).with_peak(extent, 1.0, 0.0))
            .collect();
        let half = 0.75 * spec.image_width.max(spec.image_height) as f64;
        let background = Field::random(&mut rng, spec.size, wl, 4, 0).with_peak(half, 0.2, 0.3);
        Ok(SyntheticFamily {
            spec: spec.clone(),
            base,
            triangulation,
            shape_modes,
            texture,
            texture_modes,
            background,
        })
    }

    pub fn image_center(&self) -> [f64; 2] {
        [
            (self.spec.image_width as f64 - 1.0) / 2.0,
            (self.spec.image_height as f64 - 1.0) / 2.0,
        ]
    }

    /// Base-frame shape `base + sum_i c_i m_i`, centred at the origin.
    pub fn local_shape(&self, shape_coeffs: &[f64]) -> Result<Shape> {
        self.base.displaced(&self.shape_modes, shape_coeffs)
    }

    /// Landmarks of a sample in image coordinates.
    pub fn sample_shape(&self, params: &SampleParams) -> Result<Shape> {
        let local = self.local_shape(&params.shape_coeffs)?;
        let c = self.image_center();
        let m = params.global;
        Ok(local.map_points(|[x, y]| {
            [
                c[0] + m[0][0] * x + m[0][1] * y + m[0][2],
                c[1] + m[1][0] * x + m[1][1] * y + m[1][2],
            ]
        }))
    }

    /// Texture value at base-frame position `u`.
    pub fn texture_at(&self, texture_coeffs: &[f64], u: [f64; 2]) -> f64 {
        self.texture.eval(u)
            + self
                .texture_modes
                .iter()
                .zip(texture_coeffs)
                .map(|(f, d)| d * f.eval(u))
                .sum::<f64>()
    }

    /// Noise-free rendering of a sample and its landmarks.
    pub fn render(&self, params: &SampleParams) -> Result<(RasterImage, Shape)> {
        if params.shape_coeffs.len() != self.shape_modes.len()
            || params.texture_coeffs.len() != self.texture_modes.len()
        {
            return Err(AamError::DimensionMismatch {
                what: "sample coefficient count",
                expected: self.shape_modes.len() + self.texture_modes.len(),
                got: params.shape_coeffs.len() + params.texture_coeffs.len(),
            });
        }
        let shape = self.sample_shape(params)?;
        let (w, h) = (self.spec.image_width, self.spec.image_height);
        let c = self.image_center();
        let mut image = RasterImage::from_fn(w, h, |col, row| {
            self.background.eval([col as f64 - c[0], row as f64 - c[1]])
        });
        let frame = TemplateFrame {
            width: w,
            height: h,
            origin: [0.0, 0.0],
        };
        let raster = MeshRaster::new(frame, &shape, &self.triangulation)?;
        let tris = self.triangulation.triangles();
        let to_base = |t: usize, wt: [f64; 3]| {
            let [a, b, cc] = tris[t];
            let (pa, pb, pc) = (self.base.point(a), self.base.point(b), self.base.point(cc));
            [
                wt[0] * pa[0] + wt[1] * pb[0] + wt[2] * pc[0],
                wt[0] * pa[1] + wt[1] * pb[1] + wt[2] * pc[1],
            ]
        };
        for px in raster.pixels() {
            let u = to_base(px.triangle, px.bary);
            image.set(px.col, px.row, self.texture_at(&params.texture_coeffs, u));
        }
        // continue the texture a little past the mesh so that interpolated
        // samples at the mesh border do not pick up background
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in shape.points() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let clampi = |x: f64, n: usize| x.max(0.0).min(n as f64 - 1.0) as usize;
        for row in clampi((lo[1] - BLEED).floor(), h)..=clampi((hi[1] + BLEED).ceil(), h) {
            for col in clampi((lo[0] - BLEED).floor(), w)..=clampi((hi[0] + BLEED).ceil(), w) {
                if raster.mask()[row * w + col] {
                    continue;
                }
                let p = [col as f64, row as f64];
                let mut best: Option<(f64, usize, [f64; 3])> = None;
                for (t, &[a, b, cc]) in tris.iter().enumerate() {
                    let (pa, pb, pc) = (shape.point(a), shape.point(b), shape.point(cc));
                    let Some(wt) = barycentric(p, pa, pb, pc) else { continue };
                    let d = segment_distance(p, pa, pb)
                        .min(segment_distance(p, pb, pc))
                        .min(segment_distance(p, pc, pa));
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, t, wt));
                    }
                }
                if let Some((d, t, wt)) = best {
                    if d <= BLEED {
                        image.set(col, row, self.texture_at(&params.texture_coeffs, to_base(t, wt)));
                    }
                }
            }
        }
        Ok((image, shape))
    }

    /// Draws sample parameters from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> SampleParams {
        let sym = |rng: &mut ChaCha8Rng, a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        let shape_coeffs = self.spec.shape_amplitudes.iter().map(|&a| sym(rng, a)).collect();
        let texture_coeffs = self.spec.texture_amplitudes.iter().map(|&a| sym(rng, a)).collect();
        let global = self.spec.global_distortion.sample(rng);
        SampleParams {
            shape_coeffs,
            texture_coeffs,
            global,
        }
    }

    /// Renders `count` samples from `sample_seed`, adding noise.
    pub fn generate(&self, count: usize, sample_seed: u64) -> Result<SyntheticDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let noise = Normal::new(0.0, self.spec.noise_sigma)
            .map_err(|e| AamError::InvalidConfig(format!("noise_sigma: {e}")))?;
        let mut images = Vec::with_capacity(count);
        let mut shapes = Vec::with_capacity(count);
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let p = self.draw(&mut rng);
            let (image, shape) = self.render(&p)?;
            let image = if self.spec.noise_sigma > 0.0 {
                let data = image.into_data().into_iter().map(|x| x + noise.sample(&mut rng)).collect();
                RasterImage::new(self.spec.image_width, self.spec.image_height, data)?
            } else {
                image
            };
            images.push(image);
            shapes.push(shape);
            params.push(p);
        }
        Ok(SyntheticDataset {
            family: self.clone(),
            images,
            shapes,
            params,
        })
    }

    /// Landmark indices closest to the left eye corner, right eye corner and
    /// chin directions of the outer ring.
    pub fn anchor_indices(&self) -> [usize; 3] {
        let targets = [PI + 0.35, TAU - 0.35, PI / 2.0];
        let mut out = [0usize; 3];
        for (o, t) in out.iter_mut().zip(targets) {
            let mut best = (f64::INFINITY, 0);
            for (i, p) in self.base.points().enumerate() {
                let a = p[1].atan2(p[0]).rem_euclid(TAU);
                let d = (a - t).abs().min(TAU - (a - t).abs()) - p[0].hypot(p[1]) * 1e-6;
                if d < best.0 {
                    best = (d, i);
                }
            }
            *o = best.1;
        }
        out
    }
}

/// Builds the family from `spec.seed` and renders `spec.count` samples from
/// `spec.sample_seed`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    SyntheticFamily::new(spec)?.generate(spec.count, spec.sample_seed)
}
