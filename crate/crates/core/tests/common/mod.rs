#![allow(dead_code)]

use aam_core::eval::{SyntheticDataset, SyntheticFamily, SyntheticSpec};
use aam_core::geometry::{
    global_jacobian, warp_jacobian, GlobalBasis, GlobalKind, MeshRaster, RasterImage, Shape, TemplateFrame,
    Triangulation,
};
use aam_core::model::{
    assemble_aam, gram_schmidt, train_aam, Aam, AppearanceModel, BasisMode, ShapeModel, TrainConfig,
    FRAME_MARGIN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ring of `v` points plus the centre, centred on the origin.
pub fn ring_shape(v: usize, radius: f64) -> Shape {
    let mut pts = vec![[0.0, 0.0]];
    for i in 0..v {
        let a = std::f64::consts::TAU * i as f64 / v as f64 + 0.1;
        pts.push([radius * a.cos(), radius * 0.8 * a.sin()]);
    }
    Shape::from_points(&pts).unwrap()
}

/// `count` random orthonormal vectors of length `dim`.
pub fn random_basis(dim: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    gram_schmidt(&raw, 1e-10).0
}

/// Model whose mean appearance and modes are sampled from analytic fields on
/// the template frame; no photometric normalisation.
pub fn hand_aam(
    s0: &Shape,
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    a0: &dyn Fn(f64, f64) -> f64,
    modes: &[&dyn Fn(f64, f64) -> f64],
    kind: GlobalKind,
    mode: BasisMode,
) -> Aam {
    let tri = Triangulation::delaunay(s0).unwrap();
    let frame = TemplateFrame::enclosing(s0, FRAME_MARGIN);
    let raster = MeshRaster::new(frame, s0, &tri).unwrap();
    let field = |f: &dyn Fn(f64, f64) -> f64| {
        RasterImage::from_fn(frame.width, frame.height, |c, r| {
            let [x, y] = frame.position(c, r);
            f(x, y)
        })
    };
    let mean = raster.scatter(&raster.gather(&field(a0)), 0.0);
    let gathered: Vec<Vec<f64>> = modes.iter().map(|f| raster.gather(&field(*f))).collect();
    let (ortho, kept) = gram_schmidt(&gathered, 1e-10);
    assert_eq!(kept.len(), modes.len(), "appearance modes must be independent");
    let app = AppearanceModel {
        frame,
        mask: raster.mask().to_vec(),
        mean,
        basis: ortho.iter().map(|a| raster.scatter(a, 0.0)).collect(),
        eigenvalues: (0..modes.len()).map(|i| 1.0 / (i + 1) as f64).collect(),
        retained_variance: 1.0,
        photometric: None,
    };
    let shape = ShapeModel {
        s0: s0.clone(),
        basis,
        eigenvalues,
        retained_variance: 1.0,
    };
    assemble_aam(shape, app, kind, mode, tri).unwrap()
}

/// Smooth texture with structure at several scales.
pub fn blob_texture(x: f64, y: f64) -> f64 {
    0.5 + 0.25 * (0.21 * x + 0.05 * y).sin() + 0.2 * (0.13 * y - 0.07 * x + 0.4).cos()
        + 0.3 * (-((x - 4.0).powi(2) + (y + 3.0).powi(2)) / 60.0).exp()
}

pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        count: 20,
        ..Default::default()
    }
}

pub fn dataset(spec: &SyntheticSpec) -> SyntheticDataset {
    SyntheticFamily::new(spec).unwrap().generate(spec.count, spec.sample_seed).unwrap()
}

pub fn trained(spec: &SyntheticSpec, kind: GlobalKind, mode: BasisMode, variance: f64) -> Aam {
    let d = dataset(spec);
    let cfg = TrainConfig {
        shape_variance: variance,
        appearance_variance: variance,
        global_kind: kind,
        mode,
    };
    train_aam(&d.images, &d.shapes, &cfg).unwrap().aam
}

/// Central-difference check of both warp Jacobians at `count` random mesh
/// pixels; returns the worst relative error (entries below 1e-6 in
/// magnitude are compared absolutely).
pub fn jacobian_fd_error(count: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let s = ring_shape(10, 15.0);
    let tri = Triangulation::delaunay(&s).unwrap();
    let raster = MeshRaster::new(TemplateFrame::enclosing(&s, 1), &s, &tri).unwrap();
    let basis = random_basis(s.coords().len(), 5, &mut r);
    let jac = warp_jacobian(&raster, &tri, &basis);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut rel = |fd: f64, an: f64| worst = worst.max((fd - an).abs() / an.abs().max(1e-6));
    let pix: Vec<usize> = (0..count).map(|_| r.random_range(0..raster.len())).collect();
    for i in 0..basis.len() {
        let mut dp = vec![0.0; basis.len()];
        dp[i] = h;
        let plus = raster.map_positions(&tri, &s.displaced(&basis, &dp).unwrap());
        dp[i] = -h;
        let minus = raster.map_positions(&tri, &s.displaced(&basis, &dp).unwrap());
        for &k in &pix {
            let (jx, jy) = jac.rows(k);
            rel((plus[k][0] - minus[k][0]) / (2.0 * h), jx[i]);
            rel((plus[k][1] - minus[k][1]) / (2.0 * h), jy[i]);
        }
    }
    for kind in [GlobalKind::Similarity, GlobalKind::Affine] {
        let g = GlobalBasis::new(kind, &s);
        let p: Vec<f64> = (0..basis.len()).map(|_| r.random_range(-2.0..2.0)).collect();
        let q: Vec<f64> = (0..kind.dim()).map(|_| r.random_range(-0.2..0.2)).collect();
        let local = s.displaced(&basis, &p).unwrap();
        let jac = global_jacobian(&raster, &tri, &local, &g);
        for j in 0..kind.dim() {
            let mut qp = q.clone();
            qp[j] += h;
            let plus = raster.map_positions(&tri, &g.apply(&qp, &local).unwrap());
            qp[j] -= 2.0 * h;
            let minus = raster.map_positions(&tri, &g.apply(&qp, &local).unwrap());
            for &k in &pix {
                let (jx, jy) = jac.rows(k);
                rel((plus[k][0] - minus[k][0]) / (2.0 * h), jx[j]);
                rel((plus[k][1] - minus[k][1]) / (2.0 * h), jy[j]);
            }
        }
    }
    worst
}
