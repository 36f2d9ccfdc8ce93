mod common;

use aam_core::eval::SyntheticSpec;
use aam_core::geometry::{GlobalBasis, GlobalKind, RasterImage, Shape, Triangulation};
use aam_core::model::{
    assemble_aam, gram_schmidt, pca, procrustes_align, train_aam, train_appearance_model,
    train_shape_model, BasisMode, TrainConfig,
};
use common::{dataset, ring_shape, rng};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_error(vs: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - want).abs());
        }
    }
    worst
}

/// Eigenvalues of the unbiased covariance, descending, by direct eigensolve.
fn dense_eigenvalues(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len();
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    let mut c = DMatrix::<f64>::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let mut e: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    e
}

#[test]
fn pca_two_point_example() {
    let p = pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1.0).unwrap();
    assert_eq!(p.mean, vec![0.0, 0.0]);
    assert_eq!(p.components, vec![vec![1.0, 0.0]]);
    // unbiased variance of {1, -1}
    assert!((p.eigenvalues[0] - 2.0).abs() < 1e-15);
}

#[test]
fn pca_matches_dense_covariance() {
    let mut r = rng(11);
    for (n, d) in [(50, 20), (8, 30)] {
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| r.random_range(-1.0..1.0) * (1.0 + j as f64 * 0.3)).collect())
            .collect();
        let p = pca(&samples, 1.0).unwrap();
        let dense = dense_eigenvalues(&samples);
        assert_eq!(p.eigenvalues.len(), d.min(n - 1));
        for (a, b) in p.eigenvalues.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(gram_error(&p.components) < 1e-10);
        for s in &samples {
            let c: Vec<f64> = s.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
            let mut rec = p.mean.clone();
            for v in &p.components {
                let w = dot(&c, v);
                rec.iter_mut().zip(v).for_each(|(x, y)| *x += w * y);
            }
            assert!(rec.iter().zip(s).all(|(a, b)| (a - b).abs() < 1e-8));
        }
        let total: f64 = dense.iter().sum();
        assert!((p.eigenvalues.iter().sum::<f64>() - total).abs() < 1e-8);
        assert!((p.total_variance - total).abs() < 1e-8);
    }
}

#[test]
fn pca_keeps_smallest_count_reaching_fraction() {
    let mut r = rng(5);
    let samples: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..6).map(|j| r.random_range(-1.0..1.0) / (1.0 + j as f64)).collect())
        .collect();
    let full = pca(&samples, 1.0).unwrap();
    let total: f64 = full.eigenvalues.iter().sum();
    let p = pca(&samples, 0.95).unwrap();
    let k = p.components.len();
    let upto = |k: usize| full.eigenvalues[..k].iter().sum::<f64>();
    assert!(upto(k) >= 0.95 * total);
    assert!(upto(k - 1) < 0.95 * total);
    for c in &p.components {
        let big = c.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn pca_of_identical_samples_is_empty() {
    let p = pca(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]], 0.95).unwrap();
    assert!(p.components.is_empty());
    assert_eq!(p.mean, vec![1.0, 2.0]);
}

fn pentagon() -> Shape {
    let pts: Vec<[f64; 2]> = (0..5)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 5.0;
            [3.0 * a.cos() + 1.0, 2.0 * a.sin() - 4.0]
        })
        .collect();
    Shape::from_points(&pts).unwrap()
}

#[test]
fn procrustes_similar_pair_aligns() {
    let s = pentagon();
    let (c, sn) = (2.0 * 30f64.to_radians().cos(), 2.0 * 30f64.to_radians().sin());
    let t = s.map_points(|[x, y]| [c * x - sn * y + 7.0, sn * x + c * y - 1.0]);
    let r = procrustes_align(&[s, t], 1e-12, 100).unwrap();
    assert!(r.aligned[0].max_point_distance(&r.aligned[1]) < 1e-8);
}

#[test]
fn procrustes_identical_inputs_give_normalised_shape() {
    let s = pentagon();
    let r = procrustes_align(&[s.clone(), s.clone()], 1e-12, 100).unwrap();
    let c = s.centroid();
    let centred = s.translated(-c[0], -c[1]);
    let n = dot(centred.coords(), centred.coords()).sqrt();
    let want: Vec<f64> = centred.coords().iter().map(|x| x / n).collect();
    assert!(r.mean.coords().iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn procrustes_mean_is_order_invariant() {
    let mut r = rng(21);
    let base = pentagon();
    let shapes: Vec<Shape> = (0..10)
        .map(|_| {
            let a: f64 = r.random_range(-1.0..1.0);
            let s: f64 = r.random_range(0.5..2.0);
            let noisy: Vec<f64> = base.coords().iter().map(|x| x + r.random_range(-0.3..0.3)).collect();
            Shape::new(noisy)
                .unwrap()
                .map_points(|[x, y]| [s * (a.cos() * x - a.sin() * y) + 3.0, s * (a.sin() * x + a.cos() * y)])
        })
        .collect();
    let first = procrustes_align(&shapes, 1e-12, 100).unwrap();
    let mean = first.mean.coords();
    assert!((dot(mean, mean) - 1.0).abs() < 1e-12);
    assert!(first.mean.centroid().iter().all(|c| c.abs() < 1e-12));
    for _ in 0..5 {
        let mut shuffled = shapes.clone();
        shuffled.shuffle(&mut r);
        let again = procrustes_align(&shuffled, 1e-12, 100).unwrap();
        assert!(again.mean.max_point_distance(&first.mean) < 1e-10);
    }
}

#[test]
fn shape_model_ranks() {
    let s = ring_shape(8, 10.0);
    let same = train_shape_model(&[s.clone(), s.clone(), s.clone()], 0.95).unwrap();
    assert_eq!(same.n_modes(), 0);
    let mut c = s.clone().into_coords();
    c[4] += 1.5;
    let two = train_shape_model(&[s.clone(), Shape::new(c).unwrap()], 0.95).unwrap();
    assert_eq!(two.n_modes(), 1);
    let spec = SyntheticSpec { count: 30, ..Default::default() };
    let d = dataset(&spec);
    let m = train_shape_model(&d.shapes, 0.999).unwrap();
    assert_eq!(m.n_modes(), 3);
    assert!(gram_error(&m.basis) < 1e-10);
    assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]) && m.eigenvalues.iter().all(|&e| e > 0.0));
}

/// Smallest RMS landmark distance between some similarity of `shape` and
/// some `s0 + sum p_i s_i`, by joint linear least squares.
fn distance_to_model_span(shape: &Shape, s0: &Shape, basis: &[Vec<f64>]) -> f64 {
    let d = s0.coords().len();
    let x = shape.coords();
    let cols = 4 + basis.len();
    let mut a = DMatrix::<f64>::zeros(d, cols);
    for i in 0..d / 2 {
        let (px, py) = (x[2 * i], x[2 * i + 1]);
        a[(2 * i, 0)] = px;
        a[(2 * i + 1, 0)] = py;
        a[(2 * i, 1)] = -py;
        a[(2 * i + 1, 1)] = px;
        a[(2 * i, 2)] = 1.0;
        a[(2 * i + 1, 3)] = 1.0;
        for (j, b) in basis.iter().enumerate() {
            a[(2 * i, 4 + j)] = -b[2 * i];
            a[(2 * i + 1, 4 + j)] = -b[2 * i + 1];
        }
    }
    let target = nalgebra::DVector::from_column_slice(s0.coords());
    let sol = a.clone().svd(true, true).solve(&target, 1e-12).unwrap();
    ((&a * sol - target).norm_squared() / (d / 2) as f64).sqrt()
}

#[test]
fn training_shapes_reconstructed_at_full_variance() {
    let spec = SyntheticSpec {
        count: 15,
        global_distortion: aam_core::eval::GlobalDistortion::similarity(20.0, 0.2, 6.0),
        ..Default::default()
    };
    let d = dataset(&spec);
    let m = train_shape_model(&d.shapes, 1.0).unwrap();
    for s in &d.shapes {
        assert!(distance_to_model_span(s, &m.s0, &m.basis) < 1e-6);
    }
    // a shape off the span is detected
    let mut c = d.shapes[0].clone().into_coords();
    c[7] += 3.0;
    let low = train_shape_model(&d.shapes, 0.9).unwrap();
    assert!(distance_to_model_span(&Shape::new(c).unwrap(), &low.s0, &low.basis) > 1e-3);
}

#[test]
fn appearance_ranks() {
    let spec = SyntheticSpec { count: 30, ..Default::default() };
    let d = dataset(&spec);
    let shape = train_shape_model(&d.shapes, 0.999).unwrap();
    let tri = Triangulation::delaunay(&shape.s0).unwrap();
    let app = train_appearance_model(&d.images, &d.shapes, &shape.s0, &tri, 0.999).unwrap().model;
    assert_eq!(app.n_modes(), 2);
    let raster = aam_core::geometry::MeshRaster::new(app.frame, &shape.s0, &tri).unwrap();
    let basis: Vec<Vec<f64>> = app.basis.iter().map(|a| raster.gather(a)).collect();
    assert!(gram_error(&basis) < 1e-8);
}

#[test]
fn identical_and_relit_images_give_no_modes() {
    let s = ring_shape(10, 12.0).translated(25.0, 25.0);
    let img = RasterImage::from_fn(50, 50, |c, r| common::blob_texture(c as f64, r as f64));
    let relit = RasterImage::new(50, 50, img.data().iter().map(|v| 1.7 * v - 0.2).collect()).unwrap();
    let shape = train_shape_model(&[s.clone(), s.clone()], 0.95).unwrap();
    let tri = Triangulation::delaunay(&shape.s0).unwrap();
    let same = train_appearance_model(&[img.clone(), img.clone()], &[s.clone(), s.clone()], &shape.s0, &tri, 0.95)
        .unwrap()
        .model;
    assert_eq!(same.n_modes(), 0);
    // s0 is s centred on the origin, so the mean is the image sampled there
    let frame = same.frame;
    for r in 0..frame.height {
        for c in 0..frame.width {
            if same.mask[r * frame.width + c] {
                let [x, y] = frame.position(c, r);
                let want = img.sample(x + 25.0, y + 25.0).unwrap();
                assert!((same.mean.get(c, r) - want).abs() < 1e-9);
            }
        }
    }
    let lit = train_appearance_model(&[img, relit], &[s.clone(), s], &shape.s0, &tri, 0.95)
        .unwrap()
        .model;
    assert_eq!(lit.n_modes(), 0);
}

#[test]
fn appended_basis_is_orthonormal() {
    let mut r = rng(3);
    let spec = SyntheticSpec { count: 12, ..Default::default() };
    let d = dataset(&spec);
    for kind in [GlobalKind::Similarity, GlobalKind::Affine] {
        let cfg = TrainConfig {
            global_kind: kind,
            mode: BasisMode::Appended,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..12).filter(|_| r.random_bool(0.8)).collect();
        let imgs: Vec<_> = idx.iter().map(|&i| d.images[i].clone()).collect();
        let shapes: Vec<_> = idx.iter().map(|&i| d.shapes[i].clone()).collect();
        let aam = train_aam(&imgs, &shapes, &cfg).unwrap().aam;
        assert!(gram_error(aam.basis()) < 1e-10);
        // global directions come first and carry no eigenvalue
        let k = kind.dim();
        assert!(aam.eigenvalues()[..k].iter().all(Option::is_none));
        assert!(aam.eigenvalues()[k..].iter().all(Option::is_some));
        let sep = assemble_aam(
            aam.shape_model().clone(),
            aam.appearance().clone(),
            kind,
            BasisMode::Separate,
            aam.triangulation().clone(),
        )
        .unwrap();
        match kind {
            GlobalKind::Similarity => assert_eq!(sep.basis(), aam.shape_model().basis.as_slice()),
            GlobalKind::Affine => {
                assert!(gram_error(sep.basis()) < 1e-10);
                for u in sep.basis() {
                    for g in sep.global().vectors() {
                        assert!(dot(u, g).abs() < 1e-9 * dot(g, g).sqrt());
                    }
                }
            }
        }
    }
}

#[test]
fn affine_directions_get_projected_variance() {
    let spec = SyntheticSpec {
        count: 12,
        global_distortion: aam_core::eval::GlobalDistortion::affine(0.1, 0.0, 0.0, 0.0),
        ..Default::default()
    };
    let d = dataset(&spec);
    let cfg = TrainConfig { global_kind: GlobalKind::Affine, mode: BasisMode::Separate, ..Default::default() };
    let aam = train_aam(&d.images, &d.shapes, &cfg).unwrap().aam;
    let sm = aam.shape_model();
    // dense covariance of the retained model, independent of the basis order
    let dim = sm.s0.coords().len();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for (s, b) in sm.basis.iter().zip(&sm.eigenvalues) {
        let v = DMatrix::from_column_slice(dim, 1, s);
        cov += &v * v.transpose() * *b;
    }
    for (u, b) in aam.basis().iter().zip(aam.eigenvalues()) {
        let v = DMatrix::from_column_slice(dim, 1, u);
        let want = (v.transpose() * &cov * &v)[(0, 0)];
        assert!((b.unwrap() - want).abs() < 1e-9 * want.max(1.0));
    }
    let total: f64 = sm.eigenvalues.iter().sum();
    let kept: f64 = aam.eigenvalues().iter().map(|b| b.unwrap()).sum();
    assert!(kept < total);
}

#[test]
fn appended_with_no_modes_spans_global_vectors() {
    let s = ring_shape(8, 10.0);
    let shape = train_shape_model(&[s.clone(), s.clone()], 0.95).unwrap();
    let tri = Triangulation::delaunay(&shape.s0).unwrap();
    let img = RasterImage::from_fn(40, 40, |c, r| common::blob_texture(c as f64, r as f64));
    let placed = s.translated(20.0, 20.0);
    let app = train_appearance_model(&[img.clone(), img], &[placed.clone(), placed], &shape.s0, &tri, 0.95)
        .unwrap()
        .model;
    let aam = assemble_aam(shape.clone(), app, GlobalKind::Similarity, BasisMode::Appended, tri).unwrap();
    assert_eq!(aam.basis().len(), 4);
    let (expected, _) = gram_schmidt(GlobalBasis::new(GlobalKind::Similarity, &shape.s0).vectors(), 1e-10);
    for (a, b) in aam.basis().iter().zip(&expected) {
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn training_is_order_invariant() {
    let spec = SyntheticSpec { count: 10, ..Default::default() };
    let d = dataset(&spec);
    let cfg = TrainConfig::default();
    let a = train_aam(&d.images, &d.shapes, &cfg).unwrap().aam;
    let mut idx: Vec<usize> = (0..10).collect();
    idx.shuffle(&mut rng(8));
    let imgs: Vec<_> = idx.iter().map(|&i| d.images[i].clone()).collect();
    let shapes: Vec<_> = idx.iter().map(|&i| d.shapes[i].clone()).collect();
    let b = train_aam(&imgs, &shapes, &cfg).unwrap().aam;
    let close = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-10);
    assert!(close(a.s0().coords(), b.s0().coords()));
    for (u, v) in a.basis().iter().zip(b.basis()) {
        assert!(close(u, v));
    }
    assert!(close(a.appearance().mean.data(), b.appearance().mean.data()));
    for (u, v) in a.appearance().basis.iter().zip(&b.appearance().basis) {
        assert!(close(u.data(), v.data()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_eigen_sum_is_total_variance(
        seed in 0u64..1000, n in 3usize..15, d in 2usize..12
    ) {
        let mut r = rng(seed);
        let samples: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let p = pca(&samples, 1.0).unwrap();
        prop_assert!((p.eigenvalues.iter().sum::<f64>() - p.total_variance).abs() < 1e-8);
        prop_assert!(gram_error(&p.components) < 1e-10);
    }
}
