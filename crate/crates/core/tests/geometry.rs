mod common;

use std::collections::HashSet;

use aam_core::eval::{SyntheticFamily, SyntheticSpec};
use aam_core::geometry::{
    compose_inverse_update, global_jacobian, instantiate_shape, piecewise_affine_warp, warp_jacobian,
    GlobalBasis, GlobalKind, MeshRaster, RasterImage, Shape, TemplateFrame, Triangulation,
};
use aam_core::model::gram_schmidt;
use common::{random_basis, ring_shape, rng};
use proptest::prelude::*;
use rand::Rng;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Points on the convex hull boundary, collinear boundary points included.
fn hull_boundary_count(pts: &[[f64; 2]]) -> usize {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) < 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) < 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.len() + upper.len()
}

#[test]
fn three_points_one_triangle() {
    let s = Shape::from_points(&[[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]]).unwrap();
    assert_eq!(Triangulation::delaunay(&s).unwrap().len(), 1);
}

#[test]
fn square_split_on_documented_diagonal() {
    let s = Shape::from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    let t = Triangulation::delaunay(&s).unwrap();
    assert_eq!(t.len(), 2);
    // lexicographic order (0,0) (0,1) (1,0) (1,1): diagonal joins the 2nd and 3rd
    let diag: HashSet<(usize, usize)> = t
        .triangles()
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    assert!(diag.contains(&(1, 3)));
    assert!(!diag.contains(&(0, 2)));
}

#[test]
fn collinear_points_rejected() {
    let s = Shape::from_points(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
    assert!(Triangulation::delaunay(&s).is_err());
}

#[test]
fn synthetic_mean_mesh_matches_euler_count() {
    for seed in 0..5 {
        let spec = SyntheticSpec { seed, ..Default::default() };
        let fam = SyntheticFamily::new(&spec).unwrap();
        let pts: Vec<[f64; 2]> = fam.base.points().collect();
        let t = Triangulation::delaunay(&fam.base).unwrap();
        let h = pts.len();
        let b = hull_boundary_count(&pts);
        assert_eq!(t.len(), 2 * h - b - 2, "seed {seed}");
        let edges: HashSet<(usize, usize)> = t
            .triangles()
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        // V - E + F = 2 with the outer face
        assert_eq!(h as i64 - edges.len() as i64 + t.len() as i64 + 1, 2);
    }
}

#[test]
fn delaunay_is_deterministic_and_empty_circle() {
    let mut r = rng(4);
    let pts: Vec<[f64; 2]> = (0..40).map(|_| [r.random_range(0.0..50.0), r.random_range(0.0..50.0)]).collect();
    let s = Shape::from_points(&pts).unwrap();
    let t = Triangulation::delaunay(&s).unwrap();
    assert_eq!(t, Triangulation::delaunay(&s).unwrap());
    for &[a, b, c] in t.triangles() {
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        for (i, &d) in pts.iter().enumerate() {
            if i == a || i == b || i == c {
                continue;
            }
            let m = [
                [pa[0] - d[0], pa[1] - d[1], (pa[0] - d[0]).powi(2) + (pa[1] - d[1]).powi(2)],
                [pb[0] - d[0], pb[1] - d[1], (pb[0] - d[0]).powi(2) + (pb[1] - d[1]).powi(2)],
                [pc[0] - d[0], pc[1] - d[1], (pc[0] - d[0]).powi(2) + (pc[1] - d[1]).powi(2)],
            ];
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            assert!(det <= 1e-6, "point {i} inside circumcircle of {a} {b} {c}");
        }
    }
}

fn s0() -> Shape {
    ring_shape(9, 12.0)
}

#[test]
fn identity_parameters_give_s0_exactly() {
    let s = s0();
    let basis = random_basis(s.coords().len(), 3, &mut rng(1));
    for kind in [GlobalKind::Similarity, GlobalKind::Affine] {
        let g = GlobalBasis::new(kind, &s);
        let out = instantiate_shape(&s, &basis, &[0.0; 3], &g, &vec![0.0; kind.dim()]).unwrap();
        assert_eq!(out, s);
    }
}

#[test]
fn similarity_translation_columns() {
    let s = s0();
    let g = GlobalBasis::new(GlobalKind::Similarity, &s);
    let out = instantiate_shape(&s, &[], &[], &g, &[0.0, 0.0, 3.5, -2.0]).unwrap();
    assert!(out.max_point_distance(&s.translated(3.5, -2.0)) < 1e-12);
}

#[test]
fn affine_parameters_match_direct_matrix() {
    let s = s0();
    let g = GlobalBasis::new(GlobalKind::Affine, &s);
    let m = [[1.1, 0.2, 4.0], [-0.1, 0.9, -3.0]];
    let q = [m[0][0] - 1.0, m[0][1], m[1][0], m[1][1] - 1.0, m[0][2], m[1][2]];
    let out = instantiate_shape(&s, &[], &[], &g, &q).unwrap();
    for (o, p) in out.points().zip(s.points()) {
        let want = [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ];
        assert!((o[0] - want[0]).abs() < 1e-12 && (o[1] - want[1]).abs() < 1e-12);
    }
}

#[test]
fn global_basis_vectors_follow_definition() {
    let s = Shape::from_points(&[[1.0, 2.0], [-3.0, 0.5], [0.0, -1.0]]).unwrap();
    let sim = GlobalBasis::new(GlobalKind::Similarity, &s);
    assert_eq!(sim.vectors()[0], s.coords());
    assert_eq!(sim.vectors()[1], vec![-2.0, 1.0, -0.5, -3.0, 1.0, 0.0]);
    assert_eq!(sim.vectors()[2], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    assert_eq!(sim.vectors()[3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    let aff = GlobalBasis::new(GlobalKind::Affine, &s);
    assert_eq!(aff.vectors()[0], vec![1.0, 0.0, -3.0, 0.0, 0.0, 0.0]);
    assert_eq!(aff.vectors()[1], vec![2.0, 0.0, 0.5, 0.0, -1.0, 0.0]);
    assert_eq!(aff.vectors()[2], vec![0.0, 1.0, 0.0, -3.0, 0.0, 0.0]);
    assert_eq!(aff.vectors()[3], vec![0.0, 2.0, 0.0, 0.5, 0.0, -1.0]);
    assert_eq!(aff.vectors()[4], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    assert_eq!(aff.vectors()[5], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
}

proptest! {
    #[test]
    fn similarity_basis_reproduces_similarities(
        theta in -3.1f64..3.1, scale in 0.3f64..3.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0
    ) {
        let s = s0();
        let g = GlobalBasis::new(GlobalKind::Similarity, &s);
        let (c, sn) = (scale * theta.cos(), scale * theta.sin());
        let q = [c - 1.0, sn, tx, ty];
        let out = instantiate_shape(&s, &[], &[], &g, &q).unwrap();
        let want = s.map_points(|[x, y]| [c * x - sn * y + tx, sn * x + c * y + ty]);
        prop_assert!(out.max_point_distance(&want) < 1e-9);
        // the same map through the affine basis
        let ga = GlobalBasis::new(GlobalKind::Affine, &s);
        let qa = [c - 1.0, -sn, sn, c - 1.0, tx, ty];
        let outa = instantiate_shape(&s, &[], &[], &ga, &qa).unwrap();
        prop_assert!(outa.max_point_distance(&want) < 1e-9);
    }

    #[test]
    fn affine_basis_reproduces_affine_maps(
        m in proptest::array::uniform6(-2.0f64..2.0), t in proptest::array::uniform2(-40.0f64..40.0)
    ) {
        let s = s0();
        let g = GlobalBasis::new(GlobalKind::Affine, &s);
        let q = [m[0] - 1.0, m[1], m[2], m[3] - 1.0, t[0], t[1]];
        let out = instantiate_shape(&s, &[], &[], &g, &q).unwrap();
        let want = s.map_points(|[x, y]| [m[0] * x + m[1] * y + t[0], m[2] * x + m[3] * y + t[1]]);
        prop_assert!(out.max_point_distance(&want) < 1e-9);
    }

    #[test]
    fn warp_is_exact_on_affine_intensity(
        a in -1.0f64..1.0, b in -0.05f64..0.05, c in -0.05f64..0.05,
        lin in proptest::array::uniform4(-0.3f64..0.3), t in proptest::array::uniform2(-5.0f64..5.0)
    ) {
        let src = ring_shape(8, 10.0).translated(30.0, 30.0);
        let tri = Triangulation::delaunay(&src).unwrap();
        let m = [[1.0 + lin[0], lin[1]], [lin[2], 1.0 + lin[3]]];
        let map = |[x, y]: [f64; 2]| {
            let (dx, dy) = (x - 30.0, y - 30.0);
            [30.0 + m[0][0] * dx + m[0][1] * dy + t[0], 30.0 + m[1][0] * dx + m[1][1] * dy + t[1]]
        };
        let dst = src.map_points(map);
        prop_assume!(tri.first_flipped(&dst).is_none());
        let image = RasterImage::from_fn(64, 64, |col, row| a + b * col as f64 + c * row as f64);
        let frame = TemplateFrame::enclosing(&src, 1);
        let w = piecewise_affine_warp(&image, &src, &dst, &tri, frame).unwrap();
        for row in 0..frame.height {
            for col in 0..frame.width {
                if !w.mask[row * frame.width + col] {
                    continue;
                }
                let [u, v] = map(frame.position(col, row));
                let want = a + b * u + c * v;
                prop_assert!((w.image.get(col, row) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_update_keeps_parameters(p in proptest::collection::vec(-2.0f64..2.0, 3)) {
        let s = s0();
        let tri = Triangulation::delaunay(&s).unwrap();
        let basis = random_basis(s.coords().len(), 3, &mut rng(2));
        prop_assert_eq!(compose_inverse_update(&p, &[0.0; 3], &s, &basis, &tri).unwrap(), p);
    }
}

#[test]
fn identity_warp_copies_pixels() {
    let src = ring_shape(8, 10.0).translated(20.0, 20.0);
    let tri = Triangulation::delaunay(&src).unwrap();
    let image = RasterImage::from_fn(40, 40, |c, r| common::blob_texture(c as f64, r as f64));
    let frame = TemplateFrame::enclosing(&src, 1);
    let w = piecewise_affine_warp(&image, &src, &src, &tri, frame).unwrap();
    let mut n = 0;
    for row in 0..frame.height {
        for col in 0..frame.width {
            if w.mask[row * frame.width + col] {
                let [x, y] = frame.position(col, row);
                assert_eq!(w.image.get(col, row), image.get(x as usize, y as usize));
                n += 1;
            }
        }
    }
    assert!(n > 200);
}

#[test]
fn constant_image_stays_constant_under_translation() {
    let src = ring_shape(8, 10.0).translated(20.0, 20.0);
    let tri = Triangulation::delaunay(&src).unwrap();
    let image = RasterImage::filled(50, 50, 0.37);
    let frame = TemplateFrame::enclosing(&src, 1);
    let w = piecewise_affine_warp(&image, &src, &src.translated(5.0, 0.0), &tri, frame).unwrap();
    for (v, ok) in w.image.data().iter().zip(&w.mask) {
        if *ok {
            assert_eq!(*v, 0.37);
        }
    }
}

#[test]
fn ramp_under_uniform_scale() {
    let src = ring_shape(8, 10.0).translated(20.0, 20.0);
    let dst = src.map_points(|[x, y]| [2.0 * x, 2.0 * y]);
    let tri = Triangulation::delaunay(&src).unwrap();
    let image = RasterImage::from_fn(70, 70, |c, _| c as f64);
    let frame = TemplateFrame::enclosing(&src, 1);
    let w = piecewise_affine_warp(&image, &src, &dst, &tri, frame).unwrap();
    let mut n = 0;
    for row in 0..frame.height {
        for col in 0..frame.width {
            if w.mask[row * frame.width + col] {
                let [x, _] = frame.position(col, row);
                assert!((w.image.get(col, row) - 2.0 * x).abs() < 1e-6);
                n += 1;
            }
        }
    }
    assert!(n > 200);
}

#[test]
fn jacobian_at_vertex_and_centroid() {
    let s = Shape::from_points(&[[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]]).unwrap();
    let tri = Triangulation::delaunay(&s).unwrap();
    let raster = MeshRaster::new(TemplateFrame::enclosing(&s, 1), &s, &tri).unwrap();
    let basis = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
    let jac = warp_jacobian(&raster, &tri, &basis);
    let at = |x: f64, y: f64| {
        raster
            .pixels()
            .iter()
            .position(|px| raster.frame().position(px.col, px.row) == [x, y])
            .unwrap()
    };
    let (jx, jy) = jac.rows(at(0.0, 0.0));
    assert_eq!((jx[0], jy[0]), (1.0, 0.0));
    let (jx, jy) = jac.rows(at(2.0, 2.0));
    assert!((jx[0] - 1.0 / 3.0).abs() < 1e-12 && jy[0] == 0.0);
}

#[test]
fn affine_global_jacobian_columns() {
    let s = ring_shape(7, 9.0);
    let tri = Triangulation::delaunay(&s).unwrap();
    let raster = MeshRaster::new(TemplateFrame::enclosing(&s, 1), &s, &tri).unwrap();
    let g = GlobalBasis::new(GlobalKind::Affine, &s);
    let jac = global_jacobian(&raster, &tri, &s, &g);
    let pos = raster.map_positions(&tri, &s);
    for (pix, [x, y]) in pos.iter().copied().enumerate() {
        let (jx, jy) = jac.rows(pix);
        let want_x = [x, y, 0.0, 0.0, 1.0, 0.0];
        let want_y = [0.0, 0.0, x, y, 0.0, 1.0];
        for j in 0..6 {
            assert!((jx[j] - want_x[j]).abs() < 1e-9 && (jy[j] - want_y[j]).abs() < 1e-9);
        }
    }
    let sim = GlobalBasis::new(GlobalKind::Similarity, &s);
    let jac = global_jacobian(&raster, &tri, &s, &sim);
    for pix in 0..raster.len() {
        let (jx, jy) = jac.rows(pix);
        assert!((jx[2] - 1.0).abs() < 1e-12 && jy[2].abs() < 1e-12);
        assert!(jx[3].abs() < 1e-12 && (jy[3] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn translation_basis_composes_exactly() {
    let s = s0();
    let tri = Triangulation::delaunay(&s).unwrap();
    let v = s.n_points();
    let t = |axis: usize| (0..2 * v).map(|i| if i % 2 == axis { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let (basis, _) = gram_schmidt(&[t(0), t(1)], 1e-10);
    let p = [1.7, -0.4];
    let dp = [0.3, 0.25];
    let out = compose_inverse_update(&p, &dp, &s, &basis, &tri).unwrap();
    assert!((out[0] - (p[0] - dp[0])).abs() < 1e-12);
    assert!((out[1] - (p[1] - dp[1])).abs() < 1e-12);
}

#[test]
fn composition_is_second_order_accurate() {
    let s = s0();
    let tri = Triangulation::delaunay(&s).unwrap();
    let basis = random_basis(s.coords().len(), 4, &mut rng(9));
    for i in 0..4 {
        let r = |eps: f64| {
            let mut dp = [0.0; 4];
            dp[i] = eps;
            let out = compose_inverse_update(&[0.0; 4], &dp, &s, &basis, &tri).unwrap();
            out.iter().zip(&dp).map(|(o, d)| (o + d).powi(2)).sum::<f64>().sqrt()
        };
        let c = r(1e-2) / 1e-4;
        assert!(r(1e-3) <= c * 1e-6 * 1.01 + 1e-14, "mode {i}");
    }
    // round trip from a deformed state returns within O(|dp|^2)
    let p = [1.0, -0.8, 0.5, 0.3];
    let err = |eps: f64| {
        let dp: Vec<f64> = [0.7, -0.2, 0.4, 0.9].iter().map(|d| d * eps).collect();
        let neg: Vec<f64> = dp.iter().map(|d| -d).collect();
        let once = compose_inverse_update(&p, &dp, &s, &basis, &tri).unwrap();
        let back = compose_inverse_update(&once, &neg, &s, &basis, &tri).unwrap();
        back.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let (e1, e2) = (err(1e-2), err(1e-3));
    assert!(e2 <= e1 / 50.0 + 1e-14, "{e1} {e2}");
}

#[test]
fn jacobians_match_finite_differences() {
    for seed in 0..3 {
        let e = common::jacobian_fd_error(100, seed);
        assert!(e < 1e-5, "seed {seed}: {e}");
    }
}
