//! Generalised Procrustes alignment of landmark sets.

use crate::error::{AamError, Result};
use crate::geometry::Shape;

#[derive(Clone, Debug)]
pub struct ProcrustesResult {
    /// Input shapes, in input order, similarity-aligned to `mean`.
    pub aligned: Vec<Shape>,
    /// Mean shape: centroid at the origin, unit Frobenius norm.
    pub mean: Shape,
    pub iterations: usize,
}

/// Least-squares similarity `z -> a z + t` (complex form) mapping `src` onto
/// `dst`. Returns `(re a, im a, tx, ty)`.
pub fn fit_similarity(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Option<[f64; 4]> {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let mean = |pts: &[[f64; 2]]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    };
    let (ms, md) = (mean(src), mean(dst));
    let (mut dot, mut crs, mut norm) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s[0] - ms[0], s[1] - ms[1]);
        let (dx, dy) = (d[0] - md[0], d[1] - md[1]);
        dot += sx * dx + sy * dy;
        crs += sx * dy - sy * dx;
        norm += sx * sx + sy * sy;
    }
    if norm <= 0.0 {
        return None;
    }
    let (re, im) = (dot / norm, crs / norm);
    Some([
        re,
        im,
        md[0] - (re * ms[0] - im * ms[1]),
        md[1] - (im * ms[0] + re * ms[1]),
    ])
}

fn centered_unit(shape: &Shape) -> Option<Vec<f64>> {
    let c = shape.centroid();
    let mut out: Vec<f64> = shape
        .points()
        .flat_map(|p| [p[0] - c[0], p[1] - c[1]])
        .collect();
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    let spread = shape
        .points()
        .map(|p| (p[0] - c[0]).abs() + (p[1] - c[1]).abs())
        .fold(0.0, f64::max);
    if norm == 0.0 || spread <= 1e-12 * (c[0].abs() + c[1].abs() + 1.0) {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= norm);
    Some(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rotation and scale of centred `x` best matching centred `target`.
fn align_centered(x: &[f64], target: &[f64]) -> Vec<f64> {
    let (mut dot, mut crs, mut nn) = (0.0, 0.0, 0.0);
    for (p, t) in x.chunks_exact(2).zip(target.chunks_exact(2)) {
        dot += p[0] * t[0] + p[1] * t[1];
        crs += p[0] * t[1] - p[1] * t[0];
        nn += p[0] * p[0] + p[1] * p[1];
    }
    let (re, im) = (dot / nn, crs / nn);
    x.chunks_exact(2)
        .flat_map(|p| [re * p[0] - im * p[1], im * p[0] + re * p[1]])
        .collect()
}

/// Rotation only (no scale) of centred `x` onto centred `target`.
fn rotate_onto(x: &[f64], target: &[f64]) -> Vec<f64> {
    let (mut dot, mut crs) = (0.0, 0.0);
    for (p, t) in x.chunks_exact(2).zip(target.chunks_exact(2)) {
        dot += p[0] * t[0] + p[1] * t[1];
        crs += p[0] * t[1] - p[1] * t[0];
    }
    let r = dot.hypot(crs);
    if r == 0.0 {
        return x.to_vec();
    }
    let (c, s) = (dot / r, crs / r);
    x.chunks_exact(2)
        .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect()
}

/// Iterative Procrustes alignment.
///
/// Shapes are processed in lexicographic order of their coordinates, which
/// makes the result independent of input order. The reference orientation is
/// the mean of the centred, unit-norm inputs (falling back to the first shape
/// in that order when the inputs cancel out); each new mean is rotated back
/// onto it and renormalised.
pub fn procrustes_align(shapes: &[Shape], tol: f64, max_iters: usize) -> Result<ProcrustesResult> {
    if shapes.len() < 2 {
        return Err(AamError::EmptyTraining(format!(
            "Procrustes alignment needs at least 2 shapes, got {}",
            shapes.len()
        )));
    }
    let v = shapes[0].n_points();
    if let Some(s) = shapes.iter().find(|s| s.n_points() != v) {
        return Err(AamError::DimensionMismatch {
            what: "landmark count",
            expected: v,
            got: s.n_points(),
        });
    }
    let normalized: Vec<Vec<f64>> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            centered_unit(s)
                .ok_or_else(|| AamError::DegenerateShape(format!("training shape {i} has zero spread")))
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by(|&a, &b| {
        shapes[a]
            .coords()
            .iter()
            .zip(shapes[b].coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let dim = 2 * v;
    let mut reference = vec![0.0; dim];
    for &i in &order {
        for (r, x) in reference.iter_mut().zip(&normalized[i]) {
            *r += x;
        }
    }
    let rn = norm(&reference);
    if rn < 0.1 * shapes.len() as f64 {
        reference = normalized[order[0]].clone();
    } else {
        reference.iter_mut().for_each(|x| *x /= rn);
    }

    let mut mean = reference.clone();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut next = vec![0.0; dim];
        for &i in &order {
            let a = align_centered(&normalized[i], &mean);
            for (m, x) in next.iter_mut().zip(&a) {
                *m += x;
            }
        }
        let mut next = rotate_onto(&next, &reference);
        let nn = norm(&next);
        if nn == 0.0 {
            return Err(AamError::DegenerateShape("Procrustes mean collapsed".into()));
        }
        next.iter_mut().for_each(|x| *x /= nn);
        let change = next
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        mean = next;
        if change < tol {
            break;
        }
    }

    let aligned = normalized
        .iter()
        .map(|x| Shape::new(align_centered(x, &mean)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProcrustesResult {
        aligned,
        mean: Shape::new(mean)?,
        iterations,
    })
}
