//! Delaunay triangulation of a landmark set.
//!
//! Points are inserted in lexicographic `(x, y)` order by a sweep-hull
//! construction, then legalised with Lawson edge flips. Edges are flipped only
//! on a strict in-circle violation, so co-circular configurations keep the
//! diagonal produced by the lexicographic sweep (a unit square is split along
//! the diagonal joining its second and third lexicographic corners).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::shape::{orient, Shape};
use crate::error::{AamError, Result};

/// Index triples into a landmark list, all counter-clockwise on the base shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangulation {
    n_points: usize,
    triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    /// Delaunay triangulation of `shape`'s landmarks.
    pub fn delaunay(shape: &Shape) -> Result<Self> {
        let pts: Vec<[f64; 2]> = shape.points().collect();
        let n = pts.len();
        let scale = bbox_diagonal(&pts);
        if scale == 0.0 {
            return Err(AamError::DegenerateShape("all landmarks coincide".into()));
        }
        let area_eps = 1e-12 * scale * scale;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            pts[a][0]
                .total_cmp(&pts[b][0])
                .then(pts[a][1].total_cmp(&pts[b][1]))
        });
        for w in order.windows(2) {
            if pts[w[0]] == pts[w[1]] {
                return Err(AamError::DegenerateShape(format!(
                    "landmarks {} and {} coincide",
                    w[0], w[1]
                )));
            }
        }

        let apex = (2..n)
            .find(|&k| orient(pts[order[0]], pts[order[1]], pts[order[k]]).abs() > area_eps)
            .ok_or_else(|| AamError::DegenerateShape("all landmarks are collinear".into()))?;

        let mut triangles = Vec::with_capacity(2 * n);
        let top = order[apex];
        for i in 0..apex - 1 {
            triangles.push(ccw(&pts, [order[i], order[i + 1], top]));
        }
        let mut hull: Vec<usize> = if orient(pts[order[0]], pts[order[1]], pts[top]) > 0.0 {
            order[..apex].iter().copied().chain([top]).collect()
        } else {
            [order[0], top]
                .into_iter()
                .chain(order[1..apex].iter().rev().copied())
                .collect()
        };

        for &p in &order[apex + 1..] {
            let len = hull.len();
            let visible: Vec<bool> = (0..len)
                .map(|i| orient(pts[hull[i]], pts[hull[(i + 1) % len]], pts[p]) < -area_eps)
                .collect();
            let start = (0..len)
                .find(|&i| visible[i] && !visible[(i + len - 1) % len])
                .ok_or_else(|| {
                    AamError::DegenerateShape(format!("landmark {p} could not be inserted"))
                })?;
            let mut run = 0;
            while visible[(start + run) % len] {
                triangles.push([hull[(start + run + 1) % len], hull[(start + run) % len], p]);
                run += 1;
            }
            let mut next = Vec::with_capacity(len - run + 2);
            for i in (start + run)..=(start + len) {
                next.push(hull[i % len]);
            }
            next.push(p);
            hull = next;
        }

        legalize(&pts, &mut triangles, scale);
        Ok(Triangulation::canonical(n, triangles))
    }

    /// Wraps explicit triangles, orienting each counter-clockwise on `base`.
    pub fn from_triangles(base: &Shape, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = base.n_points();
        let pts: Vec<[f64; 2]> = base.points().collect();
        let scale = bbox_diagonal(&pts);
        let mut out = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.into_iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(AamError::DegenerateShape(format!(
                    "triangle {t} references a landmark out of range"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(AamError::DegenerateShape(format!(
                    "triangle {t} repeats a landmark"
                )));
            }
            if orient(pts[tri[0]], pts[tri[1]], pts[tri[2]]).abs() <= 1e-12 * scale * scale {
                return Err(AamError::DegenerateShape(format!(
                    "triangle {t} has zero area"
                )));
            }
            out.push(ccw(&pts, tri));
        }
        if out.is_empty() {
            return Err(AamError::DegenerateShape("empty triangulation".into()));
        }
        Ok(Triangulation {
            n_points: n,
            triangles: out,
        })
    }

    fn canonical(n_points: usize, mut triangles: Vec<[usize; 3]>) -> Self {
        for t in &mut triangles {
            let m = (0..3).min_by_key(|&i| t[i]).unwrap();
            t.rotate_left(m);
        }
        triangles.sort_unstable();
        Triangulation {
            n_points,
            triangles,
        }
    }

    #[inline]
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Triangles incident to each landmark.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_points];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                adj[v].push(t);
            }
        }
        adj
    }

    /// First triangle whose orientation on `shape` is not positive.
    pub fn first_flipped(&self, shape: &Shape) -> Option<usize> {
        self.triangles.iter().position(|&[a, b, c]| {
            orient(shape.point(a), shape.point(b), shape.point(c)) <= 0.0
        })
    }

    /// Edges used by exactly one triangle.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut edges: Vec<_> = count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }
}

fn bbox_diagonal(pts: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

fn ccw(pts: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if orient(pts[t[0]], pts[t[1]], pts[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

/// Positive when `d` lies strictly inside the circumcircle of ccw `(a, b, c)`.
fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let row = |p: [f64; 2]| {
        let (x, y) = (p[0] - d[0], p[1] - d[1]);
        (x, y, x * x + y * y)
    };
    let (ax, ay, a2) = row(a);
    let (bx, by, b2) = row(b);
    let (cx, cy, c2) = row(c);
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

fn legalize(pts: &[[f64; 2]], triangles: &mut [[usize; 3]], scale: f64) {
    let eps = 1e-12 * scale.powi(4);
    'restart: loop {
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edges.insert((tri[k], tri[(k + 1) % 3]), (t, tri[(k + 2) % 3]));
            }
        }
        let mut keys: Vec<_> = edges.keys().copied().filter(|&(a, b)| a < b).collect();
        keys.sort_unstable();
        for (a, b) in keys {
            let (Some(&(t1, c)), Some(&(t2, d))) = (edges.get(&(a, b)), edges.get(&(b, a))) else {
                continue;
            };
            if in_circle(pts[a], pts[b], pts[c], pts[d]) > eps {
                triangles[t1] = [d, c, a];
                triangles[t2] = [c, d, b];
                continue 'restart;
            }
        }
        break;
    }
}
