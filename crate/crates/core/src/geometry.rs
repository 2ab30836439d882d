//! Planar geometry helpers: points, rotations and convex polygons.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A position (or 2-vector) in the horizontal world plane, in meters.
pub type Point2 = Vector2<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertex {0} is not finite")]
    NonFinite(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon is not convex and counter-clockwise at vertex {0}")]
    NotConvex(usize),
}

/// Rotation matrix for a yaw angle about the vertical axis.
pub fn rotation(yaw: f64) -> Matrix2<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Convex polygon with counter-clockwise vertices and non-zero area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

/// Half-space `normal · p <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Point2,
    pub offset: f64,
}

impl ConvexPolygon {
    /// Validates the vertex list. Collinear vertices are rejected since they
    /// add redundant corner points to the CMP combination.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, PolygonError> {
        let n = vertices.len();
        if n < 3 {
            return Err(PolygonError::TooFewVertices(n));
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.x.is_finite() || !v.y.is_finite())
        {
            return Err(PolygonError::NonFinite(i));
        }
        let poly = Self { vertices };
        if poly.area() <= 1e-12 {
            return Err(PolygonError::Degenerate);
        }
        for i in 0..n {
            let a = poly.vertices[i];
            let b = poly.vertices[(i + 1) % n];
            let c = poly.vertices[(i + 2) % n];
            if cross(&(b - a), &(c - b)) <= 1e-14 {
                return Err(PolygonError::NotConvex((i + 1) % n));
            }
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle centered on `center`.
    pub fn rectangle(center: Point2, length: f64, width: f64) -> Result<Self, PolygonError> {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        Self::new(vec![
            center + Point2::new(-hl, -hw),
            center + Point2::new(hl, -hw),
            center + Point2::new(hl, hw),
            center + Point2::new(-hl, hw),
        ])
    }

    /// Convex hull of a point cloud (Andrew's monotone chain). Collinear
    /// points on the boundary are dropped.
    pub fn hull(points: &[Point2]) -> Result<Self, PolygonError> {
        let mut pts: Vec<Point2> = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        if pts.len() < 3 {
            return Err(PolygonError::TooFewVertices(pts.len()));
        }
        let mut lower: Vec<Point2> = Vec::new();
        for p in &pts {
            while lower.len() >= 2
                && cross(
                    &(lower[lower.len() - 1] - lower[lower.len() - 2]),
                    &(p - lower[lower.len() - 1]),
                ) <= 1e-14
            {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Point2> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2
                && cross(
                    &(upper[upper.len() - 1] - upper[upper.len() - 2]),
                    &(p - upper[upper.len() - 1]),
                ) <= 1e-14
            {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self::new(lower)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut acc = Point2::zeros();
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = cross(&p, &q);
            acc += (p + q) * w;
            a2 += w;
        }
        acc / (3.0 * a2)
    }

    /// Edges as outward half-spaces, one per edge `v[i] -> v[i+1]`.
    pub fn half_spaces(&self) -> Vec<HalfSpace> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let e = self.vertices[(i + 1) % n] - a;
                let normal = Point2::new(e.y, -e.x) / e.norm();
                HalfSpace {
                    normal,
                    offset: normal.dot(&a),
                }
            })
            .collect()
    }

    /// Largest signed violation over all edges; non-positive when inside.
    pub fn signed_distance(&self, p: &Point2) -> f64 {
        self.half_spaces()
            .iter()
            .map(|h| h.normal.dot(p) - h.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &Point2, tol: f64) -> bool {
        self.signed_distance(p) <= tol
    }

    /// Closest point of the polygon to `p` (p itself when inside).
    pub fn project(&self, p: &Point2) -> Point2 {
        if self.contains(p, 0.0) {
            return *p;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let ab = b - a;
            let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * s;
            let d = (p - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Barycentric weights over the vertices reproducing `p` (which must be
    /// inside), using a fan triangulation from vertex 0.
    pub fn convex_weights(&self, p: &Point2) -> Option<Vec<f64>> {
        let n = self.vertices.len();
        let v0 = self.vertices[0];
        for i in 1..n - 1 {
            let a = self.vertices[i] - v0;
            let b = self.vertices[i + 1] - v0;
            let d = p - v0;
            let det = cross(&a, &b);
            let s = cross(&d, &b) / det;
            let t = cross(&a, &d) / det;
            let tol = 1e-12;
            if s >= -tol && t >= -tol && s + t <= 1.0 + tol {
                let mut w = vec![0.0; n];
                w[0] = 1.0 - s - t;
                w[i] = s;
                w[i + 1] = t;
                return Some(w);
            }
        }
        None
    }

    /// Rigid transform: rotate by `yaw` then translate by `origin`.
    pub fn transformed(&self, origin: &Point2, yaw: f64) -> Self {
        let r = rotation(yaw);
        Self {
            vertices: self.vertices.iter().map(|v| origin + r * v).collect(),
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for ConvexPolygon {
    type Error = PolygonError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
    }
}

impl From<ConvexPolygon> for Vec<[f64; 2]> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices.iter().map(|v| [v.x, v.y]).collect()
    }
}
