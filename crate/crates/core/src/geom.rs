//! Planar geometry primitives shared by the scene model and the ray tracer.

use nalgebra::{Point2, Point3, Vector3};
use thiserror::Error;

/// Distance below which two geometric features are considered touching (m).
pub const EDGE_TOLERANCE: f64 = 1e-9;

/// Maximum out-of-plane deviation accepted for polygon vertices (m).
pub const COPLANAR_TOLERANCE: f64 = 1e-9;

/// Smallest polygon area accepted (m²).
pub const MIN_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has a non-finite coordinate")]
    NonFinite,
    #[error("polygon is degenerate (area {0:e} m²)")]
    Degenerate(f64),
    #[error("vertex {index} is {distance:e} m off the polygon plane")]
    NotCoplanar { index: usize, distance: f64 },
    #[error("polygon has a zero-length edge at vertex {0}")]
    RepeatedVertex(usize),
    #[error("polygon is not convex")]
    NotConvex,
}

/// A convex planar polygon in 3D with its supporting plane.
///
/// Vertices are stored counter-clockwise with respect to `normal`. The
/// in-plane edge normals point inwards so that the interior margin of a
/// point is the minimum of its signed edge distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point3<f64>>,
    normal: Vector3<f64>,
    offset: f64,
    edge_normals: Vec<Vector3<f64>>,
    area: f64,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point3<f64>>) -> Result<Self, PolygonError> {
        let count = vertices.len();
        if count < 3 {
            return Err(PolygonError::TooFewVertices(count));
        }
        if vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(PolygonError::NonFinite);
        }

        // Newell's method gives a robust normal for any planar polygon.
        let mut newell: Vector3<f64> = Vector3::zeros();
        for i in 0..count {
            let a = vertices[i];
            let b = vertices[(i + 1) % count];
            newell.x += (a.y - b.y) * (a.z + b.z);
            newell.y += (a.z - b.z) * (a.x + b.x);
            newell.z += (a.x - b.x) * (a.y + b.y);
        }
        let area = 0.5 * newell.norm();
        if !(area > MIN_AREA) {
            return Err(PolygonError::Degenerate(area));
        }
        let normal = newell / newell.norm();

        let centroid = vertices
            .iter()
            .fold(Vector3::zeros(), |acc, v| acc + v.coords)
            / count as f64;
        let offset = normal.dot(&centroid);
        for (index, v) in vertices.iter().enumerate() {
            let distance = (normal.dot(&v.coords) - offset).abs();
            if distance > COPLANAR_TOLERANCE {
                return Err(PolygonError::NotCoplanar { index, distance });
            }
        }

        let mut edge_normals = Vec::with_capacity(count);
        let mut turning = 0.0;
        for i in 0..count {
            let edge = vertices[(i + 1) % count] - vertices[i];
            let next = vertices[(i + 2) % count] - vertices[(i + 1) % count];
            let len = edge.norm();
            if len <= EDGE_TOLERANCE {
                return Err(PolygonError::RepeatedVertex((i + 1) % count));
            }
            let cross = edge.cross(&next).dot(&normal);
            if cross < -1e-12 * len * next.norm() {
                return Err(PolygonError::NotConvex);
            }
            turning += cross.atan2(edge.dot(&next));
            edge_normals.push(normal.cross(&edge) / len);
        }
        // A star polygon turns the same way at every vertex but winds twice.
        if (turning - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(PolygonError::NotConvex);
        }

        Ok(Self {
            vertices,
            normal,
            offset,
            edge_normals,
            area,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    /// Unit normal of the supporting plane.
    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Signed distance of `p` from the supporting plane.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Reflection of `p` across the supporting plane.
    pub fn mirror(&self, p: &Point3<f64>) -> Point3<f64> {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    /// Signed in-plane distance from `p` to the polygon boundary: positive
    /// inside, negative outside. `p` is assumed to lie on the plane; any
    /// out-of-plane component is ignored.
    pub fn margin(&self, p: &Point3<f64>) -> f64 {
        self.vertices
            .iter()
            .zip(&self.edge_normals)
            .map(|(v, m)| m.dot(&(p - v)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Even-odd point-in-polygon test in the plane.
pub fn contains_point_2d(polygon: &[Point2<f64>], p: &Point2<f64>) -> bool {
    let mut inside = false;
    let n = polygon.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from `p` to the closed polygon region (zero inside).
pub fn distance_to_polygon_2d(polygon: &[Point2<f64>], p: &Point2<f64>) -> f64 {
    if contains_point_2d(polygon, p) {
        return 0.0;
    }
    let n = polygon.len();
    (0..n)
        .map(|i| distance_to_segment_2d(&polygon[i], &polygon[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

fn distance_to_segment_2d(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}
