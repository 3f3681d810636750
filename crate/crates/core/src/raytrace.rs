//! Specular multipath enumeration by the image method.
//!
//! For every sequence of surfaces (no surface twice in a row) the transmitter
//! is mirrored successively across each surface plane. The path is then
//! traced back from the receiver towards the nested images; each crossing with
//! a surface plane must fall strictly inside that surface's polygon and every
//! resulting segment must be free of occluders.

use nalgebra::Point3;
use serde::Serialize;

use crate::geom::{ConvexPolygon, PolygonError, EDGE_TOLERANCE};
use crate::scene::{expand_geometry, Material, Scenario, Surface};

/// A surface prepared for tracing.
#[derive(Debug, Clone)]
pub struct Face {
    pub polygon: ConvexPolygon,
    pub material: Material,
    pub is_target_face: bool,
}

/// Immutable traceable geometry.
#[derive(Debug, Clone, Default)]
pub struct Geometry {
    faces: Vec<Face>,
}

impl Geometry {
    pub fn new(faces: Vec<Face>) -> Self {
        Self { faces }
    }

    /// Builds the expanded geometry of a validated scenario.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, PolygonError> {
        expand_geometry(scenario)
            .into_iter()
            .map(|s: Surface| {
                let material = scenario
                    .material(&s.material)
                    .unwrap_or_else(|| panic!("unresolved material `{}`", s.material));
                Ok(Face {
                    polygon: ConvexPolygon::new(s.vertices)?,
                    material,
                    is_target_face: s.is_target_face,
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }
}

/// One specular propagation path from `tx` to `rx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationPath {
    pub tx: Point3<f64>,
    pub rx: Point3<f64>,
    pub reflection_points: Vec<Point3<f64>>,
    /// Indices into the geometry the path was traced in.
    pub surfaces_hit: Vec<usize>,
    pub total_length: f64,
    /// Angle between the incoming ray and the surface normal, per bounce.
    pub incidence_angles: Vec<f64>,
}

impl PropagationPath {
    pub fn order(&self) -> usize {
        self.reflection_points.len()
    }

    /// Polyline tx, reflection points..., rx.
    pub fn polyline(&self) -> Vec<Point3<f64>> {
        std::iter::once(self.tx)
            .chain(self.reflection_points.iter().copied())
            .chain(std::iter::once(self.rx))
            .collect()
    }

    pub fn segments(&self) -> Vec<(Point3<f64>, Point3<f64>)> {
        self.polyline().windows(2).map(|w| (w[0], w[1])).collect()
    }
}

pub fn mirror_point(p: &Point3<f64>, surface: &ConvexPolygon) -> Point3<f64> {
    surface.mirror(p)
}

/// Whether the open segment `(a, b)` crosses any face not listed in `ignore`.
///
/// Crossings that pass within [`EDGE_TOLERANCE`] outside a polygon edge count
/// as hits; crossings within that distance of either endpoint do not.
pub fn occluded(a: &Point3<f64>, b: &Point3<f64>, geometry: &Geometry, ignore: &[usize]) -> bool {
    let length = (b - a).norm();
    geometry.faces.iter().enumerate().any(|(i, face)| {
        if ignore.contains(&i) {
            return false;
        }
        let da = face.polygon.signed_distance(a);
        let db = face.polygon.signed_distance(b);
        if (da > 0.0 && db > 0.0) || (da < 0.0 && db < 0.0) || da == db {
            return false;
        }
        let t = da / (da - db);
        if t * length <= EDGE_TOLERANCE || (1.0 - t) * length <= EDGE_TOLERANCE {
            return false;
        }
        let hit = a + (b - a) * t;
        face.polygon.margin(&hit) >= -EDGE_TOLERANCE
    })
}

/// All specular paths of order `0..=max_order`, sorted by ascending order and
/// then lexicographically by the sequence of surface indices.
pub fn enumerate_paths(
    geometry: &Geometry,
    tx: &Point3<f64>,
    rx: &Point3<f64>,
    max_order: usize,
) -> Vec<PropagationPath> {
    let mut paths = Vec::new();
    if !occluded(tx, rx, geometry, &[]) {
        paths.push(PropagationPath {
            tx: *tx,
            rx: *rx,
            reflection_points: Vec::new(),
            surfaces_hit: Vec::new(),
            total_length: (rx - tx).norm(),
            incidence_angles: Vec::new(),
        });
    }
    let mut tracer = Tracer {
        geometry,
        tx: *tx,
        rx: *rx,
        sequence: Vec::new(),
        images: Vec::new(),
    };
    for order in 1..=max_order {
        tracer.extend(order, &mut paths);
    }
    paths
}

struct Tracer<'g> {
    geometry: &'g Geometry,
    tx: Point3<f64>,
    rx: Point3<f64>,
    sequence: Vec<usize>,
    images: Vec<Point3<f64>>,
}

impl Tracer<'_> {
    fn extend(&mut self, order: usize, out: &mut Vec<PropagationPath>) {
        if self.sequence.len() == order {
            if let Some(path) = self.build() {
                out.push(path);
            }
            return;
        }
        let source = self.images.last().copied().unwrap_or(self.tx);
        for i in 0..self.geometry.len() {
            if self.sequence.last() == Some(&i) {
                continue;
            }
            self.sequence.push(i);
            self.images.push(self.geometry.faces[i].polygon.mirror(&source));
            self.extend(order, out);
            self.sequence.pop();
            self.images.pop();
        }
    }

    fn build(&self) -> Option<PropagationPath> {
        let faces = &self.geometry.faces;
        let order = self.sequence.len();
        let mut points = vec![Point3::origin(); order];
        let mut target = self.rx;
        for j in (0..order).rev() {
            let polygon = &faces[self.sequence[j]].polygon;
            let image = self.images[j];
            let dt = polygon.signed_distance(&target);
            let di = polygon.signed_distance(&image);
            if !(dt * di < 0.0) {
                return None;
            }
            let point = target + (image - target) * (dt / (dt - di));
            if polygon.margin(&point) < EDGE_TOLERANCE || (point - target).norm() <= EDGE_TOLERANCE {
                return None;
            }
            points[j] = point;
            target = point;
        }
        if (target - self.tx).norm() <= EDGE_TOLERANCE {
            return None;
        }

        let mut vertices = Vec::with_capacity(order + 2);
        vertices.push(self.tx);
        vertices.extend_from_slice(&points);
        vertices.push(self.rx);
        for (k, w) in vertices.windows(2).enumerate() {
            let mut ignore = [usize::MAX; 2];
            if k > 0 {
                ignore[0] = self.sequence[k - 1];
            }
            if k < order {
                ignore[1] = self.sequence[k];
            }
            if occluded(&w[0], &w[1], self.geometry, &ignore) {
                return None;
            }
        }

        let total_length = vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let incidence_angles = (0..order)
            .map(|j| {
                let incoming = vertices[j] - vertices[j + 1];
                let normal = faces[self.sequence[j]].polygon.normal();
                (normal.dot(&incoming).abs() / incoming.norm()).clamp(0.0, 1.0).acos()
            })
            .collect();
        Some(PropagationPath {
            tx: self.tx,
            rx: self.rx,
            reflection_points: points,
            surfaces_hit: self.sequence.clone(),
            total_length,
            incidence_angles,
        })
    }
}
