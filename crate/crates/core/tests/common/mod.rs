//! Test-only helpers: an independent brute-force specular path oracle and
//! random scene generators.
//!
//! The oracle shares no code with the crate's tracer. Planes come from a
//! cross product of two edges, reflection points are found by mirroring the
//! receiver (not the transmitter) and tracing forwards, and occlusion uses a
//! triangle-fan ray/triangle intersection.

#![allow(dead_code)]

pub mod invariants;

use nalgebra::{Point3, Vector3};
use rand::Rng;

pub const TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OracleSurface {
    pub vertices: Vec<Point3<f64>>,
}

impl OracleSurface {
    fn plane(&self) -> (Vector3<f64>, Point3<f64>) {
        let v = &self.vertices;
        let n = (v[1] - v[0]).cross(&(v[2] - v[0])).normalize();
        (n, v[0])
    }

    fn mirror(&self, p: &Point3<f64>) -> Point3<f64> {
        let (n, o) = self.plane();
        p - n * (2.0 * (p - o).dot(&n))
    }

    /// Strictly inside the polygon with clearance `TOL` from every edge.
    fn strictly_inside(&self, p: &Point3<f64>) -> bool {
        let (n, _) = self.plane();
        let v = &self.vertices;
        let k = v.len();
        let signs: Vec<f64> = (0..k)
            .map(|i| {
                let e = v[(i + 1) % k] - v[i];
                e.cross(&(p - v[i])).dot(&n) / e.norm()
            })
            .collect();
        signs.iter().all(|s| *s >= TOL) || signs.iter().all(|s| *s <= -TOL)
    }
}

/// Möller–Trumbore, returning the segment parameter of the hit.
fn segment_triangle(a: &Point3<f64>, b: &Point3<f64>, tri: [&Point3<f64>; 3]) -> Option<f64> {
    let dir = b - a;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = a - tri[0];
    let u = tvec.dot(&pvec) * inv;
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    let slack = 1e-9;
    if u < -slack || v < -slack || u + v > 1.0 + slack {
        return None;
    }
    Some(e2.dot(&qvec) * inv)
}

fn blocked(a: &Point3<f64>, b: &Point3<f64>, surfaces: &[OracleSurface], skip: &[usize]) -> bool {
    let len = (b - a).norm();
    surfaces.iter().enumerate().any(|(i, s)| {
        if skip.contains(&i) {
            return false;
        }
        let v = &s.vertices;
        (1..v.len() - 1).any(|k| {
            segment_triangle(a, b, [&v[0], &v[k], &v[k + 1]])
                .map(|t| t * len > TOL && (1.0 - t) * len > TOL)
                .unwrap_or(false)
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OraclePath {
    pub sequence: Vec<usize>,
    pub length: f64,
}

/// Every valid specular path up to `max_order`, by exhaustive enumeration of
/// surface sequences.
pub fn oracle_paths(
    surfaces: &[OracleSurface],
    tx: &Point3<f64>,
    rx: &Point3<f64>,
    max_order: usize,
) -> Vec<OraclePath> {
    let mut out = Vec::new();
    if !blocked(tx, rx, surfaces, &[]) {
        out.push(OraclePath {
            sequence: vec![],
            length: (rx - tx).norm(),
        });
    }
    let n = surfaces.len();
    let mut sequences: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for seq in &sequences {
            for s in 0..n {
                if seq.last() != Some(&s) {
                    let mut longer = seq.clone();
                    longer.push(s);
                    next.push(longer);
                }
            }
        }
        for seq in &next {
            if let Some(length) = validate_sequence(surfaces, tx, rx, seq) {
                out.push(OraclePath {
                    sequence: seq.clone(),
                    length,
                });
            }
        }
        sequences = next;
    }
    out
}

fn validate_sequence(
    surfaces: &[OracleSurface],
    tx: &Point3<f64>,
    rx: &Point3<f64>,
    seq: &[usize],
) -> Option<f64> {
    // Images of rx across the surfaces from last to first.
    let k = seq.len();
    let mut images = vec![*rx; k];
    let mut img = *rx;
    for j in (0..k).rev() {
        img = surfaces[seq[j]].mirror(&img);
        images[j] = img;
    }
    // Walk forwards: from the current point aim at the image belonging to
    // the next surface, intersect with that surface's plane.
    let mut points = vec![*tx];
    let mut current = *tx;
    for j in 0..k {
        let (n, o) = surfaces[seq[j]].plane();
        let target = images[j];
        let da = (current - o).dot(&n);
        let db = (target - o).dot(&n);
        if da * db >= 0.0 {
            return None;
        }
        let p = current + (target - current) * (da / (da - db));
        if !surfaces[seq[j]].strictly_inside(&p) {
            return None;
        }
        points.push(p);
        current = p;
    }
    points.push(*rx);

    for w in 0..points.len() - 1 {
        let mut skip = vec![];
        if w > 0 {
            skip.push(seq[w - 1]);
        }
        if w < k {
            skip.push(seq[w]);
        }
        if (points[w + 1] - points[w]).norm() <= TOL {
            return None;
        }
        if blocked(&points[w], &points[w + 1], surfaces, &skip) {
            return None;
        }
    }
    // Direct geometric check of the reflection law.
    for j in 0..k {
        let (n, _) = surfaces[seq[j]].plane();
        let inc = (points[j] - points[j + 1]).normalize();
        let out = (points[j + 2] - points[j + 1]).normalize();
        if (n.dot(&inc).abs() - n.dot(&out).abs()).abs() > 1e-6 || n.dot(&inc) * n.dot(&out) <= 0.0 {
            return None;
        }
    }
    Some(points.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

/// A random rectangle or triangle with center in an 8 m cube.
pub fn random_surface<R: Rng>(rng: &mut R) -> OracleSurface {
    let center = Point3::new(
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
    );
    let normal: Vector3<f64> = loop {
        let v: Vector3<f64> = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 0.2 && v.norm() <= 1.0 {
            break v.normalize();
        }
    };
    let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = normal.cross(&helper).normalize();
    let w = normal.cross(&u);
    let (hu, hw) = (rng.random_range(2.0..8.0), rng.random_range(2.0..8.0));
    let vertices = if rng.random_bool(0.25) {
        vec![center + u * hu, center + w * hw, center - u * hu - w * hw]
    } else {
        vec![
            center + u * hu + w * hw,
            center - u * hu + w * hw,
            center - u * hu - w * hw,
            center + u * hu - w * hw,
        ]
    };
    OracleSurface { vertices }
}

pub fn random_point<R: Rng>(rng: &mut R) -> Point3<f64> {
    Point3::new(
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
    )
}

pub fn to_geometry(surfaces: &[OracleSurface]) -> raysense::raytrace::Geometry {
    use raysense::geom::ConvexPolygon;
    use raysense::raytrace::{Face, Geometry};
    use raysense::scene::Material;
    Geometry::new(
        surfaces
            .iter()
            .map(|s| Face {
                polygon: ConvexPolygon::new(s.vertices.clone()).unwrap(),
                material: Material::dielectric("concrete", 5.31),
                is_target_face: false,
            })
            .collect(),
    )
}

/// Compares the crate's paths against the oracle. Returns the number of
/// reflected paths, or a description of the first mismatch.
pub fn compare_with_oracle(
    surfaces: &[OracleSurface],
    tx: &Point3<f64>,
    rx: &Point3<f64>,
    max_order: usize,
) -> Result<usize, String> {
    let geometry = to_geometry(surfaces);
    let mine = raysense::raytrace::enumerate_paths(&geometry, tx, rx, max_order);
    let expected = oracle_paths(surfaces, tx, rx, max_order);
    if mine.len() != expected.len() {
        return Err(format!(
            "path count {} vs oracle {} (tx {tx:?}, rx {rx:?})",
            mine.len(),
            expected.len()
        ));
    }
    for e in &expected {
        let found = mine
            .iter()
            .find(|p| p.surfaces_hit == e.sequence)
            .ok_or_else(|| format!("oracle path {:?} missing", e.sequence))?;
        if (found.total_length - e.length).abs() > 1e-9 {
            return Err(format!(
                "length {} vs oracle {} for {:?}",
                found.total_length, e.length, e.sequence
            ));
        }
    }
    Ok(expected.iter().filter(|e| !e.sequence.is_empty()).count())
}
