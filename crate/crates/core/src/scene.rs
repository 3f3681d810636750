//! Scenario data model: geometry, materials, transceiver nodes, radio
//! parameters, sensing grid and parking lots.
//!
//! Scenario files are JSON documents with the top-level keys `name`,
//! `materials`, `surfaces`, `targets`, `nodes`, `radio`, `grid` and `lots`.
//! Lengths are in meters, frequencies in Hz, power in dBm and angles in
//! radians. Materials named `concrete`, `glass` and `metal` are always
//! available; a scenario may redefine them.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{Point2, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{ConvexPolygon, PolygonError};

/// Minimum separation between two transceiver nodes (m).
pub const MIN_NODE_SEPARATION: f64 = 1e-6;

/// Highest supported specular reflection order.
pub const MAX_REFLECTION_ORDER: usize = 3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown material `{material}` referenced by {context}")]
    UnknownMaterial { material: String, context: String },
    #[error("invariant violated: {0}")]
    Invalid(String),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl fmt::Display) -> ScenarioError {
    ScenarioError::Invalid(msg.to_string())
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    #[serde(default = "one")]
    pub rel_permittivity: f64,
    #[serde(default = "one")]
    pub rel_permeability: f64,
    #[serde(default)]
    pub perfect_reflector: bool,
}

impl Material {
    pub fn dielectric(name: &str, rel_permittivity: f64) -> Self {
        Self {
            name: name.to_owned(),
            rel_permittivity,
            rel_permeability: 1.0,
            perfect_reflector: false,
        }
    }

    pub fn perfect_reflector(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            rel_permittivity: 1.0,
            rel_permeability: 1.0,
            perfect_reflector: true,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.perfect_reflector {
            return Ok(());
        }
        if !(self.rel_permittivity.is_finite() && self.rel_permittivity >= 1.0) {
            return Err(invalid(format!(
                "material `{}`: rel_permittivity must be >= 1, got {}",
                self.name, self.rel_permittivity
            )));
        }
        if !(self.rel_permeability.is_finite() && self.rel_permeability >= 1.0) {
            return Err(invalid(format!(
                "material `{}`: rel_permeability must be >= 1, got {}",
                self.name, self.rel_permeability
            )));
        }
        Ok(())
    }
}

/// Built-in materials available to every scenario.
pub fn default_materials() -> Vec<Material> {
    vec![
        Material::dielectric("concrete", 5.31),
        Material::dielectric("glass", 6.27),
        Material::perfect_reflector("metal"),
    ]
}

fn default_target_material() -> String {
    "metal".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub vertices: Vec<Point3<f64>>,
    pub material: String,
    #[serde(default)]
    pub is_target_face: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

/// Oriented box standing on the ground, e.g. a parked vehicle.
///
/// `center` is the geometric center of the box; `width` runs along the local
/// x axis and `depth` along the local y axis before the yaw rotation about z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetObject {
    pub id: String,
    pub center: Point3<f64>,
    pub dimensions: Dimensions,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "default_target_material")]
    pub material: String,
}

impl TargetObject {
    /// Corners of the local box, rotated and translated into the world.
    fn corner(&self, sx: f64, sy: f64, sz: f64) -> Point3<f64> {
        let half = Vector3::new(
            sx * self.dimensions.width / 2.0,
            sy * self.dimensions.depth / 2.0,
            sz * self.dimensions.height / 2.0,
        );
        self.center + Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw) * half
    }

    /// The five exposed faces in fixed order: +x, +y, -x, -y sides, then top.
    /// Each face is wound counter-clockwise when seen from outside.
    pub fn faces(&self) -> Vec<Surface> {
        let c = |sx, sy, sz| self.corner(sx, sy, sz);
        let quads = [
            [c(1., -1., -1.), c(1., 1., -1.), c(1., 1., 1.), c(1., -1., 1.)],
            [c(1., 1., -1.), c(-1., 1., -1.), c(-1., 1., 1.), c(1., 1., 1.)],
            [c(-1., 1., -1.), c(-1., -1., -1.), c(-1., -1., 1.), c(-1., 1., 1.)],
            [c(-1., -1., -1.), c(1., -1., -1.), c(1., -1., 1.), c(-1., -1., 1.)],
            [c(-1., -1., 1.), c(1., -1., 1.), c(1., 1., 1.), c(-1., 1., 1.)],
        ];
        quads
            .into_iter()
            .map(|q| Surface {
                vertices: q.to_vec(),
                material: self.material.clone(),
                is_target_face: true,
            })
            .collect()
    }

    /// Ground-plane footprint, counter-clockwise.
    pub fn footprint(&self) -> Vec<Point2<f64>> {
        [(1., -1.), (1., 1.), (-1., 1.), (-1., -1.)]
            .into_iter()
            .map(|(sx, sy)| {
                let p = self.corner(sx, sy, 0.0);
                Point2::new(p.x, p.y)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub position: Point3<f64>,
}

fn default_max_order() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioModel {
    pub center_frequency_hz: f64,
    /// Also the sample rate of the bandlimited CIR.
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub antenna_gain_dbi: f64,
    pub num_samples: usize,
    #[serde(default = "default_max_order")]
    pub max_reflection_order: usize,
}

impl RadioModel {
    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.center_frequency_hz
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let r = self;
        if !(r.bandwidth_hz.is_finite() && r.bandwidth_hz > 0.0) {
            return Err(invalid("radio: bandwidth must be > 0"));
        }
        if !(r.center_frequency_hz.is_finite() && r.center_frequency_hz > r.bandwidth_hz / 2.0) {
            return Err(invalid("radio: center frequency must exceed bandwidth / 2"));
        }
        if !r.tx_power_dbm.is_finite() || !r.antenna_gain_dbi.is_finite() {
            return Err(invalid("radio: tx power and antenna gain must be finite"));
        }
        if r.num_samples < 2 {
            return Err(invalid("radio: num_samples must be >= 2"));
        }
        if r.max_reflection_order > MAX_REFLECTION_ORDER {
            return Err(invalid(format!(
                "radio: max_reflection_order must be in [0, {MAX_REFLECTION_ORDER}]"
            )));
        }
        Ok(())
    }
}

/// Grid block as written in a scenario file. `z` defaults to the mean
/// transceiver height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub origin: Point2<f64>,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

/// Fully resolved equidistant sensing grid. Cell `(col, row)` has its center
/// at `origin + ((col + 0.5), (row + 0.5)) * cell_size` on the plane `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point2<f64>,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub z: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, index: usize) -> Point2<f64> {
        let col = index % self.width;
        let row = index / self.width;
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn extent(&self) -> Point2<f64> {
        Point2::new(
            self.origin.x + self.width as f64 * self.cell_size,
            self.origin.y + self.height as f64 * self.cell_size,
        )
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let max = self.extent();
        p.x >= self.origin.x && p.x <= max.x && p.y >= self.origin.y && p.y <= max.y
    }

    /// Same extent sampled with a different cell size (rounded up to cover).
    pub fn with_cell_size(&self, cell_size: f64) -> GridSpec {
        let span_x = self.width as f64 * self.cell_size;
        let span_y = self.height as f64 * self.cell_size;
        GridSpec {
            cell_size,
            width: ((span_x / cell_size) - 1e-9).ceil().max(1.0) as usize,
            height: ((span_y / cell_size) - 1e-9).ceil().max(1.0) as usize,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkingLot {
    pub id: String,
    pub polygon: Vec<Point2<f64>>,
}

fn default_name() -> String {
    "scenario".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub materials: Vec<Material>,
    #[serde(default)]
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub targets: Vec<TargetObject>,
    pub nodes: Vec<Node>,
    pub radio: RadioModel,
    pub grid: GridConfig,
    #[serde(default)]
    pub lots: Vec<ParkingLot>,
}

/// Parse and validate scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => ScenarioError::Schema {
                line,
                column,
                message,
            },
            _ => ScenarioError::Syntax {
                line,
                column,
                message,
            },
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn serialize_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serialization is infallible")
}

/// Copy of the scenario with every target removed: the empty scene used as
/// the background reference.
pub fn reference_scene(scenario: &Scenario) -> Scenario {
    Scenario {
        targets: Vec::new(),
        ..scenario.clone()
    }
}

/// Static surfaces followed by the faces of each target, targets sorted by id.
pub fn expand_geometry(scenario: &Scenario) -> Vec<Surface> {
    let mut targets: Vec<&TargetObject> = scenario.targets.iter().collect();
    targets.sort_by(|a, b| a.id.cmp(&b.id));
    scenario
        .surfaces
        .iter()
        .cloned()
        .chain(targets.into_iter().flat_map(|t| t.faces()))
        .collect()
}

impl Scenario {
    /// Looks up a material by name, falling back to the built-in library.
    pub fn material(&self, name: &str) -> Option<Material> {
        self.materials
            .iter()
            .find(|m| m.name == name)
            .cloned()
            .or_else(|| default_materials().into_iter().find(|m| m.name == name))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let z = self.grid.z.unwrap_or_else(|| {
            if self.nodes.is_empty() {
                1.0
            } else {
                self.nodes.iter().map(|n| n.position.z).sum::<f64>() / self.nodes.len() as f64
            }
        });
        GridSpec {
            origin: self.grid.origin,
            cell_size: self.grid.cell_size,
            width: self.grid.width,
            height: self.grid.height,
            z,
        }
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(serialize_scenario(self).as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut names = HashSet::new();
        for m in &self.materials {
            if !names.insert(m.name.as_str()) {
                return Err(invalid(format!("duplicate material `{}`", m.name)));
            }
            m.validate()?;
        }

        for (i, s) in self.surfaces.iter().enumerate() {
            self.resolve_material(&s.material, || format!("surface {i}"))?;
            ConvexPolygon::new(s.vertices.clone())
                .map_err(|e: PolygonError| invalid(format!("surface {i}: {e}")))?;
        }

        let mut ids = HashSet::new();
        for t in &self.targets {
            if !ids.insert(t.id.as_str()) {
                return Err(invalid(format!("duplicate target id `{}`", t.id)));
            }
            let d = t.dimensions;
            if ![d.width, d.depth, d.height].iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("target `{}`: dimensions must be > 0", t.id)));
            }
            if !t.yaw.is_finite() || !t.center.coords.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("target `{}`: non-finite pose", t.id)));
            }
            self.resolve_material(&t.material, || format!("target `{}`", t.id))?;
        }

        if self.nodes.len() < 2 {
            return Err(invalid("at least two nodes are required to form a link"));
        }
        let mut ids = HashSet::new();
        for (i, a) in self.nodes.iter().enumerate() {
            if !ids.insert(a.id.as_str()) {
                return Err(invalid(format!("duplicate node id `{}`", a.id)));
            }
            if !a.position.coords.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("node `{}`: non-finite position", a.id)));
            }
            for b in &self.nodes[..i] {
                if (a.position - b.position).norm() <= MIN_NODE_SEPARATION {
                    return Err(invalid(format!(
                        "nodes `{}` and `{}` are not distinct",
                        b.id, a.id
                    )));
                }
            }
        }

        self.radio.validate()?;

        let g = &self.grid;
        if !(g.cell_size.is_finite() && g.cell_size > 0.0) {
            return Err(invalid("grid: cell_size must be > 0"));
        }
        if g.width == 0 || g.height == 0 {
            return Err(invalid("grid: width and height must be >= 1 cell"));
        }
        if !g.origin.coords.iter().all(|c| c.is_finite()) || !g.z.is_none_or(f64::is_finite) {
            return Err(invalid("grid: non-finite origin or plane height"));
        }
        let grid = self.grid_spec();
        for n in &self.nodes {
            if !grid.contains(&Point2::new(n.position.x, n.position.y)) {
                return Err(invalid(format!(
                    "grid does not cover the ground projection of node `{}`",
                    n.id
                )));
            }
        }

        let mut ids = HashSet::new();
        for lot in &self.lots {
            if !ids.insert(lot.id.as_str()) {
                return Err(invalid(format!("duplicate lot id `{}`", lot.id)));
            }
            if lot.polygon.len() < 3 {
                return Err(invalid(format!("lot `{}`: polygon needs >= 3 vertices", lot.id)));
            }
            if !lot.polygon.iter().all(|p| grid.contains(p)) {
                return Err(invalid(format!("lot `{}` lies outside the grid extent", lot.id)));
            }
        }
        Ok(())
    }

    fn resolve_material(
        &self,
        name: &str,
        context: impl FnOnce() -> String,
    ) -> Result<Material, ScenarioError> {
        self.material(name).ok_or_else(|| ScenarioError::UnknownMaterial {
            material: name.to_owned(),
            context: context(),
        })
    }
}
