//! Differential elliptical mapping.
//!
//! The observed CIR of every link is compared against the CIR of the empty
//! reference scene. Each differential sample at delay `t_n` constrains a
//! reflector to the ellipse with the two transceivers as foci and range sum
//! `c * t_n`; the sample power is spread across the grid with a Gaussian
//! falloff around that ellipse. Per-link layers are max-normalized and summed
//! into a fused heatmap, which is then scored per parking lot.

use nalgebra::{Point2, Point3};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::channel::SampledCir;
use crate::geom::{contains_point_2d, distance_to_polygon_2d};
use crate::scene::{GridSpec, ParkingLot};
use crate::SPEED_OF_LIGHT;

/// Differential samples at or below this fraction of the reference peak
/// magnitude are floating-point residue and carry no weight.
pub const RESIDUE_FLOOR: f64 = 1e-12;

/// Gaussian kernel support, in standard deviations.
pub const KERNEL_CUTOFF_SIGMAS: f64 = 8.0;

/// Range sums must exceed the focal distance by this much (m).
pub const BASELINE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("observed and reference CIR differ in {0}")]
    Mismatch(&'static str),
    #[error("heatmap grids differ in {0}")]
    GridMismatch(&'static str),
    #[error("no layers to fuse")]
    NoLayers,
    #[error("lot `{0}` covers no grid cell centers")]
    EmptyLot(String),
    #[error("threshold must be a non-negative number, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferentialCir {
    pub tx_id: String,
    pub rx_id: String,
    pub sample_rate: f64,
    pub start_time: f64,
    pub values: Vec<Complex64>,
    /// Largest reference magnitude; scales the residue floor.
    pub reference_peak: f64,
}

impl DifferentialCir {
    pub fn sample_time(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    /// Multiplies every differential sample (and the reference peak) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            reference_peak: self.reference_peak * k,
            ..self.clone()
        }
    }
}

pub fn subtract(observed: &SampledCir, reference: &SampledCir) -> Result<DifferentialCir, SensingError> {
    if observed.tx_id != reference.tx_id || observed.rx_id != reference.rx_id {
        return Err(SensingError::Mismatch("link"));
    }
    if observed.sample_rate != reference.sample_rate {
        return Err(SensingError::Mismatch("sample rate"));
    }
    if observed.start_time != reference.start_time {
        return Err(SensingError::Mismatch("start time"));
    }
    if observed.values.len() != reference.values.len() {
        return Err(SensingError::Mismatch("sample count"));
    }
    Ok(DifferentialCir {
        tx_id: observed.tx_id.clone(),
        rx_id: observed.rx_id.clone(),
        sample_rate: observed.sample_rate,
        start_time: observed.start_time,
        values: observed
            .values
            .iter()
            .zip(&reference.values)
            .map(|(o, r)| o - r)
            .collect(),
        reference_peak: reference.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatmapKind {
    PerLinkNormalized,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub grid: GridSpec,
    /// Row-major, `values[row * width + col]`, all non-negative.
    pub values: Vec<f64>,
    pub kind: HeatmapKind,
    /// `(tx_id, rx_id)` of a per-link layer.
    pub link: Option<(String, String)>,
}

impl Heatmap {
    pub fn zeros(grid: GridSpec, kind: HeatmapKind) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            kind,
            link: None,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Gaussian width matching the range resolution, c / (2 f_s).
pub fn default_kernel_sigma(sample_rate: f64) -> f64 {
    SPEED_OF_LIGHT / (2.0 * sample_rate)
}

pub fn ellipse_layer(d: &DifferentialCir, tx: &Point3<f64>, rx: &Point3<f64>, grid: &GridSpec) -> Heatmap {
    ellipse_layer_with_sigma(d, tx, rx, grid, default_kernel_sigma(d.sample_rate))
}

/// Power-weighted family of ellipses with foci `tx`, `rx`, normalized to a
/// maximum of one (an all-zero layer stays zero).
pub fn ellipse_layer_with_sigma(
    d: &DifferentialCir,
    tx: &Point3<f64>,
    rx: &Point3<f64>,
    grid: &GridSpec,
    sigma: f64,
) -> Heatmap {
    let mut layer = Heatmap::zeros(*grid, HeatmapKind::PerLinkNormalized);
    layer.link = Some((d.tx_id.clone(), d.rx_id.clone()));

    let baseline = (rx - tx).norm();
    let floor = RESIDUE_FLOOR * d.reference_peak;
    // Range sum r_n = c * t_n grows linearly with n.
    let step = SPEED_OF_LIGHT / d.sample_rate;
    let r0 = SPEED_OF_LIGHT * d.start_time;
    let weights: Vec<f64> = d
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| {
            let r = SPEED_OF_LIGHT * d.sample_time(n);
            if r < baseline + BASELINE_MARGIN || v.norm() <= floor {
                0.0
            } else {
                v.norm_sqr()
            }
        })
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        return layer;
    }

    let reach = KERNEL_CUTOFF_SIGMAS * sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let last = weights.len() as isize - 1;
    for (index, cell) in layer.values.iter_mut().enumerate() {
        let c = grid.cell_center(index);
        let p = Point3::new(c.x, c.y, grid.z);
        let sum = (p - tx).norm() + (p - rx).norm();
        let lo = (((sum - reach - r0) / step).ceil() as isize).max(0);
        let hi = (((sum + reach - r0) / step).floor() as isize).min(last);
        let mut acc = 0.0;
        for n in lo..=hi {
            let w = weights[n as usize];
            if w > 0.0 {
                let delta = sum - SPEED_OF_LIGHT * d.sample_time(n as usize);
                acc += w * (-delta * delta * inv_two_var).exp();
            }
        }
        *cell = acc;
    }

    let max = layer.max();
    if max > 0.0 {
        layer.values.iter_mut().for_each(|v| *v /= max);
    }
    layer
}

fn link_key(h: &Heatmap) -> (&str, &str) {
    h.link
        .as_ref()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .unwrap_or(("", ""))
}

/// Elementwise sum of the layers, accumulated in `(tx_id, rx_id)` order.
pub fn fuse(layers: &[Heatmap]) -> Result<Heatmap, SensingError> {
    let first = layers.first().ok_or(SensingError::NoLayers)?;
    for l in layers {
        let (a, b) = (&l.grid, &first.grid);
        if a.width != b.width || a.height != b.height {
            return Err(SensingError::GridMismatch("dimensions"));
        }
        if a.origin != b.origin || a.cell_size != b.cell_size || a.z != b.z {
            return Err(SensingError::GridMismatch("placement"));
        }
    }
    let mut ordered: Vec<&Heatmap> = layers.iter().collect();
    ordered.sort_by(|a, b| link_key(a).cmp(&link_key(b)));
    let mut fused = Heatmap::zeros(first.grid, HeatmapKind::Fused);
    for layer in ordered {
        for (acc, v) in fused.values.iter_mut().zip(&layer.values) {
            *acc += v;
        }
    }
    Ok(fused)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LotScore {
    pub id: String,
    pub score: f64,
}

/// Indices of the grid cells whose centers fall inside `polygon`.
pub fn cells_inside(grid: &GridSpec, polygon: &[Point2<f64>]) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| contains_point_2d(polygon, &grid.cell_center(i)))
        .collect()
}

/// Mean heatmap value over the cells of each lot.
pub fn score_lots(h: &Heatmap, lots: &[ParkingLot]) -> Result<Vec<LotScore>, SensingError> {
    lots.iter()
        .map(|lot| {
            let cells = cells_inside(&h.grid, &lot.polygon);
            if cells.is_empty() {
                return Err(SensingError::EmptyLot(lot.id.clone()));
            }
            let score = cells.iter().map(|&i| h.values[i]).sum::<f64>() / cells.len() as f64;
            Ok(LotScore {
                id: lot.id.clone(),
                score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LotDecision {
    pub id: String,
    pub score: f64,
    pub occupied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub threshold: f64,
    pub grid: GridSpec,
    pub lots: Vec<LotDecision>,
}

pub fn detect(
    scores: &[LotScore],
    threshold: f64,
    grid: GridSpec,
    scenario: &str,
    scenario_hash: &str,
) -> Result<OccupancyReport, SensingError> {
    if !(threshold >= 0.0) {
        return Err(SensingError::BadThreshold(threshold));
    }
    Ok(OccupancyReport {
        scenario: scenario.to_owned(),
        scenario_hash: scenario_hash.to_owned(),
        threshold,
        grid,
        lots: scores
            .iter()
            .map(|s| LotDecision {
                id: s.id.clone(),
                score: s.score,
                occupied: s.score > threshold,
            })
            .collect(),
    })
}

pub const DEFAULT_CALIBRATION_MARGIN: f64 = 3.0;

/// `margin` times the largest lot score of an empty-scene heatmap.
pub fn calibrate_threshold(
    empty_scene: &Heatmap,
    lots: &[ParkingLot],
    margin: f64,
) -> Result<f64, SensingError> {
    let max = score_lots(empty_scene, lots)?
        .iter()
        .map(|s| s.score)
        .fold(0.0, f64::max);
    Ok(margin * max)
}

/// Heatmap statistics around known reflector footprints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintContrast {
    /// Mean inside each dilated footprint.
    pub footprint_means: Vec<f64>,
    /// Mean over the union of all dilated footprints.
    pub pooled_mean: f64,
    /// Mean over cells outside every dilated footprint.
    pub background_mean: f64,
}

impl FootprintContrast {
    pub fn ratio(&self) -> f64 {
        self.pooled_mean / self.background_mean
    }
}

/// Means of `h` inside each footprint dilated by `dilation` meters and over
/// the remaining grid.
pub fn footprint_contrast(
    h: &Heatmap,
    footprints: &[Vec<Point2<f64>>],
    dilation: f64,
) -> FootprintContrast {
    let mut sums = vec![(0.0, 0usize); footprints.len()];
    let (mut inside, mut inside_n) = (0.0, 0usize);
    let (mut outside, mut outside_n) = (0.0, 0usize);
    for (i, v) in h.values.iter().enumerate() {
        let c = h.grid.cell_center(i);
        let mut hit = false;
        for (f, acc) in footprints.iter().zip(&mut sums) {
            if distance_to_polygon_2d(f, &c) <= dilation {
                acc.0 += v;
                acc.1 += 1;
                hit = true;
            }
        }
        if hit {
            inside += v;
            inside_n += 1;
        } else {
            outside += v;
            outside_n += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    FootprintContrast {
        footprint_means: sums.iter().map(|&(s, n)| mean(s, n)).collect(),
        pooled_mean: mean(inside, inside_n),
        background_mean: mean(outside, outside_n),
    }
}
