//! End-to-end sensing pipeline over all transceiver pairs.
//!
//! Every unordered node pair `(i, j)`, `i < j` in node order, forms one
//! bistatic link with node `i` transmitting. Links are simulated in parallel;
//! results are collected in link order so the output does not depend on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{assemble_cir, sample_bandlimited, taps_outside_window, ChannelError, CirTaps, SampledCir};
use crate::geom::PolygonError;
use crate::raytrace::{enumerate_paths, Geometry, PropagationPath};
use crate::scene::{reference_scene, Scenario};
use crate::sensing::{default_kernel_sigma, ellipse_layer_with_sigma, fuse, subtract, Heatmap, SensingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid geometry: {0}")]
    Geometry(#[from] PolygonError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
}

/// Additive receiver noise. When enabled the CIRs are scaled by the TX power
/// so the noise power is meaningful in dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub power_dbm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub max_order: usize,
    pub start_time: f64,
    pub noise: Option<NoiseConfig>,
    /// Overrides the default c / (2 f_s) ellipse kernel width.
    pub kernel_sigma: Option<f64>,
}

impl SimulationOptions {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            max_order: scenario.radio.max_reflection_order,
            start_time: 0.0,
            noise: None,
            kernel_sigma: None,
        }
    }
}

/// Which simulation a noise draw belongs to. Each gets its own RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStream {
    Observed = 0,
    Reference = 1,
    CalibrationA = 2,
    CalibrationB = 3,
}

/// Node index pairs `(i, j)` with `i < j`.
pub fn links(scenario: &Scenario) -> Vec<(usize, usize)> {
    let n = scenario.nodes.len();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone)]
pub struct LinkSimulation {
    pub tx: usize,
    pub rx: usize,
    pub paths: Vec<PropagationPath>,
    pub taps: CirTaps,
    pub sampled: SampledCir,
    pub truncated_taps: usize,
}

/// Traces and samples every link of `scenario`.
pub fn simulate(
    scenario: &Scenario,
    options: &SimulationOptions,
    stream: NoiseStream,
) -> Result<Vec<LinkSimulation>, PipelineError> {
    let geometry = Geometry::from_scenario(scenario)?;
    links(scenario)
        .into_par_iter()
        .enumerate()
        .map(|(index, (i, j))| simulate_link(scenario, &geometry, options, stream, index, i, j))
        .collect()
}

fn simulate_link(
    scenario: &Scenario,
    geometry: &Geometry,
    options: &SimulationOptions,
    stream: NoiseStream,
    index: usize,
    i: usize,
    j: usize,
) -> Result<LinkSimulation, PipelineError> {
    let (tx, rx) = (&scenario.nodes[i], &scenario.nodes[j]);
    let paths = enumerate_paths(geometry, &tx.position, &rx.position, options.max_order);
    let taps = assemble_cir(&paths, geometry, &scenario.radio, &tx.id, &rx.id)?;
    let truncated_taps = taps_outside_window(&taps, &scenario.radio, options.start_time);
    let mut sampled = sample_bandlimited(&taps, &scenario.radio, options.start_time);
    if let Some(noise) = options.noise {
        sampled.apply_tx_power(scenario.radio.tx_power_dbm);
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(((stream as u64) << 32) | index as u64);
        sampled.add_noise(noise.power_dbm, &mut rng);
    }
    Ok(LinkSimulation {
        tx: i,
        rx: j,
        paths,
        taps,
        sampled,
        truncated_taps,
    })
}

#[derive(Debug, Clone)]
pub struct SensingRun {
    pub observed: Vec<LinkSimulation>,
    pub reference: Vec<LinkSimulation>,
    pub layers: Vec<Heatmap>,
    pub heatmap: Heatmap,
}

impl SensingRun {
    pub fn truncated_taps(&self) -> usize {
        self.observed
            .iter()
            .chain(&self.reference)
            .map(|l| l.truncated_taps)
            .sum()
    }
}

/// Differential heatmap of `observed` against `reference`.
pub fn sense(
    observed_scene: &Scenario,
    reference_scene: &Scenario,
    options: &SimulationOptions,
    streams: (NoiseStream, NoiseStream),
) -> Result<SensingRun, PipelineError> {
    let observed = simulate(observed_scene, options, streams.0)?;
    let reference = simulate(reference_scene, options, streams.1)?;
    let grid = observed_scene.grid_spec();
    let sigma = options
        .kernel_sigma
        .unwrap_or_else(|| default_kernel_sigma(observed_scene.radio.bandwidth_hz));
    let layers = observed
        .par_iter()
        .zip(&reference)
        .map(|(o, r)| {
            let d = subtract(&o.sampled, &r.sampled)?;
            let tx = &observed_scene.nodes[o.tx].position;
            let rx = &observed_scene.nodes[o.rx].position;
            Ok(ellipse_layer_with_sigma(&d, tx, rx, &grid, sigma))
        })
        .collect::<Result<Vec<_>, SensingError>>()?;
    let heatmap = fuse(&layers)?;
    Ok(SensingRun {
        observed,
        reference,
        layers,
        heatmap,
    })
}

/// Scenario against its own empty reference scene.
pub fn run_sensing(scenario: &Scenario, options: &SimulationOptions) -> Result<SensingRun, PipelineError> {
    sense(
        scenario,
        &reference_scene(scenario),
        options,
        (NoiseStream::Observed, NoiseStream::Reference),
    )
}

/// Empty scene against itself with independent noise draws; the input for
/// threshold calibration.
pub fn run_empty_scene(scenario: &Scenario, options: &SimulationOptions) -> Result<SensingRun, PipelineError> {
    let empty = reference_scene(scenario);
    sense(
        &empty,
        &empty,
        options,
        (NoiseStream::CalibrationA, NoiseStream::CalibrationB),
    )
}
