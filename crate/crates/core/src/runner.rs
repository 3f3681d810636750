//! Batch runs: load a scenario, simulate the observed and reference scenes,
//! write heatmap, report and optional debug artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::output::{fmt17, write_cir_csv, write_heatmap_csv, write_heatmap_pgm, write_paths_json, write_pgm_sidecar};
use crate::pipeline::{run_empty_scene, run_sensing, NoiseConfig, PipelineError, SensingRun, SimulationOptions};
use crate::scene::{load_scenario, Scenario, ScenarioError, MAX_REFLECTION_ORDER};
use crate::sensing::{
    calibrate_threshold, detect, footprint_contrast, score_lots, OccupancyReport, SensingError,
    DEFAULT_CALIBRATION_MARGIN,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run took {elapsed:.3} s, budget was {budget:.3} s")]
    Budget { elapsed: f64, budget: f64 },
    #[error("cannot parse manifest: {0}")]
    Manifest(String),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Budget { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How the occupancy threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Threshold(f64),
    /// Multiple of the highest lot score of the empty scene against itself.
    CalibrateMargin(f64),
}

impl Default for Decision {
    fn default() -> Self {
        Decision::CalibrateMargin(DEFAULT_CALIBRATION_MARGIN)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub max_order: Option<usize>,
    pub grid_cell: Option<f64>,
    pub bandwidth: Option<f64>,
    pub num_samples: Option<usize>,
    pub noise: Option<NoiseConfig>,
    pub decision: Decision,
    pub dump_paths: bool,
    pub dump_cir: bool,
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub bandwidth_hz: f64,
    pub nodes: usize,
    pub report: OccupancyReport,
    /// Dilated-footprint contrast of the scenario's targets, if it has any.
    pub target_contrast: Option<f64>,
    pub truncated_taps: usize,
    pub wall_seconds: f64,
}

/// Loads the scenario and applies the configuration overrides.
pub fn prepare_scenario(config: &RunConfig) -> Result<Scenario, RunError> {
    let mut scenario = load_scenario(&config.scenario_path)?;
    if let Some(order) = config.max_order {
        if order > MAX_REFLECTION_ORDER {
            return Err(RunError::Config(format!(
                "max order must be in [0, {MAX_REFLECTION_ORDER}]"
            )));
        }
        scenario.radio.max_reflection_order = order;
    }
    if let Some(bw) = config.bandwidth {
        scenario.radio.bandwidth_hz = bw;
    }
    if let Some(n) = config.num_samples {
        scenario.radio.num_samples = n;
    }
    if let Some(cell) = config.grid_cell {
        if !(cell.is_finite() && cell > 0.0) {
            return Err(RunError::Config("grid cell must be > 0".into()));
        }
        let spec = scenario.grid_spec().with_cell_size(cell);
        scenario.grid.cell_size = spec.cell_size;
        scenario.grid.width = spec.width;
        scenario.grid.height = spec.height;
    }
    match config.decision {
        Decision::Threshold(t) if !(t >= 0.0) => {
            return Err(RunError::Config("threshold must be >= 0".into()))
        }
        Decision::CalibrateMargin(k) if !(k >= 0.0) => {
            return Err(RunError::Config("calibration margin must be >= 0".into()))
        }
        _ => {}
    }
    if let Some(noise) = config.noise {
        if !noise.power_dbm.is_finite() {
            return Err(RunError::Config("noise power must be finite".into()));
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Simulation and decision, without writing artifacts.
pub fn evaluate(scenario: &Scenario, config: &RunConfig) -> Result<(SensingRun, OccupancyReport), RunError> {
    let options = SimulationOptions {
        max_order: scenario.radio.max_reflection_order,
        noise: config.noise,
        ..SimulationOptions::for_scenario(scenario)
    };
    let run = run_sensing(scenario, &options)?;
    let threshold = match config.decision {
        Decision::Threshold(t) => t,
        Decision::CalibrateMargin(margin) => {
            let empty = run_empty_scene(scenario, &options)?;
            calibrate_threshold(&empty.heatmap, &scenario.lots, margin)?
        }
    };
    let scores = score_lots(&run.heatmap, &scenario.lots)?;
    let report = detect(
        &scores,
        threshold,
        run.heatmap.grid,
        &scenario.name,
        &scenario.content_hash(),
    )?;
    Ok((run, report))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Executes one run and writes its artifacts into `config.out_dir`.
///
/// Nothing is written if the scenario fails to load or validate, or if the
/// runtime budget is exceeded.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let scenario = prepare_scenario(config)?;
    let (sensing, report) = evaluate(&scenario, config)?;
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(budget) = config.max_seconds {
        if elapsed > budget {
            return Err(RunError::Budget { elapsed, budget });
        }
    }

    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("heatmap.csv");
    write_heatmap_csv(&sensing.heatmap, create(&path)?).map_err(io_err(&path))?;
    let path = out.join("heatmap.pgm");
    let scale = write_heatmap_pgm(&sensing.heatmap, create(&path)?).map_err(io_err(&path))?;
    let path = out.join("heatmap_scale.txt");
    write_pgm_sidecar(&sensing.heatmap, &scale, create(&path)?).map_err(io_err(&path))?;
    let path = out.join("report.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report)
        .map_err(std::io::Error::other)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;

    if config.dump_paths {
        let path = out.join("paths.json");
        write_paths_json(&scenario, &sensing.observed, create(&path)?).map_err(io_err(&path))?;
    }
    if config.dump_cir {
        let dir = out.join("cir");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (role, links) in [("observed", &sensing.observed), ("reference", &sensing.reference)] {
            for link in links.iter() {
                let name = format!(
                    "{}_{}_{role}.csv",
                    scenario.nodes[link.tx].id, scenario.nodes[link.rx].id
                );
                let path = dir.join(name);
                write_cir_csv(&link.sampled, create(&path)?).map_err(io_err(&path))?;
            }
        }
    }

    let footprints: Vec<_> = scenario.targets.iter().map(|t| t.footprint()).collect();
    let target_contrast = (!footprints.is_empty()).then(|| {
        let sigma = crate::sensing::default_kernel_sigma(scenario.radio.bandwidth_hz);
        footprint_contrast(&sensing.heatmap, &footprints, sigma).ratio()
    });
    Ok(RunSummary {
        scenario: scenario.name.clone(),
        bandwidth_hz: scenario.radio.bandwidth_hz,
        nodes: scenario.nodes.len(),
        truncated_taps: sensing.truncated_taps(),
        report,
        target_contrast,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One entry of a sweep manifest. Relative scenario paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    #[serde(default)]
    pub name: Option<String>,
    pub scenario: PathBuf,
    #[serde(default)]
    pub bandwidth_hz: Option<f64>,
    #[serde(default)]
    pub num_samples: Option<usize>,
    #[serde(default)]
    pub max_order: Option<usize>,
    #[serde(default)]
    pub grid_cell: Option<f64>,
    #[serde(default)]
    pub noise_dbm: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub calibrate_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub runs: Vec<ManifestRun>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest, RunError> {
    let manifest: Manifest = serde_json::from_str(text).map_err(|e| RunError::Manifest(e.to_string()))?;
    if manifest.runs.is_empty() {
        return Err(RunError::Manifest("manifest lists no runs".into()));
    }
    for (i, r) in manifest.runs.iter().enumerate() {
        if r.threshold.is_some() && r.calibrate_margin.is_some() {
            return Err(RunError::Manifest(format!(
                "run {i}: threshold and calibrate_margin are mutually exclusive"
            )));
        }
        if r.seed.is_some() && r.noise_dbm.is_none() {
            return Err(RunError::Manifest(format!("run {i}: seed given without noise_dbm")));
        }
    }
    Ok(manifest)
}

impl ManifestRun {
    pub fn label(&self, index: usize) -> String {
        let base = self.name.clone().unwrap_or_else(|| {
            self.scenario
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        });
        let safe: String = base
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{index:03}_{safe}")
    }

    pub fn to_config(&self, base_dir: &Path, out_dir: PathBuf) -> RunConfig {
        let decision = match (self.threshold, self.calibrate_margin) {
            (Some(t), _) => Decision::Threshold(t),
            (None, Some(k)) => Decision::CalibrateMargin(k),
            (None, None) => Decision::default(),
        };
        RunConfig {
            scenario_path: base_dir.join(&self.scenario),
            out_dir,
            max_order: self.max_order,
            grid_cell: self.grid_cell,
            bandwidth: self.bandwidth_hz,
            num_samples: self.num_samples,
            noise: self.noise_dbm.map(|power_dbm| NoiseConfig {
                power_dbm,
                seed: self.seed.unwrap_or(0),
            }),
            decision,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug)]
pub struct SweepEntry {
    pub label: String,
    pub scenario: String,
    pub result: Result<RunSummary, RunError>,
    pub wall_seconds: f64,
}

pub const SWEEP_HEADER: &str =
    "run,scenario,bandwidth_hz,nodes,lot,score,occupied,threshold,target_contrast,wall_seconds,error";

/// Runs every manifest entry; a failed run is recorded and the sweep goes on.
/// Each run's artifacts go to `out_dir/<label>/` and the table to
/// `out_dir/summary.csv`.
pub fn sweep(manifest: &Manifest, base_dir: &Path, out_dir: &Path) -> Result<Vec<SweepEntry>, RunError> {
    if manifest.runs.is_empty() {
        return Err(RunError::Manifest("manifest lists no runs".into()));
    }
    let entries: Vec<SweepEntry> = manifest
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let label = r.label(i);
            let config = r.to_config(base_dir, out_dir.join(&label));
            let started = Instant::now();
            let result = run(&config);
            SweepEntry {
                label,
                scenario: r.scenario.display().to_string(),
                result,
                wall_seconds: started.elapsed().as_secs_f64(),
            }
        })
        .collect();

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("summary.csv");
    let mut w = create(&path)?;
    write_summary(&entries, &mut w).map_err(io_err(&path))?;
    Ok(entries)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_summary<W: Write>(entries: &[SweepEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for e in entries {
        match &e.result {
            Ok(s) => {
                let contrast = s.target_contrast.map(fmt17).unwrap_or_default();
                let lots = &s.report.lots;
                if lots.is_empty() {
                    writeln!(
                        out,
                        "{},{},{},{},,,,{},{},{:.3},",
                        e.label,
                        csv_field(&e.scenario),
                        fmt17(s.bandwidth_hz),
                        s.nodes,
                        fmt17(s.report.threshold),
                        contrast,
                        e.wall_seconds
                    )?;
                }
                for lot in lots {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{:.3},",
                        e.label,
                        csv_field(&e.scenario),
                        fmt17(s.bandwidth_hz),
                        s.nodes,
                        csv_field(&lot.id),
                        fmt17(lot.score),
                        lot.occupied,
                        fmt17(s.report.threshold),
                        contrast,
                        e.wall_seconds
                    )?;
                }
            }
            Err(err) => writeln!(
                out,
                "{},{},,,,,,,,{:.3},{}",
                e.label,
                csv_field(&e.scenario),
                e.wall_seconds,
                csv_field(&err.to_string())
            )?,
        }
    }
    out.flush()
}
