use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raysense::pipeline::NoiseConfig;
use raysense::runner::{self, Decision, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "raysense", version, about = "Ray-traced multipath sensing simulator")]
struct Cli {
    /// Worker threads for per-link simulation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write heatmap and occupancy artifacts.
    Run(RunArgs),
    /// Run every entry of a manifest and write a summary table.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_order: Option<usize>,
    /// Grid cell size in meters; the grid extent is kept.
    #[arg(long)]
    grid_cell: Option<f64>,
    /// Receiver noise power per sample in dBm (enables TX power scaling).
    #[arg(long, requires = "seed", allow_negative_numbers = true)]
    noise_dbm: Option<f64>,
    #[arg(long, requires = "noise_dbm")]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "calibrate_margin")]
    threshold: Option<f64>,
    /// Threshold = margin x highest lot score of the empty scene (default 3).
    #[arg(long)]
    calibrate_margin: Option<f64>,
    #[arg(long)]
    dump_paths: bool,
    #[arg(long)]
    dump_cir: bool,
    /// Fail with exit status 2 if the run takes longer than this.
    #[arg(long)]
    max_seconds: Option<f64>,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        let decision = match (self.threshold, self.calibrate_margin) {
            (Some(t), _) => Decision::Threshold(t),
            (None, Some(k)) => Decision::CalibrateMargin(k),
            (None, None) => Decision::default(),
        };
        RunConfig {
            scenario_path: self.scenario,
            out_dir: self.out,
            max_order: self.max_order,
            grid_cell: self.grid_cell,
            noise: self.noise_dbm.map(|power_dbm| NoiseConfig {
                power_dbm,
                seed: self.seed.unwrap_or(0),
            }),
            decision,
            dump_paths: self.dump_paths,
            dump_cir: self.dump_cir,
            max_seconds: self.max_seconds,
            ..RunConfig::default()
        }
    }
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run(args) => {
            let summary = runner::run(&args.into_config())?;
            let occupied = summary.report.lots.iter().filter(|l| l.occupied).count();
            println!(
                "{}: {} nodes, {} lots, {} occupied (threshold {:e}), {:.2} s",
                summary.scenario,
                summary.nodes,
                summary.report.lots.len(),
                occupied,
                summary.report.threshold,
                summary.wall_seconds
            );
            if summary.truncated_taps > 0 {
                log::warn!("{} taps fell outside the sample window", summary.truncated_taps);
            }
        }
        Command::Sweep { manifest, out } => {
            let text = std::fs::read_to_string(&manifest).map_err(|source| RunError::Io {
                path: manifest.display().to_string(),
                source,
            })?;
            let parsed = runner::parse_manifest(&text)?;
            let base = manifest.parent().map(PathBuf::from).unwrap_or_default();
            let entries = runner::sweep(&parsed, &base, &out)?;
            for e in &entries {
                match &e.result {
                    Ok(_) => println!("{}: ok ({:.2} s)", e.label, e.wall_seconds),
                    Err(err) => println!("{}: failed: {err}", e.label),
                }
            }
            println!("summary written to {}", out.join("summary.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit 1 like other input errors; 2 is reserved for budget
    // violations.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
