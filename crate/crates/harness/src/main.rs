use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tbma_harness::config::{ExperimentConfig, Method, PointSelection};
use tbma_harness::plot::{plot_results, SeriesKey, XAxis};
use tbma_harness::report::{cluster_report, format_report};
use tbma_harness::run::{evaluate_loaded, run_method, write_run_dir};
use tbma_harness::sweep::{run_dir, sweep, SweepOptions};
use tbma_harness::{persist, HarnessError};

#[derive(Parser)]
#[command(name = "tbma", version, about = "Train, evaluate and sweep TBMA sensing systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PointArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Channel kind from the config's sweep axes.
    #[arg(long)]
    channel: Option<String>,
    /// Number of sensors.
    #[arg(long = "sensors", short = 'K')]
    sensors: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl PointArgs {
    fn selection(&self) -> PointSelection {
        PointSelection {
            channel: self.channel.clone(),
            sensors: self.sensors,
            snr_db: self.snr_db,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one protocol at one grid point and persist the artifacts.
    Train {
        #[command(flatten)]
        point: PointArgs,
        /// Protocol to run; the first one in the config by default.
        #[arg(long)]
        protocol: Option<String>,
        /// FC-IB-TBMA bin count, overriding the config.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a persisted model on a grid point of a config.
    Eval {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run every protocol over the config's grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also persist every trained system.
        #[arg(long)]
        save_models: bool,
        /// Worker threads; all cores by default.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Cluster the codewords of a persisted (Phase-I) model.
    ClusterReport {
        #[arg(long)]
        model: PathBuf,
        /// Thresholds to try; the distance deciles by default.
        #[arg(long = "gamma")]
        gammas: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Render a results CSV into one SVG per channel kind.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "K")]
        x: XAxis,
        #[arg(long, value_enum, default_value = "protocol")]
        series: SeriesKey,
        /// Output directory; next to the CSV by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            point,
            protocol,
            bins,
            out,
        } => {
            let config = load_config(&point.config)?;
            let method = match protocol {
                Some(name) => match Method::parse(&name) {
                    Some(m) => m,
                    None => bail!("unknown protocol `{name}`"),
                },
                None => config.protocols[0],
            };
            let grid_point = config.select_point(&point.selection())?;
            let run = run_method(&config, &grid_point, method, bins)?;
            let out = config.output_dir(out.as_deref());
            let dir = run_dir(&out, &config.name, &grid_point, method);
            write_run_dir(&dir, &config, &grid_point, &run)?;
            println!(
                "{} K={} snr_db={} seed={} mse={} stderr={}{}",
                method.name(),
                grid_point.sensors,
                grid_point.snr_db,
                grid_point.seed,
                run.mse.mse,
                run.mse.stderr,
                run.m_prime.map(|m| format!(" m_prime={m}")).unwrap_or_default()
            );
            println!("artifacts in {}", dir.display());
        }
        Command::Eval { point, model } => {
            let config = load_config(&point.config)?;
            let grid_point = config.select_point(&point.selection())?;
            let system = persist::load(&model)?;
            let mse = evaluate_loaded(&config, &grid_point, &system)?;
            println!("mse={} stderr={} samples={}", mse.mse, mse.stderr, mse.samples);
        }
        Command::Sweep {
            config,
            out,
            save_models,
            jobs,
        } => {
            let config = load_config(&config)?;
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let out = config.output_dir(out.as_deref());
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            let report = sweep(&config, &out, &SweepOptions { save_models })?;
            for s in &report.summary {
                println!(
                    "{:<11} {:<8} K={:<4} snr_db={:<6} mse={:.4e} se={:.1e}{}",
                    s.protocol,
                    s.channel,
                    s.sensors,
                    s.snr_db,
                    s.mse_mean,
                    s.mse_se,
                    s.m_prime_mean.map(|m| format!(" m_prime={m}")).unwrap_or_default()
                );
            }
            for f in &report.failures {
                eprintln!(
                    "failed: {} {} K={} snr_db={} seed={}: {}",
                    f.protocol, f.channel, f.sensors, f.snr_db, f.seed, f.error
                );
            }
            println!("wrote {}", report.results_path.display());
        }
        Command::ClusterReport { model, gammas, json } => {
            let system = persist::load(&model)?;
            let entries = cluster_report(&system, &gammas)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&entries)?);
            } else {
                print!("{}", format_report(&entries));
            }
            if entries.iter().any(|e| !e.valid) {
                bail!("invalid partition");
            }
        }
        Command::Plot { csv, x, series, out } => {
            let dir = out.unwrap_or_else(|| csv.parent().map(PathBuf::from).unwrap_or_default());
            for path in plot_results(&csv, &dir, x, series)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
