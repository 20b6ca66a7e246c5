use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::Duration;
use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use fwstack::app::{execute, exit_code, load_data};
use fwstack::config::RunConfig;
use fwstack::ensemble::EnsembleBundle;
use fwstack::features::extract;
use fwstack::forecast::ModelKind;
use fwstack::ingest::{load_snapshot, monotonicity_violations};
use fwstack::pipeline::{aligned_splits, forecast_input, prepare_d, prepare_input, stacked_forecast, PreparedInput};
use fwstack::report::render_report;
use fwstack::series::{TimeSeries, WINDOW_LEN};
use fwstack::{Error, Result};

#[derive(Parser)]
#[command(name = "fwstack", version, about = "Feature-weighted stacking for cumulative case curves")]
struct Cli {
    /// Log progress to stderr (-vv for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a snapshot and report per-region problems.
    IngestCheck {
        snapshot: PathBuf,
        /// Regions to check; all countries when omitted.
        #[arg(long = "region")]
        regions: Vec<String>,
    },
    /// Print the meta-features of every training window of a region.
    Features {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        region: String,
        /// Defaults to the first configured horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Forecast past the end of a region's series.
    Forecast {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        region: String,
        /// Base model: arima, hw, prophet or lstm.
        #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
        model: Option<ModelKind>,
        /// Saved ensemble model file.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Defaults to the bundle's horizon, or 7.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full experiment and write a run directory.
    Run {
        /// Run config; defaults apply when omitted.
        config: Option<PathBuf>,
        /// Snapshot CSV replacing the config's data source.
        #[arg(long, conflicts_with = "synthetic")]
        snapshot: Option<PathBuf>,
        /// Synthetic curve file replacing the config's data source.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long = "horizon")]
        horizons: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        n_runs: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Comma-separated training regions.
        #[arg(long, value_delimiter = ',')]
        train: Option<Vec<String>>,
        /// Comma-separated holdout regions.
        #[arg(long, value_delimiter = ',')]
        holdout: Option<Vec<String>>,
    },
    /// Render tables and plots for a finished run directory.
    Report { run_dir: PathBuf },
}

#[derive(Args)]
struct Source {
    /// Run config naming the data source.
    #[arg(long, conflicts_with_all = ["snapshot", "synthetic"])]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "synthetic")]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<PathBuf>,
}

impl Source {
    fn config(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig {
                snapshot: self.snapshot.clone(),
                synthetic: self.synthetic.clone(),
                ..RunConfig::default()
            },
        };
        if cfg.snapshot.is_none() && cfg.synthetic.is_none() {
            return Err(Error::Config("pass --config, --snapshot or --synthetic".into()));
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

/// Preprocessed input window at the end of `series`, with lambda estimated
/// on the last two windows as for a holdout forecast.
fn latest_input(series: &TimeSeries, smoothing_window: usize) -> Result<PreparedInput> {
    let len = (2 * WINDOW_LEN).min(series.len());
    prepare_input(&series.slice(series.len() - len, len)?, WINDOW_LEN, smoothing_window)
}

fn dispatch(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::IngestCheck { snapshot, regions } => {
            let snap = load_snapshot(&snapshot)?;
            writeln!(
                out,
                "{}: {} rows, {} dates ({}..{}), {} countries",
                snapshot.display(),
                snap.rows.len(),
                snap.dates.len(),
                snap.dates.first().map(|d| d.to_string()).unwrap_or_default(),
                snap.dates.last().map(|d| d.to_string()).unwrap_or_default(),
                snap.countries().len()
            )?;
            for d in &snap.diagnostics {
                writeln!(out, "line {}: {}", d.line, d.message)?;
            }
            let names = if regions.is_empty() {
                snap.countries().into_iter().map(String::from).collect()
            } else {
                regions
            };
            let mut problems = 0;
            for r in &names {
                let counts = snap.country_counts(r)?;
                let v = monotonicity_violations(&counts);
                if !v.is_empty() {
                    problems += 1;
                    writeln!(out, "{r}: {} decreasing step(s), first at {}", v.len(), snap.dates[v[0]])?;
                }
            }
            writeln!(out, "{problems} region(s) with decreasing counts")?;
        }
        Command::Features {
            source,
            region,
            horizon,
            stride,
        } => {
            let cfg = source.config()?;
            let horizon = horizon.unwrap_or(cfg.horizons[0]);
            let data = load_data(&cfg, std::slice::from_ref(&region))?;
            let sets = aligned_splits(data.get(&region)?, horizon, stride.unwrap_or(cfg.stride))?;
            writeln!(out, "region,window,window_start,lambda,cv,svd_entropy,kpss,acf1")?;
            for (i, s) in sets.iter().enumerate() {
                let p = prepare_d(s, cfg.smoothing_window)?;
                let f = extract(&p.input)?;
                writeln!(
                    out,
                    "{region},{i},{},{},{},{},{},{}",
                    s.window_a.start(),
                    p.params.lambda,
                    f.cv,
                    f.svd_entropy,
                    f.kpss,
                    f.acf1
                )?;
            }
        }
        Command::Forecast {
            source,
            region,
            model,
            bundle,
            horizon,
            seed,
        } => {
            let cfg = source.config()?;
            let data = load_data(&cfg, std::slice::from_ref(&region))?;
            let series = data.get(&region)?;
            let p = latest_input(series, cfg.smoothing_window)?;
            let forecast = match (model, bundle) {
                (Some(kind), _) => forecast_input(&cfg, kind, seed, &p.input, horizon.unwrap_or(7))?,
                (None, Some(path)) => {
                    let b = EnsembleBundle::load(&path)?;
                    let h = horizon.unwrap_or(b.horizon);
                    let [m1, m2] = b.base_pair;
                    let f1 = forecast_input(&cfg, m1, seed, &p.input, h)?;
                    let f2 = forecast_input(&cfg, m2, seed, &p.input, h)?;
                    stacked_forecast(&b, &p.input, &f1, &f2, &extract(&p.input)?)?
                }
                (None, None) => return Err(Error::Config("pass --model or --bundle".into())),
            };
            writeln!(out, "date,forecast")?;
            for (i, v) in forecast.iter().enumerate() {
                let date = series.end() + Duration::days(i as i64 + 1);
                writeln!(out, "{date},{}", p.params.inverse_clamped(*v))?;
            }
        }
        Command::Run {
            config,
            snapshot,
            synthetic,
            horizons,
            seed,
            stride,
            n_runs,
            jobs,
            output,
            train,
            holdout,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            if snapshot.is_some() || synthetic.is_some() {
                cfg.snapshot = snapshot;
                cfg.synthetic = synthetic;
            }
            if !horizons.is_empty() {
                cfg.horizons = horizons;
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.stride = stride.unwrap_or(cfg.stride);
            cfg.n_runs = n_runs.unwrap_or(cfg.n_runs);
            cfg.jobs = jobs.or(cfg.jobs);
            cfg.output_dir = output.unwrap_or(cfg.output_dir);
            cfg.train_regions = train.or(cfg.train_regions);
            cfg.holdout_regions = holdout.or(cfg.holdout_regions);
            let report = execute(&cfg)?;
            for h in &report.horizons {
                let board: Vec<String> = h.leaderboard.iter().map(|(m, v)| format!("{}={v:.3}", m.name())).collect();
                writeln!(out, "h={}: {}", h.horizon, board.join(" "))?;
            }
            writeln!(out, "wrote {}", cfg.output_dir.display())?;
        }
        Command::Report { run_dir } => {
            render_report(&run_dir)?;
            writeln!(out, "wrote {}", run_dir.join("report").display())?;
        }
    }
    Ok(())
}
