//! Glue between a [`RunConfig`] and the pipeline: data loading, manifests,
//! run execution and process exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::{RunConfig, DEFAULT_HOLDOUT_REGIONS, DEFAULT_TRAIN_REGIONS};
use crate::error::{Error, Result};
use crate::ingest::{country_series, load_snapshot};
use crate::pipeline::{run_pipeline, PipelineData, RunReport};
use crate::report::{sha256_file, sha256_hex, write_run_dir, SMAPE_SPACE};
use crate::series::TimeSeries;
use crate::synth::{generate, CurveFile, Role};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::UnreadableFile { .. }
        | Error::HeaderMismatch(_)
        | Error::UnknownRegion { .. }
        | Error::SeriesTooShort { .. }
        | Error::InvalidSpec(_)
        | Error::InvalidSeries(_)
        | Error::Csv(_) => EXIT_DATA,
        _ => EXIT_PIPELINE,
    }
}

/// Every series the config can reach, keyed by region id, plus the data
/// file and its SHA-256.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub source: PathBuf,
    pub checksum: String,
    pub series: BTreeMap<String, TimeSeries>,
    pub train: Vec<String>,
    pub holdout: Vec<String>,
}

impl LoadedData {
    pub fn get(&self, region: &str) -> Result<&TimeSeries> {
        self.series.get(region).ok_or_else(|| Error::UnknownRegion {
            name: region.to_string(),
            suggestion: self
                .series
                .keys()
                .map(|k| (strsim::jaro_winkler(&region.to_lowercase(), &k.to_lowercase()), k))
                .filter(|(s, _)| *s > 0.7)
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, k)| k.clone()),
        })
    }

    pub fn pipeline_data(&self) -> Result<PipelineData> {
        let pick = |ids: &[String]| ids.iter().map(|r| self.get(r).cloned()).collect::<Result<Vec<_>>>();
        PipelineData::new(pick(&self.train)?, pick(&self.holdout)?)
    }
}

fn truncate(series: TimeSeries, cfg: &RunConfig) -> Result<TimeSeries> {
    match cfg.end_date {
        Some(end) if end < series.end() => series.truncate_to(end),
        _ => Ok(series),
    }
}

/// Loads the snapshot or synthetic curves named by `cfg`. For a snapshot
/// only the configured regions are materialised; `extra` adds more.
pub fn load_data(cfg: &RunConfig, extra: &[String]) -> Result<LoadedData> {
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    if let Some(path) = &cfg.synthetic {
        let file = CurveFile::load(path)?;
        let checksum = sha256_file(path)?;
        let mut series = BTreeMap::new();
        for c in &file.curves {
            series.insert(c.region.clone(), truncate(generate(c)?, cfg)?);
        }
        let train = cfg.train_regions.clone().unwrap_or_else(|| file.regions(Role::Train));
        let holdout = cfg.holdout_regions.clone().unwrap_or_else(|| file.regions(Role::Holdout));
        return Ok(LoadedData {
            source: path.clone(),
            checksum,
            series,
            train,
            holdout,
        });
    }
    let path = cfg
        .snapshot
        .as_ref()
        .ok_or_else(|| Error::Config("one of `snapshot` or `synthetic` is required".into()))?;
    let snapshot = load_snapshot(path)?;
    for d in &snapshot.diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    let checksum = sha256_file(path)?;
    let train = cfg.train_regions.clone().unwrap_or_else(|| owned(&DEFAULT_TRAIN_REGIONS));
    let holdout = cfg.holdout_regions.clone().unwrap_or_else(|| owned(&DEFAULT_HOLDOUT_REGIONS));
    let mut series = BTreeMap::new();
    for r in train.iter().chain(&holdout).chain(extra) {
        if !series.contains_key(r) {
            series.insert(r.clone(), truncate(country_series(&snapshot, r, cfg.repair_monotone)?, cfg)?);
        }
    }
    Ok(LoadedData {
        source: path.clone(),
        checksum,
        series,
        train,
        holdout,
    })
}

/// The config as recorded in a run directory: the output location is left
/// out so identical runs written to different places match byte for byte.
pub fn recorded_config(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::from(".");
    c.jobs = None;
    c.to_toml()
}

pub fn manifest(cfg: &RunConfig, data: &LoadedData) -> Result<Vec<(String, String)>> {
    let mut hs = cfg.horizons.clone();
    hs.sort_unstable();
    let join = |v: Vec<String>, sep: &str| v.join(sep);
    let config_text = recorded_config(cfg)?;
    Ok(vec![
        ("format_version".into(), "1".into()),
        ("fwstack_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("smape_space".into(), SMAPE_SPACE.into()),
        ("horizons".into(), join(hs.iter().map(|h| h.to_string()).collect(), " ")),
        ("n_runs".into(), cfg.n_runs.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        (
            "run_seeds".into(),
            join((0..cfg.n_runs).map(|r| (cfg.seed + r as u64).to_string()).collect(), " "),
        ),
        (
            "data_source".into(),
            if cfg.synthetic.is_some() { "synthetic" } else { "snapshot" }.into(),
        ),
        (
            "data_file".into(),
            data.source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        ),
        ("data_sha256".into(), data.checksum.clone()),
        ("config_sha256".into(), sha256_hex(config_text.as_bytes())),
        ("train_regions".into(), data.train.join(";")),
        ("holdout_regions".into(), data.holdout.join(";")),
    ])
}

/// Validates, loads, runs and writes a full report to `cfg.output_dir`.
pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = load_data(cfg, &[])?;
    let pdata = data.pipeline_data()?;
    let entries = manifest(cfg, &data)?;
    info!(
        "running {} training and {} holdout regions, horizons {:?}, {} run(s)",
        pdata.train.len(),
        pdata.holdout.len(),
        cfg.horizons,
        cfg.n_runs
    );
    let report = run_pipeline(cfg, &pdata)?;
    write_run_dir(&report, &entries, &cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("config.toml"), recorded_config(cfg)?)?;
    Ok(report)
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
