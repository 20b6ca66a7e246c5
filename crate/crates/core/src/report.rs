//! Run directory layout: writing a finished [`RunReport`] and rendering text
//! tables and plot data from a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::forecast::ModelKind;
use crate::pipeline::{HorizonReport, Method, RunReport};

pub const SMAPE_SPACE: &str = "transformed (Box-Cox, then trailing moving average)";
pub const MANIFEST: &str = "manifest.csv";
pub const LEADERBOARD: &str = "leaderboard.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// File-name-safe form of a region id.
pub fn file_stem(region: &str) -> String {
    region
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn write_manifest(dir: &Path, entries: &[(String, String)], status: &str) -> Result<()> {
    let mut w = csv_writer(&dir.join(MANIFEST))?;
    w.write_record(["key", "value"])?;
    for (k, v) in entries {
        w.write_record([k, v])?;
    }
    w.write_record(["status", status])?;
    w.flush()?;
    Ok(())
}

fn method_header(first: &[&str]) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain(Method::ALL.iter().map(|m| m.name().to_string()))
        .collect()
}

/// Writes every report file into `dir`. `manifest` entries are recorded as
/// given; the manifest is marked final only after everything else is on disk.
pub fn write_run_dir(report: &RunReport, manifest: &[(String, String)], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_manifest(dir, manifest, "running")?;

    // leaderboard
    let mut text = format!("# smape_space: {SMAPE_SPACE}\n");
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(report.horizons.iter().map(|h| format!("h{}", h.horizon)));
        w.write_record(&header)?;
        for m in Method::ALL {
            let mut rec = vec![m.name().to_string()];
            rec.extend(report.horizons.iter().map(|h| h.leaderboard[&m].to_string()));
            w.write_record(&rec)?;
        }
        text.push_str(std::str::from_utf8(&w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf8"));
    }
    fs::write(dir.join(LEADERBOARD), text)?;

    let mut raw = csv_writer(&dir.join("raw_scores.csv"))?;
    raw.write_record(["horizon", "run", "seed", "method", "smape"])?;
    let mut sel = csv_writer(&dir.join("selection.csv"))?;
    let mut sel_header = vec![
        "horizon", "run", "seed", "base_1", "base_2", "feature_1", "feature_2",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    sel_header.extend(ModelKind::ALL.iter().map(|k| format!("d_smape_{}", k.label())));
    sel_header.extend(Feature::ALL.iter().map(|f| format!("mean_abs_rho_{}", f.label())));
    sel.write_record(&sel_header)?;
    let mut failures = csv_writer(&dir.join("failures.csv"))?;
    failures.write_record(["horizon", "run", "region", "window_start", "stage", "message"])?;

    for hr in &report.horizons {
        let h = hr.horizon;
        for run in &hr.runs {
            for m in Method::ALL {
                raw.write_record([
                    h.to_string(),
                    run.run.to_string(),
                    run.seed.to_string(),
                    m.name().to_string(),
                    run.leaderboard[&m].to_string(),
                ])?;
            }
            let mut rec = vec![
                h.to_string(),
                run.run.to_string(),
                run.seed.to_string(),
                run.base_pair[0].label().to_string(),
                run.base_pair[1].label().to_string(),
                run.feature_pair[0].label().to_string(),
                run.feature_pair[1].label().to_string(),
            ];
            rec.extend(ModelKind::ALL.iter().map(|k| run.d_means[k].to_string()));
            let abs: BTreeMap<Feature, f64> = run.score_table.mean_abs_by_feature().into_iter().collect();
            rec.extend(Feature::ALL.iter().map(|f| abs[f].to_string()));
            sel.write_record(&rec)?;
        }
        for f in &hr.failures {
            failures.write_record([
                f.horizon.to_string(),
                f.run.map(|r| r.to_string()).unwrap_or_default(),
                f.region.clone(),
                f.window_start.map(|d| d.to_string()).unwrap_or_default(),
                f.stage.clone(),
                f.message.clone(),
            ])?;
        }
        write_horizon(hr, dir)?;
    }
    raw.flush()?;
    sel.flush()?;
    failures.flush()?;
    write_manifest(dir, manifest, "final")
}

fn write_horizon(hr: &HorizonReport, dir: &Path) -> Result<()> {
    let h = hr.horizon;
    let mut w = csv_writer(&dir.join(format!("scores_h{h}.csv")))?;
    let mut header = vec!["model".to_string()];
    header.extend(hr.score_table.features.iter().map(|f| f.label().to_string()));
    w.write_record(&header)?;
    for m in &hr.score_table.models {
        let mut rec = vec![m.label().to_string()];
        for f in &hr.score_table.features {
            let v = hr.score_table.get(*m, *f).expect("cell present");
            rec.push(format!("{v:.2}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(format!("windows_h{h}.csv")))?;
    let mut header: Vec<String> = ["run", "region", "window_start", "cv", "svde", "kpss", "acf1"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend(ModelKind::ALL.iter().map(|k| format!("smape_{}", k.label())));
    w.write_record(&header)?;
    for run in &hr.runs {
        for win in &run.windows {
            let mut rec = vec![run.run.to_string(), win.region.clone(), win.window_start.to_string()];
            rec.extend(win.features.to_array().iter().map(f64::to_string));
            rec.extend(ModelKind::ALL.iter().map(|k| win.smape[k].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(format!("meta_rows_h{h}.csv")))?;
    w.write_record(["run", "region", "window_start", "step", "f1", "f2", "feature_1", "feature_2", "target"])?;
    for run in &hr.runs {
        for r in &run.meta_rows {
            let mut rec = vec![run.run.to_string(), r.region.clone(), r.window_start.to_string(), r.step.to_string()];
            rec.extend(r.inputs.iter().map(f64::to_string));
            rec.push(r.target.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(format!("raw_forecasts_h{h}.csv")))?;
    w.write_record(method_header(&["run", "region", "step", "target"]))?;
    for run in &hr.runs {
        for f in &run.holdout {
            for (step, target) in f.target.iter().enumerate() {
                let mut rec = vec![run.run.to_string(), f.region.clone(), step.to_string(), target.to_string()];
                rec.extend(Method::ALL.iter().map(|m| f.forecasts[m][step].to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;

    for rf in &hr.forecasts {
        let stem = file_stem(&rf.region);
        let mut w = csv_writer(&dir.join("forecasts").join(format!("{stem}_h{h}.csv")))?;
        w.write_record(method_header(&["date", "actual"]))?;
        for (i, date) in rf.dates.iter().enumerate() {
            let mut rec = vec![date.to_string(), rf.actual[i].to_string()];
            rec.extend(Method::ALL.iter().map(|m| rf.forecasts[m][i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let mut w = csv_writer(&dir.join("history").join(format!("{stem}_h{h}.csv")))?;
        w.write_record(["date", "actual"])?;
        for (date, v) in rf.history.dates().zip(rf.history.values()) {
            w.write_record([date.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }

    let models = dir.join("models");
    fs::create_dir_all(&models)?;
    for run in &hr.runs {
        run.stacking.save(&models.join(format!("h{h}_run{}_stacking.json", run.run)))?;
        run.feature_weighted
            .save(&models.join(format!("h{h}_run{}_feature_weighted.json", run.run)))?;
    }
    Ok(())
}

/// Reads `manifest.csv` into key/value pairs.
pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::IncompleteRun(format!("{} is missing", path.display())));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        out.insert(rec[0].to_string(), rec.get(1).unwrap_or("").to_string());
    }
    Ok(out)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if !path.exists() {
        return Err(Error::IncompleteRun(format!("{} is missing", path.display())));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

fn text_table(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(out, "{}", width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out.push('\n');
}

/// Renders `report/tables.txt` and `report/plot_<region>_h<h>.csv` from a
/// finished run directory. Returns the files written.
pub fn render_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(dir)?;
    if manifest.get("status").map(String::as_str) != Some("final") {
        return Err(Error::IncompleteRun(format!("{} is not marked final", dir.join(MANIFEST).display())));
    }
    let horizons: Vec<usize> = manifest
        .get("horizons")
        .ok_or_else(|| Error::IncompleteRun("manifest lacks horizons".into()))?
        .split_whitespace()
        .map(|h| h.parse().map_err(|_| Error::IncompleteRun(format!("bad horizon {h:?}"))))
        .collect::<Result<_>>()?;

    let out_dir = dir.join("report");
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    let mut text = String::new();

    for &h in &horizons {
        let (header, rows) = read_table(&dir.join(format!("scores_h{h}.csv")))?;
        let mut header = header;
        header[0] = String::new();
        text_table(&mut text, &format!("Spearman rank correlation, {h}-day forecasts"), &header, &rows);
    }

    let (header, rows) = read_table(&dir.join(LEADERBOARD))?;
    let mut lb_header = vec![String::new()];
    lb_header.extend(header.iter().skip(1).map(|c| format!("{} Days", c.trim_start_matches('h'))));
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|r| {
            let mut out = vec![r[0].clone()];
            out.extend(r.iter().skip(1).map(|v| match v.parse::<f64>() {
                Ok(x) => format!("{x:.3}"),
                Err(_) => v.clone(),
            }));
            out
        })
        .collect();
    text_table(&mut text, &format!("sMAPE, {SMAPE_SPACE} space"), &lb_header, &rows);

    let (sel_header, sel_rows) = read_table(&dir.join("selection.csv"))?;
    let keep: Vec<usize> = (0..7).collect();
    let sel_rows: Vec<Vec<String>> = sel_rows.iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect();
    let sel_header: Vec<String> = keep.iter().map(|&i| sel_header[i].clone()).collect();
    text_table(&mut text, "Selections per run", &sel_header, &sel_rows);

    let tables = out_dir.join("tables.txt");
    fs::write(&tables, text)?;
    written.push(tables);

    let forecasts = dir.join("forecasts");
    let mut entries: Vec<PathBuf> = match fs::read_dir(&forecasts) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => return Err(Error::IncompleteRun(format!("{} is missing", forecasts.display()))),
    };
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let (fh, frows) = read_table(&path)?;
        let (_, hrows) = read_table(&dir.join("history").join(&name))?;
        let mut w = csv_writer(&out_dir.join(format!("plot_{name}")))?;
        w.write_record(&fh)?;
        for r in &hrows {
            let mut rec = r.clone();
            rec.resize(fh.len(), String::new());
            w.write_record(&rec)?;
        }
        for r in &frows {
            w.write_record(r)?;
        }
        w.flush()?;
        written.push(out_dir.join(format!("plot_{name}")));
    }
    Ok(written)
}
