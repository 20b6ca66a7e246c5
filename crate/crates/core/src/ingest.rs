//! Reader for the global cumulative-confirmed CSV layout: four label columns
//! (province, country, latitude, longitude) followed by one column per day.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const LABEL_COLUMNS: [&str; 4] = ["Province/State", "Country/Region", "Lat", "Long"];
const DATE_FORMAT: &str = "%m/%d/%y";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRow {
    pub province: String,
    pub country: String,
    pub lat: String,
    pub long: String,
    pub counts: Vec<u64>,
}

/// A malformed data row that was left out of the snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSnapshot {
    pub path: PathBuf,
    pub dates: Vec<NaiveDate>,
    /// Date column headers exactly as read.
    pub date_labels: Vec<String>,
    pub rows: Vec<SnapshotRow>,
    pub diagnostics: Vec<Diagnostic>,
}

fn parse_date(label: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(label.trim(), DATE_FORMAT).ok()
}

pub fn load_snapshot(path: &Path) -> Result<RawSnapshot> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
    parse_snapshot(&text, path)
}

/// Parses snapshot text; `path` is only recorded for messages.
pub fn parse_snapshot(text: &str, path: &Path) -> Result<RawSnapshot> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let labels: Vec<&str> = header.iter().take(4).map(str::trim).collect();
    if labels != LABEL_COLUMNS {
        return Err(Error::HeaderMismatch(format!(
            "expected leading columns {:?}, found {:?}",
            LABEL_COLUMNS, labels
        )));
    }
    let date_labels: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    if date_labels.is_empty() {
        return Err(Error::HeaderMismatch("no date columns".into()));
    }
    let mut dates = Vec::with_capacity(date_labels.len());
    for label in &date_labels {
        let date = parse_date(label)
            .ok_or_else(|| Error::HeaderMismatch(format!("unrecognised date column {label:?}")))?;
        if let Some(prev) = dates.last() {
            if date != *prev + chrono::Duration::days(1) {
                return Err(Error::HeaderMismatch(format!(
                    "date columns not contiguous: {prev} followed by {date}"
                )));
            }
        }
        dates.push(date);
    }

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                diagnostics.push(Diagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            diagnostics.push(Diagnostic {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
            continue;
        }
        let mut counts = Vec::with_capacity(dates.len());
        let mut bad = None;
        for (label, cell) in date_labels.iter().zip(record.iter().skip(4)) {
            match cell.trim().parse::<u64>() {
                Ok(v) => counts.push(v),
                Err(_) => {
                    bad = Some(format!("column {label}: {cell:?} is not a nonnegative integer"));
                    break;
                }
            }
        }
        if let Some(message) = bad {
            diagnostics.push(Diagnostic { line, message });
            continue;
        }
        rows.push(SnapshotRow {
            province: record[0].to_string(),
            country: record[1].to_string(),
            lat: record[2].to_string(),
            long: record[3].to_string(),
            counts,
        });
    }
    Ok(RawSnapshot {
        path: path.to_path_buf(),
        dates,
        date_labels,
        rows,
        diagnostics,
    })
}

impl RawSnapshot {
    /// Country names in first-appearance order, without duplicates.
    pub fn countries(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        self.rows
            .iter()
            .map(|r| r.country.as_str())
            .filter(|c| seen.insert(*c))
            .collect()
    }

    /// Elementwise integer sum of every province row of `region_id`.
    pub fn country_counts(&self, region_id: &str) -> Result<Vec<u64>> {
        let mut total: Option<Vec<u64>> = None;
        for row in self.rows.iter().filter(|r| r.country == region_id) {
            let acc = total.get_or_insert_with(|| vec![0; self.dates.len()]);
            for (a, v) in acc.iter_mut().zip(&row.counts) {
                *a = a
                    .checked_add(*v)
                    .ok_or_else(|| Error::InvalidSeries(format!("count overflow in {region_id}")))?;
            }
        }
        total.ok_or_else(|| Error::UnknownRegion {
            name: region_id.to_string(),
            suggestion: self.suggest(region_id),
        })
    }

    fn suggest(&self, name: &str) -> Option<String> {
        let lower = name.to_lowercase();
        self.countries()
            .into_iter()
            .map(|c| (strsim::jaro_winkler(&lower, &c.to_lowercase()), c))
            .filter(|(score, _)| *score > 0.7)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c.to_string())
    }

    /// Writes the snapshot back in the same layout.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = LABEL_COLUMNS.to_vec();
        header.extend(self.date_labels.iter().map(String::as_str));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.province.clone(), row.country.clone(), row.lat.clone(), row.long.clone()];
            rec.extend(row.counts.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices `i` with `values[i] < values[i - 1]`.
pub fn monotonicity_violations(values: &[u64]) -> Vec<usize> {
    (1..values.len()).filter(|&i| values[i] < values[i - 1]).collect()
}

/// Replaces every decrease with the preceding value.
pub fn repair_monotone(values: &mut [u64]) {
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
}

/// National cumulative series for `region_id`. Decreasing counts are logged
/// as a warning and, with `repair`, flattened to the previous value.
pub fn country_series(snapshot: &RawSnapshot, region_id: &str, repair: bool) -> Result<TimeSeries> {
    let mut counts = snapshot.country_counts(region_id)?;
    let violations = monotonicity_violations(&counts);
    if !violations.is_empty() {
        warn!(
            "{region_id}: cumulative counts decrease on {} day(s), first at {}{}",
            violations.len(),
            snapshot.dates[violations[0]],
            if repair { " (repaired)" } else { "" }
        );
        if repair {
            repair_monotone(&mut counts);
        }
    }
    TimeSeries::new(region_id, snapshot.dates[0], counts.iter().map(|&c| c as f64).collect())
}

/// Series for several regions keyed by id.
pub fn country_map(snapshot: &RawSnapshot, regions: &[String], repair: bool) -> Result<BTreeMap<String, TimeSeries>> {
    regions
        .iter()
        .map(|r| Ok((r.clone(), country_series(snapshot, r, repair)?)))
        .collect()
}
