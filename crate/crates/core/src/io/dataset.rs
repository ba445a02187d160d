//! Wide-CSV time-series ingestion and serialization.
//!
//! Schema: UTF-8, comma-separated, LF line endings, `.` decimal point.
//! Header `timestamp,aggregate,<name>,...` (or without the aggregate
//! column), then one row per step. Timestamps are epoch seconds, strictly
//! increasing and uniformly spaced at an interval dividing a day. Values
//! are non-negative watt-hours per interval, written with however many
//! digits reproduce the exact binary value, so write -> read round trips
//! bit-for-bit. Missing or malformed cells fail the parse; nothing is
//! imputed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LabeledDataset;
use crate::model::{AggregateSeries, ApplianceMatrix, SamplingSpec, SECONDS_PER_DAY};

use super::write_atomic;

/// Schema tag carried by dataset manifests.
pub const DATA_SCHEMA: &str = "disagg-data/1";

/// Where a household's day starts: a step-of-day index, or an RFC-3339
/// timestamp the index is derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Step(usize),
    Timestamp(String),
}

impl StartSpec {
    /// The step-of-day index this value names under `interval_seconds`.
    pub fn start_step(&self, interval_seconds: u32) -> Result<usize> {
        match self {
            StartSpec::Step(s) => Ok(*s),
            StartSpec::Timestamp(text) => {
                let ts = chrono::DateTime::parse_from_rfc3339(text).map_err(|e| {
                    Error::InvalidParameter(format!("start timestamp {text:?}: {e}"))
                })?;
                let epoch = ts.timestamp();
                if epoch < 0 {
                    return Err(Error::InvalidParameter(format!(
                        "start timestamp {text:?} predates the epoch"
                    )));
                }
                step_of_day(epoch, i64::from(interval_seconds)).map_err(|msg| {
                    Error::InvalidParameter(format!("start timestamp {text:?}: {msg}"))
                })
            }
        }
    }
}

/// Sidecar metadata for one household's trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub household_id: String,
    pub interval_seconds: u32,
    pub bins_per_day: usize,
    pub appliance_names: Vec<String>,
    /// The wide CSV holding both the aggregate and the appliance traces,
    /// relative to the manifest's directory.
    pub data_file: String,
    pub start: StartSpec,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.schema != DATA_SCHEMA {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: format!("schema {:?}, expected {DATA_SCHEMA:?}", m.schema),
            });
        }
        if m.household_id.is_empty() {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: "household_id is empty".into(),
            });
        }
        Ok(m)
    }
}

fn step_of_day(epoch: i64, interval: i64) -> std::result::Result<usize, String> {
    if epoch % interval != 0 {
        return Err(format!(
            "epoch second {epoch} is not aligned to the {interval}s interval"
        ));
    }
    Ok(((epoch % i64::from(SECONDS_PER_DAY)) / interval) as usize)
}

/// A parsed wide CSV before any model-facing interpretation.
struct RawTable {
    /// Column names after `timestamp`.
    columns: Vec<String>,
    /// `values[c][t]` for column `c`.
    values: Vec<Vec<f64>>,
    interval_seconds: u32,
    start_step: usize,
}

fn bad(path: &Path, line: usize, msg: String) -> Error {
    Error::DataFormat {
        path: path.display().to_string(),
        line,
        msg,
    }
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => bad(path, 0, format!("{other:?}")),
        })?;

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(bad(path, 1, "file is empty".into())),
        Some(r) => r.map_err(|e| bad(path, 1, e.to_string()))?,
    };
    if header.get(0) != Some("timestamp") {
        return Err(bad(
            path,
            1,
            format!(
                "first column is {:?}, expected \"timestamp\"",
                header.get(0).unwrap_or_default()
            ),
        ));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(bad(path, 1, "no value columns after timestamp".into()));
    }
    for (i, name) in columns.iter().enumerate() {
        if name.is_empty() {
            return Err(bad(path, 1, format!("column {} has an empty name", i + 2)));
        }
        if name == "timestamp" || columns[..i].contains(name) {
            return Err(bad(path, 1, format!("duplicate column name {name:?}")));
        }
    }

    let width = columns.len() + 1;
    let mut times: Vec<i64> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for record in records {
        let record = record.map_err(|e| bad(path, 0, e.to_string()))?;
        let line = record_line(&record);
        if record.len() != width {
            return Err(bad(
                path,
                line,
                format!("row has {} fields, expected {width}", record.len()),
            ));
        }
        let ts_text = record.get(0).unwrap();
        let ts: i64 = ts_text.parse().map_err(|_| {
            bad(path, line, format!("timestamp {ts_text:?} is not an integer"))
        })?;
        if ts < 0 {
            return Err(bad(path, line, format!("timestamp {ts} predates the epoch")));
        }
        times.push(ts);
        for (c, name) in columns.iter().enumerate() {
            let cell = record.get(c + 1).unwrap();
            if cell.is_empty() {
                return Err(bad(path, line, format!("missing value for {name:?}")));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(path, line, format!("{name:?} value {cell:?} is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(
                    path,
                    line,
                    format!("{name:?} value {v} is not a non-negative real"),
                ));
            }
            values[c].push(v);
        }
    }

    if times.len() < 2 {
        return Err(bad(
            path,
            0,
            format!(
                "{} data rows; at least 2 are needed to establish the sampling interval",
                times.len()
            ),
        ));
    }
    let interval = times[1] - times[0];
    if interval <= 0 || i64::from(SECONDS_PER_DAY) % interval != 0 {
        return Err(bad(
            path,
            3,
            format!("interval of {interval}s does not divide a day evenly"),
        ));
    }
    for t in 1..times.len() {
        if times[t] - times[t - 1] != interval {
            // Data rows start on line 2; row t is line t + 2.
            return Err(bad(
                path,
                t + 2,
                format!(
                    "timestamp {} breaks the {interval}s spacing (previous was {})",
                    times[t],
                    times[t - 1]
                ),
            ));
        }
    }
    let start_step = step_of_day(times[0], interval).map_err(|msg| bad(path, 2, msg))?;

    Ok(RawTable {
        columns,
        values,
        interval_seconds: interval as u32,
        start_step,
    })
}

/// Daily-bin count used when no manifest says otherwise: 24 when the grid
/// allows hourly bins, else a single bin.
pub fn default_bins(steps_per_day: usize) -> usize {
    if steps_per_day % 24 == 0 {
        24
    } else {
        1
    }
}

/// Reads a labeled dataset from a wide CSV, inferring the interval from the
/// timestamps and defaulting to hourly bins where the grid allows.
pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let spd = {
        let table = read_table(path)?;
        (SECONDS_PER_DAY / table.interval_seconds) as usize
    };
    read_dataset_with_bins(path, default_bins(spd))
}

/// [`read_dataset`] with the daily-bin count chosen by the caller.
pub fn read_dataset_with_bins(path: &Path, bins_per_day: usize) -> Result<LabeledDataset> {
    let table = read_table(path)?;
    let sampling = SamplingSpec::new(table.interval_seconds, bins_per_day)?;

    let has_aggregate = table.columns[0] == "aggregate";
    let names: Vec<String> = if has_aggregate {
        table.columns[1..].to_vec()
    } else {
        table.columns.clone()
    };
    if names.is_empty() {
        return Err(bad(
            path,
            1,
            "no appliance columns; a labeled dataset needs at least one".into(),
        ));
    }
    let traces: Vec<Vec<f64>> = if has_aggregate {
        table.values[1..].to_vec()
    } else {
        table.values.clone()
    };
    let appliances = ApplianceMatrix::new(names, traces, table.start_step)?;
    let aggregate = if has_aggregate {
        Some(AggregateSeries::new(
            table.values[0].clone(),
            table.start_step,
        )?)
    } else {
        None
    };
    LabeledDataset::new(appliances, aggregate, sampling)
}

/// Reads just a metered aggregate: the `aggregate` column when present,
/// otherwise the row sums of the appliance columns.
pub fn read_aggregate_series(path: &Path) -> Result<(AggregateSeries, SamplingSpec)> {
    let table = read_table(path)?;
    let spd = (SECONDS_PER_DAY / table.interval_seconds) as usize;
    let sampling = SamplingSpec::new(table.interval_seconds, default_bins(spd))?;
    let values = if table.columns[0] == "aggregate" {
        table.values[0].clone()
    } else {
        let t_len = table.values[0].len();
        (0..t_len)
            .map(|t| table.values.iter().map(|col| col[t]).sum())
            .collect()
    };
    Ok((AggregateSeries::new(values, table.start_step)?, sampling))
}

fn check_writable_name(name: &str) -> Result<()> {
    if name.contains([',', '"', '\n', '\r']) {
        return Err(Error::InvalidParameter(format!(
            "appliance name {name:?} cannot be written to CSV (contains a delimiter)"
        )));
    }
    Ok(())
}

/// Serializes a labeled dataset to the wide-CSV schema. The aggregate
/// column appears only when the dataset carries one.
pub fn write_dataset(data: &LabeledDataset, path: &Path) -> Result<()> {
    let interval = i64::from(data.sampling.interval_seconds);
    let mut out = String::from("timestamp");
    if data.aggregate.is_some() {
        out.push_str(",aggregate");
    }
    for name in &data.appliances.names {
        check_writable_name(name)?;
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..data.num_steps() {
        let epoch = (data.appliances.start_step + t) as i64 * interval;
        out.push_str(&epoch.to_string());
        if let Some(y) = &data.aggregate {
            out.push(',');
            out.push_str(&y.values[t].to_string());
        }
        for trace in &data.appliances.values {
            out.push(',');
            out.push_str(&trace[t].to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Path of the manifest that may sit beside a household CSV.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Reads every `*.csv` in a directory as one household each, ordered by
/// file name. A `<stem>.manifest.json` beside a file supplies the household
/// id and bin count and is cross-checked against the data; otherwise the
/// file stem and default bins are used.
pub fn read_household_dir(dir: &Path) -> Result<Vec<(String, LabeledDataset)>> {
    let mut csv_paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    csv_paths.sort();
    if csv_paths.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no .csv files in {}",
            dir.display()
        )));
    }

    let mut households = Vec::with_capacity(csv_paths.len());
    for csv_path in csv_paths {
        let stem = csv_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let m_path = manifest_path(&csv_path);
        let (id, data) = if m_path.exists() {
            let manifest = DatasetManifest::load(&m_path)?;
            let data = read_dataset_with_bins(&csv_path, manifest.bins_per_day)?;
            check_manifest(&manifest, &data, &csv_path)?;
            (manifest.household_id, data)
        } else {
            (stem, read_dataset(&csv_path)?)
        };
        households.push((id, data));
    }
    Ok(households)
}

fn check_manifest(m: &DatasetManifest, data: &LabeledDataset, csv_path: &Path) -> Result<()> {
    let clash = |msg: String| bad(csv_path, 0, format!("manifest disagrees: {msg}"));
    if m.interval_seconds != data.sampling.interval_seconds {
        return Err(clash(format!(
            "interval {}s vs {}s in the data",
            m.interval_seconds, data.sampling.interval_seconds
        )));
    }
    if m.appliance_names != data.appliances.names {
        return Err(clash(format!(
            "appliances {:?} vs {:?} in the data",
            m.appliance_names, data.appliances.names
        )));
    }
    let declared = m.start.start_step(m.interval_seconds)?;
    if declared != data.appliances.start_step {
        return Err(clash(format!(
            "start step {declared} vs {} in the data",
            data.appliances.start_step
        )));
    }
    Ok(())
}
