//! CSV and JSON formats for telemetry, datasets and results.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::dataset::{AxleDataset, Sample};
use crate::preprocess::{Channel, SensorGroup, SensorLog, Series};
use crate::sensitivity::SobolResult;
use crate::study::{CurvePoint, StudyRow};
use crate::tire_model::TireParams;

pub const TIME_COLUMN: &str = "time_s";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadValue { row: usize, column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] crate::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn column_index(headers: &csv::StringRecord, name: &str) -> IoResult<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IoError::MissingColumn(name.to_string()))
}

fn parse_cell(cell: &str, row: usize, column: &str) -> IoResult<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| IoError::BadValue { row, column: column.to_string(), value: cell.to_string() })
}

/// Read a telemetry CSV. Channels sampled at different rates leave their cells
/// empty on rows where they have no sample.
pub fn read_sensor_log<R: Read>(reader: R, rates: BTreeMap<SensorGroup, f64>) -> IoResult<SensorLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let t_idx = column_index(&headers, TIME_COLUMN)?;
    let idx: Vec<(Channel, usize)> = Channel::REQUIRED
        .iter()
        .map(|&ch| column_index(&headers, ch.column()).map(|i| (ch, i)))
        .collect::<IoResult<_>>()?;

    let mut cols: BTreeMap<Channel, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let Some(t) = parse_cell(rec.get(t_idx).unwrap_or(""), line, TIME_COLUMN)? else {
            continue;
        };
        for &(ch, i) in &idx {
            if let Some(v) = parse_cell(rec.get(i).unwrap_or(""), line, ch.column())? {
                let entry = cols.entry(ch).or_default();
                entry.0.push(t);
                entry.1.push(v);
            }
        }
    }
    let mut log = SensorLog { rates, ..Default::default() };
    for ch in Channel::REQUIRED {
        let (t, v) = cols.remove(&ch).unwrap_or_default();
        let series = Series::new(t, v).map_err(|e| match e {
            crate::Error::InvalidLog(m) => crate::Error::InvalidLog(format!("{}: {m}", ch.column())),
            other => other,
        })?;
        log.insert(ch, series);
    }
    Ok(log)
}

/// Write a telemetry CSV on the union of all channel timestamps.
pub fn write_sensor_log<W: Write>(log: &SensorLog, writer: W) -> IoResult<()> {
    let mut times: Vec<f64> = log.series.values().flat_map(|s| s.t.iter().copied()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let channels: Vec<Channel> = Channel::REQUIRED.iter().copied().filter(|c| log.get(*c).is_some()).collect();

    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(channels.iter().map(|c| c.column().to_string()));
    wtr.write_record(&header)?;
    let mut cursors = vec![0usize; channels.len()];
    for t in times {
        let mut rec = vec![t.to_string()];
        for (ch, cur) in channels.iter().zip(cursors.iter_mut()) {
            let s = &log.series[ch];
            if *cur < s.len() && s.t[*cur] == t {
                rec.push(s.v[*cur].to_string());
                *cur += 1;
            } else {
                rec.push(String::new());
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Sidecar sample-rate metadata, e.g. `{"correvit": 250, "imu": 500, "can": 100}`.
pub fn read_rates<R: Read>(reader: R) -> IoResult<BTreeMap<SensorGroup, f64>> {
    Ok(serde_json::from_reader(reader)?)
}

/// Read `excitation, force_coeff[, weight]` rows. Shifts are not part of the format.
pub fn read_dataset<R: Read>(reader: R) -> IoResult<AxleDataset> {
    read_dataset_scaled(reader, 1.0)
}

/// Like [`read_dataset`], multiplying every excitation by `scale` before validation
/// (0.01 for slip ratios recorded in percent).
pub fn read_dataset_scaled<R: Read>(reader: R, scale: f64) -> IoResult<AxleDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let x_idx = column_index(&headers, "excitation")?;
    let y_idx = column_index(&headers, "force_coeff")?;
    let w_idx = column_index(&headers, "weight").ok();
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let required = |i: usize, name: &str| -> IoResult<f64> {
            parse_cell(rec.get(i).unwrap_or(""), line, name)?
                .ok_or_else(|| IoError::BadValue { row: line, column: name.to_string(), value: String::new() })
        };
        let excitation = required(x_idx, "excitation")? * scale;
        let force_coeff = required(y_idx, "force_coeff")?;
        let weight = match w_idx {
            Some(i) => parse_cell(rec.get(i).unwrap_or(""), line, "weight")?.unwrap_or(1.0),
            None => 1.0,
        };
        samples.push(Sample { excitation, force_coeff, weight });
    }
    let dataset = AxleDataset::new(samples);
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_dataset<W: Write>(dataset: &AxleDataset, writer: W) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["excitation", "force_coeff", "weight"])?;
    for s in &dataset.samples {
        wtr.write_record([s.excitation.to_string(), s.force_coeff.to_string(), s.weight.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub const STUDY_HEADER: [&str; 12] =
    ["level", "method", "b_mean", "c_mean", "d_mean", "e_mean", "b_std", "c_std", "d_std", "e_std", "mse", "error_flag"];

/// One row per (level, method). Point estimates leave the std cells empty;
/// failed fits set `error_flag` to 1 and leave the numbers empty.
pub fn write_study<W: Write>(rows: &[StudyRow], writer: W) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(STUDY_HEADER)?;
    for r in rows {
        let failed = r.error.is_some();
        let num = |v: f64| if failed { String::new() } else { v.to_string() };
        let mut rec = vec![r.level.to_string(), r.method.as_str().to_string()];
        rec.extend(r.mean.iter().map(|&v| num(v)));
        match r.std {
            Some(s) if !failed => rec.extend(s.iter().map(|v| v.to_string())),
            _ => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        rec.push(num(r.mse));
        rec.push(if failed { "1" } else { "0" }.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(curves: &[CurvePoint], writer: W) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["level", "method", "excitation", "force_fit", "force_true"])?;
    for c in curves {
        wtr.write_record([
            c.level.to_string(),
            c.method.as_str().to_string(),
            c.excitation.to_string(),
            c.force_fit.to_string(),
            c.force_true.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sobol<W: Write>(result: &SobolResult, writer: W) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["slip", "st_b", "st_c", "st_d", "st_e", "flag_zero_variance"])?;
    for k in 0..result.len() {
        let mut rec = vec![result.slip_grid[k].to_string()];
        rec.extend(result.total[k].iter().map(|v| v.to_string()));
        rec.push(if result.zero_variance[k] { "1" } else { "0" }.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Posterior draws as `b, c, d, e` rows.
pub fn write_posterior<W: Write>(samples: &[TireParams], writer: W) -> IoResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["b", "c", "d", "e"])?;
    for p in samples {
        wtr.write_record(p.coeffs().iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
