//! CSV formats.
//!
//! Angles are written in degrees (`_deg`, `_deg_s`, `_deg_s2` suffixes),
//! everything else in SI units. Numbers use the shortest representation
//! that round-trips, so reading a file back reproduces the written `f64`
//! values exactly.
//!
//! * truth: `t_s, q{j}_deg…, qdot{j}_deg_s…, qddot{j}_deg_s2…, tau{j}_Nm…`
//! * measurements: `t_s`, then per IMU `{imu}_gyro_{x,y,z}` (rad/s) and
//!   `{imu}_accel_{x,y,z}` (m/s²), then `{marker}_{x,y,z}` (m, camera
//!   frame), then `mask`: one `0`/`1` character per sensor block in the
//!   same order (gyro, accel per IMU, then markers). The `mask` column is
//!   optional on input.
//! * estimates: `t_s, q{j}_deg…, qdot{j}_deg_s…, tau{j}_Nm…`, optionally
//!   `var_q{j}_rad2…, var_qdot{j}_rad2_s2…, var_tau{j}_Nm2…`, then
//!   `method`.
//! * orientations: `t_s`, then per IMU `{imu}_r{row}{col}` for the nine
//!   entries of `R^{ns}`, row-major.
//!
//! Joint indices `j` in column names start at 1.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::math::Mat3;
use crate::sensors::{BlockKind, MeasurementFrame, SensorSet};
use crate::trajectory::{EstimateSeries, Trajectory};

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

fn joint_headers(prefix: &str, suffix: &str, dof: usize) -> Vec<String> {
    (1..=dof).map(|j| format!("{prefix}{j}{suffix}")).collect()
}

fn push_deg(row: &mut Vec<String>, v: &DVector<f64>) {
    row.extend(v.iter().map(|x| fmt(x.to_degrees())));
}

fn push_si(row: &mut Vec<String>, v: &DVector<f64>) {
    row.extend(v.iter().map(|x| fmt(*x)));
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

pub fn truth_headers(dof: usize) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    h.extend(joint_headers("q", "_deg", dof));
    h.extend(joint_headers("qdot", "_deg_s", dof));
    h.extend(joint_headers("qddot", "_deg_s2", dof));
    h.extend(joint_headers("tau", "_Nm", dof));
    h
}

pub fn write_truth<W: Write>(out: W, truth: &Trajectory) -> Result<()> {
    let mut w = writer(out);
    w.write_record(truth_headers(truth.dof())).map_err(csv_err)?;
    for i in 0..truth.len() {
        let mut row = vec![fmt(truth.t[i])];
        push_deg(&mut row, &truth.q[i]);
        push_deg(&mut row, &truth.qdot[i]);
        push_deg(&mut row, &truth.qddot[i]);
        push_si(&mut row, &truth.tau[i]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Reads a truth file written by [`write_truth`], converting back to
/// radians.
pub fn read_truth<R: Read>(input: R, dof: usize) -> Result<Trajectory> {
    let table = NumericTable::read(input)?;
    table.expect_headers(&truth_headers(dof))?;
    let block = |b: usize, deg: bool| -> Vec<DVector<f64>> {
        table
            .rows
            .iter()
            .map(|r| {
                DVector::from_iterator(
                    dof,
                    r[1 + b * dof..1 + (b + 1) * dof]
                        .iter()
                        .map(|v| if deg { v.to_radians() } else { *v }),
                )
            })
            .collect()
    };
    Ok(Trajectory {
        t: table.rows.iter().map(|r| r[0]).collect(),
        q: block(0, true),
        qdot: block(1, true),
        qddot: block(2, true),
        tau: block(3, false),
        metadata: Default::default(),
    })
}

/// Column names of the physical measurement blocks, excluding `t_s` and
/// `mask`.
pub fn measurement_headers(sensors: &SensorSet) -> Vec<String> {
    let mut h = Vec::new();
    for block in sensors.layout().blocks {
        let (name, kind) = match block.kind {
            BlockKind::Gyro(k) => (&sensors.imus[k].name, "_gyro"),
            BlockKind::Accel(k) => (&sensors.imus[k].name, "_accel"),
            BlockKind::Marker(m) => (&sensors.markers[m].name, ""),
            BlockKind::Torque(_) => continue,
        };
        for axis in ["x", "y", "z"] {
            h.push(format!("{name}{kind}_{axis}"));
        }
    }
    h
}

/// Writes the physical rows of each frame. Virtual torque rows are not
/// part of the file.
pub fn write_measurements<W: Write>(out: W, sensors: &SensorSet, frames: &[MeasurementFrame]) -> Result<()> {
    let layout = sensors.layout();
    let physical: Vec<_> = layout
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind.is_physical())
        .collect();
    let mut w = writer(out);
    let mut header = vec!["t_s".to_string()];
    header.extend(measurement_headers(sensors));
    header.push("mask".into());
    w.write_record(&header).map_err(csv_err)?;
    for frame in frames {
        frame.check(&layout)?;
        let mut row = vec![fmt(frame.t)];
        let mut mask = String::with_capacity(physical.len());
        for (i, block) in &physical {
            row.extend(frame.y.rows(block.offset, block.kind.len()).iter().map(|v| fmt(*v)));
            mask.push(if frame.mask[*i] { '1' } else { '0' });
        }
        row.push(mask);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Reads measurement frames for the physical sensors of `sensors` (the
/// virtual torque sensors are ignored). Column names must match the
/// sensor set exactly; the first mismatch is reported.
pub fn read_measurements<R: Read>(input: R, sensors: &SensorSet) -> Result<Vec<MeasurementFrame>> {
    let physical = sensors.without_zero_torque();
    let layout = physical.layout();
    let mut expected = vec!["t_s".to_string()];
    expected.extend(measurement_headers(&physical));

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let has_mask = headers.last().map(String::as_str) == Some("mask");
    let data_headers = if has_mask {
        &headers[..headers.len() - 1]
    } else {
        &headers[..]
    };
    check_columns(data_headers, &expected)?;

    let mut frames = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = r + 1;
        let mut values = Vec::with_capacity(expected.len());
        for (c, name) in expected.iter().enumerate() {
            values.push(parse_cell(record.get(c), row, name)?);
        }
        let mask = if has_mask {
            let cell = record.get(expected.len()).unwrap_or("");
            parse_mask(cell, layout.blocks.len(), row)?
        } else {
            layout.all_active()
        };
        frames.push(MeasurementFrame {
            t: values[0],
            y: DVector::from_column_slice(&values[1..]),
            mask,
        });
    }
    Ok(frames)
}

fn check_columns(found: &[String], expected: &[String]) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        match found.get(i) {
            Some(f) if f == name => {}
            Some(f) => return Err(Error::Data(format!("column {} is `{f}`, expected `{name}`", i + 1))),
            None => return Err(Error::Data(format!("missing column {} `{name}`", i + 1))),
        }
    }
    if let Some(extra) = found.get(expected.len()) {
        return Err(Error::Data(format!(
            "unexpected column {} `{extra}`",
            expected.len() + 1
        )));
    }
    Ok(())
}

fn parse_cell(cell: Option<&str>, row: usize, column: &str) -> Result<f64> {
    let cell = cell.ok_or_else(|| Error::Data(format!("row {row}: missing value for `{column}`")))?;
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column `{column}`: cannot parse `{cell}`")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "row {row}, column `{column}`: value is not finite"
        )));
    }
    Ok(v)
}

fn parse_mask(cell: &str, blocks: usize, row: usize) -> Result<Vec<bool>> {
    let cell = cell.trim();
    if cell.len() != blocks {
        return Err(Error::Data(format!(
            "row {row}, column `mask`: expected {blocks} flags, found {}",
            cell.len()
        )));
    }
    cell.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => Err(Error::Data(format!("row {row}, column `mask`: invalid flag `{c}`"))),
        })
        .collect()
}

pub fn estimate_headers(dof: usize, with_variance: bool) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    h.extend(joint_headers("q", "_deg", dof));
    h.extend(joint_headers("qdot", "_deg_s", dof));
    h.extend(joint_headers("tau", "_Nm", dof));
    if with_variance {
        h.extend(joint_headers("var_q", "_rad2", dof));
        h.extend(joint_headers("var_qdot", "_rad2_s2", dof));
        h.extend(joint_headers("var_tau", "_Nm2", dof));
    }
    h.push("method".into());
    h
}

pub fn write_estimates<W: Write>(out: W, est: &EstimateSeries) -> Result<()> {
    let mut w = writer(out);
    w.write_record(estimate_headers(est.dof(), est.variance.is_some()))
        .map_err(csv_err)?;
    for i in 0..est.len() {
        let mut row = vec![fmt(est.t[i])];
        push_deg(&mut row, &est.q[i]);
        push_deg(&mut row, &est.qdot[i]);
        push_si(&mut row, &est.tau[i]);
        if let Some(var) = &est.variance {
            push_si(&mut row, &var[i]);
        }
        row.push(est.method.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Numeric columns of a CSV file with a header row. Text columns named
/// `method` or `mask` are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

const TEXT_COLUMNS: [&str; 2] = ["method", "mask"];

impl NumericTable {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let all: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let keep: Vec<usize> = (0..all.len())
            .filter(|&i| !TEXT_COLUMNS.contains(&all[i].as_str()))
            .collect();
        let headers = keep.iter().map(|&i| all[i].clone()).collect();
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row = keep
                .iter()
                .map(|&c| parse_cell(record.get(c), r + 1, &all[c]))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(NumericTable { headers, rows })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file).map_err(|e| match e {
            Error::Data(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    fn expect_headers(&self, expected: &[String]) -> Result<()> {
        check_columns(&self.headers, expected)
    }
}

/// Reads the joint series of an estimate file (written by
/// [`write_estimates`]) back into SI units.
pub fn read_estimates<R: Read>(input: R) -> Result<EstimateSeries> {
    let table = NumericTable::read(input)?;
    let dof = table
        .headers
        .iter()
        .filter(|h| h.starts_with('q') && h.ends_with("_deg") && !h.starts_with("qdot"))
        .count();
    let with_var = table.headers.len() > 1 + 3 * dof;
    let mut expected = estimate_headers(dof, with_var);
    expected.pop();
    table.expect_headers(&expected)?;
    let block = |b: usize, deg: bool| -> Vec<DVector<f64>> {
        table
            .rows
            .iter()
            .map(|r| {
                DVector::from_iterator(
                    dof,
                    r[1 + b * dof..1 + (b + 1) * dof]
                        .iter()
                        .map(|v| if deg { v.to_radians() } else { *v }),
                )
            })
            .collect()
    };
    let variance = with_var.then(|| {
        table
            .rows
            .iter()
            .map(|r| DVector::from_column_slice(&r[1 + 3 * dof..1 + 6 * dof]))
            .collect()
    });
    Ok(EstimateSeries {
        method: String::new(),
        t: table.rows.iter().map(|r| r[0]).collect(),
        q: block(0, true),
        qdot: block(1, true),
        tau: block(2, false),
        variance,
    })
}

pub fn orientation_headers(sensors: &SensorSet) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for imu in &sensors.imus {
        for r in 1..=3 {
            for c in 1..=3 {
                h.push(format!("{}_r{r}{c}", imu.name));
            }
        }
    }
    h
}

pub fn write_orientations<W: Write>(out: W, sensors: &SensorSet, t: &[f64], orientations: &[Vec<Mat3>]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(orientation_headers(sensors)).map_err(csv_err)?;
    for (ti, frame) in t.iter().zip(orientations) {
        let mut row = vec![fmt(*ti)];
        for m in frame {
            for r in 0..3 {
                for c in 0..3 {
                    row.push(fmt(m[(r, c)]));
                }
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Per-frame IMU orientations with their timestamps.
pub fn read_orientations<R: Read>(input: R, sensors: &SensorSet) -> Result<(Vec<f64>, Vec<Vec<Mat3>>)> {
    let table = NumericTable::read(input)?;
    table.expect_headers(&orientation_headers(sensors))?;
    let t = table.rows.iter().map(|r| r[0]).collect();
    let frames = table
        .rows
        .iter()
        .map(|r| {
            (0..sensors.imus.len())
                .map(|k| Mat3::from_fn(|i, j| r[1 + 9 * k + 3 * i + j]))
                .collect()
        })
        .collect();
    Ok((t, frames))
}
