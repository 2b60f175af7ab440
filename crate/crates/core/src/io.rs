//! CSV output for trajectories, densities and histograms.

use std::io::{Read, Write};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("malformed CSV: {other:?}")),
    }
}

/// Header `t,p_0,…,p_{n−1},boundary_hit`.
pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).map(|k| format!("p_{k}")));
    h.push("boundary_hit".into());
    h
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(traj.n)).map_err(csv_error)?;
    let mut row = Vec::with_capacity(traj.n + 2);
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.times[k].to_string());
        row.extend(traj.state(k).iter().map(f64::to_string));
        row.push(u8::from(traj.boundary_hit[k]).to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// A trajectory CSV read back: times, row-major states and hit flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub boundary_hit: Vec<bool>,
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: `{field}`")))
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    let n = header.len().saturating_sub(2);
    if n == 0 || header.iter().collect::<Vec<_>>() != trajectory_header(n) {
        return Err(Error::InvalidArgument(format!("unexpected trajectory header {header:?}")));
    }
    let mut table = TrajectoryTable {
        n,
        times: Vec::new(),
        states: Vec::new(),
        boundary_hit: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        table.times.push(parse_f64(&rec[0])?);
        for k in 0..n {
            table.states.push(parse_f64(&rec[k + 1])?);
        }
        table.boundary_hit.push(&rec[n + 1] == "1");
    }
    Ok(table)
}

pub fn write_density_csv<W: Write>(out: W, grid: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "rho_star"]).map_err(csv_error)?;
    for (x, r) in grid {
        w.write_record([x.to_string(), r.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != ["x", "rho_star"] {
        return Err(Error::InvalidArgument(format!("unexpected density header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            Ok((parse_f64(&rec[0])?, parse_f64(&rec[1])?))
        })
        .collect()
}

/// Rows `bin_left,bin_right,empirical,analytic` over equal bins of `[0, 1]`.
pub fn write_histogram_csv<W: Write>(out: W, empirical: &[f64], analytic: &[f64]) -> Result<()> {
    if empirical.len() != analytic.len() {
        return Err(Error::DimensionMismatch {
            expected: analytic.len(),
            got: empirical.len(),
        });
    }
    let bins = analytic.len() as f64;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_left", "bin_right", "empirical", "analytic"]).map_err(csv_error)?;
    for (k, (e, a)) in empirical.iter().zip(analytic).enumerate() {
        let left = k as f64 / bins;
        let right = (k + 1) as f64 / bins;
        w.write_record([left.to_string(), right.to_string(), e.to_string(), a.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
