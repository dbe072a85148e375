//! Trajectory CSV files.
//!
//! Header: `step,theta_0..theta_{D-1},loss_1..loss_T,alpha_1..alpha_T,p_1..p_T,w_1..w_T,rr_1..rr_T,variance`.
//! `rr_t` holds the weighted relative rate, matching `variance`. Reals are
//! written with 17 significant digits so that parsing restores them exactly.

use std::path::Path;

use crate::error::{MtlError, Result};
use crate::types::TrajectoryRecord;

/// The columns of one CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub theta: Vec<f64>,
    pub losses: Vec<f64>,
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub rr: Vec<f64>,
    pub variance: f64,
}

impl From<&TrajectoryRecord> for TrajectoryRow {
    fn from(r: &TrajectoryRecord) -> Self {
        TrajectoryRow {
            step: r.step,
            theta: r.theta.as_slice().to_vec(),
            losses: r.losses.clone(),
            alpha: r.alpha.as_slice().to_vec(),
            p: r.p.as_slice().to_vec(),
            w: r.effective_weights.clone(),
            rr: r.relative_rates.weighted.clone(),
            variance: r.relative_rates.variance,
        }
    }
}

pub fn trajectory_header(dim: usize, tasks: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((0..dim).map(|i| format!("theta_{i}")));
    for prefix in ["loss", "alpha", "p", "w", "rr"] {
        h.extend((1..=tasks).map(|t| format!("{prefix}_{t}")));
    }
    h.push("variance".to_string());
    h
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> MtlError {
    MtlError::Io(e.to_string())
}

pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| MtlError::invalid("cannot write an empty trajectory"))?;
    let (dim, tasks) = (first.theta.dim(), first.losses.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(trajectory_header(dim, tasks)).map_err(csv_err)?;
    for r in records {
        let row = TrajectoryRow::from(r);
        let mut fields = vec![row.step.to_string()];
        for block in [&row.theta, &row.losses, &row.alpha, &row.p, &row.w, &row.rr] {
            fields.extend(block.iter().map(|v| fmt_real(*v)));
        }
        fields.push(fmt_real(row.variance));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let dim = header.iter().filter(|h| h.starts_with("theta_")).count();
    let tasks = header.iter().filter(|h| h.starts_with("loss_")).count();
    let expected = trajectory_header(dim, tasks);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(MtlError::invalid("unexpected trajectory header"));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| MtlError::invalid(format!("bad number `{s}`: {e}")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let step = rec[0]
            .parse::<usize>()
            .map_err(|e| MtlError::invalid(format!("bad step `{}`: {e}", &rec[0])))?;
        let vals = rec.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?;
        let mut it = vals.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
        let theta = take(dim);
        let losses = take(tasks);
        let alpha = take(tasks);
        let p = take(tasks);
        let w = take(tasks);
        let rr = take(tasks);
        let variance = take(1)[0];
        rows.push(TrajectoryRow {
            step,
            theta,
            losses,
            alpha,
            p,
            w,
            rr,
            variance,
        });
    }
    Ok(rows)
}
