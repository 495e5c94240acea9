//! KITTI odometry error metrics: relative pose error over fixed path-length
//! sub-sequences, aggregated by length and by driving speed.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Trajectory;

/// Standard evaluation sub-sequence lengths in meters.
pub const DEFAULT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Width of the speed histogram bins in m/s.
pub const SPEED_BIN_WIDTH: f64 = 2.0;

/// Error of one evaluated sub-sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub start_frame: usize,
    pub end_frame: usize,
    /// Nominal sub-sequence length in meters (the normalizer).
    pub length: f64,
    /// Translational error in percent of the nominal length.
    pub t_err_pct: f64,
    /// Rotational error in degrees per meter.
    pub r_err_deg_per_m: f64,
    /// Mean ground-truth speed over the span, m/s.
    pub speed_mps: f64,
}

/// All per-sub-sequence records plus the binning parameters used to
/// aggregate them.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
    pub lengths: Vec<f64>,
    pub speed_bin_width: f64,
}

fn mean_of<F: Fn(&ErrorRecord) -> f64>(records: &[&ErrorRecord], f: F) -> f64 {
    records.iter().map(|r| f(r)).sum::<f64>() / records.len() as f64
}

impl ErrorReport {
    /// Mean `(t_err %, r_err deg/m)` per evaluation length, in the order the
    /// lengths were given; lengths with no records are omitted.
    pub fn by_length(&self) -> Vec<(f64, f64, f64)> {
        self.lengths
            .iter()
            .filter_map(|&len| {
                let members: Vec<&ErrorRecord> =
                    self.records.iter().filter(|r| r.length == len).collect();
                if members.is_empty() {
                    return None;
                }
                Some((
                    len,
                    mean_of(&members, |r| r.t_err_pct),
                    mean_of(&members, |r| r.r_err_deg_per_m),
                ))
            })
            .collect()
    }

    /// Mean `(t_err %, r_err deg/m)` per speed bin, keyed by the bin's lower
    /// edge in m/s and sorted ascending.
    pub fn by_speed(&self) -> Vec<(f64, f64, f64)> {
        let mut edges: Vec<f64> = self
            .records
            .iter()
            .map(|r| (r.speed_mps / self.speed_bin_width).floor() * self.speed_bin_width)
            .collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        edges
            .into_iter()
            .map(|edge| {
                let members: Vec<&ErrorRecord> = self
                    .records
                    .iter()
                    .filter(|r| {
                        (r.speed_mps / self.speed_bin_width).floor() * self.speed_bin_width == edge
                    })
                    .collect();
                (
                    edge,
                    mean_of(&members, |r| r.t_err_pct),
                    mean_of(&members, |r| r.r_err_deg_per_m),
                )
            })
            .collect()
    }

    /// Overall mean `(t_rel %, r_rel deg/m)` over every record, or `None`
    /// when the trajectory was too short to cover any evaluation length.
    pub fn overall(&self) -> Option<(f64, f64)> {
        if self.records.is_empty() {
            return None;
        }
        let all: Vec<&ErrorRecord> = self.records.iter().collect();
        Some((
            mean_of(&all, |r| r.t_err_pct),
            mean_of(&all, |r| r.r_err_deg_per_m),
        ))
    }
}

/// Rotation angle of `r`: the trace gives the cosine, the antisymmetric
/// part the sine. Equivalent to `acos((trace-1)/2)` on SO(3), but exact at 0
/// (identical trajectories score an exact zero) and well-conditioned near
/// both ends of `acos`'s range.
fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = (r.trace() - 1.0) / 2.0;
    let sin = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    )
    .norm()
        / 2.0;
    sin.atan2(cos)
}

/// Relative pose error between a ground-truth and a predicted trajectory.
///
/// For every start frame and every length `l`, the span ends at the first
/// frame whose accumulated ground-truth path distance reaches `l` (no
/// interpolation). Over that span, with `E = rel_gt^-1 ∘ rel_pred`:
/// translational error is `|trans(E)| / l * 100` percent and rotational
/// error is the angle of `rot(E)` per meter, in degrees. Spans the
/// trajectory cannot cover are skipped. `frame_period` (seconds per frame)
/// only affects the speed attributed to each record.
pub fn kitti_errors(
    gt: &Trajectory,
    pred: &Trajectory,
    lengths: &[f64],
    frame_period: f64,
) -> Result<ErrorReport> {
    if gt.len() != pred.len() {
        return Err(Error::shape(format!(
            "ground truth has {} poses, prediction {}",
            gt.len(),
            pred.len()
        )));
    }
    if gt.len() < 2 {
        return Err(Error::invalid("evaluation needs at least 2 poses"));
    }
    if !(frame_period > 0.0 && frame_period.is_finite()) {
        return Err(Error::invalid("frame_period must be positive"));
    }
    if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("evaluation lengths must be positive"));
    }

    // dist[i] = ground-truth path distance from frame 0 to frame i.
    let n = gt.len();
    let mut dist = Vec::with_capacity(n);
    dist.push(0.0);
    for i in 1..n {
        let step = (gt.poses()[i].translation() - gt.poses()[i - 1].translation()).norm();
        dist.push(dist[i - 1] + step);
    }

    let mut records = Vec::new();
    for start in 0..n {
        for &len in lengths {
            let target = dist[start] + len;
            // dist is nondecreasing: the first index at or beyond target.
            let end = dist.partition_point(|&d| d < target);
            if end >= n {
                continue;
            }
            let rel_gt = gt.poses()[start].inverse().compose(&gt.poses()[end]);
            let rel_pred = pred.poses()[start].inverse().compose(&pred.poses()[end]);
            let e = rel_gt.inverse().compose(&rel_pred);
            let t_err_pct = e.translation().norm() / len * 100.0;
            let r_err_deg_per_m = rotation_angle(e.rotation()).to_degrees() / len;
            let speed_mps = (dist[end] - dist[start]) / ((end - start) as f64 * frame_period);
            records.push(ErrorRecord {
                start_frame: start,
                end_frame: end,
                length: len,
                t_err_pct,
                r_err_deg_per_m,
                speed_mps,
            });
        }
    }
    Ok(ErrorReport {
        records,
        lengths: lengths.to_vec(),
        speed_bin_width: SPEED_BIN_WIDTH,
    })
}

fn write_table(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for (bin, err) in rows {
        text.push_str(&format!("{bin},{err}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write the report as five CSV files into `dir`: translational and
/// rotational error against path length and against speed, plus an overall
/// summary. Values use shortest-roundtrip decimal formatting, so re-parsing
/// a table reproduces the in-memory aggregates exactly. The summary carries
/// the rotational error in both deg/m and deg/100m.
pub fn report_csv(report: &ErrorReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let by_len = report.by_length();
    let by_speed = report.by_speed();
    let t_len: Vec<(f64, f64)> = by_len.iter().map(|&(b, t, _)| (b, t)).collect();
    let r_len: Vec<(f64, f64)> = by_len.iter().map(|&(b, _, r)| (b, r)).collect();
    let t_speed: Vec<(f64, f64)> = by_speed.iter().map(|&(b, t, _)| (b, t)).collect();
    let r_speed: Vec<(f64, f64)> = by_speed.iter().map(|&(b, _, r)| (b, r)).collect();
    write_table(&dir.join("trans_vs_length.csv"), "length_m,t_err_pct", &t_len)?;
    write_table(
        &dir.join("rot_vs_length.csv"),
        "length_m,r_err_deg_per_m",
        &r_len,
    )?;
    write_table(&dir.join("trans_vs_speed.csv"), "speed_mps,t_err_pct", &t_speed)?;
    write_table(
        &dir.join("rot_vs_speed.csv"),
        "speed_mps,r_err_deg_per_m",
        &r_speed,
    )?;

    let summary = dir.join("summary.csv");
    let mut text = String::from("t_rel_pct,r_rel_deg_per_m,r_rel_deg_per_100m\n");
    if let Some((t, r)) = report.overall() {
        text.push_str(&format!("{t},{r},{}\n", r * 100.0));
    }
    std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))
}
