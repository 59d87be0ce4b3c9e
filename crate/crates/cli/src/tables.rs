//! CSV tables: ground truth, trajectories, query points, metric reports, and
//! the kinematic/correlation diagnostics. Coordinates are written with six
//! decimals, which is also the precision the loaders compare against.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use evtap_core::{CorrelationMap, GroundTruth, MetricsReport, Trajectory, Vec2};

use crate::FormatError;

/// One loaded point track; `confidence`/`status` are empty for ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTrack {
    pub point_id: u64,
    pub times_us: Vec<u64>,
    pub coords: Vec<Vec2>,
    pub confidence: Vec<f64>,
    pub status: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackSet {
    pub points: Vec<PointTrack>,
}

impl TrackSet {
    pub fn by_id(&self, id: u64) -> Option<&PointTrack> {
        self.points.iter().find(|p| p.point_id == id)
    }
}

const GT_HEADER: &str = "point_id,step,t_us,x,y";
const TRAJ_HEADER: &str = "point_id,step,t_us,x,y,confidence,status";
const QUERY_HEADER: &str = "point_id,x,y";

pub fn step_status(traj: &Trajectory, step: usize) -> &'static str {
    if traj.frozen[step] {
        "frozen"
    } else if traj.warned {
        "warned"
    } else {
        "ok"
    }
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(out, "{GT_HEADER}")?;
        for (pid, track) in gt.trajectories.iter().enumerate() {
            for (step, (pos, t_us)) in track.iter().zip(gt.timestep_times.iter()).enumerate() {
                writeln!(out, "{pid},{step},{t_us},{:.6},{:.6}", pos.x, pos.y)?;
            }
        }
        out.flush()
    })
}

pub fn write_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(out, "{TRAJ_HEADER}")?;
        for traj in trajectories {
            for step in 0..traj.coords.len() {
                writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{:.6},{}",
                    traj.point_id,
                    step,
                    traj.times_us[step],
                    traj.coords[step].x,
                    traj.coords[step].y,
                    traj.confidence[step],
                    step_status(traj, step),
                )?;
            }
        }
        out.flush()
    })
}

/// Loads either table shape; `expect_confidence` switches between the
/// ground-truth and trajectory headers.
fn load_tracks(path: &Path, expect_confidence: bool) -> Result<TrackSet, FormatError> {
    let data = fs::read_to_string(path).map_err(|source| FormatError::io(path, source))?;
    let expected_header = if expect_confidence { TRAJ_HEADER } else { GT_HEADER };
    let mut lines = data.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == expected_header => {}
        Some((_, header)) => {
            return Err(FormatError::parse(
                path,
                1,
                format!("expected header `{expected_header}`, got `{header}`"),
            ))
        }
        None => return Err(FormatError::parse(path, 1, "empty file, expected header")),
    }

    let mut set = TrackSet::default();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected_fields = if expect_confidence { 7 } else { 5 };
        if fields.len() != expected_fields {
            return Err(FormatError::parse(
                path,
                line_no,
                format!("expected {expected_fields} fields, got {}", fields.len()),
            ));
        }
        let parse_u64 = |raw: &str, name: &str| -> Result<u64, FormatError> {
            raw.trim().parse().map_err(|_| {
                FormatError::parse(path, line_no, format!("bad value `{raw}` for `{name}`"))
            })
        };
        let parse_f64 = |raw: &str, name: &str| -> Result<f64, FormatError> {
            raw.trim().parse().map_err(|_| {
                FormatError::parse(path, line_no, format!("bad value `{raw}` for `{name}`"))
            })
        };
        let point_id = parse_u64(fields[0], "point_id")?;
        let step = parse_u64(fields[1], "step")? as usize;
        let t_us = parse_u64(fields[2], "t_us")?;
        let x = parse_f64(fields[3], "x")?;
        let y = parse_f64(fields[4], "y")?;

        if set.points.last().map(|p| p.point_id) != Some(point_id) {
            set.points.push(PointTrack {
                point_id,
                times_us: Vec::new(),
                coords: Vec::new(),
                confidence: Vec::new(),
                status: Vec::new(),
            });
        }
        let track = set.points.last_mut().unwrap();
        if step != track.coords.len() {
            return Err(FormatError::parse(
                path,
                line_no,
                format!("steps of point {point_id} must be contiguous from 0, got {step}"),
            ));
        }
        track.times_us.push(t_us);
        track.coords.push(Vec2::new(x, y));
        if expect_confidence {
            track.confidence.push(parse_f64(fields[5], "confidence")?);
            track.status.push(fields[6].trim().to_string());
        }
    }
    Ok(set)
}

pub fn load_ground_truth(path: &Path) -> Result<TrackSet, FormatError> {
    load_tracks(path, false)
}

pub fn load_trajectories(path: &Path) -> Result<TrackSet, FormatError> {
    load_tracks(path, true)
}

/// Query points: `point_id,x,y` with a header line.
pub fn load_queries(path: &Path) -> Result<Vec<(u64, Vec2)>, FormatError> {
    let data = fs::read_to_string(path).map_err(|source| FormatError::io(path, source))?;
    let mut lines = data.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == QUERY_HEADER => {}
        Some((_, header)) => {
            return Err(FormatError::parse(
                path,
                1,
                format!("expected header `{QUERY_HEADER}`, got `{header}`"),
            ))
        }
        None => return Err(FormatError::parse(path, 1, "empty file, expected header")),
    }
    let mut queries = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(FormatError::parse(path, line_no, "expected `point_id,x,y`"));
        }
        let id: u64 = fields[0].trim().parse().map_err(|_| {
            FormatError::parse(path, line_no, format!("bad point_id `{}`", fields[0]))
        })?;
        let x: f64 = fields[1].trim().parse().map_err(|_| {
            FormatError::parse(path, line_no, format!("bad x `{}`", fields[1]))
        })?;
        let y: f64 = fields[2].trim().parse().map_err(|_| {
            FormatError::parse(path, line_no, format!("bad y `{}`", fields[2]))
        })?;
        queries.push((id, Vec2::new(x, y)));
    }
    Ok(queries)
}

pub fn write_queries(queries: &[(u64, Vec2)], path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(out, "{QUERY_HEADER}")?;
        for (id, q) in queries {
            writeln!(out, "{id},{:.6},{:.6}", q.x, q.y)?;
        }
        out.flush()
    })
}

/// Machine-readable report: `metric,value,param` rows.
pub fn write_report_csv(report: &MetricsReport, path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(out, "metric,value,param")?;
        writeln!(out, "delta_avg,{:.6},", report.delta_avg)?;
        writeln!(out, "mte,{:.6},", report.mte)?;
        writeln!(
            out,
            "survival,{:.6},theta={}",
            report.survival, report.survival_threshold
        )?;
        writeln!(out, "fa,{:.6},", report.fa)?;
        writeln!(out, "efa,{:.6},", report.efa)?;
        writeln!(
            out,
            "weighted_mae,{:.6},gamma={}",
            report.weighted_mae, report.gamma
        )?;
        writeln!(out, "timesteps,{},", report.timesteps)?;
        out.flush()
    })
}

/// Human-readable report table.
pub fn format_report_table(report: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("{:<14} {:>10}  {}\n", "metric", "value", "param"));
    s.push_str(&format!("{:<14} {:>10.4}\n", "delta_avg", report.delta_avg));
    s.push_str(&format!("{:<14} {:>10.4}  px\n", "mte", report.mte));
    s.push_str(&format!(
        "{:<14} {:>10.4}  theta={}\n",
        "survival", report.survival, report.survival_threshold
    ));
    s.push_str(&format!("{:<14} {:>10.4}\n", "fa", report.fa));
    s.push_str(&format!("{:<14} {:>10.4}\n", "efa", report.efa));
    s.push_str(&format!(
        "{:<14} {:>10.4}  gamma={}\n",
        "weighted_mae", report.weighted_mae, report.gamma
    ));
    s
}

/// Per-step kinematic diagnostics for a set of trajectories.
pub fn write_kinematics_csv(
    rows: &[(u64, Vec<evtap_core::KinematicVector>)],
    path: &Path,
) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(out, "point_id,step,vx,vy,weight,residual,n_support")?;
        for (pid, kvs) in rows {
            for (step, kv) in kvs.iter().enumerate() {
                writeln!(
                    out,
                    "{pid},{step},{:.6},{:.6},{:.6},{:.6},{}",
                    kv.v.x, kv.v.y, kv.weight, kv.residual, kv.n_support
                )?;
            }
        }
        out.flush()
    })
}

/// Debug dump of one correlation map as a CSV grid, one row per dy.
pub fn write_correlation_csv(map: &CorrelationMap, path: &Path) -> Result<(), FormatError> {
    crate::atomic_write(path, |file| {
        let mut out = BufWriter::new(file);
        writeln!(
            out,
            "# guided_center={:.6},{:.6} radius={}",
            map.guided_center().x,
            map.guided_center().y,
            map.search_radius()
        )?;
        let r = map.search_radius() as i64;
        for dy in -r..=r {
            let row: Vec<String> = (-r..=r)
                .map(|dx| format!("{:.6}", map.score_at(dx, dy)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    })
}
