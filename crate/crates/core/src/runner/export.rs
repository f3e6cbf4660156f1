//! Plain-text exports. Floats use Rust's shortest round-trip rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::manifold::Trajectory;

use super::field::FieldRow;
use super::{RunOutput, RunReport};

/// Comma-separated table with one row per sample:
/// `t, q…, qd…, qdd…, dist_<check>…`.
pub fn trajectory_table(traj: &Trajectory, check_names: &[String], distances: &[Vec<f64>]) -> String {
    let d = traj.dim().unwrap_or(0);
    let mut header = vec!["t".to_string()];
    for prefix in ["q", "qd", "qdd"] {
        header.extend((1..=d).map(|i| format!("{prefix}{i}")));
    }
    header.extend(check_names.iter().map(|n| format!("dist_{n}")));
    let mut out = header.join(",");
    out.push('\n');
    for (i, s) in traj.samples().iter().enumerate() {
        let _ = write!(out, "{}", s.t);
        for v in s.q.iter().chain(s.qdot.iter()) {
            let _ = write!(out, ",{v}");
        }
        match &s.qddot {
            Some(a) => a.iter().for_each(|v| {
                let _ = write!(out, ",{v}");
            }),
            None => (0..d).for_each(|_| out.push_str(",NaN")),
        }
        if let Some(row) = distances.get(i) {
            for v in row {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// Comma-separated acceleration field: `x, y, qd1, qd2, qdd1, qdd2, xdd, ydd, zdd`.
pub fn field_table(rows: &[FieldRow]) -> String {
    let mut out = String::from("x,y,qd1,qd2,qdd1,qdd2,xdd,ydd,zdd\n");
    for r in rows {
        let acc = r.qddot.unwrap_or([f64::NAN; 2]);
        let task = r.task_qddot.map(|v| [v.x, v.y, v.z]).unwrap_or([f64::NAN; 3]);
        let vals = [r.q[0], r.q[1], r.qdot[0], r.qdot[1], acc[0], acc[1], task[0], task[1], task[2]];
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("reports contain only serializable data")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `report.json` and, per scenario that asks for it,
/// `<name>.trajectory.csv` into `dir`. Returns the written paths.
pub fn write_outputs(dir: &Path, report: &RunReport, outputs: &[RunOutput], want_trajectory: &[bool]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (o, &want) in outputs.iter().zip(want_trajectory) {
        if let (true, Some(traj)) = (want, &o.trajectory) {
            let path = dir.join(format!("{}.trajectory.csv", o.report.name));
            write(&path, &trajectory_table(traj, &o.check_names, &o.distances))?;
            written.push(path);
        }
    }
    let path = dir.join("report.json");
    write(&path, &report_json(report))?;
    written.push(path);
    Ok(written)
}
