//! Run outputs on disk.
//!
//! Layout of an output directory:
//!
//! | file | contents |
//! |------|----------|
//! | `scenario.toml` | effective configuration, every default written out |
//! | `metrics.csv` | `t,e_norm,min_dist,mode_1..mode_N,normal_1..normal_N` |
//! | `events.jsonl` | one JSON event per line |
//! | `checker.json` | theorem precondition report |
//! | `particles.json` | per-particle outcome |
//! | `snapshots/q_<t>.csv` | `x,y,z,area,band,q` per mesh cell |
//!
//! `min_dist` is −1 while fewer than two agents fly. Mode and normal columns
//! are empty before an agent deploys. Every file is written to a temporary
//! sibling first and renamed into place.

use crate::engine::{CheckerReport, Event, MetricsRow, RunOutput, Scenario};
use crate::sensing::SurfaceMesh;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Write `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn finite(x: f64, what: &str) -> io::Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(io::Error::new(io::ErrorKind::InvalidData, format!("non-finite value in {what}")))
    }
}

pub fn metrics_csv(rows: &[MetricsRow], n_agents: usize) -> io::Result<String> {
    let mut out = String::from("t,e_norm,min_dist");
    for i in 1..=n_agents {
        write!(out, ",mode_{i}").unwrap();
    }
    for i in 1..=n_agents {
        write!(out, ",normal_{i}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{},{},{}", finite(r.t, "t")?, finite(r.e_norm, "e_norm")?, finite(r.min_dist, "min_dist")?)
            .unwrap();
        for m in &r.modes {
            match m {
                Some(m) => write!(out, ",{m}").unwrap(),
                None => out.push(','),
            }
        }
        for (m, n) in r.modes.iter().zip(&r.normal) {
            if m.is_some() {
                write!(out, ",{}", finite(*n, "normal")?).unwrap();
            } else {
                out.push(',');
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn events_jsonl(events: &[Event]) -> io::Result<String> {
    let mut out = String::new();
    for e in events {
        // serde_json turns NaN and infinities into null; no event field is nullable.
        let line = serde_json::to_string(e).map_err(|err| io::Error::new(io::ErrorKind::InvalidData, err))?;
        if line.contains("null") {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("non-finite value in event {line}")));
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn snapshot_csv(mesh: &SurfaceMesh, q: &[f64]) -> io::Result<String> {
    let mut out = String::from("x,y,z,area,band,q\n");
    for (c, v) in mesh.cells().iter().zip(q) {
        let p = c.center;
        writeln!(out, "{},{},{},{},{},{}", p.x, p.y, p.z, c.area, c.band, finite(*v, "coverage")?).unwrap();
    }
    Ok(out)
}

pub fn write_checker(dir: &Path, report: &CheckerReport) -> io::Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    write_atomic(&dir.join("checker.json"), json.as_bytes())
}

/// Write every artifact of a run into `dir`.
pub fn write_run(
    dir: &Path,
    scenario: &Scenario,
    mesh: &SurfaceMesh,
    out: &RunOutput,
    report: &CheckerReport,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("scenario.toml"), scenario.to_toml().as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&out.metrics, scenario.agents.count)?.as_bytes())?;
    write_atomic(&dir.join("events.jsonl"), events_jsonl(&out.events)?.as_bytes())?;
    let particles =
        serde_json::to_string_pretty(&out.particles).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    write_atomic(&dir.join("particles.json"), particles.as_bytes())?;
    write_checker(dir, report)?;
    for (t, q) in &out.snapshots {
        let path = dir.join("snapshots").join(format!("q_{:09.2}.csv", t));
        write_atomic(&path, snapshot_csv(mesh, q)?.as_bytes())?;
    }
    Ok(())
}
