//! Trajectory records, episode collection, filter datasets and CSV reports.
//!
//! Records are JSON Lines: a header object opens each trajectory and is
//! followed by one row object per timestep. A file may hold any number of
//! trajectories back to back.

mod collect;
mod dataset;
mod report;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use collect::{collect_dataset, episode_seed, run_episode, worker_count, PolicyFactory, THREADS_ENV};
pub use dataset::{assign_split, build_filter_dataset, DatasetPair, FilterDataset, Split, SplitConfig};
pub use report::{emit_report, fmt_sig, render_report, ReportRow, Stat, REPORT_COLUMNS};

use crate::evader::EvaderMode;
use crate::geom::Vec2;
use crate::world::{episode_metrics, Detection, EpisodeMetrics, Outcome, StepStats};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub trajectory_id: u64,
    pub episode_seed: u64,
    pub terrain_seed: u64,
    pub layout_seed: u64,
    pub config_hash: String,
    pub policy: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub t_max: usize,
    pub evader_start: Vec2,
    pub goal: usize,
    /// Roster indices of the moving agents.
    pub learnable: Vec<usize>,
}

/// State after one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub evader_pos: Vec2,
    pub evader_vel: Vec2,
    pub evader_mode: EvaderMode,
    pub agent_pos: Vec<Vec2>,
    pub detections: Vec<Detection>,
    /// One per learnable agent.
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub header: TrajectoryHeader,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn step_stats(&self) -> Vec<StepStats> {
        self.rows
            .iter()
            .map(|r| StepStats {
                detected: !r.detections.is_empty(),
                closest_distance: self
                    .header
                    .learnable
                    .iter()
                    .map(|&i| r.agent_pos[i].dist(r.evader_pos))
                    .fold(f64::INFINITY, f64::min),
                team_reward: r.rewards.iter().sum::<f64>() / r.rewards.len().max(1) as f64,
            })
            .collect()
    }

    pub fn metrics(&self) -> Result<EpisodeMetrics> {
        Ok(episode_metrics(&self.step_stats())?)
    }

    /// Every detection of the episode in timestep order.
    pub fn detections(&self) -> Vec<Detection> {
        self.rows.iter().flat_map(|r| r.detections.iter().copied()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TrajectoryHeader),
    Row(TrajectoryRow),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a TrajectoryHeader),
    Row(&'a TrajectoryRow),
}

pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, &LineRef::Header(&rec.header))?;
        w.write_all(b"\n")?;
        for row in &rec.rows {
            serde_json::to_writer(&mut w, &LineRef::Row(row))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let shown = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: shown.clone(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<(usize, TrajectoryRecord)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| parse_err(n, e.to_string()))? {
            Line::Header(header) => out.push((n, TrajectoryRecord { header, rows: Vec::new() })),
            Line::Row(row) => match out.last_mut() {
                Some((_, rec)) => rec.rows.push(row),
                None => return Err(parse_err(n, "row before any header".into())),
            },
        }
    }
    for (n, rec) in &out {
        if rec.rows.is_empty() {
            return Err(parse_err(*n, "trajectory has no rows".into()));
        }
        if rec.rows.len() != rec.header.steps {
            return Err(parse_err(
                *n,
                format!("header announces {} steps, found {}", rec.header.steps, rec.rows.len()),
            ));
        }
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Reads every `*.jsonl` under `dir` in file-name order.
pub fn read_dir_records(dir: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records(&f)?);
    }
    Ok(out)
}

/// Aggregate detection rate over all timesteps of all records.
pub fn aggregate_detection_rate(records: &[TrajectoryRecord]) -> f64 {
    let steps: usize = records.iter().map(|r| r.rows.len()).sum();
    let detected: usize = records
        .iter()
        .map(|r| r.rows.iter().filter(|row| !row.detections.is_empty()).count())
        .sum();
    if steps == 0 {
        0.0
    } else {
        detected as f64 / steps as f64
    }
}
