use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filter::FilterMetrics;
use crate::Result;

pub const REPORT_COLUMNS: [&str; 14] = [
    "model",
    "detection_rate",
    "detection_rate_std",
    "closest_distance",
    "closest_distance_std",
    "reward",
    "reward_std",
    "total_reward",
    "total_reward_std",
    "LL",
    "ADE",
    "CTP",
    "DESV",
    "RT",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// One report line. `None` cells are written empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub detection_rate: Option<Stat>,
    pub closest_distance: Option<Stat>,
    /// Per-timestep mean team reward.
    pub reward: Option<Stat>,
    /// Per-episode summed team reward.
    pub total_reward: Option<Stat>,
    pub filter: FilterMetrics,
}

impl ReportRow {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    fn cells(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| fmt_sig(x, 4)).unwrap_or_default();
        let stat = |s: Option<Stat>| [num(s.map(|s| s.mean)), num(s.map(|s| s.std))];
        let mut c = vec![csv_field(&self.name)];
        c.extend(stat(self.detection_rate));
        c.extend(stat(self.closest_distance));
        c.extend(stat(self.reward));
        c.extend(stat(self.total_reward));
        let f = &self.filter;
        c.extend([num(f.ll), num(f.ade), num(f.ctp), num(f.desv), num(f.runtime)]);
        c
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `x` rounded to `sig` significant digits, without exponent notation.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - mag;
    if decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        // Rounding can carry into a new digit (9.9996 -> 10.000).
        let digits = s.trim_start_matches('-').replace('.', "");
        let significant = digits.trim_start_matches('0').len();
        if significant > sig && decimals > 0 {
            format!("{:.*}", decimals as usize - 1, x)
        } else {
            s
        }
    } else {
        let p = 10f64.powi(-decimals);
        format!("{:.0}", (x / p).round() * p)
    }
}

pub fn render_report(rows: &[ReportRow]) -> String {
    let mut s = REPORT_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.cells().join(","));
        s.push('\n');
    }
    s
}

/// Writes rows as CSV with the fixed [`REPORT_COLUMNS`] header.
pub fn emit_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_report(rows))?;
    Ok(())
}
