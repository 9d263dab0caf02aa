//! Cross-seed summaries of metrics files.
//!
//! A run succeeds when the median return over its final window of episodes
//! reaches the threshold. Unless set explicitly, the threshold is a fraction
//! of the best such median among centralized runs (or among all runs when no
//! centralized run is present).
//!
//! Summary files can be summarized again: their group rows pass through
//! unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::metrics::{read_metrics, MetricsFile};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    /// Episodes at the end of each run used for the success statistic.
    pub window: usize,
    pub threshold_fraction: f64,
    /// Absolute threshold; overrides `threshold_fraction` when set.
    pub threshold: Option<f64>,
    /// Number of episodes kept in the downsampled curves.
    pub curve_points: usize,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            window: 100,
            threshold_fraction: 0.85,
            threshold: None,
            curve_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median over runs of each run's final-window median return.
    pub median_final_return: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub threshold: f64,
    pub window: usize,
    pub groups: Vec<GroupSummary>,
}

/// Linearly interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Median return over the last `window` episodes of a run.
pub fn final_window_median(returns: &[f64], window: usize) -> f64 {
    median(&returns[returns.len().saturating_sub(window)..])
}

/// One training run reduced to what the summary needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReturns {
    pub label: String,
    pub returns: Vec<f64>,
}

impl RunReturns {
    pub fn from_metrics(file: &MetricsFile, fallback_label: &str) -> Self {
        Self {
            label: file.header_value("label").unwrap_or_else(|| fallback_label.to_string()),
            returns: file.records.iter().map(|r| r.episode_return).collect(),
        }
    }
}

fn is_centralized(label: &str) -> bool {
    label == "td3"
}

fn curve(runs: &[&RunReturns], points: usize) -> Vec<CurvePoint> {
    let len = runs.iter().map(|r| r.returns.len()).min().unwrap_or(0);
    if len == 0 || points == 0 {
        return Vec::new();
    }
    let mut episodes: Vec<usize> = (0..points.min(len))
        .map(|k| if points.min(len) == 1 { len - 1 } else { k * (len - 1) / (points.min(len) - 1) })
        .collect();
    episodes.dedup();
    episodes
        .into_iter()
        .map(|i| {
            let at: Vec<f64> = runs.iter().map(|r| r.returns[i]).collect();
            CurvePoint {
                episode: i + 1,
                median: median(&at),
                q25: quantile(&at, 0.25),
                q75: quantile(&at, 0.75),
            }
        })
        .collect()
}

/// Summarizes runs grouped by label. `passthrough` groups come from earlier
/// summaries and are kept as they are unless a run with the same label is
/// also present.
pub fn summarize_runs(
    runs: &[RunReturns],
    passthrough: Vec<GroupSummary>,
    passthrough_threshold: Option<f64>,
    opts: &SummaryOptions,
) -> Result<Summary> {
    if runs.is_empty() && passthrough.is_empty() {
        return Err(Error::Precondition("nothing to summarize".into()));
    }
    if runs.iter().any(|r| r.returns.is_empty()) {
        return Err(Error::Precondition("a metrics file has no episodes".into()));
    }
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| final_window_median(&r.returns, opts.window))
        .collect();
    let threshold = match opts.threshold.or(passthrough_threshold) {
        Some(t) => t,
        None => {
            let central: Vec<f64> = runs
                .iter()
                .zip(&finals)
                .filter(|(r, _)| is_centralized(&r.label))
                .map(|(_, f)| *f)
                .collect();
            let pool = if central.is_empty() {
                log::warn!("no centralized run present; threshold anchored to the best run overall");
                &finals
            } else {
                &central
            };
            opts.threshold_fraction * pool.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    };
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        by_label.entry(&r.label).or_default().push(i);
    }
    let mut groups: Vec<GroupSummary> = passthrough
        .into_iter()
        .filter(|g| !by_label.contains_key(g.label.as_str()))
        .collect();
    for (label, idx) in by_label {
        let group_finals: Vec<f64> = idx.iter().map(|&i| finals[i]).collect();
        let successes = group_finals.iter().filter(|&&f| f >= threshold).count();
        let members: Vec<&RunReturns> = idx.iter().map(|&i| &runs[i]).collect();
        groups.push(GroupSummary {
            label: label.to_string(),
            runs: idx.len(),
            successes,
            success_rate: successes as f64 / idx.len() as f64,
            median_final_return: median(&group_finals),
            curve: curve(&members, opts.curve_points),
        });
    }
    groups.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(Summary {
        threshold,
        window: opts.window,
        groups,
    })
}

const SUMMARY_COLUMNS: &str = "label,runs,successes,success_rate,median_final_return";

pub fn render_summary(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# kind = \"summary\"");
    let _ = writeln!(out, "# threshold = {}", summary.threshold);
    let _ = writeln!(out, "# window = {}", summary.window);
    let _ = writeln!(out, "{SUMMARY_COLUMNS}");
    for g in &summary.groups {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            g.label, g.runs, g.successes, g.success_rate, g.median_final_return
        );
    }
    out
}

pub fn render_curves(summary: &Summary) -> String {
    let mut out = String::from("label,episode,median,q25,q75\n");
    for g in &summary.groups {
        for p in &g.curve {
            let _ = writeln!(out, "{},{},{},{},{}", g.label, p.episode, p.median, p.q25, p.q75);
        }
    }
    out
}

fn parse_summary(path: &Path, text: &str) -> Result<(Vec<GroupSummary>, Option<f64>)> {
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    let mut threshold = None;
    let mut groups = Vec::new();
    let mut seen_columns = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                if k.trim() == "threshold" {
                    threshold = Some(v.trim().parse().map_err(|_| bad("bad threshold"))?);
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if line != SUMMARY_COLUMNS {
                return Err(bad("unexpected summary columns"));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("summary rows need 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        groups.push(GroupSummary {
            label: f[0].to_string(),
            runs: int(f[1])?,
            successes: int(f[2])?,
            success_rate: num(f[3])?,
            median_final_return: num(f[4])?,
            curve: Vec::new(),
        });
    }
    Ok((groups, threshold))
}

/// Reads metrics or summary files and summarizes them.
pub fn export_summary(paths: &[PathBuf], opts: &SummaryOptions) -> Result<Summary> {
    if paths.is_empty() {
        return Err(Error::Precondition("at least one metrics file is required".into()));
    }
    let mut runs = Vec::new();
    let mut passthrough = Vec::new();
    let mut passthrough_threshold = None;
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.starts_with("# kind = \"summary\"") {
            let (groups, t) = parse_summary(path, &text)?;
            passthrough.extend(groups);
            passthrough_threshold = passthrough_threshold.or(t);
        } else {
            let file = read_metrics(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            runs.push(RunReturns::from_metrics(&file, stem));
        }
    }
    summarize_runs(&runs, passthrough, passthrough_threshold, opts)
}
