//! Upsampling of low-rate policy actions to actuator-rate commands, with a
//! rate-of-change safety filter.
//!
//! Each policy period is split into `k = control_rate / policy_rate` control
//! cycles. Cycle `j` (1-based) receives `prev + (j / k) * (next - prev)`, so
//! the last cycle of a segment carries the new action exactly and no command
//! is repeated across segment boundaries.
//!
//! A command is rejected when its max-norm change from the last *emitted*
//! command exceeds `max_step_delta` (a change exactly equal to the threshold
//! passes). Rejected commands are recorded but not emitted; the actuator holds
//! its last accepted command, which stays the comparison baseline.

use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationConfig {
    pub policy_rate_hz: f64,
    pub control_rate_hz: f64,
    pub max_step_delta: f64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        Self {
            policy_rate_hz: 4.0,
            control_rate_hz: 20.0,
            max_step_delta: 0.01,
        }
    }
}

impl InterpolationConfig {
    /// Control cycles per policy period.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.policy_rate_hz > 0.0 && self.control_rate_hz > 0.0) {
            return Err(Error::config("rates must be positive"));
        }
        if !(self.max_step_delta > 0.0) {
            return Err(Error::config("max_step_delta must be positive"));
        }
        let ratio = self.control_rate_hz / self.policy_rate_hz;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::config(format!(
                "control rate {} Hz is not an integer multiple of policy rate {} Hz",
                self.control_rate_hz, self.policy_rate_hz
            )));
        }
        Ok(k as usize)
    }
}

/// The `k` commands spanning one policy period.
pub fn interpolate(prev: &[f64], next: &[f64], config: &InterpolationConfig) -> Result<Vec<Vec<f64>>> {
    let k = config.substeps()?;
    if prev.len() != next.len() {
        return Err(Error::shape("interpolation endpoints differ in length"));
    }
    Ok((1..=k)
        .map(|j| {
            if j == k {
                return next.to_vec();
            }
            let frac = j as f64 / k as f64;
            prev.iter().zip(next).map(|(p, n)| p + frac * (n - p)).collect()
        })
        .collect())
}

/// True when `candidate` may follow `prev_emitted`.
pub fn safety_filter(prev_emitted: &[f64], candidate: &[f64], config: &InterpolationConfig) -> bool {
    max_abs_change(prev_emitted, candidate) <= config.max_step_delta
}

fn max_abs_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub timestamp: f64,
    pub values: Vec<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandStream {
    pub commands: Vec<Command>,
}

impl CommandStream {
    pub fn accepted(&self) -> impl Iterator<Item = &Command> {
        self.commands.iter().filter(|c| c.accepted)
    }

    pub fn rejected_count(&self) -> usize {
        self.commands.iter().filter(|c| !c.accepted).count()
    }
}

/// Streaming form of [`run_pipeline`]: feed policy actions one at a time.
#[derive(Debug, Clone)]
pub struct CommandPipeline {
    config: InterpolationConfig,
    substeps: usize,
    last_action: Option<Vec<f64>>,
    last_emitted: Option<Vec<f64>>,
    cycle: u64,
    in_rejection_run: bool,
}

impl CommandPipeline {
    pub fn new(config: InterpolationConfig) -> Result<Self> {
        let substeps = config.substeps()?;
        Ok(Self {
            config,
            substeps,
            last_action: None,
            last_emitted: None,
            cycle: 0,
            in_rejection_run: false,
        })
    }

    /// Evaluates the commands leading up to `action`. The first action only
    /// initializes the actuator state and yields no commands.
    pub fn push(&mut self, action: &[f64]) -> Result<Vec<Command>> {
        let Some(prev) = self.last_action.replace(action.to_vec()) else {
            self.last_emitted = Some(action.to_vec());
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(self.substeps);
        for values in interpolate(&prev, action, &self.config)? {
            self.cycle += 1;
            let emitted = self.last_emitted.as_deref().unwrap_or(&prev);
            let change = max_abs_change(emitted, &values);
            let accepted = change <= self.config.max_step_delta;
            if accepted {
                self.in_rejection_run = false;
                self.last_emitted = Some(values.clone());
            } else if !self.in_rejection_run {
                self.in_rejection_run = true;
                warn!(
                    "rejected command at cycle {}: change {change:.6} exceeds {}",
                    self.cycle, self.config.max_step_delta
                );
            }
            out.push(Command {
                timestamp: self.cycle as f64 / self.config.control_rate_hz,
                values,
                accepted,
            });
        }
        Ok(out)
    }
}

/// Interpolates consecutive policy actions and filters every resulting
/// command, yielding `k * (len - 1)` evaluated commands.
pub fn run_pipeline(policy_actions: &[Vec<f64>], config: &InterpolationConfig) -> Result<CommandStream> {
    if policy_actions.is_empty() {
        return Err(Error::Precondition("no policy actions".into()));
    }
    let dim = policy_actions[0].len();
    if policy_actions.iter().any(|a| a.len() != dim) {
        return Err(Error::shape("policy actions differ in length"));
    }
    let mut pipeline = CommandPipeline::new(*config)?;
    let mut stream = CommandStream::default();
    for a in policy_actions {
        stream.commands.extend(pipeline.push(a)?);
    }
    Ok(stream)
}

/// Reads one action per row; blank lines and `#` comments are skipped and a
/// non-numeric first row is treated as a header.
pub fn read_actions_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut actions = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => actions.push(row),
            Err(_) if actions.is_empty() && lineno == 0 => continue,
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{}:{}: {e}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(actions)
}

/// Writes `timestamp,c0,...,c{n-1},accepted` rows.
pub fn write_stream_csv(path: &Path, stream: &CommandStream) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let dim = stream.commands.first().map_or(0, |c| c.values.len());
    let mut header = vec!["timestamp".to_string()];
    header.extend((0..dim).map(|i| format!("c{i}")));
    header.push("accepted".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for c in &stream.commands {
        write!(w, "{}", c.timestamp).map_err(io)?;
        for v in &c.values {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w, ",{}", u8::from(c.accepted)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(delta: f64) -> InterpolationConfig {
        InterpolationConfig {
            max_step_delta: delta,
            ..InterpolationConfig::default()
        }
    }

    #[test]
    fn ramp_to_bound() {
        let out = interpolate(&[0.0], &[0.04], &cfg(0.01)).unwrap();
        let expected = [0.008, 0.016, 0.024, 0.032, 0.04];
        assert_eq!(out.len(), 5);
        for (c, e) in out.iter().zip(expected) {
            assert!((c[0] - e).abs() < 1e-17);
        }
        assert_eq!(out[4][0], 0.04);
    }

    #[test]
    fn constant_segment() {
        let out = interpolate(&[0.3, -0.1], &[0.3, -0.1], &cfg(0.01)).unwrap();
        assert!(out.iter().all(|c| c == &vec![0.3, -0.1]));
    }

    #[test]
    fn componentwise_linearity() {
        let c = cfg(0.01);
        let joint = interpolate(&[0.0, 1.0], &[0.5, -1.0], &c).unwrap();
        let a = interpolate(&[0.0], &[0.5], &c).unwrap();
        let b = interpolate(&[1.0], &[-1.0], &c).unwrap();
        for j in 0..5 {
            assert_eq!(joint[j], vec![a[j][0], b[j][0]]);
        }
    }

    #[test]
    fn non_integer_ratio() {
        let c = InterpolationConfig {
            policy_rate_hz: 3.0,
            ..InterpolationConfig::default()
        };
        assert!(matches!(interpolate(&[0.0], &[1.0], &c), Err(Error::Config(_))));
    }

    #[test]
    fn filter_examples() {
        let c = cfg(0.01);
        assert!(safety_filter(&[0.1, 0.2], &[0.1, 0.2], &c));
        assert!(!safety_filter(&[0.0, 0.0], &[0.0, 0.02], &c));
        assert!(safety_filter(&[0.0], &[0.01], &c));
    }

    #[test]
    fn pipeline_counts_and_transparency() {
        let stream = run_pipeline(&[vec![0.0], vec![0.04]], &cfg(0.01)).unwrap();
        assert_eq!(stream.commands.len(), 5);
        assert_eq!(stream.rejected_count(), 0);
        let ts: Vec<f64> = stream.commands.iter().map(|c| c.timestamp).collect();
        assert_eq!(ts, vec![0.05, 0.1, 0.15, 0.2, 0.25]);
        assert!(run_pipeline(&[], &cfg(0.01)).is_err());
    }

    #[test]
    fn abrupt_jump_is_rejected() {
        // 0.1 over five substeps is 0.02 per substep, above 0.01.
        let stream = run_pipeline(&[vec![0.0], vec![0.0], vec![0.1]], &cfg(0.01)).unwrap();
        assert_eq!(stream.commands.len(), 10);
        assert!(stream.rejected_count() >= 1);
        assert!(stream.commands[..5].iter().all(|c| c.accepted));
    }

    #[test]
    fn rejection_holds_previous_baseline() {
        // After a rejected 0.02 step the baseline stays at 0, so 0.04 is also rejected.
        let mut p = CommandPipeline::new(InterpolationConfig {
            policy_rate_hz: 20.0,
            control_rate_hz: 20.0,
            max_step_delta: 0.01,
        })
        .unwrap();
        p.push(&[0.0]).unwrap();
        assert!(!p.push(&[0.02]).unwrap()[0].accepted);
        assert!(!p.push(&[0.04]).unwrap()[0].accepted);
        assert!(p.push(&[0.005]).unwrap()[0].accepted);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("actions.csv");
        std::fs::write(&input, "a0,a1\n0.0,0.0\n0.01,-0.01\n# comment\n\n0.02,0.0\n").unwrap();
        let actions = read_actions_csv(&input).unwrap();
        assert_eq!(actions, vec![vec![0.0, 0.0], vec![0.01, -0.01], vec![0.02, 0.0]]);
        let stream = run_pipeline(&actions, &cfg(0.01)).unwrap();
        let out = dir.path().join("stream.csv");
        write_stream_csv(&out, &stream).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("timestamp,c0,c1,accepted"));
        assert_eq!(lines.count(), 10);
    }
}
