//! Per-episode metrics and their CSV form.
//!
//! A metrics file starts with a block of `#`-prefixed lines echoing the run
//! configuration, followed by a header row and one row per episode:
//!
//! ```text
//! # run = "train"
//! # seed = 3
//! # mode = "DecentralizedAenTd3"
//! # ...
//! seed,episode,return,episode_length,done_reason,aen_mse,final_height
//! 3,1,12.5,25,SafetyTermination,,0.61
//! ```
//!
//! Optional values are left empty. Numbers use Rust's shortest round-trip
//! formatting, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::env::DoneReason;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: u64,
    pub episode: usize,
    /// Undiscounted sum of rewards within the episode.
    pub episode_return: f64,
    pub episode_length: usize,
    pub done_reason: DoneReason,
    /// Estimation error against the scripted partner, when one is present.
    pub aen_mse: Option<f64>,
    /// Beam height after the last step.
    pub final_height: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsFile {
    /// Echo lines without their leading `# `.
    pub header: Vec<String>,
    pub records: Vec<MetricsRecord>,
}

impl MetricsFile {
    /// Value of a `key = value` echo line, with surrounding quotes removed.
    pub fn header_value(&self, key: &str) -> Option<String> {
        self.header.iter().find_map(|line| {
            let (k, v) = line.split_once('=')?;
            (k.trim() == key).then(|| v.trim().trim_matches('"').to_string())
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_metrics(header: &[String], records: &[MetricsRecord], with_wall_time: bool) -> String {
    let mut out = String::new();
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("seed,episode,return,episode_length,done_reason,aen_mse,final_height");
    if with_wall_time {
        out.push_str(",wall_time_s");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.episode,
            r.episode_return,
            r.episode_length,
            r.done_reason,
            opt(r.aen_mse),
            opt(r.final_height)
        );
        if with_wall_time {
            let _ = write!(out, ",{}", r.wall_time_s);
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics(
    path: &Path,
    header: &[String],
    records: &[MetricsRecord],
    with_wall_time: bool,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render_metrics(header, records, with_wall_time).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut records = Vec::new();
    let bad = |line: usize, msg: String| Error::Parse(format!("{}:{line}: {msg}", path.display()));
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.strip_prefix('#') {
            header.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let Some(cols) = &columns else {
            columns = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        };
        if fields.len() != cols.len() {
            return Err(bad(i + 1, format!("expected {} fields", cols.len())));
        }
        let get = |name: &str| -> Result<&str> {
            cols.iter()
                .position(|c| c == name)
                .map(|k| fields[k])
                .ok_or_else(|| bad(i + 1, format!("missing column {name}")))
        };
        let num = |name: &str| -> Result<f64> {
            get(name)?
                .parse::<f64>()
                .map_err(|e| bad(i + 1, format!("{name}: {e}")))
        };
        let opt_num = |name: &str| -> Result<Option<f64>> {
            match cols.iter().position(|c| c == name).map(|k| fields[k]) {
                None | Some("") => Ok(None),
                Some(v) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| bad(i + 1, format!("{name}: {e}"))),
            }
        };
        let int = |name: &str| -> Result<u64> {
            get(name)?
                .parse::<u64>()
                .map_err(|e| bad(i + 1, format!("{name}: {e}")))
        };
        records.push(MetricsRecord {
            seed: int("seed")?,
            episode: int("episode")? as usize,
            episode_return: num("return")?,
            episode_length: int("episode_length")? as usize,
            done_reason: DoneReason::parse(get("done_reason")?)?,
            aen_mse: opt_num("aen_mse")?,
            final_height: opt_num("final_height")?,
            wall_time_s: opt_num("wall_time_s")?.unwrap_or(0.0),
        });
    }
    if columns.is_none() {
        return Err(Error::Parse(format!("{}: no header row", path.display())));
    }
    Ok(MetricsFile { header, records })
}
