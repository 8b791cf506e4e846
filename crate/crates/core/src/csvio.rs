//! Episodes and summary CSV files.
//!
//! ```text
//! episodes: mode,relay_count,run,episode,termination,steps,delivery_pct,energy_pct,reward_sum,time_ms
//! summary:  mode,relay_count,delivery_mean,delivery_sd,energy_mean,energy_sd,time_mean_ms,time_sd_ms,per_agent_time_ms,episodes,runs
//! ```
//!
//! UTF-8, LF line endings, header row required. Floats are written in
//! shortest round-trip form, so reading a file back gives identical values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{EpisodeRow, SummaryRow};

pub const EPISODE_COLUMNS: [&str; 10] = [
    "mode",
    "relay_count",
    "run",
    "episode",
    "termination",
    "steps",
    "delivery_pct",
    "energy_pct",
    "reward_sum",
    "time_ms",
];

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "mode",
    "relay_count",
    "delivery_mean",
    "delivery_sd",
    "energy_mean",
    "energy_sd",
    "time_mean_ms",
    "time_sd_ms",
    "per_agent_time_ms",
    "episodes",
    "runs",
];

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T], columns: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn read_rows<R: Read, T: DeserializeOwned>(input: R, columns: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers().map_err(parse_error)?.clone();
    for (i, expected) in columns.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *expected => {}
            Some(h) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected column `{expected}` at position {}, found `{h}`", i + 1),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing column `{expected}`"),
                })
            }
        }
    }
    if headers.len() > columns.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected column `{}`", &headers[columns.len()]),
        });
    }
    r.deserialize().map(|row| row.map_err(parse_error)).collect()
}

fn parse_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("field {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

pub fn write_episodes<W: Write>(out: W, rows: &[EpisodeRow]) -> Result<()> {
    write_rows(out, rows, &EPISODE_COLUMNS)
}

pub fn read_episodes<R: Read>(input: R) -> Result<Vec<EpisodeRow>> {
    read_rows(input, &EPISODE_COLUMNS)
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    write_rows(out, rows, &SUMMARY_COLUMNS)
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    read_rows(input, &SUMMARY_COLUMNS)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

pub fn write_episodes_file(path: &Path, rows: &[EpisodeRow]) -> Result<()> {
    write_episodes(create(path)?, rows).map_err(|e| with_path(path, e))
}

pub fn read_episodes_file(path: &Path) -> Result<Vec<EpisodeRow>> {
    read_episodes(open(path)?)
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_summary(create(path)?, rows).map_err(|e| with_path(path, e))
}

pub fn read_summary_file(path: &Path) -> Result<Vec<SummaryRow>> {
    read_summary(open(path)?)
}
