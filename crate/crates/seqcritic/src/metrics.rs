//! JSON-lines metrics log.
//!
//! Wall-clock timing is off by default (wall_ms stays 0) so that runs with
//! the same seed and config produce byte-identical logs; pass
//! `wall_clock=true` to record real elapsed milliseconds instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub phase: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
    pub wall_ms: u64,
}

pub struct MetricsLogger {
    out: BufWriter<File>,
    start: Option<Instant>,
}

impl MetricsLogger {
    pub fn create(path: &Path, wall_clock: bool) -> Result<MetricsLogger> {
        Ok(MetricsLogger {
            out: BufWriter::new(File::create(path)?),
            start: wall_clock.then(Instant::now),
        })
    }

    pub fn log(
        &mut self,
        step: u64,
        phase: &str,
        split: &str,
        metric: &str,
        value: f64,
    ) -> Result<()> {
        let record = MetricRecord {
            step,
            phase: phase.into(),
            split: split.into(),
            metric: metric.into(),
            value,
            wall_ms: self
                .start
                .map(|t| t.elapsed().as_millis() as u64)
                .unwrap_or(0),
        };
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
