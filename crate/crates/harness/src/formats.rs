//! Config JSON, metrics and trace JSON lines, histogram CSV.

use crate::{HarnessError, Result};
use eat_hrl_core::analysis::DelayHistogram;
use eat_hrl_core::config::ExperimentConfig;
use eat_hrl_core::runner::{MetricRecord, RunSink, TraceRecord};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Reads and validates an experiment file. Unknown keys are errors.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Json { path: path.into(), source: e })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| HarnessError::Json { path: path.into(), source: e })?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Streams metrics and traces to JSON-lines files, flushing each metric.
pub struct JsonlSink {
    metrics: Option<(PathBuf, BufWriter<File>)>,
    traces: Option<(PathBuf, BufWriter<File>)>,
    error: Option<HarnessError>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

impl JsonlSink {
    pub fn new(metrics: Option<&Path>, traces: Option<&Path>) -> Result<Self> {
        Ok(Self {
            metrics: metrics.map(|p| create(p).map(|w| (p.to_path_buf(), w))).transpose()?,
            traces: traces.map(|p| create(p).map(|w| (p.to_path_buf(), w))).transpose()?,
            error: None,
        })
    }

    fn write<T: serde::Serialize>(slot: &mut Option<(PathBuf, BufWriter<File>)>, error: &mut Option<HarnessError>, value: &T, flush: bool) {
        let Some((path, w)) = slot else { return };
        if error.is_some() {
            return;
        }
        let line = serde_json::to_string(value).expect("records serialize");
        let res = writeln!(w, "{line}").and_then(|_| if flush { w.flush() } else { Ok(()) });
        if let Err(e) = res {
            *error = Some(HarnessError::io(path.clone(), e));
        }
    }

    /// Flushes and reports the first write error, if any.
    pub fn finish(mut self) -> Result<()> {
        for (path, w) in [self.metrics.as_mut(), self.traces.as_mut()].into_iter().flatten() {
            if let Err(e) = w.flush() {
                self.error.get_or_insert(HarnessError::io(path.clone(), e));
            }
        }
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl RunSink for JsonlSink {
    fn metric(&mut self, record: &MetricRecord) {
        Self::write(&mut self.metrics, &mut self.error, record, true);
    }

    fn trace(&mut self, record: &TraceRecord) {
        Self::write(&mut self.traces, &mut self.error, record, false);
    }
}

/// Parses one trace file; malformed lines are reported with their line number.
pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| HarnessError::Trace { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Trace files matching `pattern`, sorted. Episode ids are made disjoint
/// across files.
pub fn read_trace_glob(pattern: &str) -> Result<Vec<TraceRecord>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.filter_map(|p| p.ok()).collect();
    paths.sort();
    let mut all = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        for mut r in read_traces(p)? {
            r.episode = ((k as u64) << 40) | (r.episode & ((1 << 40) - 1));
            all.push(r);
        }
    }
    Ok(all)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::Trace { path: path.into(), line: i + 1, message: e.to_string() }))
        .collect()
}

/// `delay,count` rows for every delay in `0..=window`.
pub fn histogram_csv(h: &DelayHistogram) -> String {
    let mut s = String::from("delay,count\n");
    for (d, c) in h.counts.iter().enumerate() {
        s.push_str(&format!("{d},{c}\n"));
    }
    s
}

pub fn write_histogram(path: &Path, h: &DelayHistogram) -> Result<()> {
    std::fs::write(path, histogram_csv(h)).map_err(|e| HarnessError::io(path, e))
}
