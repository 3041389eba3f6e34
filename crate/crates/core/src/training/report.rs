use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Named scalar losses of one training step, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub terms: IndexMap<String, f64>,
    /// Tape nodes recorded under the identity-loss scope.
    pub identity_nodes: usize,
}

impl LossReport {
    pub fn push(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { term: name.to_owned() });
        }
        self.terms.insert(name.to_owned(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    pub fn max_abs_diff(&self, other: &LossReport) -> Option<f64> {
        if self.terms.len() != other.terms.len() {
            return None;
        }
        self.terms
            .iter()
            .zip(&other.terms)
            .map(|((ka, a), (kb, b))| (ka == kb).then(|| (a - b).abs()))
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }
}

/// One parsed loss-log line.
#[derive(Clone, Debug, PartialEq)]
pub struct LogLine {
    pub step: u64,
    pub resolution: usize,
    pub terms: IndexMap<String, f64>,
}

impl LogLine {
    pub fn format(step: u64, resolution: usize, report: &LossReport) -> String {
        let terms: Vec<String> = report.terms.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{step}\t{resolution}\t{}", terms.join(","))
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed loss-log line `{line}`"));
        let mut parts = line.split('\t');
        let step = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let resolution = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let mut terms = IndexMap::new();
        for kv in parts.next().ok_or_else(bad)?.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            terms.insert(k.to_owned(), v.parse().map_err(|_| bad())?);
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self {
            step,
            resolution,
            terms,
        })
    }
}

/// Append-only text log: `step<TAB>resolution<TAB>name=value,...`.
pub struct LossLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LossLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    /// Reopens an existing log, dropping any lines after `last_step` (steps
    /// a resumed run will redo).
    pub fn resume(path: &Path, last_step: u64) -> Result<Self> {
        let kept: Vec<String> = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut kept = Vec::new();
            for line in text.lines().filter(|l| !l.is_empty()) {
                if LogLine::parse(line)?.step <= last_step {
                    kept.push(format!("{line}\n"));
                }
            }
            kept
        } else {
            Vec::new()
        };
        fs::write(path, kept.concat()).map_err(|e| Error::io(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, step: u64, resolution: usize, report: &LossReport) -> Result<()> {
        writeln!(self.out, "{}", LogLine::format(step, resolution, report)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn read(path: &Path) -> Result<Vec<LogLine>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines().filter(|l| !l.is_empty()).map(LogLine::parse).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let mut r = LossReport::default();
        r.push("cyc_x", 0.1 + 0.2).unwrap();
        r.push("d_y", 1e-9).unwrap();
        let line = LogLine::format(7, 32, &r);
        assert_eq!(line, "7\t32\tcyc_x=0.30000000000000004,d_y=0.000000001");
        let parsed = LogLine::parse(&line).unwrap();
        assert_eq!(parsed.terms, r.terms);
        assert!(r.push("bad", f64::NAN).is_err());
    }

    #[test]
    fn resume_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.log");
        let mut log = LossLog::create(&p).unwrap();
        let mut r = LossReport::default();
        r.push("a", 1.0).unwrap();
        for s in 1..=5 {
            log.append(s, 32, &r).unwrap();
        }
        log.flush().unwrap();
        drop(log);
        let mut log = LossLog::resume(&p, 3).unwrap();
        log.append(4, 32, &r).unwrap();
        log.flush().unwrap();
        let steps: Vec<u64> = LossLog::read(&p).unwrap().iter().map(|l| l.step).collect();
        assert_eq!(steps, [1, 2, 3, 4]);
    }
}
