//! JSON-lines metrics stream. The first line echoes the run configuration;
//! every later line is one [`StepRecord`]. Each line is self-contained, so
//! a truncated final line leaves the earlier records readable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::StepRecord;

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path, config: &RunConfig, seed: u64) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), config, seed).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, config: &RunConfig, seed: u64) -> std::io::Result<Self> {
        let cfg: Map<String, Value> = config
            .pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect();
        let header = json!({ "kind": "header", "seed": seed, "config": cfg });
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &StepRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a metrics stream, dropping an unparsable final line.
pub fn read_records(text: &str) -> std::result::Result<Vec<Value>, serde_json::Error> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64) -> StepRecord {
        StepRecord {
            step,
            episode: 0,
            episode_return: None,
            done: false,
            loss_huber: Some(0.25),
            loss_wasserstein: None,
            epsilon: 1.0,
            fraction_entropy: 2.0f64.ln(),
        }
    }

    #[test]
    fn header_echoes_every_key() {
        let mut w = MetricsWriter::new(Vec::new(), &RunConfig::default(), 3).unwrap();
        w.write(&record(1)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let recs = read_records(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0]["kind"], "header");
        assert_eq!(recs[0]["config"]["tau_L"], "2");
        assert_eq!(recs[0]["config"].as_object().unwrap().len(), RunConfig::KEYS.len());
        for key in ["step", "episode", "return", "loss_huber", "loss_wasserstein", "epsilon", "fraction_entropy"] {
            assert!(recs[1].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn truncated_tail_keeps_earlier_records() {
        let mut w = MetricsWriter::new(Vec::new(), &RunConfig::default(), 0).unwrap();
        w.write(&record(1)).unwrap();
        w.write(&record(2)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let cut = &text[..text.len() - 10];
        let recs = read_records(cut).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1]["step"], 1);
    }
}
