//! CSV formats. Floats are written in shortest round-trip form so that a
//! log read back reproduces the exact values.
//!
//! Spike log: `# n_steps=<n>` and optional `# segment_len=<n>` lines, then
//! `step,neuron`.
//!
//! Update log: `step,kind,index,i,j,trigger,delta` where `kind` is `weight`
//! (index = block, `i`/`j` local row/column) or `bias` (index = layer, `i`
//! empty, `j` = neuron), and `trigger` is the global index of the spiking
//! neuron (empty for biases).
//!
//! Run log: `#`-prefixed resolved config, then one row per epoch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::SpikeLog;
use crate::trainer::{EpochMetrics, Phase, Synapse, UpdateEntry, UpdateLog};

pub const RUN_LOG_COLUMNS: &str =
    "epoch,train_acc,test_acc,nudged_images,spikes_per_neuron_per_image,synops_cumulative";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// `key=value` pairs from the leading `#` lines.
fn header_values(text: &str) -> Vec<(&str, &str)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l[1..].trim().split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes())
}

pub fn write_spike_log(path: &Path, log: &SpikeLog) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "# n_steps={}", log.n_steps).map_err(io)?;
    if let Some(len) = log.segment_len {
        writeln!(out, "# segment_len={len}").map_err(io)?;
    }
    writeln!(out, "step,neuron").map_err(io)?;
    for e in &log.events {
        writeln!(out, "{},{}", e.step, e.neuron).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_spike_log(path: &Path) -> Result<SpikeLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut log = SpikeLog::new();
    let mut declared = None;
    for (k, v) in header_values(&text) {
        let n: u64 = v
            .parse()
            .map_err(|_| Error::Parse(format!("{}: bad header value {k}={v}", path.display())))?;
        match k {
            "n_steps" => declared = Some(n),
            "segment_len" => log.segment_len = Some(n),
            _ => {}
        }
    }
    for rec in reader(&text).deserialize::<(u64, usize)>() {
        let (step, neuron) = rec.map_err(|e| csv_err(path, e))?;
        if log.events.last().is_some_and(|e| e.step > step) {
            return Err(Error::Parse(format!("{}: spikes out of time order", path.display())));
        }
        log.push(step, neuron);
    }
    if let Some(n) = declared {
        log.n_steps = log.n_steps.max(n);
    }
    Ok(log)
}

#[derive(Debug, Serialize, Deserialize)]
struct UpdateRow {
    step: u64,
    kind: String,
    index: usize,
    i: Option<usize>,
    j: usize,
    trigger: Option<u32>,
    delta: f64,
}

pub fn write_update_log(path: &Path, log: &UpdateLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for e in &log.entries {
        let row = match e.synapse {
            Synapse::Weight { block, i, j } => UpdateRow {
                step: e.step,
                kind: "weight".into(),
                index: block,
                i: Some(i),
                j,
                trigger: e.trigger,
                delta: e.delta,
            },
            Synapse::Bias { layer, j } => UpdateRow {
                step: e.step,
                kind: "bias".into(),
                index: layer,
                i: None,
                j,
                trigger: e.trigger,
                delta: e.delta,
            },
        };
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_update_log(path: &Path) -> Result<UpdateLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut log = UpdateLog::new();
    for rec in reader(&text).deserialize::<UpdateRow>() {
        let r = rec.map_err(|e| csv_err(path, e))?;
        let synapse = match (r.kind.as_str(), r.i) {
            ("weight", Some(i)) => Synapse::Weight { block: r.index, i, j: r.j },
            ("bias", None) => Synapse::Bias { layer: r.index, j: r.j },
            _ => return Err(Error::Parse(format!("{}: bad update kind {:?}", path.display(), r.kind))),
        };
        log.entries.push(UpdateEntry {
            step: r.step,
            synapse,
            trigger: r.trigger,
            delta: r.delta,
            phase: Phase::Nudge,
        });
    }
    Ok(log)
}

/// Per-epoch CSV, created with the resolved config echoed as comments.
pub struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunLog {
    pub fn create(path: &Path, resolved_config: &str) -> Result<Self> {
        let mut out = create(path)?;
        let io = |e| Error::io(path, e);
        for line in resolved_config.lines() {
            writeln!(out, "# {line}").map_err(io)?;
        }
        writeln!(out, "{RUN_LOG_COLUMNS}").map_err(io)?;
        out.flush().map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    /// Reopens an existing run log for appending further epochs.
    pub fn reopen(path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> Result<()> {
        let io = |e| Error::io(&self.path, e);
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            m.epoch, m.train_acc, m.test_acc, m.nudged_images, m.spikes_per_neuron_per_image, m.synops_cumulative
        )
        .map_err(io)?;
        self.out.flush().map_err(io)
    }

    /// Epoch rows of an existing run log.
    pub fn read(path: &Path) -> Result<Vec<EpochMetrics>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        reader(&text)
            .deserialize::<EpochMetrics>()
            .map(|r| r.map_err(|e| csv_err(path, e)))
            .collect()
    }
}
