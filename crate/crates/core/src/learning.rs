//! Gradient dictionary adaptation and the online propagation loop.
//!
//! After a segment is coded, every atom `m` moves along
//! `(eta / noise_var) * sum_i a_i * residual[tau_i .. tau_i + len_m]`, summed
//! over the instances that used it, then may grow a zero tail and is
//! renormalized. Atoms that were never selected are left alone.

use std::fs;
use std::path::Path;

use crate::coding::{encode, CodingConfig, SparseCode};
use crate::dictionary::{grow_in_place, Dictionary};
use crate::error::{Error, Result};
use crate::ingest::SignalSegment;
use crate::metrics::{dictionary_distance, fidelity_db};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    /// Step length. Zero disables learning.
    pub eta: f64,
    /// Residual noise variance. Only the ratio `eta / noise_var` matters.
    pub noise_var: f64,
    pub tail_len: usize,
    pub tail_ratio: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            noise_var: 1.0,
            tail_len: 10,
            tail_ratio: 0.1,
        }
    }
}

impl LearnConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self { eta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::invalid(format!("noise variance must be > 0, got {}", self.noise_var)));
        }
        Ok(())
    }
}

/// Gradient of `-||s - s_hat||^2 / (2 noise_var)` with respect to each
/// atom's samples, amplitudes and offsets held fixed. `None` for atoms
/// without instances.
pub fn log_likelihood_gradient(
    dict: &Dictionary,
    code: &SparseCode,
    segment: &SignalSegment,
    noise_var: f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    if code.residual.len() != segment.len() {
        return Err(Error::LengthMismatch {
            expected: segment.len(),
            found: code.residual.len(),
        });
    }
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; dict.len()];
    for inst in &code.instances {
        let m = dict.index_of(inst.atom_id).ok_or(Error::UnknownAtom(inst.atom_id))?;
        let len = dict.atoms()[m].len();
        let window = code
            .residual
            .get(inst.offset..inst.offset + len)
            .ok_or_else(|| Error::invalid(format!("instance at offset {} overruns the residual", inst.offset)))?;
        let g = grads[m].get_or_insert_with(|| vec![0.0; len]);
        for (gv, r) in g.iter_mut().zip(window) {
            *gv += inst.amplitude * r / noise_var;
        }
    }
    Ok(grads)
}

/// One learning step from a coded segment. With `eta == 0` the dictionary
/// is returned unchanged, generation included.
pub fn gradient_update(
    dict: &Dictionary,
    code: &SparseCode,
    segment: &SignalSegment,
    cfg: &LearnConfig,
) -> Result<Dictionary> {
    cfg.validate()?;
    let grads = log_likelihood_gradient(dict, code, segment, cfg.noise_var)?;
    if cfg.eta == 0.0 {
        return Ok(dict.clone());
    }
    let mut out = dict.clone();
    for (atom, grad) in out.atoms_mut().iter_mut().zip(grads) {
        let Some(grad) = grad else { continue };
        for (w, g) in atom.waveform.iter_mut().zip(&grad) {
            *w += cfg.eta * g;
        }
        grow_in_place(atom, cfg.tail_len, cfg.tail_ratio);
    }
    out.generation += 1;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub block_index: usize,
    pub fidelity_db: f64,
}

/// Sequential encode/update over the training blocks.
pub fn train_baseline(
    blocks: &[SignalSegment],
    init: &Dictionary,
    coding_cfg: &CodingConfig,
    learn_cfg: &LearnConfig,
) -> Result<Dictionary> {
    train_baseline_logged(blocks, init, coding_cfg, learn_cfg).map(|(d, _)| d)
}

/// Like [`train_baseline`], also returning the fidelity of every block.
pub fn train_baseline_logged(
    blocks: &[SignalSegment],
    init: &Dictionary,
    coding_cfg: &CodingConfig,
    learn_cfg: &LearnConfig,
) -> Result<(Dictionary, Vec<TrainRecord>)> {
    learn_cfg.validate()?;
    let mut dict = init.clone();
    let mut log = Vec::with_capacity(blocks.len());
    for (index, block) in blocks.iter().enumerate() {
        let wrap = |e: Error| Error::Block {
            index,
            source: Box::new(e),
        };
        let code = encode(block, &dict, coding_cfg).map_err(wrap)?;
        log.push(TrainRecord {
            block_index: index,
            fidelity_db: fidelity_db(&code, block).map_err(wrap)?,
        });
        if learn_cfg.eta > 0.0 {
            dict = gradient_update(&dict, &code, block, learn_cfg).map_err(wrap)?;
        }
    }
    Ok((dict, log))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub timestamp: i64,
    pub fidelity_db: f64,
    pub distance_deg: f64,
    pub n_instances: usize,
}

/// Per-machine state carried across the segment stream.
#[derive(Debug, Clone)]
pub struct MonitorState {
    pub dictionary: Dictionary,
    baseline: Dictionary,
    pub learn_cfg: LearnConfig,
    pub coding_cfg: CodingConfig,
    pub history: Vec<HistoryRecord>,
    /// Keep a dictionary snapshot every this many segments (0 = never).
    pub snapshot_every: usize,
    pub snapshots: Vec<(i64, Dictionary)>,
}

impl MonitorState {
    pub fn new(baseline: Dictionary, coding_cfg: CodingConfig, learn_cfg: LearnConfig) -> Result<Self> {
        learn_cfg.validate()?;
        Ok(Self {
            dictionary: baseline.clone(),
            baseline,
            learn_cfg,
            coding_cfg,
            history: Vec::new(),
            snapshot_every: 0,
            snapshots: Vec::new(),
        })
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn baseline(&self) -> &Dictionary {
        &self.baseline
    }

    /// Codes one gated, preprocessed segment, adapts the dictionary when
    /// `eta > 0`, and appends a history record.
    pub fn propagate(mut self, segment: &SignalSegment) -> Result<Self> {
        self.step(segment)?;
        Ok(self)
    }

    pub fn step(&mut self, segment: &SignalSegment) -> Result<&HistoryRecord> {
        if let Some(last) = self.history.last() {
            if segment.timestamp <= last.timestamp {
                return Err(Error::OutOfOrder {
                    last: last.timestamp,
                    found: segment.timestamp,
                });
            }
        }
        let code = encode(segment, &self.dictionary, &self.coding_cfg)?;
        let fidelity = fidelity_db(&code, segment)?;
        if self.learn_cfg.eta > 0.0 {
            self.dictionary = gradient_update(&self.dictionary, &code, segment, &self.learn_cfg)?;
        }
        let distance = dictionary_distance(&self.dictionary, &self.baseline)?;
        self.history.push(HistoryRecord {
            timestamp: segment.timestamp,
            fidelity_db: fidelity,
            distance_deg: distance,
            n_instances: code.instances.len(),
        });
        if self.snapshot_every > 0 && (self.history.len() - 1).is_multiple_of(self.snapshot_every) {
            self.snapshots.push((segment.timestamp, self.dictionary.clone()));
        }
        Ok(self.history.last().unwrap())
    }
}

pub const HISTORY_HEADER: &str = "timestamp,fidelity_db,distance_deg,n_instances";

pub fn write_history_csv(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.timestamp, r.fidelity_db, r.distance_deg, r.n_instances
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        if !header_seen {
            if line != HISTORY_HEADER {
                return Err(err(format!("expected header '{HISTORY_HEADER}'")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("invalid number '{s}'")));
        out.push(HistoryRecord {
            timestamp: f[0].trim().parse().map_err(|_| err(format!("invalid timestamp '{}'", f[0])))?,
            fidelity_db: num(f[1])?,
            distance_deg: num(f[2])?,
            n_instances: f[3].trim().parse().map_err(|_| err(format!("invalid count '{}'", f[3])))?,
        });
    }
    Ok(out)
}
