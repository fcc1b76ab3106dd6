//! Fault indicators derived from distance series, and ROC evaluation.
//!
//! Every `(machine, timestamp)` indicator value is one classification
//! instance. A sample is predicted faulty when its value is at or above the
//! threshold. The default sweep uses every distinct observed value plus
//! `+inf` and `-inf`, so the curve always starts at (0, 0) and ends at (1, 1).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{IndicatorKind, IndicatorSeries, SECONDS_PER_DAY};

pub const DEFAULT_SLOPE_WINDOW: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Healthy,
    Faulty,
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "healthy" => Ok(Label::Healthy),
            "faulty" => Ok(Label::Faulty),
            other => Err(Error::invalid(format!("unknown label '{other}'"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Healthy => "healthy",
            Label::Faulty => "faulty",
        })
    }
}

/// Ground truth for `start <= t < end` on one machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledWindow {
    pub machine_id: String,
    pub start: i64,
    pub end: i64,
    pub label: Label,
}

impl LabeledWindow {
    pub fn contains(&self, machine_id: &str, t: i64) -> bool {
        self.machine_id == machine_id && self.start <= t && t < self.end
    }
}

/// Checks `start < end` and that windows of one machine do not overlap.
pub fn validate_windows(windows: &[LabeledWindow]) -> Result<()> {
    for w in windows {
        if w.start >= w.end {
            return Err(Error::invalid(format!(
                "label window for '{}' has start {} >= end {}",
                w.machine_id, w.start, w.end
            )));
        }
    }
    let mut sorted: Vec<&LabeledWindow> = windows.iter().collect();
    sorted.sort_by(|a, b| a.machine_id.cmp(&b.machine_id).then(a.start.cmp(&b.start)));
    for pair in sorted.windows(2) {
        if pair[0].machine_id == pair[1].machine_id && pair[1].start < pair[0].end {
            return Err(Error::invalid(format!(
                "overlapping label windows for '{}' at {}",
                pair[0].machine_id, pair[1].start
            )));
        }
    }
    Ok(())
}

pub const LABELS_HEADER: &str = "machine_id,start,end,label";

pub fn write_labels_csv(path: &Path, windows: &[LabeledWindow]) -> Result<()> {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for w in windows {
        out.push_str(&format!("{},{},{},{}\n", w.machine_id, w.start, w.end, w.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<LabeledWindow>> {
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
            if line != LABELS_HEADER {
                return Err(err(format!("expected header '{LABELS_HEADER}'")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        out.push(LabeledWindow {
            machine_id: f[0].to_string(),
            start: f[1].parse().map_err(|_| err(format!("invalid start '{}'", f[1])))?,
            end: f[2].parse().map_err(|_| err(format!("invalid end '{}'", f[2])))?,
            label: f[3].parse().map_err(|e: Error| err(e.to_string()))?,
        });
    }
    validate_windows(&out)?;
    Ok(out)
}

/// Least-squares slope of the trailing `window` points, in value units per
/// day. Emitted from the `window - 1`-th point onward.
pub fn slope_indicator(series: &IndicatorSeries, window: usize) -> Result<IndicatorSeries> {
    if window < 2 {
        return Err(Error::invalid("slope window must be at least 2"));
    }
    if series.len() < window {
        return Err(Error::Insufficient(format!(
            "slope window {window} exceeds series length {}",
            series.len()
        )));
    }
    let points = series
        .points
        .windows(window)
        .map(|w| {
            let t_end = w[window - 1].0;
            // days relative to the window start keeps the regression well
            // conditioned for epoch-scale timestamps
            let t0 = w[0].0;
            let xs: Vec<f64> = w.iter().map(|p| (p.0 - t0) as f64 / SECONDS_PER_DAY).collect();
            let n = window as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = w.iter().map(|p| p.1).sum::<f64>() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (x, p) in xs.iter().zip(w) {
                sxy += (x - mx) * (p.1 - my);
                sxx += (x - mx) * (x - mx);
            }
            (t_end, sxy / sxx)
        })
        .collect();
    IndicatorSeries::new(series.machine_id.clone(), IndicatorKind::SlopeDegPerDay, points)
}

/// `min_j (x_machine - x_j)` over the other machines at `t`: positive when
/// the machine sits above every other one.
pub fn min_diff_indicator(population: &[IndicatorSeries], machine: &str, t: i64) -> Result<f64> {
    let own = population
        .iter()
        .find(|s| s.machine_id == machine)
        .ok_or_else(|| Error::invalid(format!("machine '{machine}' not in population")))?
        .value_at(t)
        .ok_or_else(|| Error::Insufficient(format!("machine '{machine}' has no value at {t}")))?;
    population
        .iter()
        .filter(|s| s.machine_id != machine)
        .filter_map(|s| s.value_at(t))
        .map(|v| own - v)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Insufficient(format!("no other machine has a value at {t}")))
}

/// [`min_diff_indicator`] at each of the machine's own timestamps.
pub fn min_diff_series(population: &[IndicatorSeries], machine: &str) -> Result<IndicatorSeries> {
    let own = population
        .iter()
        .find(|s| s.machine_id == machine)
        .ok_or_else(|| Error::invalid(format!("machine '{machine}' not in population")))?;
    let points = own
        .points
        .iter()
        .filter_map(|&(t, _)| min_diff_indicator(population, machine, t).ok().map(|v| (t, v)))
        .collect();
    IndicatorSeries::new(machine, IndicatorKind::MinDiffDeg, points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub value: f64,
    pub faulty: bool,
}

/// Attaches ground truth to every indicator sample. Each sample must fall
/// in exactly one window of its machine.
pub fn label_samples(indicators: &[IndicatorSeries], windows: &[LabeledWindow]) -> Result<Vec<LabeledSample>> {
    validate_windows(windows)?;
    let mut out = Vec::new();
    for s in indicators {
        for &(t, value) in &s.points {
            let mut hits = windows.iter().filter(|w| w.contains(&s.machine_id, t));
            let w = hits.next().ok_or_else(|| {
                Error::invalid(format!("sample of '{}' at {t} is not covered by any label window", s.machine_id))
            })?;
            out.push(LabeledSample {
                value,
                faulty: w.label == Label::Faulty,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Sorted by threshold, descending.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum ThresholdSweep {
    /// Every distinct observed value.
    #[default]
    Observed,
    /// Caller-supplied thresholds.
    Explicit(Vec<f64>),
}

pub fn roc_curve(samples: &[LabeledSample], sweep: &ThresholdSweep) -> Result<Roc> {
    let positives = samples.iter().filter(|s| s.faulty).count();
    let negatives = samples.len() - positives;
    if positives == 0 {
        return Err(Error::RocUndefined("no faulty samples".into()));
    }
    if negatives == 0 {
        return Err(Error::RocUndefined("no healthy samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.value.is_nan()) {
        return Err(Error::invalid(format!("NaN indicator value ({s:?})")));
    }

    let mut thresholds: Vec<f64> = match sweep {
        ThresholdSweep::Observed => samples.iter().map(|s| s.value).collect(),
        ThresholdSweep::Explicit(t) => t.iter().copied().filter(|v| !v.is_nan()).collect(),
    };
    thresholds.push(f64::INFINITY);
    thresholds.push(f64::NEG_INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut sorted: Vec<&LabeledSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.value.total_cmp(&a.value));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = Vec::with_capacity(thresholds.len());
    let (mut tp, mut fp, mut i) = (0usize, 0usize, 0usize);
    for &theta in &thresholds {
        while i < sorted.len() && sorted[i].value >= theta {
            if sorted[i].faulty {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: theta,
            tpr: tp as f64 / p,
            fpr: fp as f64 / n,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum();
    Ok(Roc { points, auc })
}

impl Roc {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out.push_str(&format!("# auc={:?}\n", self.auc));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
