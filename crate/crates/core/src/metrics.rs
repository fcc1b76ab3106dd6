//! Dictionary-based health indicators.
//!
//! The dictionary distance is the symmetric mean of per-atom angles
//! `arccos(coherence)`, where an atom's coherence against a dictionary is its
//! largest normalized inner product with any atom there at any relative shift.
//! It is a dissimilarity score in degrees, `0` for identical dictionaries and
//! at most `90`; no triangle inequality is claimed.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::coding::SparseCode;
use crate::dictionary::{l2, Atom, Dictionary};
use crate::error::{Error, Result};
use crate::ingest::SignalSegment;

/// Fidelity reported when the residual vanishes relative to the model.
pub const FIDELITY_CAP_DB: f64 = 200.0;
/// Denominator floor for MAD scores, in indicator units.
pub const MAD_FLOOR: f64 = 1e-6;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorKind {
    FidelityDb,
    DistanceDeg,
    AdaptationDeg,
    MadScore,
    SlopeDegPerDay,
    MinDiffDeg,
}

impl IndicatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorKind::FidelityDb => "fidelity_db",
            IndicatorKind::DistanceDeg => "distance_deg",
            IndicatorKind::AdaptationDeg => "adaptation_deg",
            IndicatorKind::MadScore => "mad_score",
            IndicatorKind::SlopeDegPerDay => "slope_deg_per_day",
            IndicatorKind::MinDiffDeg => "min_diff_deg",
        }
    }
}

impl fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndicatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fidelity_db" => IndicatorKind::FidelityDb,
            "distance_deg" => IndicatorKind::DistanceDeg,
            "adaptation_deg" => IndicatorKind::AdaptationDeg,
            "mad_score" => IndicatorKind::MadScore,
            "slope_deg_per_day" => IndicatorKind::SlopeDegPerDay,
            "min_diff_deg" => IndicatorKind::MinDiffDeg,
            other => return Err(Error::invalid(format!("unknown indicator kind '{other}'"))),
        })
    }
}

/// A `(timestamp, value)` stream for one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub machine_id: String,
    pub kind: IndicatorKind,
    pub points: Vec<(i64, f64)>,
}

impl IndicatorSeries {
    /// Validates strictly increasing timestamps and finite values.
    pub fn new(machine_id: impl Into<String>, kind: IndicatorKind, points: Vec<(i64, f64)>) -> Result<Self> {
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(format!(
                "indicator timestamps must increase strictly ({} then {})",
                w[0].0, w[1].0
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.1.is_finite()) {
            return Err(Error::invalid(format!("non-finite indicator value at {}", p.0)));
        }
        Ok(Self {
            machine_id: machine_id.into(),
            kind,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Value at `t`: exact match, or linear interpolation between the
    /// bracketing points. No extrapolation.
    pub fn value_at(&self, t: i64) -> Option<f64> {
        let i = self.points.partition_point(|p| p.0 < t);
        let p = self.points.get(i)?;
        if p.0 == t {
            return Some(p.1);
        }
        if i == 0 {
            return None;
        }
        let (t0, v0) = self.points[i - 1];
        let (t1, v1) = *p;
        let w = (t - t0) as f64 / (t1 - t0) as f64;
        Some(v0 + w * (v1 - v0))
    }

    /// Writes `timestamp,value` rows behind a `#` header naming the machine,
    /// kind and any filter settings.
    pub fn write_csv(&self, path: &Path, filter: &str) -> Result<()> {
        let mut out = format!(
            "# machine={},kind={},filter={}\ntimestamp,value\n",
            self.machine_id,
            self.kind,
            if filter.is_empty() { "none" } else { filter }
        );
        for (t, v) in &self.points {
            out.push_str(&format!("{t},{v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut machine = None;
        let mut kind = None;
        let mut points = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            if let Some(comment) = line.strip_prefix('#') {
                for kv in comment.split(',') {
                    match kv.trim().split_once('=') {
                        Some(("machine", v)) => machine = Some(v.to_string()),
                        Some(("kind", v)) => kind = Some(v.parse::<IndicatorKind>().map_err(|e| err(e.to_string()))?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != "timestamp,value" {
                    return Err(err("expected header 'timestamp,value'".into()));
                }
                header_seen = true;
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| err(format!("expected 'timestamp,value', found '{line}'")))?;
            points.push((
                t.trim().parse().map_err(|_| err(format!("invalid timestamp '{t}'")))?,
                v.trim().parse().map_err(|_| err(format!("invalid value '{v}'")))?,
            ));
        }
        let missing = |what: &str| Error::MissingMetadata {
            path: path.to_path_buf(),
            msg: format!("{what} missing from header comment"),
        };
        let machine = machine.ok_or_else(|| missing("machine"))?;
        let kind = kind.ok_or_else(|| missing("kind"))?;
        Self::new(machine, kind, points).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// Largest `|<a shifted by d, b>| / (|a| |b|)` over every relative shift `d`
/// at which the two waveforms overlap.
pub fn shift_coherence(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (la, lb) = (a.len() as isize, b.len() as isize);
    let mut best = 0.0f64;
    for d in -(la - 1)..lb {
        let t0 = 0.max(-d);
        let t1 = la.min(lb - d);
        let mut s = 0.0;
        for t in t0..t1 {
            s += a[t as usize] * b[(t + d) as usize];
        }
        best = best.max(s.abs());
    }
    (best / (na * nb)).min(1.0)
}

/// Coherence of `atom` against the atoms of `dict`, skipping `exclude_id`.
pub fn atom_coherence(dict: &Dictionary, atom: &Atom, exclude_id: Option<u32>) -> Result<f64> {
    let mut best: Option<f64> = None;
    for other in dict.atoms().iter().filter(|a| Some(a.id) != exclude_id) {
        let c = shift_coherence(&atom.waveform, &other.waveform);
        best = Some(best.map_or(c, |b: f64| b.max(c)));
    }
    best.ok_or_else(|| Error::invalid("no atoms left to compare against"))
}

/// `arccos` of the coherence, in degrees.
pub fn atom_similarity_beta(dict: &Dictionary, atom: &Atom) -> Result<f64> {
    atom_coherence(dict, atom, None).map(coherence_to_degrees)
}

pub fn coherence_to_degrees(mu: f64) -> f64 {
    mu.clamp(0.0, 1.0).acos().to_degrees()
}

/// Symmetric mean of cross-dictionary atom angles, in degrees.
pub fn dictionary_distance(a: &Dictionary, b: &Dictionary) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::AtomCountMismatch(a.len(), b.len()));
    }
    let mut sum = 0.0;
    for atom in b.atoms() {
        sum += atom_similarity_beta(a, atom)?;
    }
    for atom in a.atoms() {
        sum += atom_similarity_beta(b, atom)?;
    }
    Ok(sum / (2 * a.len()) as f64)
}

/// Distance between the snapshots in effect at `t` and at `t - delta`
/// (latest snapshot at or before each time). With `per_day`, divides by
/// `delta` expressed in days.
pub fn adaptation_rate(snapshots: &[(i64, Dictionary)], t: i64, delta: i64, per_day: bool) -> Result<f64> {
    if delta < 0 {
        return Err(Error::invalid("delta must be non-negative"));
    }
    let at = |when: i64| {
        let i = snapshots.partition_point(|(ts, _)| *ts <= when);
        if i == 0 {
            Err(Error::Insufficient(format!("no dictionary snapshot at or before {when}")))
        } else {
            Ok(&snapshots[i - 1].1)
        }
    };
    let now = at(t)?;
    let then = at(t - delta)?;
    let d = dictionary_distance(now, then)?;
    if per_day && delta > 0 {
        Ok(d / (delta as f64 / SECONDS_PER_DAY))
    } else {
        Ok(d)
    }
}

/// `20 log10(|s_hat| / |residual|)` with the model `s_hat = segment - residual`.
/// Capped at +/-200 dB.
pub fn fidelity_db(code: &SparseCode, segment: &SignalSegment) -> Result<f64> {
    if code.residual.len() != segment.len() {
        return Err(Error::LengthMismatch {
            expected: segment.len(),
            found: code.residual.len(),
        });
    }
    let model = segment
        .samples
        .iter()
        .zip(&code.residual)
        .map(|(s, r)| (s - r) * (s - r))
        .sum::<f64>()
        .sqrt();
    fidelity_from_norms(model, code.residual_norm())
}

pub fn fidelity_from_norms(model_norm: f64, residual_norm: f64) -> Result<f64> {
    if model_norm == 0.0 && residual_norm == 0.0 {
        return Err(Error::EmptyModel);
    }
    if residual_norm < 1e-12 * model_norm {
        return Ok(FIDELITY_CAP_DB);
    }
    if model_norm < 1e-12 * residual_norm {
        return Ok(-FIDELITY_CAP_DB);
    }
    Ok(20.0 * (model_norm / residual_norm).log10())
}

/// First-order low-pass: `y_0 = x_0`, `y_t = a y_{t-1} + (1 - a) x_t`,
/// `a = exp(-1 / time_constant)` with the time constant in samples.
pub fn lowpass(series: &IndicatorSeries, time_constant: f64) -> Result<IndicatorSeries> {
    if !(time_constant >= 1.0) {
        return Err(Error::invalid(format!("time constant must be >= 1, got {time_constant}")));
    }
    let a = (-1.0 / time_constant).exp();
    let mut y = 0.0;
    let points = series
        .points
        .iter()
        .enumerate()
        .map(|(i, &(t, x))| {
            y = if i == 0 { x } else { a * y + (1.0 - a) * x };
            (t, y)
        })
        .collect();
    Ok(IndicatorSeries {
        machine_id: series.machine_id.clone(),
        kind: series.kind,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadScore {
    pub machine_id: String,
    pub value: f64,
    pub score: f64,
    /// The population MAD was below [`MAD_FLOOR`] and the floor was used.
    pub saturated: bool,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust deviation of each machine from the fleet at time `t`:
/// `|x_i - median| / max(MAD, floor)`. Machines with no value at or
/// interpolable to `t` are left out.
pub fn mad_scores(population: &[IndicatorSeries], t: i64) -> Result<Vec<MadScore>> {
    let present: Vec<(&str, f64)> = population
        .iter()
        .filter_map(|s| s.value_at(t).map(|v| (s.machine_id.as_str(), v)))
        .collect();
    if present.len() < 3 {
        return Err(Error::Insufficient(format!(
            "MAD scoring needs at least 3 machines at t={t}, found {}",
            present.len()
        )));
    }
    let mut vals: Vec<f64> = present.iter().map(|p| p.1).collect();
    let med = median(&mut vals);
    let mut devs: Vec<f64> = present.iter().map(|p| (p.1 - med).abs()).collect();
    let mad = median(&mut devs);
    let saturated = mad < MAD_FLOOR;
    let denom = mad.max(MAD_FLOOR);
    Ok(present
        .into_iter()
        .map(|(id, v)| MadScore {
            machine_id: id.to_string(),
            value: v,
            score: (v - med).abs() / denom,
            saturated,
        })
        .collect())
}

/// MAD score series for every machine, evaluated at each of the machine's
/// own timestamps where at least three machines have a value.
pub fn mad_score_series(population: &[IndicatorSeries]) -> Result<Vec<IndicatorSeries>> {
    population
        .iter()
        .map(|s| {
            let mut points = Vec::with_capacity(s.len());
            for &(t, _) in &s.points {
                let Ok(scores) = mad_scores(population, t) else { continue };
                if let Some(m) = scores.iter().find(|m| m.machine_id == s.machine_id) {
                    points.push((t, m.score));
                }
            }
            IndicatorSeries::new(s.machine_id.clone(), IndicatorKind::MadScore, points)
        })
        .collect()
}
