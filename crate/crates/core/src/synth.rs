//! Synthetic vibration fleets with planted atoms and an injectable
//! impulsive fault.
//!
//! Each segment is a sum of randomly placed, randomly scaled copies of the
//! planted atoms plus white Gaussian noise. A faulty machine additionally
//! receives, from the onset timestamp on, a train of exponentially decaying
//! impulses with a (generally non-integer) period, the usual surrogate for a
//! localized bearing defect.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::detect::{write_labels_csv, Label, LabeledWindow};
use crate::error::{Error, Result};
use crate::ingest::{rng_from_seed, write_csv_segment, write_raw_segment, SegmentFormat, SignalSegment};

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    /// First timestamp (inclusive) carrying the fault.
    pub onset: i64,
    /// Samples between impulses; fractional periods avoid locking to the
    /// segment grid.
    pub impulse_period: f64,
    pub impulse_amp: f64,
    /// Per-sample multiplicative decay of each impulse, in `(0, 1)`.
    pub impulse_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub machine_id: String,
    pub planted_atoms: Vec<Vec<f64>>,
    /// Planted instances per 1000 samples.
    pub instance_rate: f64,
    /// Mean and standard deviation of the instance magnitude; each instance
    /// also gets a random sign.
    pub amplitude_dist: (f64, f64),
    pub noise_std: f64,
    pub fault: Option<FaultSpec>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planted_atoms.is_empty() || self.planted_atoms.iter().any(|a| a.is_empty()) {
            return Err(Error::invalid("need at least one non-empty planted atom"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be >= 0"));
        }
        if !(self.instance_rate >= 0.0) {
            return Err(Error::invalid("instance_rate must be >= 0"));
        }
        if !(self.amplitude_dist.1 >= 0.0) {
            return Err(Error::invalid("amplitude std must be >= 0"));
        }
        if let Some(f) = &self.fault {
            if !(f.impulse_period >= 1.0) {
                return Err(Error::invalid("impulse_period must be >= 1"));
            }
            if !(f.impulse_decay > 0.0 && f.impulse_decay < 1.0) {
                return Err(Error::invalid("impulse_decay must be in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetLayout {
    pub segments: usize,
    pub segment_len: usize,
    /// Seconds between consecutive segments.
    pub cadence: i64,
    pub start_timestamp: i64,
    pub sample_rate: f64,
}

impl FleetLayout {
    pub fn new(segments: usize, segment_len: usize, cadence: i64) -> Self {
        Self {
            segments,
            segment_len,
            cadence,
            start_timestamp: 1_500_000_000,
            sample_rate: 12_800.0,
        }
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_timestamp + index as i64 * self.cadence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineData {
    pub machine_id: String,
    pub segments: Vec<SignalSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub machines: Vec<MachineData>,
    pub labels: Vec<LabeledWindow>,
}

/// A unit-norm Gaussian-windowed cosine: `len` samples, `freq` in cycles
/// per sample, window standard deviation `width` samples.
pub fn gabor_atom(len: usize, freq: f64, width: f64) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 - c;
            (-(x * x) / (2.0 * width * width)).exp() * (2.0 * PI * freq * x).cos()
        })
        .collect();
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= n);
    w
}

/// Three Gabor atoms at well separated center frequencies.
pub fn default_planted_atoms() -> Vec<Vec<f64>> {
    vec![gabor_atom(32, 0.05, 5.0), gabor_atom(32, 0.15, 4.0), gabor_atom(32, 0.3, 3.0)]
}

/// Draws one segment. `index` selects an independent ChaCha stream so
/// segments can be generated in any order.
pub fn generate_segment(spec: &SynthSpec, layout: &FleetLayout, index: usize) -> Result<SignalSegment> {
    let len = layout.segment_len;
    if let Some(a) = spec.planted_atoms.iter().find(|a| a.len() > len) {
        return Err(Error::AtomTooLong {
            atom_len: a.len(),
            signal_len: len,
        });
    }
    let mut rng = rng_from_seed(spec.seed);
    rng.set_stream(index as u64 + 1);

    let mut x = vec![0.0; len];
    if spec.noise_std > 0.0 {
        for v in &mut x {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = spec.noise_std * z;
        }
    }

    let count = (spec.instance_rate * len as f64 / 1000.0).round() as usize;
    let (mean, std) = spec.amplitude_dist;
    let amp = Normal::new(mean, std).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..count {
        let atom = &spec.planted_atoms[rng.random_range(0..spec.planted_atoms.len())];
        let offset = rng.random_range(0..=len - atom.len());
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let a = sign * amp.sample(&mut rng);
        for (o, w) in x[offset..offset + atom.len()].iter_mut().zip(atom) {
            *o += a * w;
        }
    }

    let timestamp = layout.timestamp(index);
    if let Some(f) = spec.fault.as_ref().filter(|f| timestamp >= f.onset) {
        let mut at = rng.random_range(0.0..f.impulse_period);
        let tail = (1e-6f64.ln() / f.impulse_decay.ln()).ceil() as usize;
        while (at as usize) < len {
            let start = at as usize;
            let mut h = f.impulse_amp;
            for v in x[start..(start + tail).min(len)].iter_mut() {
                *v += h;
                h *= f.impulse_decay;
            }
            at += f.impulse_period;
        }
    }

    SignalSegment::new(x, layout.sample_rate, timestamp, spec.machine_id.clone())
}

/// Generates every machine's segment stream and the matching ground-truth
/// windows: healthy before the fault onset, faulty from it on.
pub fn generate_fleet(specs: &[SynthSpec], layout: &FleetLayout) -> Result<Fleet> {
    if specs.is_empty() || layout.segments == 0 || layout.segment_len == 0 || layout.cadence <= 0 {
        return Err(Error::invalid("fleet needs machines, segments, samples and a positive cadence"));
    }
    for s in specs {
        s.validate()?;
    }
    let machines = specs
        .par_iter()
        .map(|spec| {
            let segments = (0..layout.segments)
                .map(|i| generate_segment(spec, layout, i))
                .collect::<Result<Vec<_>>>()?;
            Ok(MachineData {
                machine_id: spec.machine_id.clone(),
                segments,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let first = layout.timestamp(0);
    let end = layout.timestamp(layout.segments);
    let mut labels = Vec::new();
    for spec in specs {
        let window = |start, end, label| LabeledWindow {
            machine_id: spec.machine_id.clone(),
            start,
            end,
            label,
        };
        match &spec.fault {
            Some(f) if f.onset <= first => labels.push(window(first, end, Label::Faulty)),
            Some(f) if f.onset < end => {
                labels.push(window(first, f.onset, Label::Healthy));
                labels.push(window(f.onset, end, Label::Faulty));
            }
            _ => labels.push(window(first, end, Label::Healthy)),
        }
    }
    Ok(Fleet { machines, labels })
}

/// Writes `<dir>/<machine>/seg_NNNNNN.<ext>` for every segment and
/// `<dir>/labels.csv`.
pub fn write_fleet(dir: &Path, fleet: &Fleet, format: SegmentFormat) -> Result<()> {
    for m in &fleet.machines {
        let mdir = dir.join(&m.machine_id);
        fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
        for (i, seg) in m.segments.iter().enumerate() {
            match format {
                SegmentFormat::Csv => write_csv_segment(&mdir.join(format!("seg_{i:06}.csv")), seg)?,
                SegmentFormat::RawF32Le => write_raw_segment(&mdir.join(format!("seg_{i:06}.f32")), seg, format)?,
                SegmentFormat::RawF64Le => write_raw_segment(&mdir.join(format!("seg_{i:06}.f64")), seg, format)?,
            }
        }
    }
    write_labels_csv(&dir.join("labels.csv"), &fleet.labels)
}

/// Excess-free (Pearson) kurtosis: `E[(x - mu)^4] / var^2`.
pub fn kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n / (v * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn healthy(id: &str, seed: u64) -> SynthSpec {
        SynthSpec {
            machine_id: id.into(),
            planted_atoms: default_planted_atoms(),
            instance_rate: 20.0,
            amplitude_dist: (3.0, 0.5),
            noise_std: 0.3,
            fault: None,
            seed,
        }
    }

    #[test]
    fn gabor_is_unit_norm() {
        for a in default_planted_atoms() {
            let n: f64 = a.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_single_instance() {
        let atom = gabor_atom(16, 0.1, 3.0);
        let spec = SynthSpec {
            planted_atoms: vec![atom.clone()],
            instance_rate: 1000.0 / 64.0,
            amplitude_dist: (2.0, 0.0),
            noise_std: 0.0,
            ..healthy("m", 1)
        };
        let layout = FleetLayout::new(1, 64, 60);
        let seg = generate_segment(&spec, &layout, 0).unwrap();
        let nz: Vec<usize> = (0..64).filter(|&i| seg.samples[i] != 0.0).collect();
        let off = nz[0];
        let sign = seg.samples[off] / (2.0 * atom[0]);
        for (i, w) in atom.iter().enumerate() {
            assert!((seg.samples[off + i] - sign * 2.0 * w).abs() < 1e-12);
        }
        assert!(nz.iter().all(|&i| i >= off && i < off + 16));
    }

    #[test]
    fn fleet_is_deterministic_and_labeled() {
        let layout = FleetLayout::new(10, 256, 43_200);
        let mut faulty = healthy("f", 3);
        faulty.fault = Some(FaultSpec {
            onset: layout.timestamp(4),
            impulse_period: 37.3,
            impulse_amp: 4.0,
            impulse_decay: 0.7,
        });
        let specs = vec![healthy("a", 1), healthy("b", 2), faulty];
        let f1 = generate_fleet(&specs, &layout).unwrap();
        let f2 = generate_fleet(&specs, &layout).unwrap();
        assert_eq!(f1, f2);
        assert_ne!(f1.machines[0].segments[0].samples, f1.machines[1].segments[0].samples);
        assert_eq!(f1.labels.len(), 4);
        assert_eq!(f1.labels[3].start, layout.timestamp(4));
        assert_eq!(f1.labels[3].label, Label::Faulty);
        assert_eq!(f1.labels[2].end, layout.timestamp(4));

        let too_long = SynthSpec {
            planted_atoms: vec![vec![1.0; 300]],
            ..healthy("x", 1)
        };
        assert!(generate_fleet(&[too_long], &layout).is_err());
    }

    #[test]
    fn fault_raises_kurtosis() {
        let layout = FleetLayout::new(40, 2048, 43_200);
        let mut spec = healthy("f", 9);
        spec.fault = Some(FaultSpec {
            onset: layout.timestamp(20),
            impulse_period: 151.7,
            impulse_amp: 6.0,
            impulse_decay: 0.8,
        });
        let fleet = generate_fleet(&[spec], &layout).unwrap();
        let k: Vec<f64> = fleet.machines[0].segments.iter().map(|s| kurtosis(&s.samples)).collect();
        let before = k[..20].iter().sum::<f64>() / 20.0;
        let after = k[20..].iter().sum::<f64>() / 20.0;
        assert!(after > before + 0.5, "kurtosis before {before}, after {after}");
        // recompute one value by an independent two-pass formula
        let x = &fleet.machines[0].segments[25].samples;
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let m2: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let m4: f64 = x.iter().map(|v| (v - mean) * (v - mean) * (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((k[25] - m4 / (m2 * m2)).abs() < 1e-9);
    }
}
