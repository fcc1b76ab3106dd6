//! Fixtures shared by the integration targets.
#![allow(dead_code)]

use dictmon::coding::{Algorithm, CodingConfig};
use dictmon::dictionary::{init_pseudorandom, Atom, Dictionary};
use dictmon::ingest::{preprocess, sample_blocks};
use dictmon::learning::{train_baseline, HistoryRecord, LearnConfig, MonitorState};
use dictmon::synth::{default_planted_atoms, generate_fleet, FaultSpec, Fleet, FleetLayout, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Dictionary with atom ids `0..lens.len()` and Gaussian waveforms.
pub fn random_dictionary(rng: &mut ChaCha8Rng, lens: &[usize]) -> Dictionary {
    let atoms = lens
        .iter()
        .enumerate()
        .map(|(i, &l)| Atom::new(i as u32, gaussian_vec(rng, l)).unwrap())
        .collect();
    Dictionary::new(atoms).unwrap()
}

/// Scaled fleet used by the detection and ROC checks: segments
/// `0..TRAIN_SEGMENTS` are healthy training data, the next
/// `MONITOR_SEGMENTS` are monitored, and machine `m0` develops an impulse
/// fault `FAULT_AT` segments into monitoring.
pub const MACHINES: usize = 6;
pub const TRAIN_SEGMENTS: usize = 100;
pub const MONITOR_SEGMENTS: usize = 300;
pub const FAULT_AT: usize = 150;
pub const SEGMENT_LEN: usize = 4096;
pub const TRAIN_BLOCKS: usize = 200;
pub const ETA_TRAIN: f64 = 1e-4;
pub const ETA_MONITOR: f64 = 1e-5;
/// Half a day between segments.
pub const CADENCE: i64 = 43_200;

pub fn fleet_layout() -> FleetLayout {
    FleetLayout::new(TRAIN_SEGMENTS + MONITOR_SEGMENTS, SEGMENT_LEN, CADENCE)
}

pub fn machine_spec(index: usize, seed: u64, fault: Option<FaultSpec>) -> SynthSpec {
    SynthSpec {
        machine_id: format!("m{index}"),
        planted_atoms: default_planted_atoms(),
        instance_rate: 60.0,
        amplitude_dist: (13.0, 2.6),
        noise_std: 1.0,
        fault,
        seed,
    }
}

pub fn impulse_fault(layout: &FleetLayout, segment: usize) -> FaultSpec {
    FaultSpec {
        onset: layout.timestamp(segment),
        impulse_period: 97.3,
        impulse_amp: 15.0,
        impulse_decay: 0.9,
    }
}

pub fn scaled_fleet(seed: u64) -> Fleet {
    let layout = fleet_layout();
    let specs: Vec<SynthSpec> = (0..MACHINES)
        .map(|i| {
            let fault = (i == 0).then(|| impulse_fault(&layout, TRAIN_SEGMENTS + FAULT_AT));
            machine_spec(i, seed + i as u64, fault)
        })
        .collect();
    generate_fleet(&specs, &layout).unwrap()
}

pub fn seed_dictionary() -> Dictionary {
    init_pseudorandom(8, 50, 10, 7).unwrap()
}

pub struct MachineRun {
    pub machine_id: String,
    pub baseline: Dictionary,
    pub state: MonitorState,
}

impl MachineRun {
    pub fn history(&self) -> &[HistoryRecord] {
        &self.state.history
    }
}

/// Trains a baseline on each machine's training segments from the shared
/// seed dictionary, then propagates it over the monitoring segments.
pub fn run_fleet(fleet: &Fleet, algorithm: Algorithm, eta_monitor: f64, snapshot_every: usize) -> Vec<MachineRun> {
    let coding = CodingConfig::new(algorithm, 0.9).unwrap();
    let init = seed_dictionary();
    fleet
        .machines
        .par_iter()
        .map(|m| {
            let blocks = sample_blocks(&m.segments[..TRAIN_SEGMENTS], SEGMENT_LEN, TRAIN_BLOCKS, 3).unwrap();
            let baseline = train_baseline(&blocks, &init, &coding, &LearnConfig::with_eta(ETA_TRAIN)).unwrap();
            let mut state = MonitorState::new(baseline.clone(), coding, LearnConfig::with_eta(eta_monitor))
                .unwrap()
                .with_snapshots(snapshot_every);
            for seg in &m.segments[TRAIN_SEGMENTS..] {
                state.step(&preprocess(seg).unwrap()).unwrap();
            }
            MachineRun {
                machine_id: m.machine_id.clone(),
                baseline,
                state,
            }
        })
        .collect()
}
