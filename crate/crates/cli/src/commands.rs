use std::fs;
use std::path::{Path, PathBuf};

use dictmon::coding::encode;
use dictmon::detect::{label_samples, min_diff_series, read_labels_csv, roc_curve, slope_indicator, ThresholdSweep};
use dictmon::dictionary::init_pseudorandom;
use dictmon::ingest::{gate_by_rms, load_segments, preprocess, sample_blocks};
use dictmon::learning::{read_history_csv, train_baseline_logged, write_history_csv};
use dictmon::metrics::{atom_coherence, coherence_to_degrees, dictionary_distance, lowpass, mad_score_series};
use dictmon::synth::{default_planted_atoms, generate_fleet, write_fleet, FaultSpec, FleetLayout, SynthSpec};
use dictmon::{
    CodingConfig, Dictionary, Error, IndicatorKind, IndicatorSeries, LearnConfig, MonitorState, SegmentFormat,
    SegmentGate,
};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::config::RunConfig;
use crate::CliError;

/// A machine's segment directory.
struct Machine {
    id: String,
    dir: PathBuf,
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "machine".into())
}

/// A directory with subdirectories is a fleet, one machine per
/// subdirectory; otherwise the directory itself is one machine.
fn discover_machines(input: &Path) -> Result<Vec<Machine>, CliError> {
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| CliError::io(input, e))? {
        let path = entry.map_err(|e| CliError::io(input, e))?.path();
        if path.is_dir() {
            subdirs.push(Machine {
                id: dir_name(&path),
                dir: path,
            });
        }
    }
    if subdirs.is_empty() {
        return Ok(vec![Machine {
            id: dir_name(input),
            dir: input.to_path_buf(),
        }]);
    }
    subdirs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(subdirs)
}

fn gate(cfg: &RunConfig) -> Result<SegmentGate, CliError> {
    Ok(SegmentGate::new(cfg.rms_gate)?)
}

fn coding(cfg: &RunConfig) -> Result<CodingConfig, CliError> {
    Ok(CodingConfig::new(cfg.algorithm, cfg.sparsity)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn machine_err(id: &str, e: Error) -> CliError {
    CliError::Machine {
        machine: id.to_string(),
        source: e,
    }
}

pub fn train(cfg: &RunConfig, input: &Path, output: &Path, first: Option<usize>) -> Result<(), CliError> {
    cfg.echo(output)?;
    let machines = discover_machines(input)?;
    let init = init_pseudorandom(cfg.atoms, cfg.core_len, cfg.pad, cfg.seed)?;
    let coding = coding(cfg)?;
    let learn = LearnConfig::with_eta(cfg.eta);
    let gate = gate(cfg)?;

    let summaries = machines
        .par_iter()
        .map(|m| {
            let run = || -> Result<String, Error> {
                let mut all = load_segments(&m.dir, cfg.format)?;
                let available = all.len();
                if let Some(n) = first {
                    all.truncate(n);
                }
                let gated = gate_by_rms(all, &gate);
                if gated.is_empty() {
                    return Err(Error::Insufficient(format!(
                        "{available} segments available, 0 above the {} G RMS gate, {} blocks requested",
                        cfg.rms_gate, cfg.train_blocks
                    )));
                }
                let considered = gated.len();
                let blocks = sample_blocks(&gated, cfg.block_len, cfg.train_blocks, cfg.seed.wrapping_add(1))?;
                let (dict, log) = train_baseline_logged(&blocks, &init, &coding, &learn)?;
                dict.save(&output.join(format!("{}.vdct", m.id)))?;
                let log_path = output.join(format!("{}_train_log.csv", m.id));
                let mut text = String::from("block_index,fidelity_db\n");
                for r in &log {
                    text.push_str(&format!("{},{}\n", r.block_index, r.fidelity_db));
                }
                fs::write(&log_path, text).map_err(|e| Error::Io {
                    path: log_path.clone(),
                    source: e,
                })?;
                Ok(format!(
                    "{}: {available} segments available, {considered} considered, {} blocks used",
                    m.id,
                    blocks.len()
                ))
            };
            run().map_err(|e| machine_err(&m.id, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for s in summaries {
        println!("{s}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MonitorMode {
    /// Keep adapting the dictionary with the configured step size.
    Propagate,
    /// Hold the baseline fixed (step size forced to zero).
    Frozen,
}

pub fn monitor(
    cfg: &RunConfig,
    input: &Path,
    baseline: &Path,
    output: &Path,
    mode: MonitorMode,
    export_codes: bool,
) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if mode == MonitorMode::Frozen {
        cfg.eta = 0.0;
    }
    cfg.echo(output)?;
    let machines = discover_machines(input)?;
    let coding = coding(&cfg)?;
    let learn = LearnConfig::with_eta(cfg.eta);
    let gate = gate(&cfg)?;
    // a single baseline file is applied to every machine (the foreign
    // baseline case); a directory supplies `<machine>.vdct` per machine
    let shared = if baseline.is_file() {
        Some(Dictionary::load(baseline)?)
    } else {
        None
    };

    machines.par_iter().try_for_each(|m| {
        let run = || -> Result<(), Error> {
            let base = match &shared {
                Some(d) => d.clone(),
                None => Dictionary::load(&baseline.join(format!("{}.vdct", m.id)))?,
            };
            if base.len() != cfg.atoms {
                return Err(Error::AtomCountMismatch(base.len(), cfg.atoms));
            }
            let segments = gate_by_rms(load_segments(&m.dir, cfg.format)?, &gate);
            let codes_dir = output.join(format!("{}_codes", m.id));
            if export_codes {
                fs::create_dir_all(&codes_dir).map_err(|e| Error::Io {
                    path: codes_dir.clone(),
                    source: e,
                })?;
            }
            let mut state = MonitorState::new(base, coding, learn)?;
            for (i, seg) in segments.iter().enumerate() {
                let seg = preprocess(seg)?;
                if export_codes {
                    encode(&seg, &state.dictionary, &coding)?.write_csv(&codes_dir.join(format!("seg_{i:06}.csv")))?;
                }
                state.step(&seg)?;
            }
            write_history_csv(&output.join(format!("{}_history.csv", m.id)), &state.history)?;
            state.dictionary.save(&output.join(format!("{}_final.vdct", m.id)))
        };
        run().map_err(|e| machine_err(&m.id, e))
    })
}

pub fn distance(a: &Path, b: &Path) -> Result<f64, CliError> {
    Ok(dictionary_distance(&Dictionary::load(a)?, &Dictionary::load(b)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HistoryColumn {
    Distance,
    Fidelity,
}

/// Reads every `<machine>_history.csv` in `dir` as one indicator series.
pub fn read_histories(dir: &Path, column: HistoryColumn) -> Result<Vec<IndicatorSeries>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with("_history.csv"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let name = dir_name(p);
            let machine = name.trim_end_matches("_history.csv").to_string();
            let (kind, pick): (IndicatorKind, fn(&dictmon::HistoryRecord) -> f64) = match column {
                HistoryColumn::Distance => (IndicatorKind::DistanceDeg, |r| r.distance_deg),
                HistoryColumn::Fidelity => (IndicatorKind::FidelityDb, |r| r.fidelity_db),
            };
            let points = read_history_csv(p)?.iter().map(|r| (r.timestamp, pick(r))).collect();
            Ok(IndicatorSeries::new(machine, kind, points)?)
        })
        .collect()
}

pub fn indicators(cfg: &RunConfig, input: &Path, output: &Path, column: HistoryColumn) -> Result<(), CliError> {
    cfg.echo(output)?;
    let raw = read_histories(input, column)?;
    if raw.is_empty() {
        return Err(CliError::Data(format!("no *_history.csv files in {}", input.display())));
    }
    let smooth = raw
        .iter()
        .map(|s| lowpass(s, cfg.time_constant))
        .collect::<dictmon::Result<Vec<_>>>()?;
    let filter = format!("lowpass tau={}", cfg.time_constant);
    let mad = mad_score_series(&smooth)?;
    for (s, m) in smooth.iter().zip(&mad) {
        let id = &s.machine_id;
        s.write_csv(&output.join(format!("{id}_smoothed.csv")), &filter)?;
        m.write_csv(&output.join(format!("{id}_mad.csv")), &filter)?;
        min_diff_series(&smooth, id)?.write_csv(&output.join(format!("{id}_mindiff.csv")), &filter)?;
        slope_indicator(s, cfg.slope_window)
            .map_err(|e| machine_err(id, e))?
            .write_csv(
                &output.join(format!("{id}_slope.csv")),
                &format!("{filter}; slope window={}", cfg.slope_window),
            )?;
    }
    Ok(())
}

pub fn roc(inputs: &[PathBuf], labels: &Path, output: &Path) -> Result<f64, CliError> {
    let series = inputs
        .iter()
        .map(|p| IndicatorSeries::read_csv(p))
        .collect::<dictmon::Result<Vec<_>>>()?;
    let windows = read_labels_csv(labels)?;
    let roc = roc_curve(&label_samples(&series, &windows)?, &ThresholdSweep::Observed)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    roc.write_csv(output)?;
    Ok(roc.auc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    pub machines: usize,
    pub segments: usize,
    pub segment_len: usize,
    pub cadence: i64,
    /// Index of the faulty machine, if any.
    pub faulty: Option<usize>,
    /// Segment index at which the fault starts.
    pub onset: usize,
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs, output: &Path) -> Result<(), CliError> {
    if args.machines == 0 || args.segments == 0 {
        return Err(CliError::Config("synth needs at least one machine and one segment".into()));
    }
    if args.faulty.is_some_and(|f| f >= args.machines) {
        return Err(CliError::Config(format!("faulty machine index must be below {}", args.machines)));
    }
    cfg.echo(output)?;
    let layout = FleetLayout::new(args.segments, args.segment_len, args.cadence);
    let specs: Vec<SynthSpec> = (0..args.machines)
        .map(|i| SynthSpec {
            machine_id: format!("m{i}"),
            planted_atoms: default_planted_atoms(),
            instance_rate: 60.0,
            amplitude_dist: (13.0, 2.6),
            noise_std: 1.0,
            fault: (args.faulty == Some(i)).then(|| FaultSpec {
                onset: layout.timestamp(args.onset),
                impulse_period: 97.3,
                impulse_amp: 15.0,
                impulse_decay: 0.9,
            }),
            seed: cfg.seed.wrapping_add(i as u64),
        })
        .collect();
    let fleet = generate_fleet(&specs, &layout)?;
    write_fleet(output, &fleet, cfg.format)?;
    let ext = match cfg.format {
        SegmentFormat::Csv => "csv",
        SegmentFormat::RawF32Le => "f32",
        SegmentFormat::RawF64Le => "f64",
    };
    println!(
        "wrote {} machines x {} segments ({ext}) and labels.csv to {}",
        args.machines,
        args.segments,
        output.display()
    );
    Ok(())
}

pub struct AtomRow {
    pub id: u32,
    pub len: usize,
    pub peak_hz: f64,
    /// Similarity angle to the closest other atom; `None` for a
    /// single-atom dictionary.
    pub beta_deg: Option<f64>,
}

/// Peak of the magnitude spectrum, zero-padded to at least 1024 bins.
fn peak_frequency(w: &[f64], sample_rate: f64) -> f64 {
    let n = w.len().max(1024).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = w.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, _) = buf[..=n / 2]
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (k, c)| if c.norm() > best.1 { (k, c.norm()) } else { best });
    k as f64 * sample_rate / n as f64
}

pub fn atom_info(path: &Path, sample_rate: f64) -> Result<Vec<AtomRow>, CliError> {
    let dict = Dictionary::load(path)?;
    dict.atoms()
        .iter()
        .map(|a| {
            Ok(AtomRow {
                id: a.id,
                len: a.len(),
                peak_hz: peak_frequency(&a.waveform, sample_rate),
                beta_deg: if dict.len() > 1 {
                    Some(coherence_to_degrees(atom_coherence(&dict, a, Some(a.id))?))
                } else {
                    None
                },
            })
        })
        .collect()
}
