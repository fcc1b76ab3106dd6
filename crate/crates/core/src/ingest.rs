//! Loading, RMS gating and standardization of vibration segments.
//!
//! Two on-disk layouts are understood:
//!
//! * CSV: the first line is the literal header `timestamp,sample_rate,source_id`,
//!   the second line holds the corresponding values, and every following line
//!   holds one sample. Lines starting with `#` are ignored.
//! * Raw: one file per segment holding little-endian `f32` or `f64` samples,
//!   with a sidecar `<stem>.meta` file made of `key=value` lines for
//!   `timestamp`, `sample_rate` and `source_id`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Identifier of the PRNG used for block sampling, synthetic data and
/// dictionary initialization. Echoed into run configs for replayability.
pub const PRNG_ALGORITHM: &str = "chacha8";

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// CSV header expected on the first line of a segment file.
pub const CSV_HEADER: &str = "timestamp,sample_rate,source_id";

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    /// Acceleration samples in G (or standardized units after [`preprocess`]).
    pub samples: Vec<f64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub source_id: String,
    /// RMS of the raw samples in G. Carried unchanged through preprocessing.
    pub raw_rms: f64,
}

impl SignalSegment {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        timestamp: i64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("segment has no samples"));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let raw_rms = rms(&samples);
        Ok(Self {
            samples,
            sample_rate,
            timestamp,
            source_id: source_id.into(),
            raw_rms,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentFormat {
    Csv,
    RawF32Le,
    RawF64Le,
}

impl FromStr for SegmentFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(SegmentFormat::Csv),
            "raw_f32le" | "f32" => Ok(SegmentFormat::RawF32Le),
            "raw_f64le" | "f64" => Ok(SegmentFormat::RawF64Le),
            other => Err(Error::invalid(format!("unknown segment format '{other}'"))),
        }
    }
}

/// Physical RMS gate. Segments at or below the threshold are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGate {
    pub rms_threshold: f64,
}

impl Default for SegmentGate {
    fn default() -> Self {
        Self { rms_threshold: 0.5 }
    }
}

impl SegmentGate {
    pub fn new(rms_threshold: f64) -> Result<Self> {
        if !(rms_threshold >= 0.0) {
            return Err(Error::invalid(format!(
                "rms threshold must be non-negative, got {rms_threshold}"
            )));
        }
        Ok(Self { rms_threshold })
    }

    pub fn admits(&self, segment: &SignalSegment) -> bool {
        segment.rms() > self.rms_threshold
    }
}

/// Loads every segment file under `path` (or the single file `path`) and
/// returns them sorted by timestamp, ties broken by file name.
pub fn load_segments(path: &Path, format: SegmentFormat) -> Result<Vec<SignalSegment>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files = if meta.is_dir() {
        segment_files(path, format)?
    } else {
        vec![path.to_path_buf()]
    };

    let mut loaded = files
        .par_iter()
        .map(|file| {
            let seg = match format {
                SegmentFormat::Csv => read_csv_segment(file),
                SegmentFormat::RawF32Le | SegmentFormat::RawF64Le => read_raw_segment(file, format),
            }?;
            Ok((seg, file.file_name().map(|n| n.to_os_string()).unwrap_or_default()))
        })
        .collect::<Result<Vec<_>>>()?;

    loaded.sort_by(|(a, fa), (b, fb)| a.timestamp.cmp(&b.timestamp).then_with(|| fa.cmp(fb)));
    Ok(loaded.into_iter().map(|(s, _)| s).collect())
}

fn segment_files(dir: &Path, format: SegmentFormat) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let wanted = match format {
            SegmentFormat::Csv => ext == "csv",
            SegmentFormat::RawF32Le | SegmentFormat::RawF64Le => ext != "meta" && !ext.is_empty(),
        };
        if wanted {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_csv_segment(path: &Path) -> Result<SignalSegment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let Some((hline, header)) = lines.next() else {
        return Err(Error::MissingMetadata {
            path: path.to_path_buf(),
            msg: "empty file, no timestamp header".into(),
        });
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != ["timestamp", "sample_rate", "source_id"] {
        return Err(parse_err(
            hline,
            format!("expected header '{CSV_HEADER}', found '{header}'"),
        ));
    }
    let Some((vline, values)) = lines.next() else {
        return Err(Error::MissingMetadata {
            path: path.to_path_buf(),
            msg: "header values line missing".into(),
        });
    };
    let fields: Vec<&str> = values.splitn(3, ',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(parse_err(vline, format!("expected 3 metadata fields, found '{values}'")));
    }
    if fields[0].is_empty() {
        return Err(Error::MissingMetadata {
            path: path.to_path_buf(),
            msg: format!("line {vline}: timestamp missing"),
        });
    }
    let timestamp: i64 = fields[0]
        .parse()
        .map_err(|_| parse_err(vline, format!("invalid timestamp '{}'", fields[0])))?;
    let sample_rate: f64 = fields[1]
        .parse()
        .map_err(|_| parse_err(vline, format!("invalid sample rate '{}'", fields[1])))?;

    let mut samples = Vec::new();
    for (line, text) in lines {
        let v: f64 = text
            .parse()
            .map_err(|_| parse_err(line, format!("invalid sample '{text}'")))?;
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(parse_err(vline, "segment has no samples".into()));
    }
    SignalSegment::new(samples, sample_rate, timestamp, fields[2]).map_err(|e| parse_err(vline, e.to_string()))
}

pub fn read_raw_segment(path: &Path, format: SegmentFormat) -> Result<SignalSegment> {
    let width = match format {
        SegmentFormat::RawF32Le => 4,
        SegmentFormat::RawF64Le => 8,
        SegmentFormat::Csv => return read_csv_segment(path),
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % width != 0 {
        let whole = bytes.len() - bytes.len() % width;
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("trailing partial sample at byte offset {whole}"),
        });
    }
    let samples: Vec<f64> = if width == 4 {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    if samples.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "segment has no samples".into(),
        });
    }

    let meta_path = path.with_extension("meta");
    let meta = read_meta(&meta_path)?;
    let missing = |key: &str| Error::MissingMetadata {
        path: meta_path.clone(),
        msg: format!("{key} missing"),
    };
    let timestamp = meta.timestamp.ok_or_else(|| missing("timestamp"))?;
    let sample_rate = meta.sample_rate.ok_or_else(|| missing("sample_rate"))?;
    let source_id = meta.source_id.unwrap_or_default();
    SignalSegment::new(samples, sample_rate, timestamp, source_id).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

#[derive(Default)]
struct RawMeta {
    timestamp: Option<i64>,
    sample_rate: Option<f64>,
    source_id: Option<String>,
}

fn read_meta(path: &Path) -> Result<RawMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = RawMeta::default();
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
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, found '{line}'")))?;
        let value = value.trim();
        match key.trim() {
            "timestamp" => {
                meta.timestamp = Some(value.parse().map_err(|_| err(format!("invalid timestamp '{value}'")))?)
            }
            "sample_rate" => {
                meta.sample_rate = Some(value.parse().map_err(|_| err(format!("invalid sample rate '{value}'")))?)
            }
            "source_id" => meta.source_id = Some(value.to_string()),
            _ => {}
        }
    }
    Ok(meta)
}

pub fn write_csv_segment(path: &Path, segment: &SignalSegment) -> Result<()> {
    let mut out = String::with_capacity(segment.len() * 12 + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{}\n",
        segment.timestamp, segment.sample_rate, segment.source_id
    ));
    for s in &segment.samples {
        // `{}` on f64 prints the shortest representation that round-trips.
        out.push_str(&format!("{s}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `<path>` with raw samples and `<path stem>.meta` beside it.
pub fn write_raw_segment(path: &Path, segment: &SignalSegment, format: SegmentFormat) -> Result<()> {
    let mut bytes = Vec::new();
    match format {
        SegmentFormat::RawF32Le => {
            for &s in &segment.samples {
                bytes.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
        SegmentFormat::RawF64Le => {
            for &s in &segment.samples {
                bytes.extend_from_slice(&s.to_le_bytes());
            }
        }
        SegmentFormat::Csv => return write_csv_segment(path, segment),
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta_path = path.with_extension("meta");
    let mut f = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    writeln!(
        f,
        "timestamp={}\nsample_rate={}\nsource_id={}",
        segment.timestamp, segment.sample_rate, segment.source_id
    )
    .map_err(|e| Error::io(&meta_path, e))
}

/// Keeps the segments whose raw RMS exceeds the gate threshold.
pub fn gate_by_rms(segments: Vec<SignalSegment>, gate: &SegmentGate) -> Vec<SignalSegment> {
    segments.into_iter().filter(|s| gate.admits(s)).collect()
}

/// Standardizes a segment to zero mean and unit population variance.
pub fn preprocess(segment: &SignalSegment) -> Result<SignalSegment> {
    let n = segment.samples.len();
    if n < 2 {
        return Err(Error::invalid("preprocessing needs at least two samples"));
    }
    let samples = standardize(&segment.samples)?;
    Ok(SignalSegment {
        samples,
        sample_rate: segment.sample_rate,
        timestamp: segment.timestamp,
        source_id: segment.source_id.clone(),
        raw_rms: segment.raw_rms,
    })
}

fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n;
    if var == 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut out: Vec<f64> = centered.iter().map(|v| v / sd).collect();

    // One refinement pass absorbs the rounding left by the first pass, which
    // matters for long segments with a large DC offset.
    let mean2 = out.iter().sum::<f64>() / n;
    out.iter_mut().for_each(|v| *v -= mean2);
    let var2 = out.iter().map(|v| v * v).sum::<f64>() / n;
    let sd2 = var2.sqrt();
    out.iter_mut().for_each(|v| *v /= sd2);
    Ok(out)
}

/// Draws `count` contiguous blocks of `block_len` samples from uniformly
/// chosen segments at uniformly chosen offsets, standardizing each block.
pub fn sample_blocks(
    segments: &[SignalSegment],
    block_len: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<SignalSegment>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if block_len == 0 {
        return Err(Error::invalid("block length must be positive"));
    }
    if segments.is_empty() {
        return Err(Error::Insufficient(format!(
            "cannot sample {count} blocks from zero segments"
        )));
    }
    if let Some(short) = segments.iter().find(|s| s.len() < block_len) {
        return Err(Error::invalid(format!(
            "block length {block_len} exceeds segment '{}' at timestamp {} ({} samples)",
            short.source_id,
            short.timestamp,
            short.len()
        )));
    }

    let mut rng = rng_from_seed(seed);
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let seg = &segments[rng.random_range(0..segments.len())];
        let offset = rng.random_range(0..=seg.len() - block_len);
        let raw = &seg.samples[offset..offset + block_len];
        let block = SignalSegment {
            samples: standardize(raw)?,
            sample_rate: seg.sample_rate,
            timestamp: seg.timestamp,
            source_id: seg.source_id.clone(),
            raw_rms: rms(raw),
        };
        blocks.push(block);
    }
    Ok(blocks)
}
