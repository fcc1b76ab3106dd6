//! Run configuration: defaults, `key=value` files, and flag overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dictmon::{Algorithm, SegmentFormat};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub sparsity: f64,
    pub eta: f64,
    pub atoms: usize,
    pub core_len: usize,
    pub pad: usize,
    pub rms_gate: f64,
    pub train_blocks: usize,
    pub block_len: usize,
    pub seed: u64,
    pub format: SegmentFormat,
    pub time_constant: f64,
    pub slope_window: usize,
    /// Worker threads for fleet commands; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Mp,
            sparsity: 0.9,
            eta: 1e-6,
            atoms: 8,
            core_len: 50,
            pad: 10,
            rms_gate: 0.5,
            train_blocks: 5000,
            block_len: 12_800,
            seed: 0,
            format: SegmentFormat::Csv,
            time_constant: 30.0,
            slope_window: dictmon::detect::DEFAULT_SLOPE_WINDOW,
            jobs: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value '{value}' for '{key}'")))
}

impl RunConfig {
    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key.trim() {
            "algorithm" => {
                self.algorithm = value.parse().map_err(|e: dictmon::Error| CliError::Config(e.to_string()))?
            }
            "sparsity" => self.sparsity = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "atoms" => self.atoms = parse(key, value)?,
            "core_len" => self.core_len = parse(key, value)?,
            "pad" => self.pad = parse(key, value)?,
            "rms_gate" => self.rms_gate = parse(key, value)?,
            "train_blocks" => self.train_blocks = parse(key, value)?,
            "block_len" => self.block_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "format" => self.format = value.parse().map_err(|e: dictmon::Error| CliError::Config(e.to_string()))?,
            "time_constant" => self.time_constant = parse(key, value)?,
            "slope_window" => self.slope_window = parse(key, value)?,
            "jobs" => self.jobs = parse(key, value)?,
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a config file: one `key=value` per line, `#` comments and
    /// blank lines ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected key=value, found '{line}'", path.display(), n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must be in [0, 1), got {}", self.sparsity));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.rms_gate >= 0.0) {
            return bad(format!("rms_gate must be >= 0, got {}", self.rms_gate));
        }
        if self.atoms == 0 || self.core_len == 0 {
            return bad("atoms and core_len must be positive".into());
        }
        if self.block_len == 0 {
            return bad("block_len must be positive".into());
        }
        if !(self.time_constant >= 1.0) {
            return bad(format!("time_constant must be >= 1, got {}", self.time_constant));
        }
        if self.slope_window < 2 {
            return bad(format!("slope_window must be >= 2, got {}", self.slope_window));
        }
        Ok(())
    }

    /// The effective configuration in the same `key=value` syntax it is
    /// read from.
    pub fn render(&self) -> String {
        let format = match self.format {
            SegmentFormat::Csv => "csv",
            SegmentFormat::RawF32Le => "f32",
            SegmentFormat::RawF64Le => "f64",
        };
        let mut s = String::new();
        let _ = writeln!(s, "algorithm={}", self.algorithm);
        let _ = writeln!(s, "sparsity={:?}", self.sparsity);
        let _ = writeln!(s, "eta={:?}", self.eta);
        let _ = writeln!(s, "atoms={}", self.atoms);
        let _ = writeln!(s, "core_len={}", self.core_len);
        let _ = writeln!(s, "pad={}", self.pad);
        let _ = writeln!(s, "rms_gate={:?}", self.rms_gate);
        let _ = writeln!(s, "train_blocks={}", self.train_blocks);
        let _ = writeln!(s, "block_len={}", self.block_len);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "format={format}");
        let _ = writeln!(s, "time_constant={:?}", self.time_constant);
        let _ = writeln!(s, "slope_window={}", self.slope_window);
        let _ = writeln!(s, "jobs={}", self.jobs);
        s
    }

    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("effective_config.txt");
        fs::write(&path, self.render()).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("eta", "0.001").unwrap();
        c.set("algorithm", "omp").unwrap();
        c.set("format", "f32").unwrap();
        let mut back = RunConfig::default();
        for line in c.render().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("learning_rate", "1"), Err(CliError::Config(_))));
        assert!(matches!(c.set("atoms", "eight"), Err(CliError::Config(_))));
    }
}
