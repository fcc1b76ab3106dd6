//! Convolutional sparse coding with Matching Pursuit and Orthogonal Matching
//! Pursuit.
//!
//! A signal of length `n` is approximated by `N` atom instances, each a
//! scaled copy of a dictionary atom placed fully inside the signal. Both
//! coders are greedy: every iteration picks the (atom, offset) pair with the
//! largest absolute inner product against the current residual. Ties go to
//! the lowest atom id, then the lowest offset.
//!
//! Internally the coders never recompute full correlations after the first
//! pass. Subtracting `a * atom_k` at offset `t'` changes the correlation of
//! atom `m` at offset `t` by `a * <atom_m, atom_k shifted by t - t'>`, which is
//! read from a precomputed cross-Gram table, so each iteration only touches
//! the offsets overlapping the new instance.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::dictionary::{l2, Dictionary};
use crate::error::{Error, Result};
use crate::ingest::SignalSegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Mp,
    Omp,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mp" => Ok(Algorithm::Mp),
            "omp" => Ok(Algorithm::Omp),
            other => Err(Error::invalid(format!("unknown algorithm '{other}' (expected mp or omp)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Mp => "mp",
            Algorithm::Omp => "omp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodingConfig {
    pub algorithm: Algorithm,
    /// Fraction of samples NOT represented by an atom instance, in `[0, 1)`.
    pub sparsity: f64,
}

impl Default for CodingConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Mp,
            sparsity: 0.9,
        }
    }
}

impl CodingConfig {
    pub fn new(algorithm: Algorithm, sparsity: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::invalid(format!("sparsity must be in [0, 1), got {sparsity}")));
        }
        Ok(Self { algorithm, sparsity })
    }

    /// Number of atom instances for a segment of `len` samples:
    /// `ceil((1 - sparsity) * len)`, at least one.
    pub fn instance_budget(&self, len: usize) -> usize {
        let exact = (1.0 - self.sparsity) * len as f64;
        // (1 - 0.9) * 12800 evaluates to 1279.9999999999998; snap values that
        // are integers up to rounding before taking the ceiling.
        let nearest = exact.round();
        let n = if (exact - nearest).abs() <= 1e-9 * (len as f64).max(1.0) {
            nearest
        } else {
            exact.ceil()
        };
        (n as usize).max(1)
    }
}

/// One placed, scaled atom copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomInstance {
    pub atom_id: u32,
    /// 0-based start of the atom support within the segment.
    pub offset: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub instances: Vec<AtomInstance>,
    pub residual: Vec<f64>,
    pub dictionary_generation: u64,
    /// Set when coding stopped early because the residual (or the candidate
    /// set) ran out before the instance budget was reached.
    pub exhausted: bool,
}

impl SparseCode {
    pub fn residual_norm(&self) -> f64 {
        l2(&self.residual)
    }

    pub fn reconstruction(&self, dict: &Dictionary) -> Result<Vec<f64>> {
        reconstruct(&self.instances, dict, self.residual.len())
    }

    /// Writes `atom_id,offset,amplitude` rows with a residual-norm footer.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("atom_id,offset,amplitude\n");
        for i in &self.instances {
            out.push_str(&format!("{},{},{}\n", i.atom_id, i.offset, i.amplitude));
        }
        out.push_str(&format!("# residual_norm={}\n", self.residual_norm()));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `out[t] = sum_k signal[t + k] * atom[k]` for every offset at which the atom
/// fits entirely inside the signal.
pub fn cross_correlate(signal: &[f64], atom: &[f64]) -> Result<Vec<f64>> {
    if atom.is_empty() || atom.len() > signal.len() {
        return Err(Error::AtomTooLong {
            atom_len: atom.len(),
            signal_len: signal.len(),
        });
    }
    Ok(signal.windows(atom.len()).map(|w| dot(w, atom)).collect())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best-matching (atom, offset) by absolute inner product over all atoms and
/// valid shifts, with the signed inner product as amplitude. `None` when
/// every correlation is exactly zero.
pub fn select_best(residual: &[f64], dict: &Dictionary) -> Result<Option<AtomInstance>> {
    if residual.is_empty() {
        return Err(Error::invalid("empty residual"));
    }
    let mut best: Option<AtomInstance> = None;
    let mut best_abs = 0.0;
    for idx in id_order(dict) {
        let atom = &dict.atoms()[idx];
        for (offset, c) in cross_correlate(residual, &atom.waveform)?.into_iter().enumerate() {
            if c.abs() > best_abs {
                best_abs = c.abs();
                best = Some(AtomInstance {
                    atom_id: atom.id,
                    offset,
                    amplitude: c,
                });
            }
        }
    }
    Ok(best)
}

/// `sum_i a_i * atom_{m(i)}` placed at each offset, zero elsewhere.
pub fn reconstruct(instances: &[AtomInstance], dict: &Dictionary, length: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; length];
    for inst in instances {
        let atom = dict.atom(inst.atom_id).ok_or(Error::UnknownAtom(inst.atom_id))?;
        let end = inst.offset + atom.len();
        if end > length {
            return Err(Error::invalid(format!(
                "instance of atom {} at offset {} overruns length {length}",
                inst.atom_id, inst.offset
            )));
        }
        for (o, w) in out[inst.offset..end].iter_mut().zip(&atom.waveform) {
            *o += inst.amplitude * w;
        }
    }
    Ok(out)
}

/// Encodes with the algorithm named in `cfg`.
pub fn encode(segment: &SignalSegment, dict: &Dictionary, cfg: &CodingConfig) -> Result<SparseCode> {
    let n = cfg.instance_budget(segment.len());
    match cfg.algorithm {
        Algorithm::Mp => mp_encode_n(&segment.samples, dict, n),
        Algorithm::Omp => omp_encode_n(&segment.samples, dict, n),
    }
}

pub fn mp_encode(segment: &SignalSegment, dict: &Dictionary, cfg: &CodingConfig) -> Result<SparseCode> {
    if cfg.algorithm != Algorithm::Mp {
        return Err(Error::invalid("mp_encode called with a non-MP coding config"));
    }
    encode(segment, dict, cfg)
}

pub fn omp_encode(segment: &SignalSegment, dict: &Dictionary, cfg: &CodingConfig) -> Result<SparseCode> {
    if cfg.algorithm != Algorithm::Omp {
        return Err(Error::invalid("omp_encode called with a non-OMP coding config"));
    }
    encode(segment, dict, cfg)
}

/// Matching Pursuit with an explicit instance count.
pub fn mp_encode_n(signal: &[f64], dict: &Dictionary, n_instances: usize) -> Result<SparseCode> {
    let mut scan = Scan::new(signal, dict, false)?;
    let mut residual = signal.to_vec();
    let mut instances = Vec::with_capacity(n_instances);
    let mut exhausted = false;

    for _ in 0..n_instances {
        let Some((m, offset)) = scan.argmax() else {
            exhausted = true;
            break;
        };
        let atom = &dict.atoms()[m].waveform;
        let window = &mut residual[offset..offset + atom.len()];
        let amplitude = dot(window, atom);
        if amplitude == 0.0 {
            exhausted = true;
            break;
        }
        for (r, w) in window.iter_mut().zip(atom) {
            *r -= amplitude * w;
        }
        scan.subtract(m, offset, amplitude);
        instances.push(AtomInstance {
            atom_id: dict.atoms()[m].id,
            offset,
            amplitude,
        });
    }

    Ok(SparseCode {
        instances,
        residual,
        dictionary_generation: dict.generation,
        exhausted,
    })
}

/// Orthogonal Matching Pursuit with an explicit instance count. After each
/// selection all amplitudes are refit by least squares over the selected
/// shifted atoms, so the residual stays orthogonal to their span.
pub fn omp_encode_n(signal: &[f64], dict: &Dictionary, n_instances: usize) -> Result<SparseCode> {
    let mut scan = Scan::new(signal, dict, true)?;
    let signal_corr = scan.corr.clone();
    let mut selected: Vec<(usize, usize)> = Vec::with_capacity(n_instances);
    let mut amplitudes: Vec<f64> = Vec::with_capacity(n_instances);
    let mut chol = Cholesky::default();
    let mut rhs: Vec<f64> = Vec::with_capacity(n_instances);
    let mut exhausted = false;

    for _ in 0..n_instances {
        let Some((m, offset)) = scan.argmax() else {
            exhausted = true;
            break;
        };
        if scan.corr[m][offset] == 0.0 {
            exhausted = true;
            break;
        }
        scan.exclude(m, offset);

        let column: Vec<f64> = selected
            .iter()
            .map(|&(k, t)| scan.gram.inner(k, t, m, offset))
            .collect();
        chol.push(&column, scan.gram.inner(m, offset, m, offset), |i, j| {
            let (a, b) = (
                selected.get(i).copied().unwrap_or((m, offset)),
                selected.get(j).copied().unwrap_or((m, offset)),
            );
            scan.gram.inner(a.0, a.1, b.0, b.1)
        });
        selected.push((m, offset));
        rhs.push(signal_corr[m][offset]);
        amplitudes.push(0.0);

        let fitted = chol.solve(&rhs);
        for (i, &(k, t)) in selected.iter().enumerate() {
            let delta = fitted[i] - amplitudes[i];
            if delta != 0.0 {
                scan.shift_corr(k, t, delta);
            }
        }
        amplitudes = fitted;
        scan.refresh_all_blocks();
    }

    let mut residual = signal.to_vec();
    let mut instances = Vec::with_capacity(selected.len());
    for (&(m, offset), &amplitude) in selected.iter().zip(&amplitudes) {
        let atom = &dict.atoms()[m];
        for (r, w) in residual[offset..offset + atom.len()].iter_mut().zip(&atom.waveform) {
            *r -= amplitude * w;
        }
        instances.push(AtomInstance {
            atom_id: atom.id,
            offset,
            amplitude,
        });
    }

    Ok(SparseCode {
        instances,
        residual,
        dictionary_generation: dict.generation,
        exhausted,
    })
}

fn id_order(dict: &Dictionary) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dict.len()).collect();
    order.sort_by_key(|&i| dict.atoms()[i].id);
    order
}

/// Inner products between every pair of atoms at every relative shift.
struct CrossGram {
    lens: Vec<usize>,
    /// `table[m][k][d + len_m - 1] = sum_t atom_m[t] * atom_k[t + d]`
    table: Vec<Vec<Vec<f64>>>,
}

impl CrossGram {
    fn new(dict: &Dictionary) -> Self {
        let atoms = dict.atoms();
        let lens: Vec<usize> = atoms.iter().map(|a| a.len()).collect();
        let table = atoms
            .iter()
            .map(|am| {
                atoms
                    .iter()
                    .map(|ak| {
                        let (lm, lk) = (am.len() as isize, ak.len() as isize);
                        (-(lm - 1)..lk)
                            .map(|d| {
                                let t0 = 0.max(-d);
                                let t1 = lm.min(lk - d);
                                (t0..t1)
                                    .map(|t| am.waveform[t as usize] * ak.waveform[(t + d) as usize])
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { lens, table }
    }

    /// `<atom_m shifted to tm, atom_k shifted to tk>`
    #[inline]
    fn inner(&self, m: usize, tm: usize, k: usize, tk: usize) -> f64 {
        let d = tm as isize - tk as isize;
        let idx = d + self.lens[m] as isize - 1;
        let row = &self.table[m][k];
        if idx < 0 || idx as usize >= row.len() {
            0.0
        } else {
            row[idx as usize]
        }
    }
}

const BLOCK: usize = 64;

/// Correlation maps of the residual against every atom, with per-block
/// maxima for a fast argmax.
struct Scan {
    gram: CrossGram,
    corr: Vec<Vec<f64>>,
    /// `(|corr|, offset)` of the first maximum in each block; `-1.0` when
    /// the block has no admissible candidate.
    blocks: Vec<Vec<(f64, usize)>>,
    excluded: Option<Vec<Vec<bool>>>,
    order: Vec<usize>,
}

impl Scan {
    fn new(signal: &[f64], dict: &Dictionary, with_exclusion: bool) -> Result<Self> {
        if signal.is_empty() {
            return Err(Error::invalid("empty signal"));
        }
        let corr = dict
            .atoms()
            .iter()
            .map(|a| cross_correlate(signal, &a.waveform))
            .collect::<Result<Vec<_>>>()?;
        let excluded = with_exclusion.then(|| corr.iter().map(|c| vec![false; c.len()]).collect());
        let blocks = corr.iter().map(|c| vec![(-1.0, 0); c.len().div_ceil(BLOCK)]).collect();
        let mut scan = Self {
            gram: CrossGram::new(dict),
            corr,
            blocks,
            excluded,
            order: id_order(dict),
        };
        scan.refresh_all_blocks();
        Ok(scan)
    }

    fn refresh_block(&mut self, m: usize, b: usize) {
        let c = &self.corr[m];
        let start = b * BLOCK;
        let end = (start + BLOCK).min(c.len());
        let mut best = (-1.0, start);
        match &self.excluded {
            Some(ex) => {
                let ex = &ex[m];
                for t in start..end {
                    let v = c[t].abs();
                    if !ex[t] && v > best.0 {
                        best = (v, t);
                    }
                }
            }
            None => {
                for (t, v) in c[start..end].iter().enumerate() {
                    if v.abs() > best.0 {
                        best = (v.abs(), start + t);
                    }
                }
            }
        }
        self.blocks[m][b] = best;
    }

    fn refresh_all_blocks(&mut self) {
        for m in 0..self.corr.len() {
            for b in 0..self.blocks[m].len() {
                self.refresh_block(m, b);
            }
        }
    }

    fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut best_abs = -1.0;
        for &m in &self.order {
            for &(v, t) in &self.blocks[m] {
                if v > best_abs {
                    best_abs = v;
                    best = Some((m, t));
                }
            }
        }
        best.filter(|_| best_abs >= 0.0)
    }

    /// Applies `corr -= amplitude * <atom_m(. - t), atom_k(. - offset)>` for
    /// all offsets `t` overlapping the instance, without touching blocks.
    fn shift_corr(&mut self, k: usize, offset: usize, amplitude: f64) {
        let len_k = self.gram.lens[k];
        for m in 0..self.corr.len() {
            let len_m = self.gram.lens[m];
            let positions = self.corr[m].len();
            let lo = (offset + 1).saturating_sub(len_m);
            let hi = (offset + len_k - 1).min(positions - 1);
            if lo > hi {
                continue;
            }
            let row = &self.gram.table[m][k];
            let c = &mut self.corr[m];
            // index into row: (t - offset) + len_m - 1
            let base = len_m as isize - 1 - offset as isize;
            for t in lo..=hi {
                c[t] -= amplitude * row[(t as isize + base) as usize];
            }
        }
    }

    fn subtract(&mut self, k: usize, offset: usize, amplitude: f64) {
        self.shift_corr(k, offset, amplitude);
        let len_k = self.gram.lens[k];
        for m in 0..self.corr.len() {
            let len_m = self.gram.lens[m];
            let positions = self.corr[m].len();
            let lo = (offset + 1).saturating_sub(len_m);
            let hi = (offset + len_k - 1).min(positions - 1);
            if lo > hi {
                continue;
            }
            for b in lo / BLOCK..=hi / BLOCK {
                self.refresh_block(m, b);
            }
        }
    }

    fn exclude(&mut self, m: usize, t: usize) {
        if let Some(ex) = &mut self.excluded {
            ex[m][t] = true;
        }
    }
}

/// Incrementally grown Cholesky factor of the selected-atom Gram matrix.
/// Falls back to ridge damping (`1e-12 * trace / n`) once a pivot shows the
/// system is numerically rank deficient.
#[derive(Default)]
struct Cholesky {
    rows: Vec<Vec<f64>>,
    diag_sum: f64,
    ridge: f64,
}

const PIVOT_TOLERANCE: f64 = 1e-10;

impl Cholesky {
    /// Adds a row/column. `column[i] = G[i][n]` for existing indices, `diag`
    /// is `G[n][n]`, and `entry(i, j)` gives any Gram entry for refactoring.
    fn push(&mut self, column: &[f64], diag: f64, entry: impl Fn(usize, usize) -> f64) {
        self.diag_sum += diag;
        if !self.try_push(column, diag) {
            let n = self.rows.len() + 1;
            self.ridge = 1e-12 * self.diag_sum / n as f64;
            self.rows.clear();
            for i in 0..n {
                let col: Vec<f64> = (0..i).map(|j| entry(j, i)).collect();
                if !self.try_push(&col, entry(i, i)) {
                    // Exact dependence even with damping: keep the factor
                    // well-defined with the damping value as pivot.
                    let l = self.forward(&col);
                    let mut row = l;
                    row.push(self.ridge.sqrt().max(f64::MIN_POSITIVE));
                    self.rows.push(row);
                }
            }
        }
    }

    fn try_push(&mut self, column: &[f64], diag: f64) -> bool {
        let l = self.forward(column);
        let d2 = diag + self.ridge - l.iter().map(|v| v * v).sum::<f64>();
        let floor = if self.ridge > 0.0 { 0.0 } else { PIVOT_TOLERANCE * diag.abs().max(f64::MIN_POSITIVE) };
        if !(d2 > floor) {
            return false;
        }
        let mut row = l;
        row.push(d2.sqrt());
        self.rows.push(row);
        true
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate().take(b.len()) {
            let s: f64 = row[..i].iter().zip(&y).map(|(l, v)| l * v).sum();
            y.push((b[i] - s) / row[i]);
        }
        y
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let y = self.forward(b);
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.rows[j][i] * x[j]).sum();
            x[i] = (y[i] - s) / self.rows[i][i];
        }
        x
    }
}
