//! Atoms, dictionaries and the `VDCT` dictionary file format.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "VDCT" | u32 version (=1) | u32 atom count
//! per atom: u32 id | u32 length | length x f64 samples
//! u64 generation
//! ```

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{rms, rng_from_seed};

pub const MAGIC: &[u8; 4] = b"VDCT";
pub const FORMAT_VERSION: u32 = 1;

/// A unit-norm waveform with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: u32,
    pub waveform: Vec<f64>,
}

impl Atom {
    /// Builds an atom and scales it to unit L2 norm.
    pub fn new(id: u32, waveform: Vec<f64>) -> Result<Self> {
        if waveform.is_empty() {
            return Err(Error::invalid(format!("atom {id} is empty")));
        }
        let mut atom = Self { id, waveform };
        if !atom.normalize() {
            return Err(Error::invalid(format!("atom {id} has zero norm")));
        }
        Ok(atom)
    }

    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.waveform)
    }

    /// Rescales to unit norm; returns false (leaving the atom untouched) when
    /// the norm is zero or not finite.
    pub fn normalize(&mut self) -> bool {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return false;
        }
        self.waveform.iter_mut().for_each(|v| *v /= n);
        true
    }
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// An ordered set of atoms. Atom ids are unique; the atom count is fixed once
/// the dictionary is built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<Atom>,
    /// Number of learning updates applied since initialization.
    pub generation: u64,
}

impl Dictionary {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        Self::with_generation(atoms, 0)
    }

    pub fn with_generation(atoms: Vec<Atom>, generation: u64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("dictionary needs at least one atom"));
        }
        let mut ids: Vec<u32> = atoms.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate atom ids"));
        }
        if let Some(a) = atoms.iter().find(|a| a.waveform.is_empty()) {
            return Err(Error::invalid(format!("atom {} is empty", a.id)));
        }
        Ok(Self { atoms, generation })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, id: u32) -> Option<&Atom> {
        self.index_of(id).map(|i| &self.atoms[i])
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.atoms.iter().position(|a| a.id == id)
    }

    pub fn max_atom_len(&self) -> usize {
        self.atoms.iter().map(Atom::len).max().unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let total: usize = self.atoms.iter().map(|a| 8 + 8 * a.len()).sum();
        let mut out = Vec::with_capacity(12 + total + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.atoms.len() as u32).to_le_bytes());
        for atom in &self.atoms {
            out.extend_from_slice(&atom.id.to_le_bytes());
            out.extend_from_slice(&(atom.len() as u32).to_le_bytes());
            for v in &atom.waveform {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.generation.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:02x?}")));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32("atom count")? as usize;
        let mut atoms = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = r.u32("atom id")?;
            let len = r.u32("atom length")? as usize;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| r.corrupt("atom length overflow"))?, "atom samples")?;
            let waveform = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            atoms.push(Atom { id, waveform });
        }
        let generation = r.u64("generation")?;
        if r.pos != bytes.len() {
            return Err(r.corrupt("trailing bytes after generation counter"));
        }
        Self::with_generation(atoms, generation).map_err(|e| Error::Format(e.to_string()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, msg: &str) -> Error {
        Error::Corrupt {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(&format!("unexpected end of file reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Seeded pseudorandom dictionary: each atom is `pad` zeros, `core_len`
/// standard normal draws, `pad` zeros, normalized. Draws come from ChaCha8
/// seeded with `seed`, fed through `rand_distr`'s ziggurat normal sampler.
pub fn init_pseudorandom(num_atoms: usize, core_len: usize, pad: usize, seed: u64) -> Result<Dictionary> {
    if num_atoms == 0 || core_len == 0 {
        return Err(Error::invalid("need at least one atom with at least one core sample"));
    }
    let mut rng = rng_from_seed(seed);
    let mut atoms = Vec::with_capacity(num_atoms);
    for id in 0..num_atoms {
        let mut w = vec![0.0; core_len + 2 * pad];
        loop {
            for v in &mut w[pad..pad + core_len] {
                *v = StandardNormal.sample(&mut rng);
            }
            if l2(&w) > 0.0 {
                break;
            }
        }
        atoms.push(Atom::new(id as u32, w)?);
    }
    Dictionary::new(atoms)
}

/// Which tails of an atom should grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Growth {
    pub leading: bool,
    pub trailing: bool,
}

impl Growth {
    pub fn any(self) -> bool {
        self.leading || self.trailing
    }
}

pub fn growth_decision(waveform: &[f64], tail_len: usize, ratio: f64) -> Growth {
    let tail = tail_len.min(waveform.len() / 2);
    if tail == 0 {
        return Growth::default();
    }
    let whole = rms(waveform);
    Growth {
        leading: rms(&waveform[..tail]) > ratio * whole,
        trailing: rms(&waveform[waveform.len() - tail..]) > ratio * whole,
    }
}

/// Appends `tail_len` zeros on each side whose outer `tail_len` samples carry
/// more than `ratio` of the atom RMS, then renormalizes.
pub fn maybe_grow(atom: &Atom, tail_len: usize, ratio: f64) -> Atom {
    let mut out = atom.clone();
    grow_in_place(&mut out, tail_len, ratio);
    out
}

pub(crate) fn grow_in_place(atom: &mut Atom, tail_len: usize, ratio: f64) -> Growth {
    let g = growth_decision(&atom.waveform, tail_len, ratio);
    if g.leading {
        let mut w = vec![0.0; tail_len];
        w.extend_from_slice(&atom.waveform);
        atom.waveform = w;
    }
    if g.trailing {
        atom.waveform.extend(std::iter::repeat_n(0.0, tail_len));
    }
    atom.normalize();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_init_shape() {
        let d = init_pseudorandom(8, 50, 10, 2018).unwrap();
        assert_eq!(d.len(), 8);
        for (i, a) in d.atoms().iter().enumerate() {
            assert_eq!(a.id, i as u32);
            assert_eq!(a.len(), 70);
            assert!((a.norm() - 1.0).abs() < 1e-9);
            assert!(a.waveform[..10].iter().all(|&v| v == 0.0));
            assert!(a.waveform[60..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_atom_normalizes_to_unit() {
        let d = init_pseudorandom(1, 1, 0, 5).unwrap();
        assert_eq!(d.atoms()[0].waveform.len(), 1);
        assert_eq!(d.atoms()[0].waveform[0].abs(), 1.0);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_pseudorandom(8, 50, 10, 1).unwrap();
        let b = init_pseudorandom(8, 50, 10, 1).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = init_pseudorandom(8, 50, 10, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_tails_do_not_grow() {
        let d = init_pseudorandom(1, 50, 10, 1).unwrap();
        let a = &d.atoms()[0];
        assert_eq!(&maybe_grow(a, 10, 0.1), a);
    }

    #[test]
    fn loud_leading_tail_grows() {
        let a = Atom::new(0, vec![1.0; 30]).unwrap();
        let g = maybe_grow(&a, 10, 0.1);
        assert_eq!(g.len(), 50);
        assert!(g.waveform[..10].iter().all(|&v| v == 0.0));
        assert!(g.waveform[40..].iter().all(|&v| v == 0.0));
        assert!((g.norm() - 1.0).abs() < 1e-12);

        let mut w = vec![0.0; 30];
        w[..10].fill(1.0);
        let a = Atom::new(3, w).unwrap();
        let g = maybe_grow(&a, 10, 0.1);
        assert_eq!(g.len(), 40);
        for (x, y) in g.waveform[10..40].iter().zip(&a.waveform) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(g.id, 3);
    }

    #[test]
    fn round_trip_and_errors() {
        let d = init_pseudorandom(8, 50, 10, 9).unwrap();
        let mut d2 = d.clone();
        d2.generation = 77;
        let back = Dictionary::from_bytes(&d2.to_bytes()).unwrap();
        assert_eq!(back, d2);
        assert_eq!(back.to_bytes(), d2.to_bytes());

        assert!(matches!(Dictionary::from_bytes(&[]), Err(Error::Corrupt { offset: 0, .. })));

        let mut bad_version = d.to_bytes();
        bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Dictionary::from_bytes(&bad_version),
            Err(Error::Version { found: 2, expected: 1 })
        ));

        let mut bad_magic = d.to_bytes();
        bad_magic[0] = b'X';
        assert!(matches!(Dictionary::from_bytes(&bad_magic), Err(Error::Format(_))));

        let bytes = d.to_bytes();
        let cut = bytes.len() - 3;
        match Dictionary::from_bytes(&bytes[..cut]) {
            Err(Error::Corrupt { offset, .. }) => assert_eq!(offset, bytes.len() - 8),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.vdct");
        let d = init_pseudorandom(4, 20, 5, 11).unwrap();
        d.save(&path).unwrap();
        assert_eq!(Dictionary::load(&path).unwrap(), d);
    }

    fn rms_oracle(x: &[f64]) -> f64 {
        let mut s = 0.0;
        for v in x {
            s += v * v;
        }
        (s / x.len() as f64).sqrt()
    }

    proptest! {
        #[test]
        fn growth_matches_recomputed_rms(w in proptest::collection::vec(-1.0f64..1.0, 20..60), scale in 0.0f64..1.0) {
            let mut w = w;
            // shrink the tails by a random factor so both outcomes occur
            for v in w[..10].iter_mut() { *v *= scale * 0.3; }
            let n = w.len();
            for v in w[n - 10..].iter_mut() { *v *= (1.0 - scale) * 0.3; }
            prop_assume!(w.iter().any(|v| *v != 0.0));
            let a = Atom::new(0, w).unwrap();
            let whole = rms_oracle(&a.waveform);
            let lead = rms_oracle(&a.waveform[..10]) > 0.1 * whole;
            let trail = rms_oracle(&a.waveform[n - 10..]) > 0.1 * whole;
            let g = maybe_grow(&a, 10, 0.1);
            prop_assert_eq!(g.len(), n + 10 * (lead as usize + trail as usize));
            let start = if lead { 10 } else { 0 };
            // interior untouched up to the renormalization scale
            let scale = g.waveform[start..start + n].iter().zip(&a.waveform).map(|(x, y)| x * y).sum::<f64>();
            for (x, y) in g.waveform[start..start + n].iter().zip(&a.waveform) {
                prop_assert!((x - scale * y).abs() < 1e-12);
            }
            prop_assert!((g.norm() - 1.0).abs() < 1e-9);
        }
    }
}
