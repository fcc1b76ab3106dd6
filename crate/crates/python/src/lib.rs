//! Python bindings: dictionaries, MP/OMP coding, learning, monitoring and
//! the indicator metrics. Samples cross the boundary as lists of floats.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dictmon::coding::encode as encode_segment;
use dictmon::detect::{roc_curve, LabeledSample, ThresholdSweep};
use dictmon::learning::{gradient_update as update, train_baseline as train};
use dictmon::metrics;
use dictmon::{Algorithm, Atom, CodingConfig, Error, IndicatorKind, IndicatorSeries, LearnConfig, SignalSegment};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidArgument(_) | Error::AtomTooLong { .. } | Error::AtomCountMismatch(..) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn coding_config(algorithm: &str, sparsity: f64) -> PyResult<CodingConfig> {
    let alg: Algorithm = algorithm.parse().map_err(to_py)?;
    CodingConfig::new(alg, sparsity).map_err(to_py)
}

fn segment(samples: Vec<f64>, timestamp: i64) -> PyResult<SignalSegment> {
    SignalSegment::new(samples, 1.0, timestamp, "py").map_err(to_py)
}

/// Ordered set of unit-norm atoms.
#[pyclass(name = "Dictionary", module = "dictmon", skip_from_py_object)]
#[derive(Clone)]
struct PyDictionary {
    inner: dictmon::Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Builds a dictionary from waveforms; each is scaled to unit norm and
    /// gets its list index as id.
    #[new]
    fn new(waveforms: Vec<Vec<f64>>) -> PyResult<Self> {
        let atoms = waveforms
            .into_iter()
            .enumerate()
            .map(|(i, w)| Atom::new(i as u32, w))
            .collect::<dictmon::Result<Vec<_>>>()
            .map_err(to_py)?;
        Ok(Self {
            inner: dictmon::Dictionary::new(atoms).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (num_atoms=8, core_len=50, pad=10, seed=0))]
    fn pseudorandom(num_atoms: usize, core_len: usize, pad: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: dictmon::dictionary::init_pseudorandom(num_atoms, core_len, pad, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dictmon::Dictionary::load(path.as_ref()).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(to_py)
    }

    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        self.inner.atoms().iter().map(|a| a.waveform.clone()).collect()
    }

    #[getter]
    fn ids(&self) -> Vec<u32> {
        self.inner.atoms().iter().map(|a| a.id).collect()
    }

    #[getter]
    fn generation(&self) -> u64 {
        self.inner.generation
    }

    /// Distance to `other` in degrees.
    fn distance(&self, other: &PyDictionary) -> PyResult<f64> {
        metrics::dictionary_distance(&self.inner, &other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &PyDictionary) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let lens: Vec<usize> = self.inner.atoms().iter().map(|a| a.len()).collect();
        format!("Dictionary(atoms={}, lengths={lens:?}, generation={})", self.inner.len(), self.inner.generation)
    }
}

/// Result of coding one segment.
#[pyclass(name = "SparseCode", module = "dictmon", skip_from_py_object)]
#[derive(Clone)]
struct PySparseCode {
    inner: dictmon::SparseCode,
    samples: Vec<f64>,
}

#[pymethods]
impl PySparseCode {
    /// `(atom_id, offset, amplitude)` triples in selection order.
    #[getter]
    fn instances(&self) -> Vec<(u32, usize, f64)> {
        self.inner.instances.iter().map(|i| (i.atom_id, i.offset, i.amplitude)).collect()
    }

    #[getter]
    fn residual(&self) -> Vec<f64> {
        self.inner.residual.clone()
    }

    #[getter]
    fn exhausted(&self) -> bool {
        self.inner.exhausted
    }

    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm()
    }

    fn fidelity_db(&self) -> PyResult<f64> {
        metrics::fidelity_db(&self.inner, &segment(self.samples.clone(), 0)?).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.instances.len()
    }
}

/// Codes `samples` against `dictionary` until the instance budget set by
/// `sparsity` is used up.
#[pyfunction]
#[pyo3(signature = (samples, dictionary, algorithm="mp", sparsity=0.9))]
fn encode(samples: Vec<f64>, dictionary: &PyDictionary, algorithm: &str, sparsity: f64) -> PyResult<PySparseCode> {
    let cfg = coding_config(algorithm, sparsity)?;
    let seg = segment(samples, 0)?;
    let inner = encode_segment(&seg, &dictionary.inner, &cfg).map_err(to_py)?;
    Ok(PySparseCode {
        inner,
        samples: seg.samples,
    })
}

/// One learning step from a coded segment.
#[pyfunction]
#[pyo3(signature = (dictionary, code, eta=1e-6))]
fn gradient_update(dictionary: &PyDictionary, code: &PySparseCode, eta: f64) -> PyResult<PyDictionary> {
    let seg = segment(code.samples.clone(), 0)?;
    Ok(PyDictionary {
        inner: update(&dictionary.inner, &code.inner, &seg, &LearnConfig::with_eta(eta)).map_err(to_py)?,
    })
}

/// Sequential encode/update over `blocks`, starting from `init`.
#[pyfunction]
#[pyo3(signature = (blocks, init, algorithm="mp", sparsity=0.9, eta=1e-6))]
fn train_baseline(
    py: Python<'_>,
    blocks: Vec<Vec<f64>>,
    init: &PyDictionary,
    algorithm: &str,
    sparsity: f64,
    eta: f64,
) -> PyResult<PyDictionary> {
    let cfg = coding_config(algorithm, sparsity)?;
    let segs = blocks
        .into_iter()
        .enumerate()
        .map(|(i, b)| segment(b, i as i64))
        .collect::<PyResult<Vec<_>>>()?;
    let dict = py
        .detach(|| train(&segs, &init.inner, &cfg, &LearnConfig::with_eta(eta)))
        .map_err(to_py)?;
    Ok(PyDictionary { inner: dict })
}

/// Online monitoring of one machine against a baseline.
#[pyclass(name = "Monitor", module = "dictmon")]
struct PyMonitor {
    inner: dictmon::MonitorState,
}

#[pymethods]
impl PyMonitor {
    #[new]
    #[pyo3(signature = (baseline, algorithm="mp", sparsity=0.9, eta=1e-6))]
    fn new(baseline: &PyDictionary, algorithm: &str, sparsity: f64, eta: f64) -> PyResult<Self> {
        let cfg = coding_config(algorithm, sparsity)?;
        Ok(Self {
            inner: dictmon::MonitorState::new(baseline.inner.clone(), cfg, LearnConfig::with_eta(eta)).map_err(to_py)?,
        })
    }

    /// Standardizes and codes one segment, adapts the dictionary, and returns
    /// `(fidelity_db, distance_deg, n_instances)`.
    fn step(&mut self, samples: Vec<f64>, timestamp: i64) -> PyResult<(f64, f64, usize)> {
        let seg = dictmon::ingest::preprocess(&segment(samples, timestamp)?).map_err(to_py)?;
        let r = self.inner.step(&seg).map_err(to_py)?;
        Ok((r.fidelity_db, r.distance_deg, r.n_instances))
    }

    /// `(timestamp, fidelity_db, distance_deg, n_instances)` rows.
    #[getter]
    fn history(&self) -> Vec<(i64, f64, f64, usize)> {
        self.inner
            .history
            .iter()
            .map(|r| (r.timestamp, r.fidelity_db, r.distance_deg, r.n_instances))
            .collect()
    }

    #[getter]
    fn dictionary(&self) -> PyDictionary {
        PyDictionary {
            inner: self.inner.dictionary.clone(),
        }
    }
}

#[pyfunction]
fn dictionary_distance(a: &PyDictionary, b: &PyDictionary) -> PyResult<f64> {
    a.distance(b)
}

/// First-order low-pass filter with time constant `tau` samples.
#[pyfunction]
fn lowpass(values: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    let points = values.into_iter().enumerate().map(|(i, v)| (i as i64, v)).collect();
    let s = IndicatorSeries::new("py", IndicatorKind::DistanceDeg, points).map_err(to_py)?;
    Ok(metrics::lowpass(&s, tau).map_err(to_py)?.values().collect())
}

/// MAD outlier score of each value against the whole population.
#[pyfunction]
fn mad_scores(values: Vec<f64>) -> PyResult<Vec<f64>> {
    let population = values
        .iter()
        .enumerate()
        .map(|(i, &v)| IndicatorSeries::new(format!("m{i}"), IndicatorKind::DistanceDeg, vec![(0, v)]))
        .collect::<dictmon::Result<Vec<_>>>()
        .map_err(to_py)?;
    let scores = metrics::mad_scores(&population, 0).map_err(to_py)?;
    Ok(scores.iter().map(|s| s.score).collect())
}

type RocPoints = Vec<(f64, f64, f64)>;

/// ROC of `values` against boolean `faulty` labels: returns
/// `([(threshold, fpr, tpr), ...], auc)`.
#[pyfunction]
fn roc(values: Vec<f64>, faulty: Vec<bool>) -> PyResult<(RocPoints, f64)> {
    if values.len() != faulty.len() {
        return Err(PyValueError::new_err("values and faulty must have the same length"));
    }
    let samples: Vec<LabeledSample> = values
        .into_iter()
        .zip(faulty)
        .map(|(value, faulty)| LabeledSample { value, faulty })
        .collect();
    let r = roc_curve(&samples, &ThresholdSweep::Observed).map_err(to_py)?;
    Ok((r.points.iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect(), r.auc))
}

/// Unit-norm Gaussian-windowed cosine.
#[pyfunction]
fn gabor_atom(len: usize, freq: f64, width: f64) -> Vec<f64> {
    dictmon::synth::gabor_atom(len, freq, width)
}

#[pymodule]
#[pyo3(name = "dictmon")]
fn dictmon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PySparseCode>()?;
    m.add_class::<PyMonitor>()?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_update, m)?)?;
    m.add_function(wrap_pyfunction!(train_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(dictionary_distance, m)?)?;
    m.add_function(wrap_pyfunction!(lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(mad_scores, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(gabor_atom, m)?)?;
    m.add("PRNG_ALGORITHM", dictmon::ingest::PRNG_ALGORITHM)?;
    Ok(())
}
