//! Python bindings: pieces, model training and sampling, and the batch
//! metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pitchchain::hmm::EmOptions;
use pitchchain::metrics::{self, Criterion};
use pitchchain::midi::{self, PitchSequence};
use pitchchain::pipeline;
use pitchchain::variants::{self, ModelSpec, TrainOptions, TrainedModel};

fn py_err(e: pitchchain::Error) -> PyErr {
    match e {
        pitchchain::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A stream of MIDI pitches with onset times.
#[pyclass(name = "Piece", module = "pitchchain_py", from_py_object)]
#[derive(Clone)]
pub struct Piece {
    inner: PitchSequence,
}

#[pymethods]
impl Piece {
    /// Reads a MIDI-CSV file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        pipeline::load_piece(&path).map(|inner| Piece { inner }).map_err(py_err)
    }

    /// Parses MIDI-CSV text.
    #[staticmethod]
    #[pyo3(signature = (text, name = "piece"))]
    fn parse(text: &str, name: &str) -> PyResult<Self> {
        midi::parse_midi_csv(text, name).map(|inner| Piece { inner }).map_err(py_err)
    }

    /// One note per quarter note.
    #[staticmethod]
    #[pyo3(signature = (pitches, ticks_per_quarter = 480, name = "piece"))]
    fn from_pitches(pitches: Vec<u8>, ticks_per_quarter: u32, name: &str) -> PyResult<Self> {
        if let Some(p) = pitches.iter().find(|&&p| p > 127) {
            return Err(PyValueError::new_err(format!("pitch {p} outside 0..=127")));
        }
        Ok(Piece {
            inner: PitchSequence::from_pitches(&pitches, ticks_per_quarter, name),
        })
    }

    #[getter]
    fn pitches(&self) -> Vec<u8> {
        self.inner.pitches()
    }

    #[getter]
    fn timestamps(&self) -> Vec<u64> {
        self.inner.timestamps()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.source_name.clone()
    }

    /// Distinct pitches, ascending.
    fn alphabet(&self) -> PyResult<Vec<u8>> {
        midi::build_alphabet(&self.inner).map(|a| a.symbols().to_vec()).map_err(py_err)
    }

    #[pyo3(signature = (note_duration = None))]
    fn to_csv(&self, note_duration: Option<u64>) -> PyResult<String> {
        let d = note_duration.unwrap_or_else(|| midi::default_note_duration(self.inner.ticks_per_quarter));
        midi::emit_midi_csv(&self.inner, d).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Piece({:?}, {} notes)", self.inner.source_name, self.inner.len())
    }
}

/// A trained registry model (M1..M15).
#[pyclass(name = "Model", module = "pitchchain_py")]
pub struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (piece, model = "M1", states = None, layers = None, seed = 0, tol = 1e-6, max_iter = 500, restarts = 1))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        piece: &Piece,
        model: &str,
        states: Option<usize>,
        layers: Option<usize>,
        seed: u64,
        tol: f64,
        max_iter: usize,
        restarts: usize,
    ) -> PyResult<Self> {
        let mut spec = ModelSpec::registry(model).map_err(py_err)?;
        if let Some(l) = layers {
            spec = spec.with_layers(l);
        }
        if let Some(n) = states {
            spec = spec.with_states(n);
        }
        let opts = TrainOptions {
            em: EmOptions { tol, max_iter },
            seed,
            restarts: restarts.max(1),
            ..TrainOptions::default()
        };
        let training = piece.inner.clone();
        let inner = py.detach(|| variants::train(&spec, &training, &opts)).map_err(py_err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TrainedModel::from_json(text).map(|inner| Model { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.spec.label()
    }

    #[getter]
    fn alphabet(&self) -> Vec<u8> {
        self.inner.alphabet.symbols().to_vec()
    }

    /// Log-likelihood trace of the EM fit (empty for models without EM).
    #[getter]
    fn log_likelihood_trace(&self) -> Vec<f64> {
        self.inner
            .summary
            .fit_report
            .as_ref()
            .map(|r| r.log_likelihood_trace.clone())
            .unwrap_or_default()
    }

    /// Log-likelihood of a piece over the training alphabet; `None` for the
    /// TVAR model.
    fn log_likelihood(&self, piece: &Piece) -> PyResult<Option<f64>> {
        let obs = self.inner.alphabet.encode(&piece.inner).map_err(py_err)?;
        self.inner.log_likelihood(&obs).transpose().map_err(py_err)
    }

    /// One piece drawn with `seed`, on the training piece's timing.
    fn sample(&self, seed: u64) -> PyResult<Piece> {
        let sampler = self.inner.sampler().map_err(py_err)?;
        sampler
            .generate_piece(seed, &format!("sample_{seed}"))
            .map(|inner| Piece { inner })
            .map_err(py_err)
    }

    /// `n` pieces, piece `i` drawn with seed `seed + i`.
    fn generate(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<Piece>> {
        let batch = py.detach(|| pipeline::generate_batch(&self.inner, n, seed)).map_err(py_err)?;
        Ok(batch.into_iter().map(|inner| Piece { inner }).collect())
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner.spec.label())
    }
}

#[pyfunction]
fn entropy(pitches: Vec<u8>) -> PyResult<f64> {
    metrics::empirical_entropy(&pitches).map_err(py_err)
}

#[pyfunction]
fn mutual_information(a: Vec<u8>, b: Vec<u8>) -> PyResult<f64> {
    metrics::mutual_information(&a, &b).map_err(py_err)
}

#[pyfunction]
fn edit_distance(a: Vec<u8>, b: Vec<u8>) -> f64 {
    metrics::edit_distance(&a, &b)
}

#[pyfunction]
#[pyo3(signature = (series, max_lag = metrics::DEFAULT_MAX_LAG))]
fn acf_pacf(series: Vec<f64>, max_lag: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    metrics::acf_pacf(&series, max_lag).map_err(py_err)
}

#[pyfunction]
fn rmse(values: Vec<f64>, reference: f64) -> PyResult<f64> {
    metrics::rmse(&values, reference).map_err(py_err)
}

/// Scores a batch against the training piece. Returns the summary values
/// plus `mean_acf`, `mean_pacf`, `n_evaluated` and, per criterion, the
/// indices of pieces ranked best first under `ranking.<criterion>`.
#[pyfunction]
#[pyo3(signature = (training, batch, max_lag = metrics::DEFAULT_MAX_LAG))]
fn evaluate<'py>(
    py: Python<'py>,
    training: &Piece,
    batch: Vec<Piece>,
    max_lag: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let train = training.inner.clone();
    let pieces: Vec<PitchSequence> = batch.into_iter().map(|p| p.inner).collect();
    let report = py
        .detach(|| metrics::evaluate_batch(&train, &pieces, max_lag))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    for (name, v) in report.summary_rows() {
        out.set_item(name, v)?;
    }
    out.set_item("n_evaluated", report.n_evaluated)?;
    out.set_item("mean_acf", report.mean_acf.clone())?;
    out.set_item("mean_pacf", report.mean_pacf.clone())?;
    for c in Criterion::ALL {
        let order: Vec<usize> = metrics::rank_pieces(&report, c).iter().map(|p| p.index).collect();
        out.set_item(format!("ranking.{c}"), order)?;
    }
    Ok(out)
}

#[pymodule]
fn pitchchain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Piece>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(acf_pacf, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("MODELS", variants::REGISTRY_IDS.to_vec())?;
    Ok(())
}
