//! Python bindings. Frames and feature matrices cross the boundary as numpy
//! arrays; reports come back as plain dicts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use numpy::ndarray::Array2;
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::create_exception;
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use scatgate::classify::{
    self, ClassifierSpec, Labeled, LogisticParams, Sample, TrainedClassifier,
};
use scatgate::embed::{FeatureConfig, FeatureExtractor as CoreExtractor};
use scatgate::ensemble::{self, ClassifierColumn};
use scatgate::frame::{load_frame, save_frame, thumbnail};
use scatgate::physics::{self, RealismConfig, RealismReport, DEFAULT_N_THETA};
use scatgate::pipeline::score_frame;
use scatgate::synth::{generate_corpus as synth_corpus, CorpusConfig};
use scatgate::{
    metrics, BitDepth, Center, PatternClass, ProbabilityVector, ScatterFrame, Strategy, Verdict,
    VoteConfig,
};
use scatgate_gateway::{GatewayError, Workspace};

create_exception!(
    scatgate,
    ScatgateError,
    PyValueError,
    "Raised for invalid input or loop state."
);

fn to_py(e: scatgate::Error) -> PyErr {
    use scatgate::Error as E;
    match e {
        E::Io { .. } | E::Image { .. } => PyOSError::new_err(e.to_string()),
        E::UnknownId(_) => PyKeyError::new_err(e.to_string()),
        other => ScatgateError::new_err(other.to_string()),
    }
}

fn gw_to_py(e: GatewayError) -> PyErr {
    match e {
        GatewayError::Core(c) => to_py(c),
        GatewayError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => ScatgateError::new_err(other.to_string()),
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    Ok(pythonize::pythonize(py, value)
        .map_err(|e| ScatgateError::new_err(e.to_string()))?
        .unbind())
}

fn parse_pattern(pattern: Option<&str>) -> PyResult<Option<PatternClass>> {
    pattern.map(|p| p.parse().map_err(to_py)).transpose()
}

fn rows(a: &PyReadonlyArray2<'_, f64>) -> Vec<Vec<f64>> {
    a.as_array().outer_iter().map(|r| r.to_vec()).collect()
}

fn as_slices(rows: &[Vec<f64>]) -> Vec<&[f64]> {
    rows.iter().map(Vec::as_slice).collect()
}

// ── frames ───────────────────────────────────────────────────────────────────

/// A single-channel detector frame.
#[pyclass(module = "scatgate", frozen)]
#[derive(Clone)]
pub struct Frame {
    inner: ScatterFrame,
}

#[pymethods]
impl Frame {
    /// Build a frame from a 2-D float array of shape (height, width).
    #[new]
    #[pyo3(signature = (data, id = "frame"))]
    fn new(data: PyReadonlyArray2<'_, f64>, id: &str) -> PyResult<Self> {
        let a = data.as_array();
        let (h, w) = a.dim();
        let inner = ScatterFrame::new(id, w, h, a.iter().copied().collect()).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Read a PNG or TIFF; the id is the file stem.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_frame(path).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (path, bit_depth = 16))]
    fn save(&self, path: PathBuf, bit_depth: u32) -> PyResult<()> {
        let depth = BitDepth::from_bits(bit_depth).map_err(to_py)?;
        save_frame(&self.inner, path, depth).map_err(to_py)
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn to_numpy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let a = Array2::from_shape_vec(
            (self.inner.height(), self.inner.width()),
            self.inner.data().to_vec(),
        )
        .map_err(|e| ScatgateError::new_err(e.to_string()))?;
        Ok(a.into_pyarray(py))
    }

    fn thumbnail(&self, side: usize) -> PyResult<Frame> {
        Ok(Frame {
            inner: thumbnail(&self.inner, side).map_err(to_py)?,
        })
    }

    /// Beam center by grid search; returns `(x, y)`.
    #[pyo3(signature = (window = None, step = 4))]
    fn find_center(
        &self,
        py: Python<'_>,
        window: Option<usize>,
        step: usize,
    ) -> PyResult<(f64, f64)> {
        let frame = &self.inner;
        let window = window.unwrap_or_else(|| (frame.width().min(frame.height()) / 4).min(40));
        let fit = py
            .allow_threads(|| physics::find_center(frame, window, step))
            .map_err(to_py)?;
        Ok((fit.center.x, fit.center.y))
    }

    /// Polar resampling as an array of shape (n_theta, n_r); cells outside
    /// the frame are NaN.
    #[pyo3(signature = (center = None, n_theta = DEFAULT_N_THETA, n_r = None))]
    fn warp_polar<'py>(
        &self,
        py: Python<'py>,
        center: Option<(f64, f64)>,
        n_theta: usize,
        n_r: Option<usize>,
    ) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let frame = &self.inner;
        let center = match center {
            Some((x, y)) => Center::new(x, y),
            None => frame.midpoint(),
        };
        let n_r = n_r.unwrap_or(frame.width().min(frame.height()) / 2);
        let polar = physics::warp_polar(frame, center, n_theta, n_r).map_err(to_py)?;
        let cells: Vec<f64> = (0..n_theta)
            .flat_map(|t| (0..n_r).map(move |r| (t, r)))
            .map(|(t, r)| polar.at(t, r).unwrap_or(f64::NAN))
            .collect();
        let a = Array2::from_shape_vec((n_theta, n_r), cells)
            .map_err(|e| ScatgateError::new_err(e.to_string()))?;
        Ok(a.into_pyarray(py))
    }

    /// Physics realism scores as a dict.
    #[pyo3(signature = (pattern = None))]
    fn realism(&self, py: Python<'_>, pattern: Option<&str>) -> PyResult<PyObject> {
        let report = realism_of(py, &self.inner, pattern)?;
        to_dict(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame(id={:?}, width={}, height={})",
            self.inner.id(),
            self.inner.width(),
            self.inner.height()
        )
    }
}

fn realism_of(
    py: Python<'_>,
    frame: &ScatterFrame,
    pattern: Option<&str>,
) -> PyResult<RealismReport> {
    let pattern = parse_pattern(pattern)?;
    py.allow_threads(|| score_frame(frame, pattern, &RealismConfig::default()))
        .map_err(to_py)
}

// ── features and metrics ─────────────────────────────────────────────────────

/// Feature embedding with normalization fitted on reference frames.
#[pyclass(module = "scatgate", frozen)]
pub struct FeatureExtractor {
    inner: CoreExtractor,
}

#[pymethods]
impl FeatureExtractor {
    #[new]
    fn new(py: Python<'_>, reference: Vec<PyRef<'_, Frame>>) -> PyResult<Self> {
        let frames: Vec<&ScatterFrame> = reference.iter().map(|f| &f.inner).collect();
        let inner = py
            .allow_threads(|| CoreExtractor::fit(FeatureConfig::default(), &frames))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        FeatureConfig::default().len()
    }

    /// One row per frame.
    fn extract<'py>(
        &self,
        py: Python<'py>,
        frames: Vec<PyRef<'py, Frame>>,
    ) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let frames: Vec<&ScatterFrame> = frames.iter().map(|f| &f.inner).collect();
        let set = py
            .allow_threads(|| self.inner.extract_set(&frames))
            .map_err(to_py)?;
        let flat: Vec<f64> = set.values().concat();
        let a = Array2::from_shape_vec((set.len(), set.dim()), flat)
            .map_err(|e| ScatgateError::new_err(e.to_string()))?;
        Ok(a.into_pyarray(py))
    }
}

/// Frechet distance between Gaussian fits of two feature matrices.
#[pyfunction]
fn fid(real: PyReadonlyArray2<'_, f64>, generated: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    let (r, g) = (rows(&real), rows(&generated));
    let m1 = metrics::fit_moments(&as_slices(&r)).map_err(to_py)?;
    let m2 = metrics::fit_moments(&as_slices(&g)).map_err(to_py)?;
    Ok(metrics::frechet_distance(&m1, &m2).map_err(to_py)?.value)
}

/// Kernel inception distance; returns `(mean, std)` over random subsets.
#[pyfunction]
#[pyo3(signature = (real, generated, subset_size = None, n_subsets = 50, seed = 0))]
fn kid(
    real: PyReadonlyArray2<'_, f64>,
    generated: PyReadonlyArray2<'_, f64>,
    subset_size: Option<usize>,
    n_subsets: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let (r, g) = (rows(&real), rows(&generated));
    let m = subset_size.unwrap_or_else(|| 100.min(r.len()).min(g.len()));
    let k = metrics::kid(&as_slices(&r), &as_slices(&g), m, n_subsets, seed).map_err(to_py)?;
    Ok((k.mean, k.std))
}

/// Inception score of class probabilities, shape (n_items, n_classes).
#[pyfunction]
#[pyo3(signature = (probs, n_splits = 10, seed = 0))]
fn inception_score(
    probs: PyReadonlyArray2<'_, f64>,
    n_splits: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let s = metrics::inception_score(&rows(&probs), n_splits, seed).map_err(to_py)?;
    Ok((s.mean, s.std))
}

// ── classifiers and voting ───────────────────────────────────────────────────

fn samples(
    features: &PyReadonlyArray2<'_, f64>,
    physics: Option<&PyReadonlyArray1<'_, f64>>,
) -> PyResult<Vec<Sample>> {
    let rows = rows(features);
    if let Some(p) = physics {
        if p.len()? != rows.len() {
            return Err(ScatgateError::new_err(format!(
                "physics has {} entries for {} feature rows",
                p.len()?,
                rows.len()
            )));
        }
    }
    let physics: Option<Vec<f64>> = physics.map(|p| p.as_array().to_vec());
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, features)| Sample {
            id: format!("row{i}"),
            features,
            physics: physics.as_ref().map(|p| p[i]),
        })
        .collect())
}

/// A trained realistic-vs-fake classifier.
#[pyclass(module = "scatgate", frozen)]
pub struct Classifier {
    inner: TrainedClassifier,
}

#[pymethods]
impl Classifier {
    /// Fit `kind` ("logistic", "k_nearest" or "physics_rule") on labeled rows.
    /// `labels` holds "realistic" or "fake" per row.
    #[staticmethod]
    #[pyo3(signature = (
        kind, features, labels, physics = None, k = 5, epochs = 100,
        learning_rate = 0.001, batch_size = 32, l2 = 1e-4, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        kind: &str,
        features: PyReadonlyArray2<'_, f64>,
        labels: Vec<String>,
        physics: Option<PyReadonlyArray1<'_, f64>>,
        k: usize,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        l2: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = match kind {
            "logistic" => ClassifierSpec::Logistic(LogisticParams {
                learning_rate,
                batch_size,
                epochs,
                l2,
            }),
            "k_nearest" => ClassifierSpec::KNearest { k },
            "physics_rule" => ClassifierSpec::PhysicsRule,
            other => {
                return Err(ScatgateError::new_err(format!(
                    "unknown classifier kind {other:?}"
                )))
            }
        };
        let samples = samples(&features, physics.as_ref())?;
        if labels.len() != samples.len() {
            return Err(ScatgateError::new_err(format!(
                "{} labels for {} rows",
                labels.len(),
                samples.len()
            )));
        }
        let data = samples
            .into_iter()
            .zip(&labels)
            .map(|(sample, l)| {
                Ok(Labeled {
                    sample,
                    verdict: l.parse::<Verdict>().map_err(to_py)?,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = py
            .allow_threads(|| classify::train(kind, &spec, &data, None, seed, 0, None))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: TrainedClassifier::load_json(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_json(path).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.id
    }

    /// P(realistic) per row.
    #[pyo3(signature = (features, physics = None))]
    fn predict_proba<'py>(
        &self,
        py: Python<'py>,
        features: PyReadonlyArray2<'py, f64>,
        physics: Option<PyReadonlyArray1<'py, f64>>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let samples = samples(&features, physics.as_ref())?;
        let p = samples
            .iter()
            .map(|s| self.inner.predict_proba(s).map(|v| v.p_realistic()))
            .collect::<scatgate::Result<Vec<f64>>>()
            .map_err(to_py)?;
        Ok(PyArray1::from_vec(py, p))
    }

    fn __repr__(&self) -> String {
        format!("Classifier(name={:?})", self.inner.id)
    }
}

/// Ensemble decisions from P(realistic) of each classifier, shape
/// (n_classifiers, n_items). Returns `(verdicts, p_realistic)`.
#[pyfunction]
#[pyo3(signature = (probabilities, strategy = "soft-average", weights = None, threshold = 0.5))]
fn vote<'py>(
    py: Python<'py>,
    probabilities: PyReadonlyArray2<'py, f64>,
    strategy: &str,
    weights: Option<Vec<f64>>,
    threshold: f64,
) -> PyResult<(Vec<String>, Bound<'py, PyArray1<f64>>)> {
    let strategy: Strategy = strategy.parse().map_err(to_py)?;
    let columns = rows(&probabilities)
        .into_iter()
        .enumerate()
        .map(|(i, ps)| {
            Ok(ClassifierColumn {
                name: format!("c{i}"),
                probabilities: ps
                    .into_iter()
                    .map(ProbabilityVector::realistic)
                    .collect::<scatgate::Result<Vec<_>>>()?,
            })
        })
        .collect::<scatgate::Result<Vec<_>>>()
        .map_err(to_py)?;
    let config = VoteConfig {
        weights,
        threshold,
        ..VoteConfig::new(strategy)
    };
    config.validate(columns.len()).map_err(to_py)?;
    let decisions = ensemble::decide_panel(&config, &columns).map_err(to_py)?;
    let verdicts = decisions
        .iter()
        .map(|d| d.verdict.as_str().to_string())
        .collect();
    let p = decisions.iter().map(|d| d.p_realistic).collect();
    Ok((verdicts, PyArray1::from_vec(py, p)))
}

// ── corpus and loop ──────────────────────────────────────────────────────────

/// Write a synthetic corpus to `out_dir`; returns the number of frames.
/// `config` is corpus TOML text.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None, seed = 0))]
fn generate_corpus(
    py: Python<'_>,
    out_dir: PathBuf,
    config: Option<&str>,
    seed: u64,
) -> PyResult<usize> {
    let config = match config {
        Some(text) => CorpusConfig::from_toml_str(text).map_err(to_py)?,
        None => CorpusConfig::default(),
    };
    let (manifest, _) = py
        .allow_threads(|| synth_corpus(&config, &out_dir, seed))
        .map_err(to_py)?;
    Ok(manifest.entries().len())
}

/// The labeling loop of one dataset directory. State is persisted under
/// `<root>/rounds` after every call.
#[pyclass(module = "scatgate")]
pub struct Loop {
    workspace: Workspace,
    inner: scatgate::HitlLoop,
}

#[pymethods]
impl Loop {
    #[new]
    #[pyo3(signature = (root, seed = None))]
    fn new(root: PathBuf, seed: Option<u64>) -> PyResult<Self> {
        let mut workspace = Workspace::open(&root).map_err(gw_to_py)?;
        if let Some(s) = seed {
            let mut settings = workspace.settings().clone();
            settings.config.seed = s;
            workspace = workspace.with_settings(settings).map_err(gw_to_py)?;
        }
        let inner = workspace.open_loop().map_err(gw_to_py)?;
        Ok(Self { workspace, inner })
    }

    /// Round summaries, oldest first.
    fn rounds(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_dict(py, &self.inner.rounds())
    }

    fn seed(&mut self, py: Python<'_>) -> PyResult<PyObject> {
        let round = self.inner.seed().map_err(to_py)?;
        to_dict(py, round)
    }

    /// Train the round's classifier panel; returns the ensemble report.
    fn train(&mut self, py: Python<'_>, round: u32) -> PyResult<PyObject> {
        let state = self
            .inner
            .round(round)
            .cloned()
            .ok_or_else(|| PyKeyError::new_err(format!("round {round}")))?;
        let ws = &self.workspace;
        let training = py
            .allow_threads(|| {
                let samples = ws.samples()?;
                ws.train(&state, &samples)
            })
            .map_err(gw_to_py)?;
        ws.commit_training(&mut self.inner, round, &training)
            .map_err(gw_to_py)?;
        to_dict(py, &training.report)
    }

    /// Queue the most uncertain pool images for review.
    fn propose(&mut self, py: Python<'_>, round: u32) -> PyResult<PyObject> {
        let ws = &self.workspace;
        let samples = py.allow_threads(|| ws.samples()).map_err(gw_to_py)?;
        let queue = ws
            .propose(&mut self.inner, round, &samples, chrono::Utc::now())
            .map_err(gw_to_py)?;
        to_dict(py, &queue)
    }

    /// Record verdicts given as `{image_id: "realistic" | "fake"}`.
    fn review(
        &mut self,
        round: u32,
        decisions: BTreeMap<String, String>,
        annotator: &str,
    ) -> PyResult<()> {
        let decisions = decisions
            .into_iter()
            .map(|(id, v)| Ok((id, v.parse::<Verdict>()?)))
            .collect::<scatgate::Result<Vec<_>>>()
            .map_err(to_py)?;
        self.inner
            .review(round, &decisions, annotator, chrono::Utc::now())
            .map_err(to_py)
    }

    /// Close `round` and assemble the next one from the dataset's targets.
    #[pyo3(signature = (round, scale = None))]
    fn build_next(&mut self, py: Python<'_>, round: u32, scale: Option<f64>) -> PyResult<PyObject> {
        let base = self.workspace.settings().next_targets;
        let targets = match scale {
            Some(f) => base.scaled(f).map_err(to_py)?,
            None => base,
        };
        let next = self.inner.build_next(round, &targets).map_err(to_py)?;
        to_dict(py, next)
    }

    fn report(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_dict(py, &self.inner.report())
    }
}

#[pymodule]
#[pyo3(name = "scatgate")]
fn scatgate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ScatgateError", m.py().get_type::<ScatgateError>())?;
    m.add_class::<Frame>()?;
    m.add_class::<FeatureExtractor>()?;
    m.add_class::<Classifier>()?;
    m.add_class::<Loop>()?;
    m.add_function(wrap_pyfunction!(fid, m)?)?;
    m.add_function(wrap_pyfunction!(kid, m)?)?;
    m.add_function(wrap_pyfunction!(inception_score, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    Ok(())
}
