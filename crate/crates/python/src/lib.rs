//! Python bindings: bounds, metrics, synthetic data, the Bayesian network
//! and the full experiment pipeline.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use bnnuq::bounds;
use bnnuq::dataio::{generate_synthetic as generate, Dataset, SyntheticSpec};
use bnnuq::harness::{self, ExperimentConfig};
use bnnuq::inference;
use bnnuq::metrics;
use bnnuq::ndcore::Matrix;
use bnnuq::network::{BnnModel, NetworkSpec};
use bnnuq::training::{self, TrainConfig};
use bnnuq::variational::MixturePrior;

create_exception!(pybnnuq, BnnuqError, PyException);

fn py_err(e: bnnuq::Error) -> PyErr {
    BnnuqError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

/// Mean, variance and cross-entropy of one prediction over posterior draws.
#[pyclass(name = "PredictionSummary", frozen, from_py_object)]
#[derive(Clone)]
struct PySummary(inference::PredictionSummary);

#[pymethods]
impl PySummary {
    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean
    }

    #[getter]
    fn mean_complement(&self) -> f64 {
        self.0.mean_complement
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.0.variance
    }

    #[getter]
    fn std(&self) -> f64 {
        self.0.std()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.0.samples
    }

    fn bce(&self, label: u8) -> PyResult<f64> {
        self.0.bce(label).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PredictionSummary(mean={}, variance={}, samples={})",
            self.0.mean, self.0.variance, self.0.samples
        )
    }
}

#[pyfunction]
fn summarize(probabilities: Vec<f64>) -> PyResult<PySummary> {
    inference::PredictionSummary::from_probabilities(&probabilities, false)
        .map(PySummary)
        .map_err(py_err)
}

#[pyfunction]
fn summarize_logits(logits: Vec<f64>) -> PyResult<PySummary> {
    inference::PredictionSummary::from_logits(&logits, false)
        .map(PySummary)
        .map_err(py_err)
}

/// `(lower, upper)` cross-entropy bounds implied by a predictive variance.
#[pyfunction]
fn loss_bounds(variance: f64) -> PyResult<(f64, f64)> {
    let b = bounds::loss_bounds(variance).map_err(py_err)?;
    Ok((b.lower, b.upper))
}

#[pyfunction]
fn mean_bounds(variance: f64) -> PyResult<(f64, f64)> {
    bounds::mean_bounds(variance).map_err(py_err)
}

/// Checks every prediction against its bounds; returns the report as JSON.
#[pyfunction]
fn verify_bounds(summaries: Vec<PySummary>, labels: Vec<u8>) -> PyResult<String> {
    let s: Vec<_> = summaries.into_iter().map(|p| p.0).collect();
    let report = bounds::verify_bounds(&s, &labels).map_err(py_err)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auroc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (scores, labels, positive_class = 1))]
fn aupr(scores: Vec<f64>, labels: Vec<u8>, positive_class: u8) -> PyResult<f64> {
    metrics::aupr(&scores, &labels, positive_class).map_err(py_err)
}

#[pyfunction]
fn bce(probability: f64, label: u8) -> PyResult<f64> {
    metrics::bce(probability, label).map_err(py_err)
}

/// `(coverage, cumulative_loss)` with records retained most certain first.
#[pyfunction]
fn risk_coverage(losses: Vec<f64>, uncertainties: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let curve = metrics::risk_coverage(&losses, &uncertainties).map_err(py_err)?;
    Ok((curve.coverage, curve.cumulative_loss))
}

#[pyfunction]
#[pyo3(signature = (losses, uncertainties, quantile = 0.2))]
fn quantile_loss_ratio(losses: Vec<f64>, uncertainties: Vec<f64>, quantile: f64) -> PyResult<f64> {
    let curve = metrics::risk_coverage(&losses, &uncertainties).map_err(py_err)?;
    metrics::quantile_loss_ratio(&curve, quantile).map_err(py_err)
}

/// `(u, z, p_value, effect)` for sample `a` against sample `b`.
#[pyfunction]
fn mann_whitney(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let t = metrics::mann_whitney(&a, &b).map_err(py_err)?;
    Ok((t.u, t.z, t.p_value, t.effect))
}

/// One split as plain Python data.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.0.len()).map(|i| self.0.features.row(i).to_vec()).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.feature_names.clone()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.0.groups.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Returns `(train, test, ood)` raw splits of the synthetic benchmark.
#[pyfunction]
#[pyo3(signature = (seed = 7, n_train = 2000, n_test = 1000, n_ood = 250))]
fn generate_synthetic(
    seed: u64,
    n_train: usize,
    n_test: usize,
    n_ood: usize,
) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
    let spec = SyntheticSpec {
        seed,
        n_train,
        n_test,
        n_ood,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).map_err(py_err)?;
    Ok((PyDataset(data.train), PyDataset(data.test), PyDataset(data.ood)))
}

/// Bayes-by-backprop network with a factorized Gaussian posterior.
#[pyclass(name = "Bnn")]
struct PyBnn(BnnModel);

#[pymethods]
impl PyBnn {
    #[new]
    #[pyo3(signature = (input_dim, hidden = vec![128, 128], seed = 0))]
    fn new(input_dim: usize, hidden: Vec<usize>, seed: u64) -> PyResult<Self> {
        let spec = NetworkSpec::new(input_dim, hidden).map_err(py_err)?;
        BnnModel::init(spec, MixturePrior::default(), seed)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.spec.param_count()
    }

    /// Trains in place; returns the per-epoch negative ELBO.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (features, labels, epochs = 50, batch_size = 256, learning_rate = 1e-3, seed = 0))]
    fn fit(
        &mut self,
        py: Python<'_>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let x = matrix(features)?;
        let n = labels.len();
        let names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        let data = Dataset::new(x, labels, names, ids, vec![String::new(); n]).map_err(py_err)?;
        let config = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        let model = self.0.clone();
        let (trained, history) = py
            .detach(|| training::train(&data, model, &config, None))
            .map_err(py_err)?;
        self.0 = trained;
        Ok(history.elbo)
    }

    #[pyo3(signature = (features, samples = 100, seed = 0))]
    fn predict(&self, py: Python<'_>, features: Vec<Vec<f64>>, samples: usize, seed: u64) -> PyResult<Vec<PySummary>> {
        let x = matrix(features)?;
        let out = py
            .detach(|| inference::predict(&self.0, &x, samples, seed))
            .map_err(py_err)?;
        Ok(out.into_iter().map(PySummary).collect())
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("model serializes")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let m: BnnModel = serde_json::from_str(text).map_err(|e| BnnuqError::new_err(e.to_string()))?;
        BnnModel::from_parts(m.spec, m.params, m.prior)
            .map(Self)
            .map_err(py_err)
    }
}

/// Runs all six stages and returns the reports as a JSON object.
#[pyfunction]
#[pyo3(signature = (config = None, output_dir = None, seed = None, epochs = None))]
fn run_experiment(
    py: Python<'_>,
    config: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> PyResult<String> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path).map_err(py_err)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let out = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    let value = serde_json::json!({
        "output_dir": out.dir,
        "training": out.training,
        "bounds": out.bounds,
        "evaluation": out.evaluation,
        "ood": out.ood,
    });
    Ok(value.to_string())
}

#[pymodule]
fn pybnnuq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BnnuqError", m.py().get_type::<BnnuqError>())?;
    m.add_class::<PySummary>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyBnn>()?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_logits, m)?)?;
    m.add_function(wrap_pyfunction!(loss_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(mean_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aupr, m)?)?;
    m.add_function(wrap_pyfunction!(bce, m)?)?;
    m.add_function(wrap_pyfunction!(risk_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_loss_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
