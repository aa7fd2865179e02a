//! Python bindings: dataset parsing, training, prediction, evaluation,
//! and model round-trips, mirroring the CLI surface.

use perfsel::metrics::Measure;
use perfsel::selfcheck::{run_selfcheck, SelfCheckConfig};
use perfsel::trace::NullTrace;
use perfsel::{
    train_binary, CapacityMode, LossSpec, MulticlassDataset, TrainConfig, TrainedModel,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter};

fn to_py_err(e: perfsel::Error) -> PyErr {
    match e {
        perfsel::Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A labeled sparse dataset in SVMlight/LibSVM text form.
#[pyclass(frozen)]
struct Dataset {
    inner: MulticlassDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: MulticlassDataset::parse_str(text).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self {
            inner: MulticlassDataset::parse_svmlight(BufReader::new(file)).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn n_features(&self) -> u32 {
        self.inner.n_features()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    fn labels(&self) -> Vec<String> {
        self.inner.raw_labels().to_vec()
    }

    /// Labels as ±1 for the given (or inferred) positive class.
    #[pyo3(signature = (positive_class=None))]
    fn binary_labels(&self, positive_class: Option<&str>) -> PyResult<Vec<i64>> {
        let positive = match positive_class {
            Some(c) => c.to_string(),
            None => self.inner.binary_positive_class().map_err(to_py_err)?.to_string(),
        };
        let view = self.inner.binarize(&positive).map_err(to_py_err)?;
        Ok(view.labels().iter().map(|&l| i64::from(l)).collect())
    }

    fn to_text(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_svmlight(&mut buf).map_err(to_py_err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, n_features={}, classes={:?})",
            self.inner.n(),
            self.inner.n_features(),
            self.inner.classes()
        )
    }
}

/// A trained sparse linear model.
#[pyclass(frozen)]
struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    fn predict_scores(&self, data: &Dataset) -> Vec<f64> {
        data.inner
            .examples()
            .iter()
            .map(|x| self.inner.predict_score(x))
            .collect()
    }

    fn predict_labels(&self, data: &Dataset) -> Vec<i64> {
        data.inner
            .examples()
            .iter()
            .map(|x| i64::from(self.inner.predict_label(x)))
            .collect()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let mut out = BufWriter::new(
            File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?,
        );
        self.inner.save(&mut out).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self {
            inner: TrainedModel::load(BufReader::new(file)).map_err(to_py_err)?,
        })
    }

    /// Nonzero weights of w ⊙ d̃ as (1-based feature index, value).
    #[getter]
    fn selected_features(&self) -> Vec<(u32, f64)> {
        self.inner.weights.iter().map(|&(j, w)| (j + 1, w)).collect()
    }

    #[getter]
    fn nonzeros(&self) -> usize {
        self.inner.nonzeros()
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.groups.len()
    }

    /// Simplex weights μ over the generated groups.
    #[getter]
    fn group_weights(&self) -> Vec<f64> {
        self.inner.groups.iter().map(|&(_, mu)| mu).collect()
    }

    /// Member feature indices (1-based) of each group.
    #[getter]
    fn groups(&self) -> Vec<Vec<u32>> {
        self.inner
            .groups
            .iter()
            .map(|(g, _)| g.members().iter().map(|&j| j + 1).collect())
            .collect()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn loss(&self) -> String {
        self.inner.loss.to_string()
    }

    #[getter]
    fn budget(&self) -> usize {
        self.inner.budget
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(loss={}, budget={}, groups={}, nonzeros={}, converged={})",
            self.inner.loss,
            self.inner.budget,
            self.inner.groups.len(),
            self.inner.nonzeros(),
            self.inner.converged
        )
    }
}

/// Trains one binary model. Two-class data maps automatically; use
/// `positive_class` to pick a one-vs-rest view of multiclass data.
#[pyfunction]
#[pyo3(signature = (data, loss="f1", positive_class=None, budget=10, c_scale=0.1,
                    c_absolute=None, beta=None, k=None, eps=1e-3, max_outer=50,
                    max_cuts=200, outer_tol=1e-4))]
#[allow(clippy::too_many_arguments)]
fn train(
    data: &Dataset,
    loss: &str,
    positive_class: Option<String>,
    budget: usize,
    c_scale: f64,
    c_absolute: Option<f64>,
    beta: Option<f64>,
    k: Option<usize>,
    eps: f64,
    max_outer: usize,
    max_cuts: usize,
    outer_tol: f64,
) -> PyResult<Model> {
    let spec = LossSpec::from_cli(loss, beta, k).map_err(to_py_err)?;
    let positive = match positive_class {
        Some(c) => c,
        None => data
            .inner
            .binary_positive_class()
            .map_err(to_py_err)?
            .to_string(),
    };
    let view = data.inner.binarize(&positive).map_err(to_py_err)?;
    view.check_trainable().map_err(to_py_err)?;
    let cfg = TrainConfig {
        loss: spec,
        budget,
        capacity: match c_absolute {
            Some(c) => CapacityMode::Absolute(c),
            None => CapacityMode::Scale(c_scale),
        },
        eps,
        max_outer,
        max_cuts,
        outer_tol,
        ..TrainConfig::default()
    };
    Ok(Model {
        inner: train_binary(&view, &cfg, &mut NullTrace).map_err(to_py_err)?,
    })
}

/// Evaluates one measure on scores and ±1 labels (0–100 scale).
/// Measures: f1 | accuracy | prbep | rec@2p | prec@k | rec@k.
#[pyfunction]
#[pyo3(signature = (scores, labels, measure, k=None))]
fn evaluate(scores: Vec<f64>, labels: Vec<i64>, measure: &str, k: Option<usize>) -> PyResult<f64> {
    let y: Vec<i8> = labels
        .iter()
        .map(|&l| match l {
            1 => Ok(1i8),
            -1 => Ok(-1i8),
            other => Err(PyValueError::new_err(format!("labels must be ±1, got {other}"))),
        })
        .collect::<PyResult<_>>()?;
    let m = Measure::from_cli(measure, k).map_err(to_py_err)?;
    let (value, _) = m.evaluate(&scores, &y).map_err(to_py_err)?;
    Ok(value)
}

/// Runs the built-in verification suites; returns
/// (name, cases, max_deviation, tolerance, passed) per suite.
#[pyfunction]
#[pyo3(signature = (max_n=8, draws=20, seed=7))]
fn selfcheck(max_n: usize, draws: usize, seed: u64) -> PyResult<Vec<(String, usize, f64, f64, bool)>> {
    let results = run_selfcheck(&SelfCheckConfig {
        max_n,
        draws,
        seed,
        perturb: false,
    })
    .map_err(to_py_err)?;
    Ok(results
        .into_iter()
        .map(|r| (r.name, r.cases, r.max_deviation, r.tolerance, r.passed))
        .collect())
}

#[pymodule]
fn perfsel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
