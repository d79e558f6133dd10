//! Python bindings. The module is importable as `cmox` once built with
//! maturin (see `pyproject.toml`).
//!
//! Sparse vectors cross the boundary as `(indices, values)` tuples and label
//! classes as their rendered shared-task strings.

#![allow(clippy::too_many_arguments)]

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cmox::corpus::{self, LabeledCorpus, Language, SynthSpec};
use cmox::features::{SparseVector, TfidfModel};
use cmox::forest::{self, FeatureSubsample, ForestParams, TreeParams};
use cmox::linear::{self, LinearKind, TrainConfig};
use cmox::pipeline::{self as pipe, ModelKind, Overrides, ResolvedConfig};
use cmox::preprocess;

fn err(e: cmox::Error) -> PyErr {
    match e {
        cmox::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn language(name: &str) -> PyResult<Language> {
    name.parse().map_err(err)
}

type Sparse = (Vec<u32>, Vec<f64>);
type LabelScores = (&'static str, Option<Vec<f64>>);

fn to_sparse((indices, values): Sparse) -> PyResult<SparseVector> {
    if indices.len() != values.len() {
        return Err(PyValueError::new_err(format!(
            "{} indices but {} values",
            indices.len(),
            values.len()
        )));
    }
    Ok(SparseVector::from_pairs(indices.into_iter().zip(values).collect()))
}

fn to_sparse_all(rows: Vec<Sparse>) -> PyResult<Vec<SparseVector>> {
    rows.into_iter().map(to_sparse).collect()
}

#[pyfunction]
fn clean(text: &str) -> String {
    preprocess::clean(text)
}

/// Cleans, then splits on spaces.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    preprocess::clean_and_tokenize(text)
}

/// A labeled (or unlabeled) corpus in one of the three label sets.
#[pyclass(name = "Corpus", module = "cmox")]
struct PyCorpus {
    inner: LabeledCorpus,
}

#[pymethods]
impl PyCorpus {
    /// Parses TSV content; the id column is detected from the first row.
    #[staticmethod]
    #[pyo3(signature = (content, language, labeled=true))]
    fn from_tsv(content: &str, language: &str, labeled: bool) -> PyResult<Self> {
        let lang = self::language(language)?;
        let has_ids = corpus::detect_has_ids(content, labeled);
        let inner = corpus::parse_tsv(content, lang, has_ids, labeled).map_err(err)?;
        Ok(PyCorpus { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, language, labeled=true))]
    fn load(path: PathBuf, language: &str, labeled: bool) -> PyResult<Self> {
        let content = cmox::io::read_to_string(&path).map_err(err)?;
        Self::from_tsv(&content, language, labeled)
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    #[getter]
    fn language(&self) -> &'static str {
        self.inner.language.name()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.id.clone()).collect()
    }

    #[getter]
    fn texts(&self) -> Vec<String> {
        self.inner.texts().map(str::to_string).collect()
    }

    /// Rendered labels, or None for unlabeled rows.
    #[getter]
    fn labels(&self) -> Vec<Option<&'static str>> {
        let lang = self.inner.language;
        self.inner
            .records()
            .iter()
            .map(|r| r.label.map(|c| lang.render(c)))
            .collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().to_vec()
    }

    /// Class indices in codebook order.
    fn label_indices(&self) -> PyResult<Vec<usize>> {
        self.inner.label_indices(&self.inner.language.codebook()).map_err(err)
    }

    /// Count per class of the label set, zero for absent classes.
    fn class_distribution(&self) -> PyResult<Vec<(&'static str, usize)>> {
        let lang = self.inner.language;
        let dist = corpus::class_distribution(&self.inner).map_err(err)?;
        Ok(dist.into_iter().map(|(c, n)| (lang.render(c), n)).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(language={:?}, records={})",
            self.inner.language.name(),
            self.inner.len()
        )
    }
}

/// Deterministic Kannada-like synthetic corpus.
#[pyfunction]
#[pyo3(signature = (size, seed=7))]
fn synth(size: usize, seed: u64) -> PyResult<PyCorpus> {
    let inner = corpus::synth_generate(&SynthSpec::kannada_like(size), seed).map_err(err)?;
    Ok(PyCorpus { inner })
}

/// Class names of a language's label set, in codebook order.
#[pyfunction]
fn label_set(language: &str) -> PyResult<Vec<String>> {
    Ok(self::language(language)?.codebook().names())
}

/// Weighted and per-class scores for integer label vectors.
#[pyfunction]
fn metrics<'py>(
    py: Python<'py>,
    gold: Vec<usize>,
    pred: Vec<usize>,
    labels: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let cm = cmox::eval::confusion(&gold, &pred, &labels).map_err(err)?;
    let report = cmox::eval::metrics(&cm).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("precision", report.weighted.precision)?;
    out.set_item("recall", report.weighted.recall)?;
    out.set_item("f1", report.weighted.f1)?;
    out.set_item("accuracy", report.accuracy)?;
    let per_class: Vec<(String, f64, f64, f64, u64)> = report
        .per_class
        .iter()
        .map(|c| (c.label.clone(), c.precision, c.recall, c.f1, c.support))
        .collect();
    out.set_item("per_class", per_class)?;
    let rows: Vec<Vec<u64>> = (0..cm.k()).map(|g| cm.row(g).to_vec()).collect();
    out.set_item("confusion", rows)?;
    Ok(out)
}

/// Picks the best of `(name, precision, recall, f1)` candidates: highest
/// F1, then recall, then precision, then name.
#[pyfunction]
fn select_best(candidates: Vec<(String, f64, f64, f64)>) -> PyResult<String> {
    cmox::eval::select_best(candidates.iter().map(|(name, p, r, f)| {
        (
            name.as_str(),
            cmox::eval::Prf {
                precision: *p,
                recall: *r,
                f1: *f,
            },
        )
    }))
    .map_err(err)
}

/// Plurality vote over members listed in priority order (SVM, LR, RF, DT).
#[pyfunction]
fn vote(votes: Vec<usize>) -> PyResult<usize> {
    cmox::ensemble::vote(&votes).map_err(err)
}

#[pyclass(name = "Tfidf", module = "cmox")]
struct PyTfidf {
    inner: TfidfModel,
}

#[pymethods]
impl PyTfidf {
    #[staticmethod]
    fn fit(docs: Vec<Vec<String>>) -> PyResult<Self> {
        Ok(PyTfidf {
            inner: TfidfModel::fit(&docs).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary.tokens().to_vec()
    }

    fn idf(&self, token: &str) -> f64 {
        self.inner.idf_of(token)
    }

    fn transform(&self, tokens: Vec<String>) -> Sparse {
        let v = self.inner.transform(&tokens);
        (v.indices().to_vec(), v.values().to_vec())
    }

    fn transform_all(&self, docs: Vec<Vec<String>>) -> Vec<Sparse> {
        self.inner
            .transform_all(&docs)
            .into_iter()
            .map(|v| (v.indices().to_vec(), v.values().to_vec()))
            .collect()
    }
}

/// Multinomial logistic regression or one-vs-rest linear SVM.
#[pyclass(name = "LinearModel", module = "cmox")]
struct PyLinear {
    inner: linear::LinearModel,
}

#[pymethods]
impl PyLinear {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_classes, n_features, c, max_iter=1000, tol=1e-4))]
    fn logreg(
        py: Python<'_>,
        x: Vec<Sparse>,
        y: Vec<usize>,
        n_classes: usize,
        n_features: usize,
        c: f64,
        max_iter: usize,
        tol: f64,
    ) -> PyResult<Self> {
        let x = to_sparse_all(x)?;
        let cfg = TrainConfig {
            max_iter,
            tol,
            ..TrainConfig::logreg(c)
        };
        let inner = py
            .detach(|| linear::train_logreg(&x, &y, n_classes, n_features, &cfg))
            .map_err(err)?;
        Ok(PyLinear { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (x, y, n_classes, n_features, c, epochs=100, seed=0))]
    fn svm(
        py: Python<'_>,
        x: Vec<Sparse>,
        y: Vec<usize>,
        n_classes: usize,
        n_features: usize,
        c: f64,
        epochs: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let x = to_sparse_all(x)?;
        let cfg = TrainConfig {
            max_iter: epochs,
            ..TrainConfig::svm(c).with_seed(seed)
        };
        let inner = py
            .detach(|| linear::train_svm(&x, &y, n_classes, n_features, &cfg))
            .map_err(err)?;
        Ok(PyLinear { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            LinearKind::Logreg => "logreg",
            LinearKind::Svm => "svm",
        }
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    /// `(label, scores)`: probabilities for logistic regression, margins
    /// for the SVM.
    fn predict(&self, x: Sparse) -> PyResult<(usize, Vec<f64>)> {
        self.inner.predict(&to_sparse(x)?).map_err(err)
    }
}

/// A random forest; `n_estimators=1, bootstrap=False, max_features=None`
/// gives a single CART tree.
#[pyclass(name = "Forest", module = "cmox")]
struct PyForest {
    inner: forest::Forest,
}

#[pymethods]
impl PyForest {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_classes, n_features, n_estimators=100, seed=0, bootstrap=true, max_features="sqrt", max_depth=None))]
    fn train(
        py: Python<'_>,
        x: Vec<Sparse>,
        y: Vec<usize>,
        n_classes: usize,
        n_features: usize,
        n_estimators: usize,
        seed: u64,
        bootstrap: bool,
        max_features: Option<&str>,
        max_depth: Option<usize>,
    ) -> PyResult<Self> {
        let x = to_sparse_all(x)?;
        let max_features = match max_features {
            Some("sqrt") => FeatureSubsample::Sqrt,
            None | Some("all") => FeatureSubsample::All,
            Some(other) => {
                return Err(PyValueError::new_err(format!(
                    "max_features must be 'sqrt', 'all' or None, got {other:?}"
                )))
            }
        };
        let params = ForestParams {
            n_estimators,
            bootstrap,
            tree: TreeParams {
                max_depth,
                max_features,
                seed,
                ..TreeParams::default()
            },
        };
        let inner = py
            .detach(|| forest::train_forest(&x, &y, n_classes, n_features, &params))
            .map_err(err)?;
        Ok(PyForest { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.trees.len()
    }

    /// `(label, vote shares)`.
    fn predict(&self, x: Sparse) -> PyResult<(usize, Vec<f64>)> {
        self.inner.predict(&to_sparse(x)?).map_err(err)
    }
}

fn overrides(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Overrides> {
    let mut map = serde_json::Map::new();
    if let Some(kwargs) = kwargs {
        for (k, v) in kwargs.iter() {
            let key: String = k.extract()?;
            let value = if let Ok(i) = v.extract::<u64>() {
                serde_json::Value::from(i)
            } else {
                serde_json::Value::from(v.extract::<f64>()?)
            };
            map.insert(key, value);
        }
    }
    serde_json::from_value(serde_json::Value::Object(map))
        .map_err(|e| PyValueError::new_err(format!("bad hyperparameter override: {e}")))
}

/// Any of the seven models behind one interface, with the per-language
/// default hyperparameters.
///
/// ```python
/// clf = cmox.Classifier.train("kannada", "svm", train)
/// labels = [label for label, _ in clf.predict(test)]
/// ```
#[pyclass(name = "Classifier", module = "cmox")]
struct PyClassifier {
    inner: pipe::Classifier,
}

#[pymethods]
impl PyClassifier {
    /// Extra keyword arguments override hyperparameters (`lr_c`, `epochs`,
    /// `hidden`, ...). Neural models need `valid`.
    #[staticmethod]
    #[pyo3(signature = (language, model, train, valid=None, seed=0, vectors=None, **kwargs))]
    fn train(
        py: Python<'_>,
        language: &str,
        model: &str,
        train: &PyCorpus,
        valid: Option<&PyCorpus>,
        seed: u64,
        vectors: Option<PathBuf>,
        kwargs: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let kind: ModelKind = model.parse().map_err(err)?;
        let config = ResolvedConfig::resolve(language, kind, seed, &overrides(kwargs)?).map_err(err)?;
        let (train, valid) = (&train.inner, valid.map(|v| &v.inner));
        let inner = py
            .detach(|| pipe::Classifier::train(&config, train, valid, vectors.as_deref()))
            .map_err(err)?;
        Ok(PyClassifier { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: pipe::Classifier::load(path).map_err(err)?,
        })
    }

    /// Writes `<path>` (JSON manifest) and its `.bin` payload.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.config.model.name()
    }

    /// Resolved hyperparameters as a JSON string.
    #[getter]
    fn config(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// `(epoch, train_loss, valid_weighted_f1)` per epoch for neural models
    /// trained in this process.
    #[getter]
    fn curve(&self) -> Option<Vec<(usize, f64, f64)>> {
        self.inner.run.as_ref().map(|run| {
            run.history
                .iter()
                .map(|r| (r.epoch, r.train_loss, r.valid_weighted_f1))
                .collect()
        })
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.inner.run.as_ref().map(|r| r.best_epoch)
    }

    /// `(label, scores or None)` per record.
    fn predict(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<Vec<LabelScores>> {
        let lang = self.inner.config.label_set;
        let inner = &corpus.inner;
        let rows = py.detach(|| self.inner.prediction_rows(inner)).map_err(err)?;
        Ok(rows
            .into_iter()
            .map(|r| (lang.render(r.label), r.probabilities))
            .collect())
    }

    /// Exchange-format prediction TSV for a corpus.
    fn predictions_tsv(&self, corpus: &PyCorpus) -> PyResult<String> {
        let rows = self.inner.prediction_rows(&corpus.inner).map_err(err)?;
        Ok(cmox::predictions::to_tsv(&rows, self.inner.config.label_set))
    }

    /// Weighted precision, recall and F1 on a labeled corpus.
    fn evaluate(&self, corpus: &PyCorpus) -> PyResult<(f64, f64, f64)> {
        let rows = self.inner.prediction_rows(&corpus.inner).map_err(err)?;
        let labels: Vec<_> = rows.iter().map(|r| r.label).collect();
        let w = pipe::evaluate(&corpus.inner, &labels).map_err(err)?.metrics.weighted;
        Ok((w.precision, w.recall, w.f1))
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(model={:?}, language={:?})",
            self.inner.config.model.name(),
            self.inner.config.language
        )
    }
}

/// Scores an exchange-format prediction file (or a labeled corpus used as
/// predictions) against gold labels; returns weighted `(P, R, F1)`.
#[pyfunction]
fn evaluate_files(gold: &PyCorpus, predictions: &str) -> PyResult<(f64, f64, f64)> {
    let rows = cmox::predictions::parse(predictions, gold.inner.language).map_err(err)?;
    let aligned = cmox::predictions::align(&gold.inner, &rows).map_err(err)?;
    let w = pipe::evaluate(&gold.inner, &aligned).map_err(err)?.metrics.weighted;
    Ok((w.precision, w.recall, w.f1))
}

#[pymodule]
#[pyo3(name = "cmox")]
fn cmox_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(label_set, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(select_best, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_files, m)?)?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyTfidf>()?;
    m.add_class::<PyLinear>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PyClassifier>()?;
    m.add("MODEL_KINDS", ModelKind::ALL.map(|k| k.name()).to_vec())?;
    Ok(())
}
