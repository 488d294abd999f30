//! Python bindings: the main types (Schema, Vocab, Dataset, Model) and the
//! operations (tokenize, train, evaluate, predict, gradcheck) behind the
//! `redual` module.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use redual_core::checkpoint::Checkpoint;
use redual_core::data::{write_jsonl, Dataset as CoreDataset};
use redual_core::encoder::{tokenize as core_tokenize, EncoderConfig, Vocab as CoreVocab};
use redual_core::model::check::gradcheck_model;
use redual_core::model::ModelConfig;
use redual_core::schema::PredicateSchema;
use redual_core::synthetic;
use redual_core::tensor::check::check_primitives;
use redual_core::tensor::cosine_value;
use redual_core::train::{evaluate, predict_dataset, train_pipeline, TrainConfig};
use std::path::PathBuf;

fn to_py_err(e: redual_core::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Renders anything serde-serializable as Python dicts/lists/scalars.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &json)
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// Predicate schema: predicates (NULL first), entity types, and
/// description templates with @subject@/@object@ slots.
#[pyclass(name = "Schema")]
struct PySchema {
    inner: PredicateSchema,
}

#[pymethods]
impl PySchema {
    /// Load a schema file, validating every template.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: PredicateSchema::load(&path).map_err(to_py_err)?,
        })
    }

    /// Parse schema text, validating every template.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: PredicateSchema::parse_str(text).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn predicates(&self) -> Vec<String> {
        self.inner.predicates().to_vec()
    }

    #[getter]
    fn entity_types(&self) -> Vec<String> {
        self.inner.entity_types().to_vec()
    }

    /// Fill the template for (predicate, subject_type, object_type) with
    /// the given spans.
    fn fill(
        &self,
        predicate: &str,
        subject: &str,
        object: &str,
        subject_type: &str,
        object_type: &str,
    ) -> PyResult<String> {
        self.inner
            .fill_template(predicate, subject, object, subject_type, object_type)
            .map(|f| f.text)
            .map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_predicates()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schema({} predicates, {} entity types)",
            self.inner.n_predicates(),
            self.inner.entity_types().len()
        )
    }
}

/// A validated JSONL dataset.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: CoreDataset,
    path: PathBuf,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf, schema: &PySchema) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::load(&path, &schema.inner).map_err(to_py_err)?,
            path,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.instances().iter().map(|i| i.id.clone()).collect()
    }

    #[getter]
    fn n_relations(&self) -> usize {
        self.inner.instances().iter().map(|i| i.gold.len()).sum()
    }

    /// Number of candidate pairs over the full mention-pair space.
    fn pair_count(&self, schema: &PySchema) -> usize {
        self.inner.all_pairs(&schema.inner).len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} instances from {})", self.inner.len(), self.path.display())
    }
}

/// Token vocabulary with reserved and entity-marker tokens.
#[pyclass(name = "Vocab")]
struct PyVocab {
    inner: CoreVocab,
}

#[pymethods]
impl PyVocab {
    /// Build from a dataset's tokens plus the schema's template words.
    #[staticmethod]
    #[pyo3(signature = (dataset, schema, min_freq = 1))]
    fn build(dataset: &PyDataset, schema: &PySchema, min_freq: usize) -> Self {
        Self {
            inner: CoreVocab::build(
                dataset.inner.instances().iter().map(|i| i.tokens.as_slice()),
                &schema.inner,
                min_freq,
            ),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreVocab::load(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    fn id_of(&self, token: &str) -> u32 {
        self.inner.id_of(token)
    }

    fn token(&self, id: u32) -> PyResult<String> {
        if (id as usize) < self.inner.len() {
            Ok(self.inner.token(id).to_string())
        } else {
            Err(PyValueError::new_err(format!("id {id} out of range")))
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A trained model: configs, schema, vocabulary, and parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// Load a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(&path).map_err(to_py_err)?,
        })
    }

    /// Save a checkpoint file (bit-exact round trip).
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[getter]
    fn predicates(&self) -> Vec<String> {
        self.inner.schema.predicates().to_vec()
    }

    /// Micro precision/recall/F1 plus per-predicate counts on a dataset.
    fn evaluate<'py>(&self, py: Python<'py>, data_path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let dataset = CoreDataset::load(&data_path, &self.inner.schema).map_err(to_py_err)?;
        let report = evaluate(
            &self.inner.params,
            &self.inner.enc_cfg,
            &self.inner.model_cfg,
            &dataset,
            &self.inner.schema,
            &self.inner.vocab,
        )
        .map_err(to_py_err)?;
        to_py(py, &report)
    }

    /// Per-pair predictions with the full similarity vector.
    fn predict<'py>(&self, py: Python<'py>, data_path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let dataset = CoreDataset::load(&data_path, &self.inner.schema).map_err(to_py_err)?;
        let records = predict_dataset(
            &self.inner.params,
            &self.inner.enc_cfg,
            &self.inner.model_cfg,
            &dataset,
            &self.inner.schema,
            &self.inner.vocab,
        )
        .map_err(to_py_err)?;
        to_py(py, &records)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(d_model={}, layers={}, |R|={}, dual={})",
            self.inner.enc_cfg.d_model,
            self.inner.enc_cfg.n_layers,
            self.inner.params.n_predicates,
            self.inner.model_cfg.dual_encoder,
        )
    }
}

/// Word-level tokenization: lowercase, whitespace split, punctuation
/// detached.
#[pyfunction]
fn tokenize(text: &str) -> PyResult<Vec<String>> {
    core_tokenize(text).map_err(to_py_err)
}

/// Cosine similarity as a normalized dot product (0 for degenerate norms).
#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    if u.len() != v.len() {
        return Err(PyValueError::new_err(format!(
            "length mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(cosine_value(&u, &v))
}

/// Train on JSONL datasets; returns `(model, log)` where `log` has one
/// dict per epoch.
#[pyfunction]
#[pyo3(signature = (
    train_path, dev_path, schema_path,
    epochs = 10, batch_size = 4, lr = 1e-3, seed = 42, alpha = 0.5,
    null_cap = 3, min_freq = 1,
    n_layers = 2, n_heads = 4, d_model = 64, d_ff = 128, max_len = 128,
    d = 64, temperature = 1.0, desc_max_len = 64,
    use_cls_concat = true, use_ce_loss = true, dual_encoder = true,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    train_path: PathBuf,
    dev_path: PathBuf,
    schema_path: PathBuf,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    alpha: f64,
    null_cap: usize,
    min_freq: usize,
    n_layers: usize,
    n_heads: usize,
    d_model: usize,
    d_ff: usize,
    max_len: usize,
    d: usize,
    temperature: f64,
    desc_max_len: usize,
    use_cls_concat: bool,
    use_ce_loss: bool,
    dual_encoder: bool,
) -> PyResult<(PyModel, Bound<'_, PyAny>)> {
    let enc_cfg = EncoderConfig {
        n_layers,
        n_heads,
        d_model,
        d_ff,
        max_len,
        vocab_size: 0,
    };
    let model_cfg = ModelConfig {
        d,
        alpha,
        use_cls_concat,
        use_ce_loss,
        dual_encoder,
        temperature,
        desc_max_len,
    };
    let train_cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        seed,
        null_cap: (null_cap > 0).then_some(null_cap),
        min_freq,
        ..TrainConfig::default()
    };
    model_cfg.validate().map_err(to_py_err)?;
    train_cfg.validate().map_err(to_py_err)?;

    let schema = PredicateSchema::load(&schema_path).map_err(to_py_err)?;
    let train_set = CoreDataset::load(&train_path, &schema).map_err(to_py_err)?;
    let dev_set = CoreDataset::load(&dev_path, &schema).map_err(to_py_err)?;
    let pipeline = train_pipeline(&train_set, &dev_set, &schema, &enc_cfg, &model_cfg, &train_cfg)
        .map_err(to_py_err)?;
    let log = to_py(py, &pipeline.outcome.log)?;
    let model = PyModel {
        inner: Checkpoint {
            enc_cfg: pipeline.enc_cfg,
            model_cfg,
            schema,
            vocab: pipeline.vocab,
            params: pipeline.outcome.params,
        },
    };
    Ok((model, log))
}

/// Compare analytic gradients against finite differences; returns
/// `{"primitives": [...], "model": [...]}` with max relative errors.
#[pyfunction]
#[pyo3(signature = (seed = 42))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let dict = PyDict::new(py);
    let prims: Vec<(String, f64)> = check_primitives(seed)
        .map_err(to_py_err)?
        .into_iter()
        .map(|o| (o.name, o.max_rel_err))
        .collect();
    let model: Vec<(String, f64)> = gradcheck_model(seed)
        .map_err(to_py_err)?
        .into_iter()
        .map(|o| (o.name, o.max_rel_err))
        .collect();
    dict.set_item("primitives", prims)?;
    dict.set_item("model", model)?;
    Ok(dict.into_any())
}

/// Write a separable cue-word corpus: train/dev/test JSONL plus the
/// schema file. Returns the four paths.
#[pyfunction]
#[pyo3(signature = (out_dir, n_train = 48, n_dev = 16, n_test = 16, seed = 7))]
fn write_cue_corpus(
    py: Python<'_>,
    out_dir: PathBuf,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    seed: u64,
) -> PyResult<Bound<'_, PyAny>> {
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| PyIOError::new_err(format!("{}: {e}", out_dir.display())))?;
    let write = |name: &str, n: usize, salt: u64, prefix: &str| -> PyResult<PathBuf> {
        let path = out_dir.join(name);
        write_jsonl(&synthetic::generate(n, seed.wrapping_add(salt), prefix), &path)
            .map_err(to_py_err)?;
        Ok(path)
    };
    let train = write("train.jsonl", n_train, 0, "tr-")?;
    let dev = write("dev.jsonl", n_dev, 1, "dv-")?;
    let test = write("test.jsonl", n_test, 2, "te-")?;
    let schema_path = out_dir.join("schema.txt");
    std::fs::write(&schema_path, schema_text())
        .map_err(|e| PyIOError::new_err(format!("{}: {e}", schema_path.display())))?;

    let dict = PyDict::new(py);
    dict.set_item("train", train)?;
    dict.set_item("dev", dev)?;
    dict.set_item("test", test)?;
    dict.set_item("schema", schema_path)?;
    Ok(dict.into_any())
}

fn schema_text() -> String {
    let schema = synthetic::schema();
    let mut out = String::from("[predicates]\n");
    for p in schema.predicates() {
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("\n[entity_types]\n");
    for t in schema.entity_types() {
        out.push_str(t);
        out.push('\n');
    }
    out.push_str("\n[templates]\n");
    for t in schema.templates() {
        out.push_str(&format!("{} = {}\n", t.key.render(), t.text));
    }
    out
}

#[pymodule]
fn redual(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyVocab>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(write_cue_corpus, m)?)?;
    Ok(())
}
