//! Python module `renki`: models, training, weights, metrics, bounds and
//! synthetic generators. Errors raise `renki.RenkiError` with the message
//! prefixed by its category, e.g. `error[config]: ...`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use renki::bounds::{self, Activation, BoundInputs, ModelFamily, Regime, RelationShape};
use renki::config::ExperimentConfig;
use renki::experiment;
use renki::metrics;
use renki::model::OutputTransform;
use renki::report;
use renki::seed::{self, seeded_rng};
use renki::synthetic::{build_truth, GeneratorKind, GeneratorSpec, Truth, DEFAULT_BINARY_BIAS};
use renki::training::{self, Loss, Optimizer, TrainConfig, WeightScheme};
use renki::{EmbeddingTable, ScoreModel, Triple};

create_exception!(renki, RenkiError, PyException);

fn err(e: renki::Error) -> PyErr {
    RenkiError::new_err(format!("error[{}]: {e}", e.category()))
}

fn config_err(msg: impl Into<String>) -> PyErr {
    err(renki::Error::Config(msg.into()))
}

#[pyclass(name = "Triple", module = "renki", from_py_object)]
#[derive(Clone)]
struct PyTriple {
    inner: Triple,
}

#[pymethods]
impl PyTriple {
    #[new]
    #[pyo3(signature = (head, relation, tail, label=None, sigma=None))]
    fn new(head: usize, relation: usize, tail: usize, label: Option<f64>, sigma: Option<f64>) -> Self {
        Self {
            inner: Triple {
                head,
                relation,
                tail,
                label,
                noise_scale: sigma,
            },
        }
    }

    #[getter]
    fn head(&self) -> usize {
        self.inner.head
    }

    #[getter]
    fn relation(&self) -> usize {
        self.inner.relation
    }

    #[getter]
    fn tail(&self) -> usize {
        self.inner.tail
    }

    #[getter]
    fn label(&self) -> Option<f64> {
        self.inner.label
    }

    #[getter]
    fn sigma(&self) -> Option<f64> {
        self.inner.noise_scale
    }

    fn __repr__(&self) -> String {
        let x = &self.inner;
        format!(
            "Triple({}, {}, {}, label={:?}, sigma={:?})",
            x.head, x.relation, x.tail, x.label, x.noise_scale
        )
    }
}

fn unwrap_triples(triples: &[PyTriple]) -> Vec<Triple> {
    triples.iter().map(|t| t.inner).collect()
}

fn wrap_triples(triples: Vec<Triple>) -> Vec<PyTriple> {
    triples.into_iter().map(|inner| PyTriple { inner }).collect()
}

#[pyclass(name = "Embeddings", module = "renki", from_py_object)]
#[derive(Clone)]
struct PyEmbeddings {
    inner: EmbeddingTable,
}

#[pymethods]
impl PyEmbeddings {
    #[staticmethod]
    #[pyo3(signature = (n_entities, dim, scale=1.0, seed=0))]
    fn random(n_entities: usize, dim: usize, scale: f64, seed: u64) -> PyResult<Self> {
        let inner = EmbeddingTable::random(n_entities, dim, scale, &mut seeded_rng(seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: EmbeddingTable::from_rows(&rows).map_err(err)?,
        })
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_entities())
            .map(|i| self.inner.row(i).to_vec())
            .collect()
    }

    #[getter]
    fn n_entities(&self) -> usize {
        self.inner.n_entities()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[pyo3(signature = (entity, frozen=true))]
    fn set_frozen(&mut self, entity: usize, frozen: bool) -> PyResult<()> {
        if entity >= self.inner.n_entities() {
            return Err(config_err(format!("entity {entity} out of range")));
        }
        self.inner.set_frozen(entity, frozen);
        Ok(())
    }

    fn freeze_all(&mut self) {
        self.inner.freeze_all();
    }
}

fn transform(name: &str) -> PyResult<OutputTransform> {
    match name {
        "identity" => Ok(OutputTransform::Identity),
        "logistic" => Ok(OutputTransform::Logistic),
        other => Err(config_err(format!("unknown transform `{other}`"))),
    }
}

#[pyclass(name = "Model", module = "renki", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ScoreModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (n_relations, dim, hidden, transform="identity", seed=0))]
    fn cnkg(n_relations: usize, dim: usize, hidden: Vec<usize>, transform: &str, seed: u64) -> PyResult<Self> {
        let t = self::transform(transform)?;
        let inner = ScoreModel::cnkg(n_relations, dim, &hidden, t, &mut seeded_rng(seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n_relations, dim, hidden, out_dim, transform="identity", seed=0))]
    fn ipnkg(
        n_relations: usize,
        dim: usize,
        hidden: Vec<usize>,
        out_dim: usize,
        transform: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let t = self::transform(transform)?;
        let inner = ScoreModel::ipnkg(n_relations, dim, &hidden, out_dim, t, &mut seeded_rng(seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n_relations, dim, scale=0.1, seed=0))]
    fn transe(n_relations: usize, dim: usize, scale: f64, seed: u64) -> Self {
        Self {
            inner: ScoreModel::transe(n_relations, dim, scale, &mut seeded_rng(seed)),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (n_relations, dim, bias=0.0, scale=0.1, seed=0))]
    fn mip(n_relations: usize, dim: usize, bias: f64, scale: f64, seed: u64) -> Self {
        Self {
            inner: ScoreModel::mip(n_relations, dim, bias, scale, &mut seeded_rng(seed)),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (n_relations, dim, scale=0.1, seed=0))]
    fn concat_linear(n_relations: usize, dim: usize, scale: f64, seed: u64) -> Self {
        Self {
            inner: ScoreModel::concat_linear(n_relations, dim, scale, &mut seeded_rng(seed)),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ScoreModel = serde_json::from_str(text).map_err(|e| err(e.into()))?;
        Ok(Self {
            inner: inner.validated().map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| err(e.into()))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn parameters(&self) -> Vec<f64> {
        self.inner.parameters()
    }

    fn set_parameters(&mut self, flat: Vec<f64>) -> PyResult<()> {
        self.inner.set_parameters(&flat).map_err(err)
    }

    fn score(&self, emb: &PyEmbeddings, triple: &PyTriple) -> PyResult<f64> {
        self.inner.score(&emb.inner, &triple.inner).map_err(err)
    }

    fn batch_score(&self, emb: &PyEmbeddings, triples: Vec<PyTriple>) -> PyResult<Vec<f64>> {
        self.inner
            .batch_score(&emb.inner, &unwrap_triples(&triples))
            .map_err(err)
    }

    /// `(score, d score/d params, d score/d z_h, d score/d z_t)`
    fn gradients(&self, emb: &PyEmbeddings, triple: &PyTriple) -> PyResult<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let g = self
            .inner
            .score_gradients(&emb.inner, &triple.inner, 1.0)
            .map_err(err)?;
        Ok((g.score, g.params, g.head, g.tail))
    }
}

#[pyclass(name = "Truth", module = "renki", from_py_object)]
#[derive(Clone)]
struct PyTruth {
    inner: Truth,
}

#[pymethods]
impl PyTruth {
    /// `kind` is one of concat_linear, vector_offset, logistic, mip.
    #[staticmethod]
    #[pyo3(signature = (kind, n_entities, dim, n_relations, seed=0, bias=DEFAULT_BINARY_BIAS))]
    fn generate(kind: &str, n_entities: usize, dim: usize, n_relations: usize, seed: u64, bias: f64) -> PyResult<Self> {
        let kind = match kind {
            "concat_linear" => GeneratorKind::ConcatLinear,
            "vector_offset" => GeneratorKind::VectorOffset,
            "logistic" => GeneratorKind::Logistic { bias },
            "mip" => GeneratorKind::Mip { bias },
            other => return Err(config_err(format!("unknown generator `{other}`"))),
        };
        let spec = GeneratorSpec {
            kind,
            n_entities,
            dim,
            n_relations,
            noise_stds: vec![1.0],
            seed,
        };
        Ok(Self {
            inner: build_truth(&spec).map_err(err)?,
        })
    }

    fn gamma(&self, triple: &PyTriple) -> PyResult<f64> {
        self.inner.gamma(&triple.inner).map_err(err)
    }

    fn embeddings(&self) -> PyEmbeddings {
        PyEmbeddings {
            inner: self.inner.embeddings.clone(),
        }
    }

    /// The generator as a trainable model, when one of the model variants
    /// matches it exactly.
    fn as_model(&self) -> Option<PyModel> {
        self.inner.as_score_model().map(|inner| PyModel { inner })
    }

    fn sample_regression(&self, n: usize, noise_stds: Vec<f64>, seed: u64) -> PyResult<Vec<PyTriple>> {
        Ok(wrap_triples(
            self.inner.sample_regression(n, &noise_stds, seed).map_err(err)?,
        ))
    }

    fn sample_positive_only(&self, max_n: usize, seed: u64) -> PyResult<Vec<PyTriple>> {
        Ok(wrap_triples(self.inner.sample_positive_only(max_n, seed).map_err(err)?))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| err(e.into()))
    }
}

fn weight_scheme(
    scheme: &str,
    cap: Option<f64>,
    lam: Option<f64>,
    low_noise: Option<Vec<usize>>,
    normalize: Option<bool>,
) -> PyResult<WeightScheme> {
    let s = match scheme {
        "uniform" => WeightScheme::uniform(),
        "inverse_variance" => WeightScheme::inverse_variance(),
        "capped" => WeightScheme::capped(cap.ok_or_else(|| config_err("capped weights need `cap`"))?),
        "relation_ratio" => WeightScheme::relation_ratio(
            lam.ok_or_else(|| config_err("relation_ratio weights need `lam`"))?,
            low_noise.unwrap_or_default(),
        ),
        other => return Err(config_err(format!("unknown weighting `{other}`"))),
    };
    Ok(match normalize {
        Some(on) => s.normalized(on),
        None => s,
    })
}

#[pyfunction]
#[pyo3(signature = (triples, scheme="uniform", cap=None, lam=None, low_noise=None, normalize=None))]
fn compute_weights(
    triples: Vec<PyTriple>,
    scheme: &str,
    cap: Option<f64>,
    lam: Option<f64>,
    low_noise: Option<Vec<usize>>,
    normalize: Option<bool>,
) -> PyResult<Vec<f64>> {
    let s = weight_scheme(scheme, cap, lam, low_noise, normalize)?;
    training::compute_weights(&s, &unwrap_triples(&triples)).map_err(err)
}

#[pyfunction]
fn weighted_risk(model: &PyModel, emb: &PyEmbeddings, triples: Vec<PyTriple>, weights: Vec<f64>) -> PyResult<f64> {
    training::weighted_risk(&model.inner, &emb.inner, &unwrap_triples(&triples), &weights).map_err(err)
}

/// Trains `model` and `emb` in place and returns the training report.
#[pyfunction]
#[pyo3(signature = (
    model, emb, triples, loss="square", margin=1.0, negatives=1, optimizer="adam",
    learning_rate=1e-3, epochs=100, batch_size=128, seed=0, weighting="uniform",
    cap=None, lam=None, low_noise=None, categories=None
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    mut model: PyRefMut<'py, PyModel>,
    mut emb: PyRefMut<'py, PyEmbeddings>,
    triples: Vec<PyTriple>,
    loss: &str,
    margin: f64,
    negatives: usize,
    optimizer: &str,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    weighting: &str,
    cap: Option<f64>,
    lam: Option<f64>,
    low_noise: Option<Vec<usize>>,
    categories: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = TrainConfig {
        loss: match loss {
            "square" => Loss::WeightedSquare,
            "contrastive" => Loss::MarginContrastive {
                margin,
                negatives_per_positive: negatives,
            },
            other => return Err(config_err(format!("unknown loss `{other}`"))),
        },
        optimizer: match optimizer {
            "adam" => Optimizer::adam(learning_rate),
            "sgd" => Optimizer::sgd(learning_rate),
            other => return Err(config_err(format!("unknown optimizer `{other}`"))),
        },
        epochs,
        batch_size,
        seed,
        weighting: weight_scheme(weighting, cap, lam, low_noise, None)?,
        negative_categories: categories,
    };
    let triples = unwrap_triples(&triples);
    let (m, e) = (&mut model.inner, &mut emb.inner);
    let report = py.detach(|| training::train(m, e, &triples, &config)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("initial_loss", report.initial_loss)?;
    d.set_item("final_loss", report.final_loss)?;
    d.set_item("best_loss", report.best_loss)?;
    d.set_item("delta_opt", report.delta_opt)?;
    d.set_item("reverted", report.reverted)?;
    d.set_item("loss_trace", report.loss_trace)?;
    Ok(d)
}

#[pyfunction]
fn auc(positive: Vec<f64>, negative: Vec<f64>) -> PyResult<f64> {
    metrics::auc(&positive, &negative).map_err(err)
}

#[pyfunction]
fn classification_error(scores: Vec<f64>, labels: Vec<bool>, threshold: f64) -> PyResult<f64> {
    metrics::classification_error(&scores, &labels, threshold).map_err(err)
}

#[pyfunction]
fn best_threshold(positive: Vec<f64>, negative: Vec<f64>) -> PyResult<f64> {
    metrics::best_threshold(&positive, &negative).map_err(err)
}

#[pyfunction]
fn corrupt_negatives(triples: Vec<PyTriple>, categories: Vec<usize>, seed: u64) -> PyResult<Vec<PyTriple>> {
    Ok(wrap_triples(
        metrics::corrupt_negatives(&unwrap_triples(&triples), &categories, seed).map_err(err)?,
    ))
}

#[pyfunction]
fn derive_seed(base: u64, index: u64) -> u64 {
    seed::derive_seed(base, index)
}

#[pyfunction]
fn moe_vc_bound(vc_dims: Vec<u64>) -> PyResult<u64> {
    bounds::moe_vc_bound(&vc_dims).map_err(err)
}

/// `(value, clamped)`
#[pyfunction]
fn pdim_fixed_embedding(layers: Vec<usize>, params: Vec<usize>) -> PyResult<(f64, bool)> {
    let g = bounds::pdim_fixed_embedding(&layers, &params).map_err(err)?;
    Ok((g.value, g.clamped))
}

/// `(value, clamped)`
#[pyfunction]
fn pdim_trainable_embedding(n: usize, d: usize, k: usize, w_avg: f64, l: usize) -> PyResult<(f64, bool)> {
    let g = bounds::pdim_trainable_embedding(n, d, k, w_avg, l).map_err(err)?;
    Ok((g.value, g.clamped))
}

/// Bound inputs for fully connected relations given as width lists.
fn bound_inputs(
    n_entities: usize,
    dim: usize,
    widths: Vec<Vec<usize>>,
    pieces: u32,
    degree: u32,
    score_bound: f64,
    noise_var: f64,
    n: usize,
) -> BoundInputs {
    BoundInputs {
        n_entities,
        dim,
        relations: widths.iter().map(|w| RelationShape::dense(w)).collect(),
        activation: Activation { pieces, degree },
        score_bound,
        harmonic_noise_var: noise_var,
        sample_size: n,
        delta_opt: 0.0,
    }
}

/// `(value, U, L̄)` for relations given as width lists `[H0, ..., HL]`.
#[pyfunction]
#[pyo3(signature = (n_entities, dim, widths, family="cnkg", pieces=2, degree=1))]
fn vc_partition_bound(
    n_entities: usize,
    dim: usize,
    widths: Vec<Vec<usize>>,
    family: &str,
    pieces: u32,
    degree: u32,
) -> PyResult<(f64, f64, f64)> {
    let fam = match family {
        "cnkg" => ModelFamily::CNkg,
        "ipnkg" => ModelFamily::IpNkg,
        other => return Err(config_err(format!("unknown family `{other}`"))),
    };
    let inputs = bound_inputs(n_entities, dim, widths, pieces, degree, 1.0, 1.0, 1);
    let b = bounds::vc_partition_bound(&inputs, fam).map_err(err)?;
    Ok((b.value, b.u, b.l_bar))
}

/// `(value, clamped)`; `regime` is `in_sample` or `out_of_sample`.
#[pyfunction]
#[pyo3(signature = (n_entities, dim, widths, n, score_bound, noise_var, regime="in_sample"))]
fn delta_stat(
    n_entities: usize,
    dim: usize,
    widths: Vec<Vec<usize>>,
    n: usize,
    score_bound: f64,
    noise_var: f64,
    regime: &str,
) -> PyResult<(f64, bool)> {
    let regime = match regime {
        "in_sample" => Regime::InSample,
        "out_of_sample" => Regime::OutOfSample,
        other => return Err(config_err(format!("unknown regime `{other}`"))),
    };
    let inputs = bound_inputs(n_entities, dim, widths, 2, 1, score_bound, noise_var, n);
    let g = bounds::delta_stat(&inputs, regime).map_err(err)?;
    Ok((g.value, g.clamped))
}

#[pyfunction]
#[pyo3(signature = (hypotheses, max_points, budget=bounds::DEFAULT_VC_BUDGET))]
fn brute_force_vc(hypotheses: Vec<Vec<bool>>, max_points: usize, budget: u64) -> PyResult<usize> {
    bounds::brute_force_vc(&hypotheses, max_points, budget).map_err(err)
}

/// Runs a `key = value` experiment configuration and returns the summary rows
/// as dicts.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::parse(config, std::path::Path::new("<string>")).map_err(err)?;
    let bundle = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    if let Some(dir) = &cfg.output {
        bundle.write(dir).map_err(err)?;
    }
    bundle
        .summary
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("metric", &s.metric)?;
            d.set_item("train_size", s.train_size)?;
            d.set_item("lambda", s.lambda)?;
            d.set_item("mean", s.mean)?;
            d.set_item("std", s.std)?;
            d.set_item("count", s.count)?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn bound_table(config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse(config, std::path::Path::new("<string>")).map_err(err)?;
    report::emit_bound_table(&cfg).map_err(err)
}

#[pymodule]
#[pyo3(name = "renki")]
fn renki_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RenkiError", m.py().get_type::<RenkiError>())?;
    m.add_class::<PyTriple>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTruth>()?;
    m.add_function(wrap_pyfunction!(compute_weights, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_risk, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(classification_error, m)?)?;
    m.add_function(wrap_pyfunction!(best_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_negatives, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(moe_vc_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pdim_fixed_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(pdim_trainable_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(vc_partition_bound, m)?)?;
    m.add_function(wrap_pyfunction!(delta_stat, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_vc, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(bound_table, m)?)?;
    Ok(())
}
