//! Replicated experiments: data preparation, training, evaluation and the
//! result bundle (per-seed CSV, mean/std summary, plot series).
//!
//! Replication `r` runs with `derive_seed(base_seed, r)`; every random stage
//! inside a replication draws from its own seed derived from that one, so
//! runs are independent of scheduling and of each other.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataSource, EvalProtocol, ExperimentConfig, InitChoice, ModelVariant, SplitMode};
use crate::error::{Error, Result};
use crate::io::{self, LoadOptions, Vocabulary};
use crate::metrics::{
    auc_by_relation, best_threshold, classification_error, corrupt_negatives_avoiding, weighted_mse, EvalReport,
};
use crate::model::{EmbeddingTable, ScoreModel, Triple};
use crate::seed::derive_seed;
use crate::synthetic::{build_truth, inject_spurious, GeneratorSpec, Truth};
use crate::training::{compute_weights, init_embeddings, train, InitStrategy, TrainReport, WeightRule};

// Stream indices for seeds derived from a replication seed.
const STREAM_TRUTH: u64 = 0;
const STREAM_TRAIN_SAMPLE: u64 = 1;
const STREAM_TEST_SAMPLE: u64 = 2;
const STREAM_MODEL: u64 = 3;
const STREAM_EMBEDDING: u64 = 4;
const STREAM_TRAINING: u64 = 5;
const STREAM_NEGATIVES: u64 = 6;
const STREAM_SPURIOUS: u64 = 7;
const STREAM_SPLIT: u64 = 8;

/// Training and evaluation data of one replication.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<Triple>,
    /// Fresh labelled samples (MSE protocol) or held-out positives (AUC protocol).
    pub test: Vec<Triple>,
    pub truth: Option<Truth>,
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    /// One category per entity for negative sampling.
    pub categories: Vec<usize>,
}

impl PreparedData {
    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }
}

/// Splits positives into `(train, test)` with about `test_fraction` held out,
/// either within each relation or over the whole list.
pub fn split_positives(
    triples: &[Triple],
    test_fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> (Vec<Triple>, Vec<Triple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<Triple>> = match mode {
        SplitMode::Global => vec![triples.to_vec()],
        SplitMode::PerRelation => {
            let mut by: BTreeMap<usize, Vec<Triple>> = BTreeMap::new();
            for x in triples {
                by.entry(x.relation).or_default().push(*x);
            }
            by.into_values().collect()
        }
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let n_test = (g.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..]);
    }
    (train, test)
}

fn generator_spec(config: &ExperimentConfig, rep_seed: u64) -> Option<GeneratorSpec> {
    match config.data {
        DataSource::Generator {
            kind,
            n_entities,
            n_relations,
        } => Some(GeneratorSpec {
            kind,
            n_entities,
            dim: config.dim,
            n_relations,
            noise_stds: config.noise_stds.clone(),
            seed: derive_seed(rep_seed, STREAM_TRUTH),
        }),
        DataSource::Dataset { .. } => None,
    }
}

/// Generates or loads the data of one replication.
pub fn prepare_data(config: &ExperimentConfig, rep_seed: u64, train_size: usize) -> Result<PreparedData> {
    let (positives, truth, entities, relations) = match (&config.data, generator_spec(config, rep_seed)) {
        (DataSource::Generator { .. }, Some(spec)) => {
            let truth = build_truth(&spec)?;
            let entities = Vocabulary::numbered(spec.n_entities);
            let relations = Vocabulary::numbered(spec.n_relations);
            if config.eval == EvalProtocol::FreshSampleMse {
                let train = truth.sample_regression(
                    train_size,
                    &config.noise_stds,
                    derive_seed(rep_seed, STREAM_TRAIN_SAMPLE),
                )?;
                let test = truth.sample_regression(
                    config.test_size,
                    &config.noise_stds,
                    derive_seed(rep_seed, STREAM_TEST_SAMPLE),
                )?;
                let categories = vec![0; spec.n_entities];
                return Ok(PreparedData {
                    train,
                    test,
                    truth: Some(truth),
                    entities,
                    relations,
                    categories,
                });
            }
            let pos = truth.sample_positive_only(config.max_positives, derive_seed(rep_seed, STREAM_TRAIN_SAMPLE))?;
            (pos, Some(truth), entities, relations)
        }
        (DataSource::Dataset { path }, _) => {
            let set = io::load_triples(path, &LoadOptions::default())?;
            let pos = set
                .triples
                .into_iter()
                .map(|x| Triple { label: Some(1.0), ..x })
                .collect();
            (pos, None, set.entities, set.relations)
        }
        (DataSource::Generator { .. }, None) => unreachable!("generator sources always yield a spec"),
    };

    let categories = match &config.categories {
        Some(path) => io::load_categories(path, &entities)?,
        None => vec![0; entities.len()],
    };
    let (mut train, test) = split_positives(
        &positives,
        config.test_fraction,
        config.split,
        derive_seed(rep_seed, STREAM_SPLIT),
    );
    if config.spurious_rate > 0.0 {
        let noisy: BTreeSet<usize> = match &config.train.weighting.rule {
            WeightRule::RelationRatio { low_noise, .. } => {
                (0..relations.len()).filter(|r| !low_noise.contains(r)).collect()
            }
            _ => (0..relations.len()).collect(),
        };
        train = inject_spurious(
            &train,
            &noisy,
            config.spurious_rate,
            entities.len(),
            derive_seed(rep_seed, STREAM_SPURIOUS),
        )?;
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("split left the training or test set empty"));
    }
    Ok(PreparedData {
        train,
        test,
        truth,
        entities,
        relations,
        categories,
    })
}

/// A freshly initialized model of the configured variant.
pub fn build_model(config: &ExperimentConfig, n_relations: usize, seed: u64) -> Result<ScoreModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = &config.model;
    let d = config.dim;
    Ok(match m.variant {
        ModelVariant::CNkg => ScoreModel::cnkg(n_relations, d, &m.hidden, m.transform, &mut rng)?,
        ModelVariant::IpNkg => ScoreModel::ipnkg(n_relations, d, &m.hidden, m.ip_out_dim, m.transform, &mut rng)?,
        ModelVariant::TransE => ScoreModel::transe(n_relations, d, m.param_scale, &mut rng),
        ModelVariant::Mip => ScoreModel::mip(n_relations, d, 0.0, m.param_scale, &mut rng),
        ModelVariant::ConcatLinear => ScoreModel::concat_linear(n_relations, d, m.param_scale, &mut rng),
    })
}

/// Embedding table per the configured initialization strategy.
pub fn initial_embeddings(config: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<EmbeddingTable> {
    let truth = || {
        data.truth
            .as_ref()
            .map(|t| t.embeddings.clone())
            .ok_or_else(|| Error::Config("truth initialization needs a generator".into()))
    };
    let strategy = match &config.init {
        InitChoice::Random { scale } => InitStrategy::Random { scale: *scale },
        InitChoice::Truth => InitStrategy::External(truth()?),
        InitChoice::TruthFrozen => InitStrategy::ExternalFrozen(truth()?),
        InitChoice::TruthNoisy { std } => InitStrategy::ExternalNoisy {
            vectors: truth()?,
            std: *std,
        },
        InitChoice::File { path, frozen } => {
            let table = io::load_embeddings(path, &data.entities, true)?.table;
            if *frozen {
                InitStrategy::ExternalFrozen(table)
            } else {
                InitStrategy::External(table)
            }
        }
    };
    init_embeddings(&strategy, data.n_entities(), config.dim, seed)
}

/// Evaluates a trained model on the replication's held-out data.
pub fn evaluate(
    config: &ExperimentConfig,
    model: &ScoreModel,
    emb: &EmbeddingTable,
    data: &PreparedData,
    seed: u64,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        n_train: data.train.len(),
        ..EvalReport::default()
    };
    match config.eval {
        EvalProtocol::FreshSampleMse => {
            let truth = data
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("MSE evaluation needs a generator".into()))?;
            let gamma = |x: &Triple| truth.gamma(x).expect("generated triples are in range");
            let w_train = compute_weights(&config.train.weighting, &data.train)?;
            let w_test = compute_weights(&config.train.weighting, &data.test)?;
            let ones = vec![1.0; data.test.len()];
            report.weighted_mse_in = Some(weighted_mse(model, emb, &data.train, &w_train, gamma)?);
            report.weighted_mse_out = Some(weighted_mse(model, emb, &data.test, &w_test, gamma)?);
            report.mse_out = Some(weighted_mse(model, emb, &data.test, &ones, gamma)?);
            report.mse_out_vs_label = Some(weighted_mse(model, emb, &data.test, &ones, |x| {
                x.label.expect("regression samples are labelled")
            })?);
            report.n_eval = data.test.len();
        }
        EvalProtocol::NegativeSamplingAuc => {
            let test_neg = corrupt_negatives_avoiding(&data.test, &data.train, &data.categories, derive_seed(seed, 0))?;
            let train_neg =
                corrupt_negatives_avoiding(&data.train, &data.test, &data.categories, derive_seed(seed, 1))?;
            let pos_s = model.batch_score(emb, &data.test)?;
            let neg_s = model.batch_score(emb, &test_neg)?;
            let (per, avg) = auc_by_relation(&data.test, &pos_s, &test_neg, &neg_s)?;
            report.auc_per_relation = per;
            report.weighted_auc_avg = Some(avg);

            let threshold = best_threshold(
                &model.batch_score(emb, &data.train)?,
                &model.batch_score(emb, &train_neg)?,
            )?;
            let scores: Vec<f64> = pos_s.iter().chain(&neg_s).copied().collect();
            let labels: Vec<bool> = (0..scores.len()).map(|i| i < pos_s.len()).collect();
            report.classification_error = Some(classification_error(&scores, &labels, threshold)?);
            report.n_eval = scores.len();
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub train: TrainReport,
    pub n_params: usize,
}

/// Builds, initializes and trains a model on `data.train`.
pub fn fit(
    config: &ExperimentConfig,
    data: &PreparedData,
    rep_seed: u64,
) -> Result<(ScoreModel, EmbeddingTable, TrainReport)> {
    let mut model = build_model(config, data.n_relations(), derive_seed(rep_seed, STREAM_MODEL))?;
    let mut emb = initial_embeddings(config, data, derive_seed(rep_seed, STREAM_EMBEDDING))?;
    let mut tc = config.train.clone();
    tc.seed = derive_seed(rep_seed, STREAM_TRAINING);
    if config.categories.is_some() {
        tc.negative_categories = Some(data.categories.clone());
    }
    let report = train(&mut model, &mut emb, &data.train, &tc)?;
    Ok((model, emb, report))
}

/// Runs one replication end to end.
pub fn run_replication(config: &ExperimentConfig, rep_seed: u64, train_size: usize) -> Result<RunOutcome> {
    let data = prepare_data(config, rep_seed, train_size)?;
    let (model, emb, train_report) = fit(config, &data, rep_seed)?;
    let report = evaluate(config, &model, &emb, &data, derive_seed(rep_seed, STREAM_NEGATIVES))?;
    Ok(RunOutcome {
        report,
        train: train_report,
        n_params: model.num_params() + emb.as_slice().len(),
    })
}

/// Metric columns of the per-seed CSV, in order.
pub const METRICS: &[&str] = &[
    "weighted_mse_in",
    "weighted_mse_out",
    "mse_out",
    "mse_out_vs_label",
    "weighted_auc_avg",
    "classification_error",
    "initial_loss",
    "final_loss",
    "delta_opt",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub replication: usize,
    pub seed: u64,
    pub train_size: usize,
    pub lambda: Option<f64>,
    /// `None` for a failed replication; see `error`.
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

impl SeedRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        let o = self.outcome.as_ref()?;
        let r = &o.report;
        match name {
            "weighted_mse_in" => r.weighted_mse_in,
            "weighted_mse_out" => r.weighted_mse_out,
            "mse_out" => r.mse_out,
            "mse_out_vs_label" => r.mse_out_vs_label,
            "weighted_auc_avg" => r.weighted_auc_avg,
            "classification_error" => r.classification_error,
            "initial_loss" => Some(o.train.initial_loss),
            "final_loss" => Some(o.train.final_loss),
            "delta_opt" => Some(o.train.delta_opt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub train_size: usize,
    pub lambda: Option<f64>,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
}

/// Mean and sample standard deviation (0 when fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Plot data: one row per x value with mean and std columns per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x_name: String,
    pub metrics: Vec<String>,
    pub rows: Vec<(f64, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub name: String,
    pub config_text: String,
    pub rows: Vec<SeedRow>,
    pub summary: Vec<SummaryRow>,
    pub series: BTreeMap<String, Series>,
}

impl ResultBundle {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_none()).count()
    }

    pub fn summary_value(&self, train_size: usize, lambda: Option<f64>, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.train_size == train_size && s.lambda == lambda && s.metric == metric)
    }

    /// Writes `<name>_per_seed.csv`, `<name>_summary.csv`, one CSV per series
    /// and the resolved configuration; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();

        let path = io::output_path(dir, &format!("{}_per_seed.csv", self.name))?;
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["replication", "seed", "train_size", "lambda", "status"];
        header.extend_from_slice(METRICS);
        header.extend_from_slice(&["n_train", "n_eval", "error"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.replication.to_string(),
                r.seed.to_string(),
                r.train_size.to_string(),
                opt(r.lambda),
                if r.outcome.is_some() { "ok" } else { "failed" }.to_owned(),
            ];
            rec.extend(METRICS.iter().map(|m| opt(r.metric(m))));
            let (nt, ne) = r.outcome.as_ref().map_or((String::new(), String::new()), |o| {
                (o.report.n_train.to_string(), o.report.n_eval.to_string())
            });
            rec.extend([nt, ne, r.error.clone().unwrap_or_default()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);

        let path = io::output_path(dir, &format!("{}_summary.csv", self.name))?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["train_size", "lambda", "metric", "mean", "std", "count"])?;
        for s in &self.summary {
            w.write_record([
                s.train_size.to_string(),
                opt(s.lambda),
                s.metric.clone(),
                s.mean.to_string(),
                s.std.to_string(),
                s.count.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);

        for (name, series) in &self.series {
            let path = io::output_path(dir, &format!("{}_{name}.csv", self.name))?;
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec![series.x_name.clone()];
            for m in &series.metrics {
                header.push(format!("{m}_mean"));
                header.push(format!("{m}_std"));
            }
            w.write_record(&header)?;
            for (x, vals) in &series.rows {
                let mut rec = vec![x.to_string()];
                for (m, s) in vals {
                    rec.push(m.to_string());
                    rec.push(s.to_string());
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
            written.push(path);
        }

        let path = io::output_path(dir, &format!("{}_config.txt", self.name))?;
        std::fs::write(&path, &self.config_text)?;
        written.push(path);
        Ok(written)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every replication at `train_size`, in parallel unless `threads = 1`.
fn run_cell(config: &ExperimentConfig, train_size: usize, lambda: Option<f64>) -> Vec<SeedRow> {
    (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, r as u64);
            let result = run_replication(config, seed, train_size);
            let (outcome, error) = match result {
                Ok(o) => (Some(o), None),
                Err(e) => (None, Some(format!("error[{}]: {e}", e.category()))),
            };
            SeedRow {
                replication: r,
                seed,
                train_size,
                lambda,
                outcome,
                error,
            }
        })
        .collect()
}

fn summarize(rows: &[SeedRow]) -> Vec<SummaryRow> {
    let mut cells: Vec<(usize, Option<f64>)> = Vec::new();
    for r in rows {
        if !cells.contains(&(r.train_size, r.lambda)) {
            cells.push((r.train_size, r.lambda));
        }
    }
    let mut out = Vec::new();
    for (n, lambda) in cells {
        for m in METRICS {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.train_size == n && r.lambda == lambda)
                .filter_map(|r| r.metric(m))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            out.push(SummaryRow {
                train_size: n,
                lambda,
                metric: (*m).to_owned(),
                mean,
                std,
                count: vals.len(),
            });
        }
    }
    out
}

fn series_metrics(config: &ExperimentConfig) -> Vec<&'static str> {
    match config.eval {
        EvalProtocol::FreshSampleMse => vec!["mse_out", "weighted_mse_out", "mse_out_vs_label"],
        EvalProtocol::NegativeSamplingAuc => vec!["weighted_auc_avg", "classification_error"],
    }
}

fn series(summary: &[SummaryRow], x_name: &str, xs: &[(usize, Option<f64>, f64)], metrics: &[&str]) -> Series {
    let rows = xs
        .iter()
        .map(|&(n, lambda, x)| {
            let vals = metrics
                .iter()
                .map(|m| {
                    summary
                        .iter()
                        .find(|s| s.train_size == n && s.lambda == lambda && s.metric == *m)
                        .map_or((f64::NAN, f64::NAN), |s| (s.mean, s.std))
                })
                .collect();
            (x, vals)
        })
        .collect();
    Series {
        x_name: x_name.to_owned(),
        metrics: metrics.iter().map(|m| (*m).to_owned()).collect(),
        rows,
    }
}

/// Runs the configured replications (for every entry of `train_sizes` when
/// set). Failed replications are recorded in their rows; the bundle covers the
/// completed ones.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    let sizes = if config.train_sizes.is_empty() {
        vec![config.train_size]
    } else {
        config.train_sizes.clone()
    };
    let rows: Vec<SeedRow> = with_pool(config.threads, || {
        sizes.iter().flat_map(|&n| run_cell(config, n, None)).collect()
    })?;
    let summary = summarize(&rows);
    let mut series_map = BTreeMap::new();
    if config.train_sizes.len() > 1 {
        let xs: Vec<_> = sizes.iter().map(|&n| (n, None, n as f64)).collect();
        let name = match config.eval {
            EvalProtocol::FreshSampleMse => "mse_vs_n",
            EvalProtocol::NegativeSamplingAuc => "auc_vs_n",
        };
        series_map.insert(name.to_owned(), series(&summary, "n", &xs, &series_metrics(config)));
    }
    Ok(ResultBundle {
        name: config.name.clone(),
        config_text: config.to_text(),
        rows,
        summary,
        series: series_map,
    })
}

/// Repeats the experiment with relation-ratio weights for each `λ` in the
/// configured grid and emits a metrics-vs-λ series.
pub fn sweep_lambda(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    if config.lambdas.is_empty() {
        return Err(Error::Config("`lambdas` is empty".into()));
    }
    let configs = config
        .lambdas
        .iter()
        .map(|&l| {
            config
                .with("weighting", "relation_ratio")
                .and_then(|c| c.with("lambda", l.to_string()))
                .map(|c| (l, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SeedRow> = with_pool(config.threads, || {
        configs
            .iter()
            .flat_map(|(l, c)| run_cell(c, c.train_size, Some(*l)))
            .collect()
    })?;
    let summary = summarize(&rows);
    let xs: Vec<_> = config
        .lambdas
        .iter()
        .map(|&l| (config.train_size, Some(l), l))
        .collect();
    let mut series_map = BTreeMap::new();
    series_map.insert(
        "vs_lambda".to_owned(),
        series(&summary, "lambda", &xs, &series_metrics(config)),
    );
    Ok(ResultBundle {
        name: config.name.clone(),
        config_text: config.with("weighting", "relation_ratio")?.to_text(),
        rows,
        summary,
        series: series_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(extra: &[(&str, &str)]) -> ExperimentConfig {
        let mut pairs = vec![
            ("entities", "12"),
            ("dim", "3"),
            ("relations", "2"),
            ("train_size", "200"),
            ("test_size", "100"),
            ("hidden", "8"),
            ("epochs", "3"),
            ("replications", "2"),
            ("threads", "1"),
        ];
        pairs.extend_from_slice(extra);
        ExperimentConfig::from_pairs(pairs).unwrap()
    }

    #[test]
    fn per_relation_split_fractions() {
        let t: Vec<Triple> = (0..50).map(|i| Triple::new(i, i % 2, i)).collect();
        let (train, test) = split_positives(&t, 0.2, SplitMode::PerRelation, 1);
        assert_eq!(test.len(), 10);
        assert_eq!(train.len(), 40);
        assert_eq!(test.iter().filter(|x| x.relation == 0).count(), 5);
    }

    #[test]
    fn single_replication_has_zero_std() {
        let b = run_experiment(&small(&[("replications", "1")])).unwrap();
        let s = b.summary_value(200, None, "mse_out").unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.count, 1);
    }

    #[test]
    fn replications_are_deterministic() {
        let c = small(&[]);
        assert_eq!(run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
        let par = c.with("threads", "2").unwrap();
        assert_eq!(run_experiment(&par).unwrap().rows, run_experiment(&c).unwrap().rows);
    }

    #[test]
    fn failures_are_recorded_per_seed() {
        // A huge step overflows within the first epoch.
        let c = small(&[
            ("learning_rate", "1e300"),
            ("optimizer", "sgd"),
            ("init_scale", "1e150"),
        ]);
        let b = run_experiment(&c).unwrap();
        assert_eq!(b.failures(), 2);
        assert!(b.rows[0].error.as_deref().unwrap().starts_with("error[diverged]"));
    }

    #[test]
    fn lambda_sweep_emits_one_row_per_lambda() {
        let c = small(&[
            ("generator", "logistic"),
            ("loss", "contrastive"),
            ("max_positives", "150"),
            ("replications", "1"),
        ]);
        let b = sweep_lambda(&c).unwrap();
        assert_eq!(b.series["vs_lambda"].rows.len(), 5);
        assert_eq!(b.rows.len(), 5);
    }
}
