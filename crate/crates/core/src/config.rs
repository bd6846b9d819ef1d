//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, lists are comma-separated.
//! Every key has a default (see [`SCHEMA`]); unknown or repeated keys are
//! rejected and the whole configuration is validated before any compute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::OutputTransform;
use crate::synthetic::GeneratorKind;
use crate::training::{Loss, Optimizer, TrainConfig, WeightRule, WeightScheme};

/// `(key, default, description)` for every recognized setting.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("name", "experiment", "label used in output file names"),
    (
        "generator",
        "concat_linear",
        "concat_linear | vector_offset | logistic | mip",
    ),
    ("generator_bias", "-3", "bias b of the binary generators"),
    ("dataset", "", "triple file to use instead of a generator"),
    ("categories", "", "entity category file for negative sampling"),
    ("entities", "100", "number of entities N (generators)"),
    ("dim", "10", "embedding dimension"),
    ("relations", "5", "number of relation types K (generators)"),
    (
        "noise_stds",
        "1,5",
        "noise levels; each regression sample draws one uniformly",
    ),
    ("train_size", "10000", "regression training samples"),
    ("test_size", "10000", "fresh regression test samples"),
    (
        "train_sizes",
        "",
        "if set, repeat the experiment for each training size",
    ),
    (
        "max_positives",
        "10000",
        "cap on observed positives for binary generators",
    ),
    (
        "split",
        "per_relation",
        "per_relation | global held-out split of positive-only data",
    ),
    ("test_fraction", "0.2", "held-out fraction of positive-only data"),
    (
        "spurious_rate",
        "0",
        "fraction of training edges replaced by random ones on noisy relations",
    ),
    ("model", "cnkg", "cnkg | ipnkg | transe | mip | concat_linear"),
    ("hidden", "32", "hidden ReLU widths for cnkg and ipnkg"),
    ("ip_out_dim", "8", "output width of each ipnkg network"),
    (
        "transform",
        "identity",
        "identity | logistic output transform for cnkg and ipnkg",
    ),
    (
        "param_scale",
        "0.1",
        "init std of transe, mip and concat_linear parameters",
    ),
    (
        "weighting",
        "uniform",
        "uniform | inverse_variance | capped | relation_ratio",
    ),
    (
        "normalize_weights",
        "auto",
        "auto | true | false; auto normalizes all but capped",
    ),
    ("cap", "1", "score bound B for capped weights"),
    ("lambda", "1", "weight on low-noise relations for relation_ratio"),
    ("lambdas", "0.1,1,10,100,1000", "grid for sweep-lambda"),
    ("low_noise_relations", "0", "relation indices treated as low-noise"),
    ("init", "random", "random | truth | truth_frozen | truth_noisy | file"),
    ("init_scale", "1", "std of random embedding init"),
    ("init_noise", "0.1", "std of noise added by truth_noisy"),
    ("embeddings", "", "embedding file for init = file"),
    ("freeze_embeddings", "false", "keep file embeddings fixed"),
    ("loss", "square", "square | contrastive"),
    ("margin", "1", "contrastive margin"),
    ("negatives", "1", "corrupted negatives per positive"),
    ("optimizer", "adam", "adam | sgd"),
    ("learning_rate", "0.001", "optimizer step size"),
    ("momentum", "0", "sgd momentum"),
    ("epochs", "100", "training epochs"),
    ("batch_size", "128", "mini-batch size"),
    ("eval", "auto", "auto | mse | auc"),
    ("replications", "10", "independent runs"),
    ("seed", "0", "base seed; run r uses derive_seed(seed, r)"),
    ("threads", "0", "worker threads, 0 = all cores, 1 = sequential"),
    ("output", "", "directory for the result bundle"),
];

/// Raw `key = value` pairs of a configuration text, without schema checks.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut given = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: "expected `key = value`".into(),
            });
        };
        let k = k.trim().to_owned();
        if given.insert(k.clone(), v.trim().to_owned()).is_some() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("repeated key `{k}`"),
            });
        }
    }
    Ok(given)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    CNkg,
    IpNkg,
    TransE,
    Mip,
    ConcatLinear,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::CNkg => "cnkg",
            ModelVariant::IpNkg => "ipnkg",
            ModelVariant::TransE => "transe",
            ModelVariant::Mip => "mip",
            ModelVariant::ConcatLinear => "concat_linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub hidden: Vec<usize>,
    pub ip_out_dim: usize,
    pub transform: OutputTransform,
    pub param_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generator {
        kind: GeneratorKind,
        n_entities: usize,
        n_relations: usize,
    },
    Dataset {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    Random { scale: f64 },
    Truth,
    TruthFrozen,
    TruthNoisy { std: f64 },
    File { path: PathBuf, frozen: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalProtocol {
    /// Out-of-sample MSE on fresh labelled samples.
    FreshSampleMse,
    /// AUC of held-out positives against corrupted negatives.
    NegativeSamplingAuc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    PerRelation,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub categories: Option<PathBuf>,
    pub dim: usize,
    pub noise_stds: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub train_sizes: Vec<usize>,
    pub max_positives: usize,
    pub split: SplitMode,
    pub test_fraction: f64,
    pub spurious_rate: f64,
    pub model: ModelSpec,
    pub init: InitChoice,
    /// `seed` here is replaced by a derived seed in every replication.
    pub train: TrainConfig,
    pub lambdas: Vec<f64>,
    pub eval: EvalProtocol,
    pub replications: usize,
    pub seed: u64,
    pub threads: usize,
    pub output: Option<PathBuf>,
    raw: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::config(format!("`{key}`: expected {expected}, got `{value}`"))
}

struct Reader<'a> {
    raw: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn str(&self, key: &str) -> &str {
        self.raw.get(key).map(String::as_str).expect("schema key present")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<T> {
        let v = self.str(key);
        v.parse().map_err(|_| bad(key, v, expected))
    }

    fn real(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key, "a real number")?;
        if !v.is_finite() {
            return Err(bad(key, self.str(key), "a finite real number"));
        }
        Ok(v)
    }

    fn list<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Vec<T>> {
        let v = self.str(key);
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(key, v, expected)))
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key).trim();
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn choice<'c>(&self, key: &str, options: &[&'c str]) -> Result<&'c str> {
        let v = self.str(key);
        options
            .iter()
            .find(|o| **o == v)
            .copied()
            .ok_or_else(|| bad(key, v, &options.join(" | ")))
    }
}

impl ExperimentConfig {
    /// Parses `key = value` text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        Self::from_pairs(parse_pairs(text, origin)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = SCHEMA
            .iter()
            .map(|(k, d, _)| ((*k).to_owned(), (*d).to_owned()))
            .collect();
        let mut explicit = BTreeSet::new();
        for (k, v) in pairs {
            let k = k.into();
            if !raw.contains_key(&k) {
                return Err(Error::config(format!("unknown key `{k}`")));
            }
            explicit.insert(k.clone());
            raw.insert(k, v.into().trim().to_owned());
        }
        let cfg = Self::build(raw, &explicit)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns a copy with `key` overridden.
    pub fn with(&self, key: &str, value: impl Into<String>) -> Result<Self> {
        let mut pairs = self.explicit_pairs();
        pairs.insert(key.to_owned(), value.into());
        Self::from_pairs(pairs)
    }

    fn explicit_pairs(&self) -> BTreeMap<String, String> {
        self.raw
            .iter()
            .filter(|(k, v)| SCHEMA.iter().any(|(sk, d, _)| sk == k && d != v))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    fn build(raw: BTreeMap<String, String>, explicit: &BTreeSet<String>) -> Result<Self> {
        let r = Reader { raw: &raw };
        let dataset = r.path("dataset");
        let data = match dataset {
            Some(path) => {
                if explicit.contains("generator") {
                    return Err(Error::config("set either `generator` or `dataset`, not both"));
                }
                DataSource::Dataset { path }
            }
            None => {
                let bias = r.real("generator_bias")?;
                let kind = match r.choice("generator", &["concat_linear", "vector_offset", "logistic", "mip"])? {
                    "concat_linear" => GeneratorKind::ConcatLinear,
                    "vector_offset" => GeneratorKind::VectorOffset,
                    "logistic" => GeneratorKind::Logistic { bias },
                    _ => GeneratorKind::Mip { bias },
                };
                DataSource::Generator {
                    kind,
                    n_entities: r.parse("entities", "a positive integer")?,
                    n_relations: r.parse("relations", "a positive integer")?,
                }
            }
        };

        let model = ModelSpec {
            variant: match r.choice("model", &["cnkg", "ipnkg", "transe", "mip", "concat_linear"])? {
                "cnkg" => ModelVariant::CNkg,
                "ipnkg" => ModelVariant::IpNkg,
                "transe" => ModelVariant::TransE,
                "mip" => ModelVariant::Mip,
                _ => ModelVariant::ConcatLinear,
            },
            hidden: r.list("hidden", "comma-separated positive integers")?,
            ip_out_dim: r.parse("ip_out_dim", "a positive integer")?,
            transform: match r.choice("transform", &["identity", "logistic"])? {
                "identity" => OutputTransform::Identity,
                _ => OutputTransform::Logistic,
            },
            param_scale: r.real("param_scale")?,
        };

        let rule = match r.choice(
            "weighting",
            &["uniform", "inverse_variance", "capped", "relation_ratio"],
        )? {
            "uniform" => WeightRule::Uniform,
            "inverse_variance" => WeightRule::InverseVariance,
            "capped" => WeightRule::Capped { bound: r.real("cap")? },
            _ => WeightRule::RelationRatio {
                lambda: r.real("lambda")?,
                low_noise: r
                    .list("low_noise_relations", "comma-separated relation indices")?
                    .into_iter()
                    .collect(),
            },
        };
        let normalize = match r.choice("normalize_weights", &["auto", "true", "false"])? {
            "auto" => !matches!(rule, WeightRule::Capped { .. }),
            v => v == "true",
        };

        let init = match r.choice("init", &["random", "truth", "truth_frozen", "truth_noisy", "file"])? {
            "random" => InitChoice::Random {
                scale: r.real("init_scale")?,
            },
            "truth" => InitChoice::Truth,
            "truth_frozen" => InitChoice::TruthFrozen,
            "truth_noisy" => InitChoice::TruthNoisy {
                std: r.real("init_noise")?,
            },
            _ => InitChoice::File {
                path: r
                    .path("embeddings")
                    .ok_or_else(|| Error::config("init = file needs `embeddings`"))?,
                frozen: r.parse("freeze_embeddings", "true | false")?,
            },
        };

        let lr = r.real("learning_rate")?;
        let train = TrainConfig {
            loss: match r.choice("loss", &["square", "contrastive"])? {
                "square" => Loss::WeightedSquare,
                _ => Loss::MarginContrastive {
                    margin: r.real("margin")?,
                    negatives_per_positive: r.parse("negatives", "a positive integer")?,
                },
            },
            optimizer: match r.choice("optimizer", &["adam", "sgd"])? {
                "adam" => Optimizer::adam(lr),
                _ => Optimizer::Sgd {
                    step: lr,
                    momentum: r.real("momentum")?,
                },
            },
            epochs: r.parse("epochs", "a positive integer")?,
            batch_size: r.parse("batch_size", "a positive integer")?,
            seed: 0,
            weighting: WeightScheme {
                rule,
                normalize_to_unit_mean: normalize,
            },
            negative_categories: None,
        };

        let binary = match &data {
            DataSource::Generator { kind, .. } => !kind.is_regression(),
            DataSource::Dataset { .. } => false,
        };
        let eval = match r.choice("eval", &["auto", "mse", "auc"])? {
            "mse" => EvalProtocol::FreshSampleMse,
            "auc" => EvalProtocol::NegativeSamplingAuc,
            _ if binary || matches!(data, DataSource::Dataset { .. }) => EvalProtocol::NegativeSamplingAuc,
            _ => EvalProtocol::FreshSampleMse,
        };

        Ok(Self {
            name: r.str("name").to_owned(),
            categories: r.path("categories"),
            dim: r.parse("dim", "a positive integer")?,
            noise_stds: r.list("noise_stds", "comma-separated reals")?,
            train_size: r.parse("train_size", "a positive integer")?,
            test_size: r.parse("test_size", "a positive integer")?,
            train_sizes: r.list("train_sizes", "comma-separated positive integers")?,
            max_positives: r.parse("max_positives", "a positive integer")?,
            split: match r.choice("split", &["per_relation", "global"])? {
                "per_relation" => SplitMode::PerRelation,
                _ => SplitMode::Global,
            },
            test_fraction: r.real("test_fraction")?,
            spurious_rate: r.real("spurious_rate")?,
            lambdas: r.list("lambdas", "comma-separated reals")?,
            replications: r.parse("replications", "a positive integer")?,
            seed: r.parse("seed", "an unsigned integer")?,
            threads: r.parse("threads", "an unsigned integer")?,
            output: r.path("output"),
            data,
            model,
            init,
            train,
            eval,
            raw,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("`name` must be a nonempty file-name-safe label"));
        }
        if self.dim == 0 {
            return Err(Error::config("`dim` must be positive"));
        }
        if let DataSource::Generator {
            kind,
            n_entities,
            n_relations,
        } = &self.data
        {
            if *n_entities == 0 || *n_relations == 0 {
                return Err(Error::config("`entities` and `relations` must be positive"));
            }
            if kind.is_regression() {
                if self.noise_stds.is_empty() || self.noise_stds.iter().any(|s| *s < 0.0) {
                    return Err(Error::config("`noise_stds` needs nonnegative levels"));
                }
                if self.eval == EvalProtocol::NegativeSamplingAuc {
                    return Err(Error::config("AUC evaluation needs positive-only data"));
                }
            } else if self.eval == EvalProtocol::FreshSampleMse {
                return Err(Error::config("MSE evaluation needs a regression generator"));
            }
            if let WeightRule::RelationRatio { low_noise, .. } = &self.train.weighting.rule {
                if let Some(r) = low_noise.iter().find(|&&r| r >= *n_relations) {
                    return Err(Error::config(format!("low-noise relation {r} does not exist")));
                }
            }
        } else {
            if matches!(
                self.init,
                InitChoice::Truth | InitChoice::TruthFrozen | InitChoice::TruthNoisy { .. }
            ) {
                return Err(Error::config("truth initialization needs a generator"));
            }
            if self.eval == EvalProtocol::FreshSampleMse {
                return Err(Error::config("fresh-sample MSE needs a generator"));
            }
        }
        if self.train_size == 0 || self.test_size == 0 || self.max_positives == 0 || self.train_sizes.contains(&0) {
            return Err(Error::config("sample sizes must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("`test_fraction` must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.spurious_rate) {
            return Err(Error::config("`spurious_rate` must lie in [0, 1]"));
        }
        if self.replications == 0 {
            return Err(Error::config("`replications` must be positive"));
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("`lambdas` must be positive"));
        }
        match self.model.variant {
            ModelVariant::CNkg | ModelVariant::IpNkg if self.model.hidden.contains(&0) => {
                return Err(Error::config("hidden widths must be positive"))
            }
            ModelVariant::IpNkg if self.model.ip_out_dim == 0 => {
                return Err(Error::config("`ip_out_dim` must be positive"))
            }
            _ => {}
        }
        if !(self.model.param_scale >= 0.0) {
            return Err(Error::config("`param_scale` must be nonnegative"));
        }
        self.train.validate()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.raw.get(key).map(String::as_str)
    }

    pub fn is_binary(&self) -> bool {
        self.eval == EvalProtocol::NegativeSamplingAuc
    }

    /// Canonical text listing every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in SCHEMA {
            writeln!(out, "{k} = {}", self.raw[*k]).unwrap();
        }
        out
    }
}

/// Markdown-free description of every key, one per line.
pub fn schema_help() -> String {
    let mut out = String::new();
    for (k, d, desc) in SCHEMA {
        let d = if d.is_empty() { "(unset)" } else { d };
        writeln!(out, "{k:<20} default {d:<20} {desc}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::DEFAULT_BINARY_BIAS;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("cfg"))
    }

    #[test]
    fn default_bias_matches_generator() {
        let c = parse("generator = logistic").unwrap();
        let DataSource::Generator { kind, .. } = c.data else {
            panic!()
        };
        assert_eq!(
            kind,
            GeneratorKind::Logistic {
                bias: DEFAULT_BINARY_BIAS
            }
        );
    }

    #[test]
    fn defaults_are_valid() {
        let c = parse("").unwrap();
        assert_eq!(c.replications, 10);
        assert_eq!(c.eval, EvalProtocol::FreshSampleMse);
        assert_eq!(c.lambdas, [0.1, 1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn unknown_and_repeated_keys_rejected() {
        assert!(matches!(parse("epoch = 3"), Err(Error::Config(_))));
        assert!(matches!(parse("seed = 1\nseed = 2"), Err(Error::Parse { line: 2, .. })));
        assert!(parse("seed 1").is_err());
    }

    #[test]
    fn typed_values_checked() {
        assert!(parse("epochs = many").is_err());
        assert!(parse("model = resnet").is_err());
        assert!(parse("test_fraction = 1.5").is_err());
        assert!(parse("generator = mip\neval = mse").is_err());
        assert!(parse("dataset = x.tsv\ninit = truth").is_err());
    }

    #[test]
    fn binary_generator_switches_eval() {
        let c = parse("generator = mip\nloss = contrastive # comment\nhidden = 64, 32").unwrap();
        assert_eq!(c.eval, EvalProtocol::NegativeSamplingAuc);
        assert_eq!(c.model.hidden, [64, 32]);
        assert_eq!(
            c.data,
            DataSource::Generator {
                kind: GeneratorKind::Mip { bias: -3.0 },
                n_entities: 100,
                n_relations: 5
            }
        );
    }

    #[test]
    fn capped_defaults_unnormalized() {
        let c = parse("weighting = capped\ncap = 2").unwrap();
        assert!(!c.train.weighting.normalize_to_unit_mean);
        assert_eq!(c.train.weighting.rule, WeightRule::Capped { bound: 2.0 });
    }

    #[test]
    fn text_round_trip() {
        let c = parse("weighting = relation_ratio\nlambda = 10\nlow_noise_relations = 0,2\nseed = 9").unwrap();
        let back = parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.with("seed", "10").unwrap().seed, 10);
    }
}
