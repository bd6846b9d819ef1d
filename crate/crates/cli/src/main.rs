//! `renki`: generate synthetic knowledge graphs, train and evaluate models,
//! run replicated experiments and print capacity-bound tables.
//!
//! Failures exit nonzero with a single `error[<category>]: <message>` line on
//! stderr; see [`exit_code`] for the mapping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand, ValueEnum};

use renki::config::{parse_pairs, ExperimentConfig, SCHEMA};
use renki::experiment::{fit, prepare_data, run_experiment, sweep_lambda, PreparedData, ResultBundle};
use renki::io::{self, LoadOptions, Vocabulary};
use renki::metrics::{
    auc_by_relation, best_threshold, classification_error, corrupt_negatives_avoiding, weighted_mse, EvalReport,
};
use renki::report::emit_bound_table;
use renki::seed::derive_seed;
use renki::synthetic::Truth;
use renki::{EmbeddingTable, Error, Result, ScoreModel, Triple};

#[derive(Parser, Debug)]
#[command(
    name = "renki",
    version,
    about = "Neural knowledge-graph models: data, training, evaluation and bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample a synthetic graph and write train/test triples and the truth.
    Generate(ConfigArgs),
    /// Train a model and save it with its embeddings.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Train on this triple file instead of the configured data.
        #[arg(long)]
        triples: Option<PathBuf>,
    },
    /// Evaluate a saved model on a triple file and print a JSON report.
    Eval {
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        /// Generator truth (JSON) for MSE against the noiseless score.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Entity category file for negative sampling.
        #[arg(long)]
        categories: Option<PathBuf>,
        /// Known positives (e.g. training triples) to avoid as negatives and
        /// to pick the classification threshold on.
        #[arg(long)]
        known: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Protocol::Auto)]
        protocol: Protocol,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the capacity-bound table (CSV) for a model configuration.
    Bounds(ConfigArgs),
    /// Run replicated experiments and write the result bundle.
    Experiment(ConfigArgs),
    /// Run the experiment over the relation weight-ratio grid `lambdas`.
    SweepLambda(ConfigArgs),
    /// List every configuration key with its default.
    Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    /// MSE when every triple carries a label other than 1, AUC otherwise.
    Auto,
    Mse,
    Auc,
}

/// `--config FILE` plus one flag per configuration key (`train_size` becomes
/// `--train-size`); flags override the file.
#[derive(Debug, Clone, Default)]
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: BTreeMap<String, String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut pairs = match &self.file {
            Some(path) => parse_pairs(&std::fs::read_to_string(path)?, path)?,
            None => BTreeMap::new(),
        };
        pairs.extend(self.overrides.clone());
        ExperimentConfig::from_pairs(pairs)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = Self::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        if let Some(p) = m.get_one::<PathBuf>("config") {
            self.file = Some(p.clone());
        }
        for (k, _, _) in SCHEMA {
            if let Some(v) = m.get_one::<String>(k) {
                self.overrides.insert((*k).to_owned(), v.clone());
            }
        }
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file"),
        );
        SCHEMA.iter().fold(cmd, |cmd, (k, d, help)| {
            cmd.arg(
                Arg::new(*k)
                    .long(k.replace('_', "-"))
                    .value_name("VALUE")
                    .help(format!("{help} [default: {d}]"))
                    .help_heading("Configuration"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

/// Exit status per error category.
fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "config" => 3,
        "parse" => 4,
        "io" => 5,
        "shape" => 6,
        "data" => 7,
        "diverged" => 8,
        "budget" => 9,
        _ => 1,
    }
}

fn require_output(config: &ExperimentConfig) -> Result<PathBuf> {
    config
        .output
        .clone()
        .ok_or_else(|| Error::Config("`--output DIR` is required".into()))
}

fn write_vocabularies(dir: &Path, entities: &Vocabulary, relations: &Vocabulary) -> Result<()> {
    io::save_vocabulary(io::output_path(dir, "entities.txt")?, entities)?;
    io::save_vocabulary(io::output_path(dir, "relations.txt")?, relations)
}

fn generate(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let dir = require_output(&config)?;
    let data = prepare_data(&config, derive_seed(config.seed, 0), config.train_size)?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("`generate` needs a generator, not a dataset".into()))?;
    for (name, triples) in [("train.tsv", &data.train), ("test.tsv", &data.test)] {
        let text = io::format_triples(triples, &data.entities, &data.relations)?;
        std::fs::write(io::output_path(&dir, name)?, text)?;
    }
    io::save_json(dir.join("truth.json"), truth)?;
    write_vocabularies(&dir, &data.entities, &data.relations)?;
    println!(
        "wrote {} training and {} test triples to {}",
        data.train.len(),
        data.test.len(),
        dir.display()
    );
    Ok(())
}

fn train_cmd(args: &ConfigArgs, triples: Option<&Path>) -> Result<()> {
    let config = args.resolve()?;
    let dir = require_output(&config)?;
    let rep_seed = derive_seed(config.seed, 0);
    let data = match triples {
        None => prepare_data(&config, rep_seed, config.train_size)?,
        Some(path) => {
            let set = io::load_triples(path, &LoadOptions::default())?;
            let categories = match &config.categories {
                Some(c) => io::load_categories(c, &set.entities)?,
                None => vec![0; set.entities.len()],
            };
            PreparedData {
                train: set.triples,
                test: Vec::new(),
                truth: None,
                entities: set.entities,
                relations: set.relations,
                categories,
            }
        }
    };
    let (model, emb, report) = fit(&config, &data, rep_seed)?;
    io::save_json(io::output_path(&dir, "model.json")?, &model)?;
    io::save_embeddings(dir.join("embeddings.txt"), &emb, &data.entities)?;
    io::save_json(dir.join("train_report.json"), &report)?;
    write_vocabularies(&dir, &data.entities, &data.relations)?;
    println!(
        "trained {} on {} triples: loss {} -> {}{}",
        model.name(),
        data.train.len(),
        report.initial_loss,
        report.final_loss,
        if report.reverted {
            " (reverted to initial parameters)"
        } else {
            ""
        }
    );
    Ok(())
}

struct Eval<'a> {
    model: &'a Path,
    triples: &'a Path,
    truth: Option<&'a Path>,
    categories: Option<&'a Path>,
    known: Option<&'a Path>,
    protocol: Protocol,
    seed: u64,
}

fn eval_cmd(e: Eval<'_>) -> Result<()> {
    let entities = io::load_vocabulary(e.model.join("entities.txt"))?;
    let relations = io::load_vocabulary(e.model.join("relations.txt"))?;
    let model: ScoreModel = io::load_json(e.model.join("model.json"))?;
    let model = model.validated()?;
    let emb: EmbeddingTable = io::load_embeddings(e.model.join("embeddings.txt"), &entities, true)?.table;
    let options = LoadOptions {
        entities: Some(entities.clone()),
        relations: Some(relations.clone()),
    };
    let triples = io::load_triples(e.triples, &options)?.triples;
    let known = match e.known {
        Some(p) => io::load_triples(p, &options)?.triples,
        None => Vec::new(),
    };
    let labelled = !triples.is_empty() && triples.iter().all(|x| x.label.is_some());
    let use_mse = match e.protocol {
        Protocol::Mse => true,
        Protocol::Auc => false,
        Protocol::Auto => labelled && triples.iter().any(|x| x.label != Some(1.0)),
    };

    let mut report = EvalReport {
        n_train: known.len(),
        n_eval: triples.len(),
        ..EvalReport::default()
    };
    if use_mse {
        if !labelled {
            return Err(Error::Config("MSE evaluation needs labelled triples".into()));
        }
        let ones = vec![1.0; triples.len()];
        report.mse_out_vs_label = Some(weighted_mse(&model, &emb, &triples, &ones, |x| x.label.unwrap_or(0.0))?);
        if let Some(path) = e.truth {
            let truth: Truth = io::load_json(path)?;
            // Generated files name entities and relations by their truth index.
            let index = |vocab: &Vocabulary, i: usize| -> Result<usize> {
                let name = vocab.name(i).unwrap_or_default();
                name.parse()
                    .map_err(|_| Error::Config(format!("`{name}` is not a generator index")))
            };
            let mut lookup = BTreeMap::new();
            for x in &triples {
                let t = Triple::new(
                    index(&entities, x.head)?,
                    index(&relations, x.relation)?,
                    index(&entities, x.tail)?,
                );
                lookup.insert(x.key(), truth.gamma(&t)?);
            }
            report.mse_out = Some(weighted_mse(&model, &emb, &triples, &ones, |x| lookup[&x.key()])?);
        }
    } else {
        let categories = match e.categories {
            Some(p) => io::load_categories(p, &entities)?,
            None => vec![0; entities.len()],
        };
        let negatives = corrupt_negatives_avoiding(&triples, &known, &categories, derive_seed(e.seed, 0))?;
        let pos_s = model.batch_score(&emb, &triples)?;
        let neg_s = model.batch_score(&emb, &negatives)?;
        let (per, avg) = auc_by_relation(&triples, &pos_s, &negatives, &neg_s)?;
        report.auc_per_relation = per;
        report.weighted_auc_avg = Some(avg);
        if !known.is_empty() {
            let known_neg = corrupt_negatives_avoiding(&known, &triples, &categories, derive_seed(e.seed, 1))?;
            let t = best_threshold(&model.batch_score(&emb, &known)?, &model.batch_score(&emb, &known_neg)?)?;
            let scores: Vec<f64> = pos_s.iter().chain(&neg_s).copied().collect();
            let labels: Vec<bool> = (0..scores.len()).map(|i| i < pos_s.len()).collect();
            report.classification_error = Some(classification_error(&scores, &labels, t)?);
        }
        report.n_eval = pos_s.len() + neg_s.len();
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn print_bundle(bundle: &ResultBundle, config: &ExperimentConfig) -> Result<()> {
    println!("metric,train_size,lambda,mean,std,count");
    for s in &bundle.summary {
        println!(
            "{},{},{},{},{},{}",
            s.metric,
            s.train_size,
            s.lambda.map(|l| l.to_string()).unwrap_or_default(),
            s.mean,
            s.std,
            s.count
        );
    }
    if let Some(dir) = &config.output {
        for p in bundle.write(dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    let failed = bundle.failures();
    if failed > 0 {
        eprintln!("warning: {failed} of {} replications failed", bundle.rows.len());
        for r in bundle.rows.iter().filter(|r| r.error.is_some()) {
            eprintln!("  replication {}: {}", r.replication, r.error.as_deref().unwrap_or(""));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Generate(a) => generate(&a),
        Cmd::Train { config, triples } => train_cmd(&config, triples.as_deref()),
        Cmd::Eval {
            model,
            triples,
            truth,
            categories,
            known,
            protocol,
            seed,
        } => eval_cmd(Eval {
            model: &model,
            triples: &triples,
            truth: truth.as_deref(),
            categories: categories.as_deref(),
            known: known.as_deref(),
            protocol,
            seed,
        }),
        Cmd::Bounds(a) => {
            let config = a.resolve()?;
            let table = emit_bound_table(&config)?;
            match &config.output {
                Some(dir) => std::fs::write(io::output_path(dir, &format!("{}_bounds.csv", config.name))?, table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
        Cmd::Experiment(a) => {
            let config = a.resolve()?;
            print_bundle(&run_experiment(&config)?, &config)
        }
        Cmd::SweepLambda(a) => {
            let config = a.resolve()?;
            print_bundle(&sweep_lambda(&config)?, &config)
        }
        Cmd::Schema => {
            print!("{}", renki::config::schema_help());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
