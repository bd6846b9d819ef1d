//! Weighted empirical risk minimization and margin-contrastive training.
//!
//! `train` minimizes either the weighted squared risk `(1/n) Σ w_i (y_i − f(x_i))²`
//! or a weighted margin loss over corrupted triples, with mini-batches drawn
//! without replacement and reshuffled every epoch from the configured seed.

mod init;
mod optim;
mod weights;

pub use init::{init_embeddings, InitStrategy};
pub use optim::Optimizer;
pub use weights::{compute_weights, harmonic_mean, WeightRule, WeightScheme};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, ScoreModel, Triple};
use optim::OptimizerState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    WeightedSquare,
    MarginContrastive { margin: f64, negatives_per_positive: usize },
}

impl Loss {
    pub fn contrastive(margin: f64) -> Self {
        Loss::MarginContrastive {
            margin,
            negatives_per_positive: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weighting: WeightScheme,
    /// Entity categories for contrastive corruption; `None` corrupts uniformly
    /// over all entities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_categories: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::WeightedSquare,
            optimizer: Optimizer::default(),
            epochs: 100,
            batch_size: 128,
            seed: 0,
            weighting: WeightScheme::uniform(),
            negative_categories: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        self.optimizer.validate()?;
        if let Loss::MarginContrastive {
            margin,
            negatives_per_positive,
        } = self.loss
        {
            if !(margin > 0.0 && margin.is_finite()) {
                return Err(Error::config("margin must be positive"));
            }
            if negatives_per_positive == 0 {
                return Err(Error::config("need at least one negative per positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Training objective after each epoch.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
    pub best_loss: f64,
    /// Final loss minus the best loss seen: a computable stand-in for the
    /// optimization slack.
    pub delta_opt: f64,
    /// True when the run ended above its starting loss and the starting
    /// parameters were restored.
    pub reverted: bool,
}

/// `(1/n) Σ w_i (y_i − f(x_i))²`
pub fn weighted_risk(model: &ScoreModel, emb: &EmbeddingTable, triples: &[Triple], weights: &[f64]) -> Result<f64> {
    if triples.len() != weights.len() {
        return Err(Error::shape("weights", triples.len(), weights.len()));
    }
    if triples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (x, w)) in triples.iter().zip(weights).enumerate() {
        let y = x.label.ok_or(Error::MissingLabel { index: i })?;
        let r = y - model.score(emb, x)?;
        total += w * r * r;
    }
    Ok(total / triples.len() as f64)
}

/// Mean over negatives of `max(0, margin − f(pos) + f(neg))`.
pub fn contrastive_loss(
    model: &ScoreModel,
    emb: &EmbeddingTable,
    positive: &Triple,
    negatives: &[Triple],
    margin: f64,
) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Empty("contrastive loss needs at least one negative"));
    }
    let pos = model.score(emb, positive)?;
    let mut total = 0.0;
    for neg in negatives {
        total += hinge(margin, pos, model.score(emb, neg)?);
    }
    Ok(total / negatives.len() as f64)
}

fn hinge(margin: f64, pos: f64, neg: f64) -> f64 {
    (margin - pos + neg).max(0.0)
}

/// Replaces head or tail (fair coin) with a different entity, drawn uniformly
/// from all entities or from the same category when categories are given.
pub(crate) fn corrupt_uniform<R: Rng + ?Sized>(
    x: &Triple,
    n_entities: usize,
    categories: Option<&CategoryIndex>,
    rng: &mut R,
) -> Triple {
    let corrupt_head = rng.random_bool(0.5);
    let original = if corrupt_head { x.head } else { x.tail };
    let replacement = match categories {
        Some(idx) => idx.draw_other(original, rng).unwrap_or(original),
        None if n_entities > 1 => {
            let v = rng.random_range(0..n_entities - 1);
            if v >= original {
                v + 1
            } else {
                v
            }
        }
        None => original,
    };
    let mut neg = Triple::new(x.head, x.relation, x.tail);
    if corrupt_head {
        neg.head = replacement;
    } else {
        neg.tail = replacement;
    }
    neg
}

/// Entities grouped by category, for same-category corruption.
#[derive(Debug, Clone)]
pub struct CategoryIndex {
    of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl CategoryIndex {
    pub fn new(categories: &[usize]) -> Self {
        let n_cat = categories.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); n_cat];
        for (e, &c) in categories.iter().enumerate() {
            members[c].push(e);
        }
        Self {
            of: categories.to_vec(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn category_size(&self, entity: usize) -> usize {
        self.members[self.of[entity]].len()
    }

    /// A uniformly drawn entity of the same category other than `entity`.
    pub fn draw_other<R: Rng + ?Sized>(&self, entity: usize, rng: &mut R) -> Option<usize> {
        let m = &self.members[self.of[entity]];
        if m.len() < 2 {
            return None;
        }
        let pos = m.binary_search(&entity).expect("entity listed in its category");
        let k = rng.random_range(0..m.len() - 1);
        Some(if k >= pos { m[k + 1] } else { m[k] })
    }
}

struct Objective<'a> {
    triples: &'a [Triple],
    weights: Vec<f64>,
    loss: Loss,
    /// Fixed negatives used to evaluate (not train) the contrastive objective.
    eval_negatives: Vec<Vec<Triple>>,
}

impl Objective<'_> {
    fn value(&self, model: &ScoreModel, emb: &EmbeddingTable) -> Result<f64> {
        match self.loss {
            Loss::WeightedSquare => weighted_risk(model, emb, self.triples, &self.weights),
            Loss::MarginContrastive { margin, .. } => {
                let mut total = 0.0;
                for ((x, w), negs) in self.triples.iter().zip(&self.weights).zip(&self.eval_negatives) {
                    total += w * contrastive_loss(model, emb, x, negs, margin)?;
                }
                Ok(total / self.triples.len() as f64)
            }
        }
    }
}

/// Trains `model` and `emb` in place. Frozen embedding rows are never updated.
pub fn train(
    model: &mut ScoreModel,
    emb: &mut EmbeddingTable,
    triples: &[Triple],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if triples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if config.loss == Loss::WeightedSquare {
        if let Some(i) = triples.iter().position(|x| x.label.is_none()) {
            return Err(Error::MissingLabel { index: i });
        }
    }
    let categories = match &config.negative_categories {
        Some(c) if c.len() != emb.n_entities() => {
            return Err(Error::shape("entity categories", emb.n_entities(), c.len()))
        }
        Some(c) => Some(CategoryIndex::new(c)),
        None => None,
    };
    // Validates every index up front so errors surface before any update.
    model.batch_score(emb, triples)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = compute_weights(&config.weighting, triples)?;
    let eval_negatives = match config.loss {
        Loss::WeightedSquare => Vec::new(),
        Loss::MarginContrastive {
            negatives_per_positive, ..
        } => {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5_EED0_E7A1);
            triples
                .iter()
                .map(|x| {
                    (0..negatives_per_positive)
                        .map(|_| corrupt_uniform(x, emb.n_entities(), categories.as_ref(), &mut eval_rng))
                        .collect()
                })
                .collect()
        }
    };
    let objective = Objective {
        triples,
        weights,
        loss: config.loss,
        eval_negatives,
    };

    let initial_loss = objective.value(model, emb)?;
    if !initial_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let start_params = model.parameters();
    let start_emb = emb.as_slice().to_vec();

    let param_mask = model.trainable_mask();
    let emb_mask: Vec<bool> = emb
        .frozen()
        .iter()
        .flat_map(|&f| std::iter::repeat_n(!f, emb.dim()))
        .collect();
    let train_embeddings = emb_mask.iter().any(|&m| m);
    let mut param_state = OptimizerState::new(config.optimizer, model.num_params());
    let mut emb_state = OptimizerState::new(config.optimizer, if train_embeddings { emb_mask.len() } else { 0 });

    let mut param_grad = vec![0.0; model.num_params()];
    let mut emb_grad = vec![0.0; emb.as_slice().len()];
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut best_loss = initial_loss;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            param_grad.iter_mut().for_each(|g| *g = 0.0);
            emb_grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &triples[i];
                let w = objective.weights[i];
                match config.loss {
                    Loss::WeightedSquare => {
                        let y = x.label.expect("labels checked");
                        model.accumulate_gradients(
                            emb,
                            x,
                            |f| -2.0 * w * (y - f) * scale,
                            &mut param_grad,
                            &mut emb_grad,
                        )?;
                    }
                    Loss::MarginContrastive {
                        margin,
                        negatives_per_positive,
                    } => {
                        let per = w * scale / negatives_per_positive as f64;
                        let pos = model.score(emb, x)?;
                        let mut pos_weight = 0.0;
                        for _ in 0..negatives_per_positive {
                            let neg = corrupt_uniform(x, emb.n_entities(), categories.as_ref(), &mut rng);
                            if hinge(margin, pos, model.score(emb, &neg)?) > 0.0 {
                                pos_weight += per;
                                model.accumulate_gradients(emb, &neg, |_| per, &mut param_grad, &mut emb_grad)?;
                            }
                        }
                        if pos_weight > 0.0 {
                            model.accumulate_gradients(emb, x, |_| -pos_weight, &mut param_grad, &mut emb_grad)?;
                        }
                    }
                }
            }
            let mut params = model.parameters();
            param_state.step(&mut params, &param_grad, &param_mask);
            model.set_parameters(&params)?;
            if train_embeddings {
                emb_state.step(emb.as_mut_slice(), &emb_grad, &emb_mask);
            }
        }
        let loss = objective.value(model, emb)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        best_loss = best_loss.min(loss);
        loss_trace.push(loss);
    }

    let mut final_loss = *loss_trace.last().expect("epochs >= 1");
    let reverted = final_loss > initial_loss;
    if reverted {
        model.set_parameters(&start_params)?;
        emb.as_mut_slice().copy_from_slice(&start_emb);
        final_loss = initial_loss;
    }
    Ok(TrainReport {
        initial_loss,
        loss_trace,
        final_loss,
        best_loss,
        delta_opt: final_loss - best_loss,
        reverted,
    })
}
