//! Evaluation: weighted MSE against a known score, negative-edge AUC and
//! thresholded classification error.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, ScoreModel, Triple};
use crate::training::CategoryIndex;

/// Rejection-resampling attempts before a corruption is declared impossible.
pub const CORRUPTION_RETRIES: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// In-sample `‖f − γ‖²_{w,n}` with the training weights.
    pub weighted_mse_in: Option<f64>,
    /// Out-of-sample weighted MSE against `γ`.
    pub weighted_mse_out: Option<f64>,
    /// Out-of-sample unweighted MSE against `γ`.
    pub mse_out: Option<f64>,
    /// Out-of-sample unweighted MSE against the noisy labels.
    pub mse_out_vs_label: Option<f64>,
    pub auc_per_relation: BTreeMap<usize, f64>,
    pub weighted_auc_avg: Option<f64>,
    pub classification_error: Option<f64>,
    pub n_train: usize,
    pub n_eval: usize,
}

/// `(1/n) Σ w_i (f(x_i) − γ(x_i))²`
pub fn weighted_mse(
    model: &ScoreModel,
    emb: &EmbeddingTable,
    triples: &[Triple],
    weights: &[f64],
    truth: impl Fn(&Triple) -> f64,
) -> Result<f64> {
    if triples.len() != weights.len() {
        return Err(Error::shape("weights", triples.len(), weights.len()));
    }
    if triples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, w) in triples.iter().zip(weights) {
        let r = model.score(emb, x)? - truth(x);
        total += w * r * r;
    }
    Ok(total / triples.len() as f64)
}

/// One negative per positive: head or tail (fair coin) replaced by a different
/// entity of the same category, avoiding known positives. If the chosen side's
/// category has a single entity the other side is corrupted instead.
pub fn corrupt_negatives(triples: &[Triple], categories: &[usize], seed: u64) -> Result<Vec<Triple>> {
    corrupt_negatives_avoiding(triples, &[], categories, seed)
}

/// As [`corrupt_negatives`], additionally avoiding every triple in `known`
/// (e.g. the training positives when corrupting a test split).
pub fn corrupt_negatives_avoiding(
    triples: &[Triple],
    known: &[Triple],
    categories: &[usize],
    seed: u64,
) -> Result<Vec<Triple>> {
    let index = CategoryIndex::new(categories);
    let positives: HashSet<(usize, usize, usize)> = triples.iter().chain(known).map(Triple::key).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            for e in [x.head, x.tail] {
                if e >= index.len() {
                    return Err(Error::IndexOutOfBounds {
                        kind: "entity category",
                        index: e,
                        len: index.len(),
                    });
                }
            }
            let head_first = rng.random_bool(0.5);
            let sides = if head_first { [true, false] } else { [false, true] };
            for corrupt_head in sides {
                let original = if corrupt_head { x.head } else { x.tail };
                if index.category_size(original) < 2 {
                    continue;
                }
                for _ in 0..CORRUPTION_RETRIES {
                    let e = index.draw_other(original, &mut rng).expect("category has 2+ members");
                    let mut neg = Triple::new(x.head, x.relation, x.tail);
                    if corrupt_head {
                        neg.head = e;
                    } else {
                        neg.tail = e;
                    }
                    if !positives.contains(&neg.key()) {
                        return Ok(neg);
                    }
                }
            }
            Err(Error::Uncorruptable { index: i })
        })
        .collect()
}

/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` via midranks (Mann–Whitney U).
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Empty("AUC needs positive and negative scores"));
    }
    if positive.iter().chain(negative).any(|v| v.is_nan()) {
        return Err(Error::config("AUC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the positive rank sum keeps midranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let mid2 = (i + j + 2) as u128;
        let pos_in_tie = all[i..=j].iter().filter(|e| e.1).count() as u128;
        rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let np = positive.len() as u128;
    let nn = negative.len() as u128;
    // 2U = 2R − np(np+1)
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Per-relation AUC of positives against their matched negatives, and the
/// average weighted by the per-relation evaluation counts.
pub fn auc_by_relation(
    positives: &[Triple],
    positive_scores: &[f64],
    negatives: &[Triple],
    negative_scores: &[f64],
) -> Result<(BTreeMap<usize, f64>, f64)> {
    if positives.len() != positive_scores.len() {
        return Err(Error::shape("positive scores", positives.len(), positive_scores.len()));
    }
    if negatives.len() != negative_scores.len() {
        return Err(Error::shape("negative scores", negatives.len(), negative_scores.len()));
    }
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (x, &s) in positives.iter().zip(positive_scores) {
        groups.entry(x.relation).or_default().0.push(s);
    }
    for (x, &s) in negatives.iter().zip(negative_scores) {
        groups.entry(x.relation).or_default().1.push(s);
    }
    let mut per = BTreeMap::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, (p, n)) in groups {
        if p.is_empty() || n.is_empty() {
            continue;
        }
        let a = auc(&p, &n)?;
        let size = p.len() + n.len();
        total += a * size as f64;
        count += size;
        per.insert(r, a);
    }
    if count == 0 {
        return Err(Error::Empty("no relation has both positives and negatives"));
    }
    Ok((per, total / count as f64))
}

/// Fraction of samples where `score > threshold` disagrees with the label.
pub fn classification_error(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("labels", scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s > threshold) != y)
        .count();
    Ok(wrong as f64 / scores.len() as f64)
}

/// Threshold minimizing the classification error of `positive` vs `negative`
/// scores (midpoint between adjacent distinct scores).
pub fn best_threshold(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Empty("threshold selection needs both classes"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // threshold below everything: all predicted positive, errors = #negatives
    let mut errors = negative.len() as i64;
    let mut best = (errors, all[0].0 - 1.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        for e in &all[i..=j] {
            errors += if e.1 { 1 } else { -1 };
        }
        let t = if j + 1 < all.len() {
            0.5 * (all[j].0 + all[j + 1].0)
        } else {
            all[j].0
        };
        if errors < best.0 {
            best = (errors, t);
        }
        i = j + 1;
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let emb = EmbeddingTable::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let model = ScoreModel::ConcatLinear {
            weights: vec![vec![1.0, 1.0]],
        };
        let x = [Triple::new(0, 0, 1)];
        let same = weighted_mse(&model, &emb, &x, &[1.0], |t| model.score(&emb, t).unwrap()).unwrap();
        assert_eq!(same, 0.0);
        assert_eq!(weighted_mse(&model, &emb, &x, &[1.0], |_| 0.0).unwrap(), 9.0);
    }

    #[test]
    fn two_entity_category_has_one_alternative() {
        let pos = [Triple::new(0, 0, 1)];
        for seed in 0..40 {
            let neg = corrupt_negatives(&pos, &[0, 0], seed).unwrap()[0];
            assert!(neg.key() == (1, 0, 1) || neg.key() == (0, 0, 0), "{neg:?}");
        }
    }

    #[test]
    fn corruption_respects_categories() {
        let pos = [Triple::new(0, 0, 2)];
        for seed in 0..40 {
            let neg = corrupt_negatives(&pos, &[0, 0, 1, 1], seed).unwrap()[0];
            assert!(neg.key() == (1, 0, 2) || neg.key() == (0, 0, 3), "{neg:?}");
        }
    }

    #[test]
    fn singleton_categories_are_uncorruptable() {
        let pos = [Triple::new(0, 0, 1)];
        assert!(matches!(
            corrupt_negatives(&pos, &[0, 1], 0),
            Err(Error::Uncorruptable { index: 0 })
        ));
        // every alternative is itself a positive
        let pos = [Triple::new(0, 0, 1), Triple::new(1, 0, 1), Triple::new(0, 0, 0)];
        assert!(corrupt_negatives(&pos, &[0, 0], 0).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1], &[0.5, 0.1]).unwrap(), 0.25);
        assert!(auc(&[], &[1.0]).is_err());
        assert!(auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn classification_error_examples() {
        let s = [0.9, 0.1, 0.8, 0.2];
        assert_eq!(classification_error(&s, &[true, false, true, false], 0.5).unwrap(), 0.0);
        assert_eq!(classification_error(&s, &[false, true, false, true], 0.5).unwrap(), 1.0);
        assert_eq!(classification_error(&s, &[true, true, false, false], 0.5).unwrap(), 0.5);
        assert!(classification_error(&s, &[true], 0.5).is_err());
    }

    #[test]
    fn best_threshold_separates() {
        let t = best_threshold(&[3.0, 4.0, 5.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!(t > 2.0 && t < 3.0);
        let t = best_threshold(&[3.0], &[5.0, 6.0]).unwrap();
        assert_eq!(
            classification_error(&[3.0, 5.0, 6.0], &[true, false, false], t).unwrap(),
            1.0 / 3.0
        );
    }

    #[test]
    fn relation_auc_weighting() {
        let p = [Triple::new(0, 0, 1), Triple::new(0, 1, 1), Triple::new(1, 1, 0)];
        let n = [Triple::new(0, 0, 0), Triple::new(1, 1, 1), Triple::new(0, 1, 0)];
        let (per, avg) = auc_by_relation(&p, &[1.0, 1.0, 0.0], &n, &[0.0, 0.5, 0.5]).unwrap();
        assert_eq!(per[&0], 1.0);
        assert_eq!(per[&1], 0.5);
        assert!((avg - (1.0 * 2.0 + 0.5 * 4.0) / 6.0).abs() < 1e-15);
    }
}
