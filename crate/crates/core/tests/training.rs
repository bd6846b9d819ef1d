//! Training-loop behavior: descent, freezing, determinism and fit quality.

use rand_chacha::ChaCha8Rng;

use renki::model::OutputTransform;
use renki::seed::{derive_seed, seeded_rng};
use renki::synthetic::{build_truth, GeneratorKind, GeneratorSpec, Truth};
use renki::training::{train, weighted_risk, Loss, Optimizer, TrainConfig, WeightScheme};
use renki::{EmbeddingTable, ScoreModel, Triple};

fn truth(kind: GeneratorKind, n: usize, d: usize, k: usize, seed: u64) -> Truth {
    build_truth(&GeneratorSpec {
        kind,
        n_entities: n,
        dim: d,
        n_relations: k,
        noise_stds: vec![1.0],
        seed,
    })
    .unwrap()
}

fn noiseless(t: &Truth, n: usize, seed: u64) -> Vec<Triple> {
    t.sample_regression(n, &[0.0], seed).unwrap()
}

fn cnkg(k: usize, d: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> ScoreModel {
    ScoreModel::cnkg(k, d, hidden, OutputTransform::Identity, rng).unwrap()
}

#[test]
fn full_batch_descent_is_monotone() {
    let mut monotone = 0;
    for s in 0..100 {
        let seed = derive_seed(77, s);
        let t = truth(GeneratorKind::ConcatLinear, 20, 4, 2, seed);
        let data = t.sample_regression(200, &[1.0, 5.0], seed).unwrap();
        let mut rng = seeded_rng(seed);
        let mut model = cnkg(2, 4, &[8], &mut rng);
        let mut emb = EmbeddingTable::random(20, 4, 1.0, &mut rng).unwrap();
        let config = TrainConfig {
            optimizer: Optimizer::sgd(1e-3),
            epochs: 30,
            batch_size: data.len(),
            seed,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &mut emb, &data, &config).unwrap();
        let mut prev = report.initial_loss;
        let ok = report.loss_trace.iter().all(|&l| {
            let down = l <= prev;
            prev = l;
            down
        });
        monotone += ok as usize;
    }
    assert!(monotone >= 95, "monotone on {monotone}/100 seeds");
}

#[test]
fn frozen_embeddings_are_bitwise_unchanged() {
    let t = truth(GeneratorKind::ConcatLinear, 15, 3, 2, 1);
    let data = t.sample_regression(300, &[1.0], 2).unwrap();
    let mut rng = seeded_rng(3);
    let mut model = cnkg(2, 3, &[6], &mut rng);
    let mut emb = t.embeddings.clone();
    emb.freeze_all();
    let before_emb = emb.clone();
    let before = model.parameters();
    let report = train(&mut model, &mut emb, &data, &TrainConfig::default()).unwrap();
    assert!(!report.reverted);
    assert_eq!(emb, before_emb);
    assert_ne!(model.parameters(), before);
}

#[test]
fn partially_frozen_rows_stay_put() {
    let t = truth(GeneratorKind::ConcatLinear, 12, 3, 1, 4);
    let data = t.sample_regression(400, &[0.5], 5).unwrap();
    let mut rng = seeded_rng(6);
    let mut model = ScoreModel::concat_linear(1, 3, 0.1, &mut rng);
    let mut emb = EmbeddingTable::random(12, 3, 1.0, &mut rng).unwrap();
    for i in (0..12).step_by(2) {
        emb.set_frozen(i, true);
    }
    let before = emb.clone();
    train(&mut model, &mut emb, &data, &TrainConfig::default()).unwrap();
    for i in 0..12 {
        if i % 2 == 0 {
            assert_eq!(emb.row(i), before.row(i));
        } else {
            assert_ne!(emb.row(i), before.row(i));
        }
    }
}

#[test]
fn only_the_touched_relations_change() {
    let t = truth(GeneratorKind::ConcatLinear, 10, 2, 3, 7);
    let data: Vec<Triple> = noiseless(&t, 500, 8).into_iter().filter(|x| x.relation != 1).collect();
    let mut rng = seeded_rng(9);
    let mut model = cnkg(3, 2, &[4], &mut rng);
    let mut emb = t.embeddings.clone();
    emb.freeze_all();
    let before = model.parameters();
    train(&mut model, &mut emb, &data, &TrainConfig::default()).unwrap();
    let after = model.parameters();
    for k in 0..3 {
        let range = model.relation_param_range(k);
        let changed = before[range.clone()] != after[range];
        assert_eq!(changed, k != 1, "relation {k}");
    }
}

#[test]
fn training_is_deterministic() {
    let t = truth(GeneratorKind::VectorOffset, 15, 3, 2, 10);
    let data = t.sample_regression(300, &[1.0, 5.0], 11).unwrap();
    let run = |loss: Loss| {
        let mut rng = seeded_rng(12);
        let mut model = cnkg(2, 3, &[8], &mut rng);
        let mut emb = EmbeddingTable::random(15, 3, 1.0, &mut rng).unwrap();
        let config = TrainConfig {
            loss,
            epochs: 10,
            seed: 13,
            weighting: WeightScheme::inverse_variance(),
            ..TrainConfig::default()
        };
        let report = train(&mut model, &mut emb, &data, &config).unwrap();
        (model, emb, report)
    };
    for loss in [Loss::WeightedSquare, Loss::contrastive(1.0)] {
        let a = run(loss);
        let b = run(loss);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}

#[test]
fn worse_final_loss_reverts_to_start() {
    let t = truth(GeneratorKind::ConcatLinear, 10, 2, 1, 14);
    let data = t.sample_regression(100, &[1.0], 15).unwrap();
    let mut rng = seeded_rng(16);
    let mut model = cnkg(1, 2, &[4], &mut rng);
    let mut emb = t.embeddings.clone();
    let start = (model.clone(), emb.clone());
    let config = TrainConfig {
        optimizer: Optimizer::sgd(0.5),
        epochs: 3,
        batch_size: 1,
        ..TrainConfig::default()
    };
    match train(&mut model, &mut emb, &data, &config) {
        Ok(report) if report.reverted => {
            assert_eq!(report.final_loss, report.initial_loss);
            assert_eq!((model, emb), start);
        }
        Ok(report) => assert!(report.final_loss <= report.initial_loss),
        Err(e) => assert_eq!(e.category(), "diverged"),
    }
}

#[test]
fn realizable_fit_reaches_small_risk() {
    let t = truth(GeneratorKind::ConcatLinear, 30, 4, 2, 17);
    let data = noiseless(&t, 2000, 18);
    let mut rng = seeded_rng(19);
    let mut model = ScoreModel::concat_linear(2, 4, 0.1, &mut rng);
    let mut emb = t.embeddings.clone();
    emb.freeze_all();
    let config = TrainConfig {
        optimizer: Optimizer::adam(1e-2),
        ..TrainConfig::default()
    };
    train(&mut model, &mut emb, &data, &config).unwrap();
    let risk = weighted_risk(&model, &emb, &data, &vec![1.0; data.len()]).unwrap();
    assert!(risk < 1e-3, "risk {risk}");
}

#[test]
fn misspecified_fit_leaves_positive_risk_that_shrinks_with_width() {
    let mut risks = [0.0; 2];
    for s in 0..5 {
        let t = truth(GeneratorKind::VectorOffset, 30, 3, 2, 100 + s);
        let data = noiseless(&t, 2000, 200 + s);
        for (slot, width) in [32, 256].into_iter().enumerate() {
            let mut rng = seeded_rng(300 + s);
            let mut model = cnkg(2, 3, &[width], &mut rng);
            let mut emb = t.embeddings.clone();
            emb.freeze_all();
            let report = train(&mut model, &mut emb, &data, &TrainConfig::default()).unwrap();
            assert!(report.final_loss > 0.0);
            risks[slot] += report.final_loss / 5.0;
        }
    }
    assert!(risks[0] > 0.0 && risks[1] > 0.0);
    assert!(risks[1] < risks[0], "width 32: {}, width 256: {}", risks[0], risks[1]);
}
