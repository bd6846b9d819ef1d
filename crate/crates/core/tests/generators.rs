//! Statistical checks of the synthetic generators and negative sampling.

use std::collections::HashSet;

use renki::metrics::corrupt_negatives;
use renki::synthetic::{build_truth, sample_binary_positive_only, sample_regression, GeneratorKind, GeneratorSpec};
use renki::Triple;

fn spec(kind: GeneratorKind, n: usize, d: usize, k: usize, stds: &[f64], seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        kind,
        n_entities: n,
        dim: d,
        n_relations: k,
        noise_stds: stds.to_vec(),
        seed,
    }
}

#[test]
fn noise_levels_are_drawn_uniformly() {
    let data = sample_regression(&spec(GeneratorKind::ConcatLinear, 100, 10, 5, &[1.0, 5.0], 3), 100_000).unwrap();
    let ones = data.triples.iter().filter(|x| x.noise_scale == Some(1.0)).count();
    let frac = ones as f64 / 100_000.0;
    assert!((0.495..=0.505).contains(&frac), "{frac}");
}

#[test]
fn labels_are_conditionally_unbiased() {
    let truth = build_truth(&spec(GeneratorKind::VectorOffset, 20, 4, 2, &[1.0], 11)).unwrap();
    let x = Triple::new(3, 1, 7);
    let gamma = truth.gamma(&x).unwrap();
    // Repeat one triple by sampling until 10⁵ hits would be slow; instead
    // draw the noise directly through the fixed-triple path.
    let n = 100_000;
    let mut sum = 0.0;
    let mut drawn = 0;
    let mut seed = 0;
    while drawn < n {
        let batch = truth.sample_regression(40_000, &[1.0], seed).unwrap();
        seed += 1;
        for y in batch.iter().filter(|y| y.key() == x.key()) {
            sum += y.label.unwrap();
            drawn += 1;
        }
        if seed > 2_000 {
            break;
        }
    }
    let mean = sum / drawn as f64;
    // 4σ/√n
    assert!(
        (mean - gamma).abs() < 4.0 / (drawn as f64).sqrt(),
        "{mean} vs {gamma} over {drawn}"
    );
}

#[test]
fn retained_fraction_matches_mean_gamma() {
    let s = spec(GeneratorKind::Logistic { bias: -3.0 }, 100, 10, 3, &[], 21);
    let data = sample_binary_positive_only(&s, usize::MAX).unwrap();
    let truth = &data.truth;
    let total = 100 * 100 * 3;
    let mut mean = 0.0;
    let mut var = 0.0;
    for h in 0..100 {
        for r in 0..3 {
            for t in 0..100 {
                let p = truth.gamma(&Triple::new(h, r, t)).unwrap();
                mean += p;
                var += p * (1.0 - p);
            }
        }
    }
    mean /= total as f64;
    let se = var.sqrt() / total as f64;
    let frac = data.triples.len() as f64 / total as f64;
    assert!((frac - mean).abs() <= 3.0 * se, "{frac} vs {mean} (se {se})");
    let keys: HashSet<_> = data.triples.iter().map(Triple::key).collect();
    assert_eq!(keys.len(), data.triples.len());
}

#[test]
fn generation_is_reproducible() {
    let s = spec(GeneratorKind::ConcatLinear, 30, 4, 3, &[1.0, 5.0], 8);
    let a = sample_regression(&s, 1000).unwrap();
    let b = sample_regression(&s, 1000).unwrap();
    let bits = |t: &[Triple]| {
        t.iter()
            .map(|x| (x.key(), x.label.unwrap().to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.triples), bits(&b.triples));
    let c = sample_regression(&GeneratorSpec { seed: 9, ..s }, 1000).unwrap();
    assert_ne!(bits(&a.triples), bits(&c.triples));
}

#[test]
fn corruption_picks_each_side_half_the_time() {
    let triples: Vec<Triple> = (0..10_000).map(|i| Triple::new(i % 50, 0, (i * 7 + 3) % 50)).collect();
    let categories = vec![0; 50];
    let neg = corrupt_negatives(&triples, &categories, 4).unwrap();
    let heads = neg
        .iter()
        .zip(&triples)
        .filter(|(n, p)| n.head != p.head && n.tail == p.tail)
        .count();
    let tails = neg
        .iter()
        .zip(&triples)
        .filter(|(n, p)| n.tail != p.tail && n.head == p.head)
        .count();
    assert_eq!(heads + tails, triples.len());
    let frac = heads as f64 / triples.len() as f64;
    assert!((0.48..=0.52).contains(&frac), "{frac}");
}

#[test]
fn corruption_stays_in_category_and_avoids_positives() {
    let categories: Vec<usize> = (0..40).map(|e| e % 4).collect();
    let triples: Vec<Triple> = (0..400).map(|i| Triple::new(i % 40, i % 3, (i * 13) % 40)).collect();
    let known: HashSet<_> = triples.iter().map(Triple::key).collect();
    let neg = corrupt_negatives(&triples, &categories, 1).unwrap();
    for (n, p) in neg.iter().zip(&triples) {
        assert!(!known.contains(&n.key()));
        assert_eq!(categories[n.head], categories[p.head]);
        assert_eq!(categories[n.tail], categories[p.tail]);
    }
}
