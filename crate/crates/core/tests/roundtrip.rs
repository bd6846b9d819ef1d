//! Every emitted artifact parses back to what was written.

use std::path::Path;

use proptest::prelude::*;

use renki::config::ExperimentConfig;
use renki::io::{
    format_embeddings, format_triples, load_json, parse_embeddings, parse_triples, save_json, LoadOptions, TripleSet,
    Vocabulary,
};
use renki::model::OutputTransform;
use renki::seed::seeded_rng;
use renki::synthetic::{build_truth, GeneratorKind, GeneratorSpec, Truth};
use renki::{EmbeddingTable, ScoreModel, Triple};

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_:.-]{1,8}"
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

fn triple_set() -> impl Strategy<Value = TripleSet> {
    (
        prop::collection::btree_set(name(), 1..8),
        prop::collection::btree_set(name(), 1..4),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                any::<prop::sample::Index>(),
                any::<prop::sample::Index>(),
                prop::option::of(finite()),
                prop::option::of(0.0f64..100.0),
            ),
            0..40,
        ),
    )
        .prop_map(|(ents, rels, rows)| {
            let entities: Vocabulary = ents.into_iter().collect();
            let relations: Vocabulary = rels.into_iter().collect();
            let mut seen = std::collections::HashSet::new();
            let triples = rows
                .into_iter()
                .map(|(h, r, t, label, sigma)| Triple {
                    head: h.index(entities.len()),
                    relation: r.index(relations.len()),
                    tail: t.index(entities.len()),
                    label,
                    noise_scale: sigma,
                })
                .filter(|x| seen.insert((x.key(), x.label.map(f64::to_bits), x.noise_scale.map(f64::to_bits))))
                .collect();
            TripleSet {
                triples,
                entities,
                relations,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn triples_round_trip(set in triple_set()) {
        let text = format_triples(&set.triples, &set.entities, &set.relations).unwrap();
        let options = LoadOptions { entities: Some(set.entities.clone()), relations: Some(set.relations.clone()) };
        let back = parse_triples(&text, Path::new("fuzz"), &options).unwrap();
        prop_assert_eq!(back.triples.len(), set.triples.len());
        for (a, b) in back.triples.iter().zip(&set.triples) {
            prop_assert_eq!(a.key(), b.key());
            prop_assert_eq!(a.label.map(f64::to_bits), b.label.map(f64::to_bits));
            prop_assert_eq!(a.noise_scale.map(f64::to_bits), b.noise_scale.map(f64::to_bits));
        }
    }

    #[test]
    fn open_vocabulary_load_is_first_seen(set in triple_set()) {
        let text = format_triples(&set.triples, &set.entities, &set.relations).unwrap();
        let back = parse_triples(&text, Path::new("fuzz"), &LoadOptions::default()).unwrap();
        let again = format_triples(&back.triples, &back.entities, &back.relations).unwrap();
        prop_assert_eq!(again, text);
    }

    #[test]
    fn embeddings_round_trip(rows in prop::collection::vec(prop::collection::vec(finite(), 3), 1..10)) {
        let table = EmbeddingTable::from_rows(&rows).unwrap();
        let vocab = Vocabulary::numbered(rows.len());
        let text = format_embeddings(&table, &vocab).unwrap();
        let back = parse_embeddings(&text, Path::new("fuzz"), &vocab, true).unwrap();
        prop_assert_eq!(back.table, table);
    }
}

#[test]
fn truth_and_model_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [
        GeneratorKind::ConcatLinear,
        GeneratorKind::VectorOffset,
        GeneratorKind::Logistic { bias: -3.0 },
        GeneratorKind::Mip { bias: -2.5 },
    ] {
        let truth = build_truth(&GeneratorSpec {
            kind,
            n_entities: 7,
            dim: 3,
            n_relations: 2,
            noise_stds: vec![1.0],
            seed: 5,
        })
        .unwrap();
        let path = dir.path().join("truth.json");
        save_json(&path, &truth).unwrap();
        let back: Truth = load_json(&path).unwrap();
        assert_eq!(back, truth);
    }
    let mut r = seeded_rng(1);
    let models = [
        ScoreModel::cnkg(2, 3, &[5, 4], OutputTransform::Logistic, &mut r).unwrap(),
        ScoreModel::ipnkg(2, 3, &[5], 2, OutputTransform::Identity, &mut r).unwrap(),
        ScoreModel::transe(2, 3, 1.0, &mut r),
        ScoreModel::mip(2, 3, -1.0, 1.0, &mut r),
        ScoreModel::concat_linear(2, 3, 1.0, &mut r),
    ];
    for m in models {
        let path = dir.path().join("model.json");
        save_json(&path, &m).unwrap();
        let back: ScoreModel = load_json(&path).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn config_text_round_trips() {
    let c = ExperimentConfig::from_pairs([
        ("generator", "mip"),
        ("loss", "contrastive"),
        ("weighting", "relation_ratio"),
        ("lambda", "100"),
        ("low_noise_relations", "0,1"),
        ("hidden", "64,32"),
        ("optimizer", "sgd"),
        ("momentum", "0.5"),
    ])
    .unwrap();
    assert_eq!(ExperimentConfig::parse(&c.to_text(), Path::new("c")).unwrap(), c);
}
