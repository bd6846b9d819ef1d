//! Bound table for a model configuration.

use std::fmt::Write as _;

use crate::bounds::{
    capped_weight_stat_term, delta_stat, harmonic_weight_stat_term, pdim_fixed_embedding, pdim_trainable_embedding,
    vc_partition_bound, Activation, BoundInputs, GrowthValue, ModelFamily, Regime, RelationShape,
};
use crate::config::{DataSource, ExperimentConfig};
use crate::error::Result;
use crate::experiment::build_model;
use crate::io::{self, LoadOptions};
use crate::model::ScoreModel;
use crate::training::harmonic_mean;

/// Shapes and constants the bound table is evaluated at: `N`, `K` from the
/// generator or dataset, `n = train_size`, `B = cap` and `σ_H²` the harmonic
/// mean of the squared noise levels.
pub fn bound_inputs(config: &ExperimentConfig) -> Result<(BoundInputs, Option<ModelFamily>)> {
    let (n_entities, n_relations) = match &config.data {
        DataSource::Generator {
            n_entities,
            n_relations,
            ..
        } => (*n_entities, *n_relations),
        DataSource::Dataset { path } => {
            let set = io::load_triples(path, &LoadOptions::default())?;
            (set.entities.len(), set.relations.len())
        }
    };
    let model = build_model(config, n_relations, 0)?;
    let (mut inputs, family) = match &model {
        ScoreModel::CNkg { .. } => (BoundInputs::from_model(&model, n_entities)?, Some(ModelFamily::CNkg)),
        ScoreModel::IpNkg { .. } => (BoundInputs::from_model(&model, n_entities)?, Some(ModelFamily::IpNkg)),
        _ => {
            // Shallow models: one layer holding the relation's parameters.
            let relations = (0..n_relations)
                .map(|k| RelationShape {
                    widths: vec![2 * config.dim, 1],
                    layer_params: vec![model.relation_param_range(k).len().max(1)],
                })
                .collect();
            let inputs = BoundInputs {
                n_entities,
                dim: config.dim,
                relations,
                activation: Activation::RELU,
                score_bound: 1.0,
                harmonic_noise_var: 1.0,
                sample_size: 1,
                delta_opt: 0.0,
            };
            (inputs, None)
        }
    };
    let variances: Vec<f64> = config.noise_stds.iter().map(|s| s * s).collect();
    inputs.harmonic_noise_var = if variances.is_empty() {
        0.0
    } else {
        harmonic_mean(&variances)
    };
    inputs.score_bound = config.get("cap").and_then(|v| v.parse().ok()).unwrap_or(1.0);
    inputs.sample_size = config.train_size;
    Ok((inputs, family))
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join("|")
}

/// CSV table `bound,inputs,value,clamped` of every applicable bound. Values
/// are growth functions with unit constants unless the row names a constant.
pub fn emit_bound_table(config: &ExperimentConfig) -> Result<String> {
    let (inp, family) = bound_inputs(config)?;
    let mut out = String::from("bound,inputs,value,clamped\n");
    let mut row = |name: &str, inputs: String, g: GrowthValue| {
        writeln!(out, "{name},{inputs},{},{}", g.value, g.clamped).unwrap();
    };
    let layers: Vec<usize> = inp.relations.iter().map(RelationShape::depth).collect();
    let params: Vec<usize> = inp.relations.iter().map(RelationShape::params).collect();
    let (n, d, k, l) = (inp.n_entities, inp.dim, inp.n_relations(), inp.depth());

    row(
        "pdim_fixed_embedding",
        format!("L_k={};W_k={}", join(&layers), join(&params)),
        pdim_fixed_embedding(&layers, &params)?,
    );
    let trainable = pdim_trainable_embedding(n, d, k, inp.avg_params(), l)?;
    row(
        "pdim_trainable_embedding",
        format!("N={n};D={d};K={k};W={};L={l}", inp.avg_params()),
        trainable,
    );
    if let Some(f) = family {
        let b = vc_partition_bound(&inp, f)?;
        let fam = match f {
            ModelFamily::CNkg => "cnkg",
            ModelFamily::IpNkg => "ipnkg",
        };
        row(
            "vc_partition_bound",
            format!(
                "family={fam};N={n};D={d};K={k};L={l};S={};Q={};U={};L_bar={}",
                inp.activation.pieces, inp.activation.degree, b.u, b.l_bar
            ),
            GrowthValue {
                value: b.value,
                clamped: false,
            },
        );
    }
    let stat_inputs = format!(
        "N={n};D={d};K={k};KW={};L={l};n={};B={};sigma_H2={}",
        inp.total_params(),
        inp.sample_size,
        inp.score_bound,
        inp.harmonic_noise_var
    );
    row(
        "delta_stat_in_sample",
        stat_inputs.clone(),
        delta_stat(&inp, Regime::InSample)?,
    );
    row(
        "delta_stat_out_of_sample",
        stat_inputs,
        delta_stat(&inp, Regime::OutOfSample)?,
    );
    let p = trainable.value;
    row(
        "harmonic_weight_stat_term",
        format!(
            "constant=4(27sigma_H2+B2);p={p};n={};B={};sigma_H2={}",
            inp.sample_size, inp.score_bound, inp.harmonic_noise_var
        ),
        harmonic_weight_stat_term(inp.harmonic_noise_var, inp.score_bound, p, inp.sample_size),
    );
    row(
        "capped_weight_stat_term",
        format!("constant=22132;p={p};n={};B={}", inp.sample_size, inp.score_bound),
        capped_weight_stat_term(inp.score_bound, p, inp.sample_size),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_match_direct_calls() {
        let c = ExperimentConfig::from_pairs([("hidden", "16"), ("entities", "50"), ("relations", "3")]).unwrap();
        let t = emit_bound_table(&c).unwrap();
        assert_eq!(t, emit_bound_table(&c).unwrap());
        for name in [
            "pdim_fixed_embedding",
            "pdim_trainable_embedding",
            "vc_partition_bound",
            "delta_stat_in_sample",
            "delta_stat_out_of_sample",
            "capped_weight_stat_term",
        ] {
            assert!(t.lines().any(|l| l.starts_with(name)), "{name}");
        }
        let (inp, _) = bound_inputs(&c).unwrap();
        let direct = delta_stat(&inp, Regime::OutOfSample).unwrap().value;
        let line = t.lines().find(|l| l.starts_with("delta_stat_out_of_sample")).unwrap();
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, direct);
        // W_k = 20·16 + 16 + 16 + 1
        assert_eq!(inp.relations[0].params(), 353);
    }

    #[test]
    fn shallow_models_skip_the_partition_row() {
        let c = ExperimentConfig::from_pairs([("model", "transe")]).unwrap();
        let t = emit_bound_table(&c).unwrap();
        assert!(!t.contains("vc_partition_bound"));
        assert!(t.contains("L_k=1|1|1|1|1;W_k=10|10|10|10|10"));
    }
}
