//! Per-sample weights `w(x)` for the weighted empirical risk.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Triple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    Uniform,
    /// `w_i = σ_H² / σ_i²` with `σ_H²` the harmonic mean of the per-sample variances.
    InverseVariance,
    /// `w(x) = B² / max{σ(x)², B²}`
    Capped {
        bound: f64,
    },
    /// Weight `lambda` on the listed low-noise relations and 1 elsewhere.
    RelationRatio {
        lambda: f64,
        low_noise: BTreeSet<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub rule: WeightRule,
    /// Rescale so that `(1/n) Σ w_i = 1`.
    pub normalize_to_unit_mean: bool,
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self::uniform()
    }
}

impl WeightScheme {
    pub fn uniform() -> Self {
        Self {
            rule: WeightRule::Uniform,
            normalize_to_unit_mean: true,
        }
    }

    pub fn inverse_variance() -> Self {
        Self {
            rule: WeightRule::InverseVariance,
            normalize_to_unit_mean: true,
        }
    }

    /// Capped weights are left unnormalized so that `sup w ≤ 1` holds.
    pub fn capped(bound: f64) -> Self {
        Self {
            rule: WeightRule::Capped { bound },
            normalize_to_unit_mean: false,
        }
    }

    pub fn relation_ratio(lambda: f64, low_noise: impl IntoIterator<Item = usize>) -> Self {
        Self {
            rule: WeightRule::RelationRatio {
                lambda,
                low_noise: low_noise.into_iter().collect(),
            },
            normalize_to_unit_mean: true,
        }
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize_to_unit_mean = on;
        self
    }
}

/// Harmonic mean `(1/n Σ 1/v_i)⁻¹` of positive values.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    n / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

pub fn compute_weights(scheme: &WeightScheme, triples: &[Triple]) -> Result<Vec<f64>> {
    let mut w = match &scheme.rule {
        WeightRule::Uniform => vec![1.0; triples.len()],
        WeightRule::InverseVariance => {
            let var = variances(triples)?;
            if let Some(i) = var.iter().position(|&v| v == 0.0) {
                return Err(Error::config(format!(
                    "inverse-variance weights need a positive noise scale (sample {i} has 0)"
                )));
            }
            if var.is_empty() {
                return Ok(Vec::new());
            }
            let h = harmonic_mean(&var);
            var.iter().map(|v| h / v).collect()
        }
        WeightRule::Capped { bound } => {
            if !(*bound > 0.0 && bound.is_finite()) {
                return Err(Error::config("capped weights need a positive finite bound"));
            }
            let b2 = bound * bound;
            variances(triples)?.iter().map(|&v| b2 / v.max(b2)).collect()
        }
        WeightRule::RelationRatio { lambda, low_noise } => {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::config("relation weight ratio must be positive and finite"));
            }
            triples
                .iter()
                .map(|x| if low_noise.contains(&x.relation) { *lambda } else { 1.0 })
                .collect()
        }
    };
    if scheme.normalize_to_unit_mean && !w.is_empty() {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v /= mean);
    }
    Ok(w)
}

fn variances(triples: &[Triple]) -> Result<Vec<f64>> {
    triples
        .iter()
        .enumerate()
        .map(|(i, x)| match x.noise_scale {
            Some(s) if s >= 0.0 && s.is_finite() => Ok(s * s),
            Some(_) => Err(Error::config(format!("sample {i} has an invalid noise scale"))),
            None => Err(Error::config(format!("sample {i} has no noise scale"))),
        })
        .collect()
}
