//! Synthetic knowledge graphs with known score functions `γ`.
//!
//! Entity vectors `u_i` and relation parameters are i.i.d. standard normal.
//! Regression designs observe `y = γ(x) + ε` with `ε ~ N(0, σ²)` and `σ` drawn
//! uniformly from a finite set; binary designs draw `y ~ Bernoulli(γ(x))` and
//! keep only the positive edges.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic, EmbeddingTable, ScoreModel, Triple};
use crate::nn::dot;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `γ = [u_h; u_t]ᵀ v_r`
    ConcatLinear,
    /// `γ = −‖u_h − u_t + v_r‖²`
    VectorOffset,
    /// `γ = σ([u_h; u_t]ᵀ v_r + b)`
    Logistic { bias: f64 },
    /// `γ = σ(u_hᵀ diag(v_r) u_t + b)`
    Mip { bias: f64 },
}

impl GeneratorKind {
    pub fn is_regression(&self) -> bool {
        matches!(self, GeneratorKind::ConcatLinear | GeneratorKind::VectorOffset)
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::ConcatLinear => "concat_linear",
            GeneratorKind::VectorOffset => "vector_offset",
            GeneratorKind::Logistic { .. } => "logistic",
            GeneratorKind::Mip { .. } => "mip",
        }
    }
}

/// Default bias for the binary designs; gives sparse graphs.
pub const DEFAULT_BINARY_BIAS: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_entities: usize,
    pub dim: usize,
    pub n_relations: usize,
    pub noise_stds: Vec<f64>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.dim == 0 || self.n_relations == 0 {
            return Err(Error::config("generator needs N, d, K >= 1"));
        }
        if self.noise_stds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("noise standard deviations must be finite and >= 0"));
        }
        if self.kind.is_regression() && self.noise_stds.is_empty() {
            return Err(Error::config("regression generators need at least one noise level"));
        }
        Ok(())
    }
}

/// Ground-truth parameters; `gamma` is the noiseless score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub kind: GeneratorKind,
    pub embeddings: EmbeddingTable,
    pub relations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub triples: Vec<Triple>,
    pub truth: Truth,
}

pub fn build_truth(spec: &GeneratorSpec) -> Result<Truth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let embeddings = EmbeddingTable::random(spec.n_entities, spec.dim, 1.0, &mut rng)?;
    let rel_dim = match spec.kind {
        GeneratorKind::ConcatLinear | GeneratorKind::Logistic { .. } => 2 * spec.dim,
        GeneratorKind::VectorOffset | GeneratorKind::Mip { .. } => spec.dim,
    };
    let relations = (0..spec.n_relations)
        .map(|_| {
            (0..rel_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(Truth {
        kind: spec.kind,
        embeddings,
        relations,
    })
}

/// `n` labelled triples drawn with the spec's noise levels.
pub fn sample_regression(spec: &GeneratorSpec, n: usize) -> Result<SyntheticDataset> {
    let truth = build_truth(spec)?;
    let triples = truth.sample_regression(n, &spec.noise_stds, derive_seed(spec.seed, 0))?;
    Ok(SyntheticDataset { triples, truth })
}

/// Up to `max_n` observed positive edges.
pub fn sample_binary_positive_only(spec: &GeneratorSpec, max_n: usize) -> Result<SyntheticDataset> {
    let truth = build_truth(spec)?;
    let triples = truth.sample_positive_only(max_n, derive_seed(spec.seed, 0))?;
    Ok(SyntheticDataset { triples, truth })
}

impl Truth {
    pub fn n_entities(&self) -> usize {
        self.embeddings.n_entities()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn gamma(&self, x: &Triple) -> Result<f64> {
        let n = self.n_entities();
        for (kind, index, len) in [
            ("entity", x.head, n),
            ("entity", x.tail, n),
            ("relation", x.relation, self.n_relations()),
        ] {
            if index >= len {
                return Err(Error::IndexOutOfBounds { kind, index, len });
            }
        }
        let uh = self.embeddings.row(x.head);
        let ut = self.embeddings.row(x.tail);
        let v = &self.relations[x.relation];
        let d = uh.len();
        Ok(match self.kind {
            GeneratorKind::ConcatLinear => dot(uh, &v[..d]) + dot(ut, &v[d..]),
            GeneratorKind::VectorOffset => -uh
                .iter()
                .zip(ut)
                .zip(v)
                .map(|((h, t), v)| (h - t + v).powi(2))
                .sum::<f64>(),
            GeneratorKind::Logistic { bias } => logistic(dot(uh, &v[..d]) + dot(ut, &v[d..]) + bias),
            GeneratorKind::Mip { bias } => {
                logistic(uh.iter().zip(ut).zip(v).map(|((h, t), l)| h * l * t).sum::<f64>() + bias)
            }
        })
    }

    /// The truth as a score model, where a variant exists for it.
    pub fn as_score_model(&self) -> Option<ScoreModel> {
        match self.kind {
            GeneratorKind::ConcatLinear => Some(ScoreModel::ConcatLinear {
                weights: self.relations.clone(),
            }),
            GeneratorKind::VectorOffset => Some(ScoreModel::TransE {
                offsets: self.relations.clone(),
            }),
            GeneratorKind::Mip { bias } => Some(ScoreModel::Mip {
                diagonals: self.relations.clone(),
                bias,
            }),
            GeneratorKind::Logistic { .. } => None,
        }
    }

    pub fn random_triple<R: Rng + ?Sized>(&self, rng: &mut R) -> Triple {
        Triple::new(
            rng.random_range(0..self.n_entities()),
            rng.random_range(0..self.n_relations()),
            rng.random_range(0..self.n_entities()),
        )
    }

    /// Fresh i.i.d. regression draws under this truth.
    pub fn sample_regression(&self, n: usize, noise_stds: &[f64], seed: u64) -> Result<Vec<Triple>> {
        if !self.kind.is_regression() {
            return Err(Error::config(format!(
                "{} is a binary generator; use positive-only sampling",
                self.kind.name()
            )));
        }
        if noise_stds.is_empty() || noise_stds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("need at least one finite nonnegative noise level"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = self.random_triple(&mut rng);
                let sigma = noise_stds[rng.random_range(0..noise_stds.len())];
                let eps: f64 = StandardNormal.sample(&mut rng);
                Ok(x.with_label(self.gamma(&x)? + sigma * eps).with_noise_scale(sigma))
            })
            .collect()
    }

    /// Bernoulli draws over every candidate triple, visited in random order;
    /// keeps the first `max_n` positives (label 1).
    pub fn sample_positive_only(&self, max_n: usize, seed: u64) -> Result<Vec<Triple>> {
        if self.kind.is_regression() {
            return Err(Error::config(format!(
                "{} is a regression generator; use regression sampling",
                self.kind.name()
            )));
        }
        let (n, k) = (self.n_entities(), self.n_relations());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut candidates: Vec<Triple> = (0..n)
            .flat_map(|h| (0..k).flat_map(move |r| (0..n).map(move |t| Triple::new(h, r, t))))
            .collect();
        candidates.shuffle(&mut rng);
        let mut out = Vec::new();
        for x in candidates {
            if out.len() >= max_n {
                break;
            }
            let p = self.gamma(&x)?;
            if rng.random::<f64>() < p {
                out.push(x.with_label(1.0));
            }
        }
        Ok(out)
    }
}

/// Replaces a `rate` fraction of the triples on `relations` by uniformly random
/// triples of the same relation (label noise on those relation types).
pub fn inject_spurious(
    triples: &[Triple],
    relations: &BTreeSet<usize>,
    rate: f64,
    n_entities: usize,
    seed: u64,
) -> Result<Vec<Triple>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config("spurious rate must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(triples
        .iter()
        .map(|x| {
            if relations.contains(&x.relation) && rng.random_bool(rate) {
                Triple {
                    head: rng.random_range(0..n_entities),
                    tail: rng.random_range(0..n_entities),
                    ..*x
                }
            } else {
                *x
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: GeneratorKind) -> GeneratorSpec {
        GeneratorSpec {
            kind,
            n_entities: 30,
            dim: 4,
            n_relations: 3,
            noise_stds: vec![1.0, 5.0],
            seed: 17,
        }
    }

    #[test]
    fn vector_offset_with_equal_entities_and_zero_offset() {
        let mut truth = build_truth(&spec(GeneratorKind::VectorOffset)).unwrap();
        truth.relations[1] = vec![0.0; 4];
        assert_eq!(truth.gamma(&Triple::new(5, 1, 5)).unwrap(), 0.0);
    }

    #[test]
    fn concat_linear_closed_form() {
        let truth = Truth {
            kind: GeneratorKind::ConcatLinear,
            embeddings: EmbeddingTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            relations: vec![vec![1.0; 4]],
        };
        assert_eq!(truth.gamma(&Triple::new(0, 0, 1)).unwrap(), 2.0);
    }

    #[test]
    fn relation_parameter_shapes() {
        assert_eq!(
            build_truth(&spec(GeneratorKind::ConcatLinear)).unwrap().relations[0].len(),
            8
        );
        assert_eq!(
            build_truth(&spec(GeneratorKind::VectorOffset)).unwrap().relations[0].len(),
            4
        );
        assert_eq!(
            build_truth(&spec(GeneratorKind::Mip { bias: -3.0 })).unwrap().relations[0].len(),
            4
        );
    }

    #[test]
    fn very_negative_bias_silences_logistic() {
        let truth = build_truth(&GeneratorSpec {
            kind: GeneratorKind::Logistic { bias: -10.0 },
            n_entities: 100,
            dim: 1,
            n_relations: 3,
            noise_stds: vec![],
            seed: 1,
        })
        .unwrap();
        // With d = 1 the linear part is N(0, 2); γ ≈ e^{-10} e^{lin}.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mean = 0.0;
        for _ in 0..10_000 {
            mean += truth.gamma(&truth.random_triple(&mut rng)).unwrap() / 10_000.0;
        }
        assert!(mean < 1e-3, "{mean}");
    }

    #[test]
    fn noiseless_labels_equal_gamma() {
        let mut s = spec(GeneratorKind::ConcatLinear);
        s.noise_stds = vec![0.0];
        let ds = sample_regression(&s, 500).unwrap();
        for x in &ds.triples {
            assert_eq!(x.label.unwrap(), ds.truth.gamma(x).unwrap());
            assert_eq!(x.noise_scale, Some(0.0));
        }
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        assert!(sample_regression(&spec(GeneratorKind::Mip { bias: -3.0 }), 10).is_err());
        assert!(sample_binary_positive_only(&spec(GeneratorKind::ConcatLinear), 10).is_err());
    }

    #[test]
    fn saturated_logistic_keeps_everything_or_nothing() {
        let mk = |bias| {
            let s = GeneratorSpec {
                kind: GeneratorKind::Logistic { bias },
                n_entities: 2,
                dim: 1,
                n_relations: 1,
                noise_stds: vec![],
                seed: 3,
            };
            sample_binary_positive_only(&s, 100).unwrap().triples
        };
        assert_eq!(mk(1e4).len(), 4);
        assert!(mk(-1e4).is_empty());
    }

    #[test]
    fn identical_spec_identical_data() {
        let s = spec(GeneratorKind::ConcatLinear);
        assert_eq!(sample_regression(&s, 200).unwrap(), sample_regression(&s, 200).unwrap());
        let b = spec(GeneratorKind::Mip { bias: -3.0 });
        assert_eq!(
            sample_binary_positive_only(&b, 200).unwrap(),
            sample_binary_positive_only(&b, 200).unwrap()
        );
    }

    #[test]
    fn spurious_injection_touches_only_listed_relations() {
        let s = spec(GeneratorKind::ConcatLinear);
        let ds = sample_regression(&s, 2000).unwrap();
        let noisy: BTreeSet<usize> = [2].into();
        let out = inject_spurious(&ds.triples, &noisy, 0.5, 30, 9).unwrap();
        let changed = ds.triples.iter().zip(&out).filter(|(a, b)| a != b).count();
        assert!(changed > 0);
        for (a, b) in ds.triples.iter().zip(&out) {
            assert_eq!(a.relation, b.relation);
            if a.relation != 2 {
                assert_eq!(a, b);
            }
        }
    }
}
