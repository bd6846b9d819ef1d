use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::EmbeddingTable;

/// How the embedding layer is initialized before training.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// i.i.d. `N(0, scale²)`.
    Random { scale: f64 },
    /// Copy of precomputed vectors, trained further.
    External(EmbeddingTable),
    /// Copy of precomputed vectors, kept fixed.
    ExternalFrozen(EmbeddingTable),
    /// Precomputed vectors plus i.i.d. `N(0, std²)` noise, trained further.
    ExternalNoisy { vectors: EmbeddingTable, std: f64 },
}

pub fn init_embeddings(strategy: &InitStrategy, n: usize, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        InitStrategy::Random { scale } => {
            if !(*scale >= 0.0 && scale.is_finite()) {
                return Err(Error::config("random init scale must be finite and nonnegative"));
            }
            EmbeddingTable::random(n, dim, *scale, &mut rng)
        }
        InitStrategy::External(v) => covering_copy(v, n, dim),
        InitStrategy::ExternalFrozen(v) => {
            let mut t = covering_copy(v, n, dim)?;
            t.freeze_all();
            Ok(t)
        }
        InitStrategy::ExternalNoisy { vectors, std } => {
            if !(*std >= 0.0 && std.is_finite()) {
                return Err(Error::config("init noise std must be finite and nonnegative"));
            }
            let mut t = covering_copy(vectors, n, dim)?;
            if *std > 0.0 {
                let noise = Normal::new(0.0, *std).expect("valid std");
                t.as_mut_slice().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            Ok(t)
        }
    }
}

fn covering_copy(v: &EmbeddingTable, n: usize, dim: usize) -> Result<EmbeddingTable> {
    if v.dim() != dim {
        return Err(Error::shape("external embedding dimension", dim, v.dim()));
    }
    if v.n_entities() != n {
        return Err(Error::shape("external embedding coverage", n, v.n_entities()));
    }
    let mut t = v.clone();
    (0..n).for_each(|i| t.set_frozen(i, false));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> EmbeddingTable {
        EmbeddingTable::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![-1.0, 0.5]]).unwrap()
    }

    #[test]
    fn frozen_copy_is_exact() {
        let t = init_embeddings(&InitStrategy::ExternalFrozen(source()), 3, 2, 0).unwrap();
        assert_eq!(t.as_slice(), source().as_slice());
        assert!(t.all_frozen());
        let t = init_embeddings(&InitStrategy::External(source()), 3, 2, 0).unwrap();
        assert_eq!(t.as_slice(), source().as_slice());
        assert!(!t.frozen().iter().any(|&f| f));
    }

    #[test]
    fn zero_noise_equals_external() {
        let s = InitStrategy::ExternalNoisy {
            vectors: source(),
            std: 0.0,
        };
        assert_eq!(
            init_embeddings(&s, 3, 2, 7).unwrap(),
            init_embeddings(&InitStrategy::External(source()), 3, 2, 7).unwrap()
        );
    }

    #[test]
    fn unit_noise_has_unit_variance() {
        let n = 10_000;
        let d = 20;
        let zeros = EmbeddingTable::from_vec(n, d, vec![0.0; n * d]).unwrap();
        let t = init_embeddings(
            &InitStrategy::ExternalNoisy {
                vectors: zeros,
                std: 1.0,
            },
            n,
            d,
            11,
        )
        .unwrap();
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| t.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((0.94..=1.06).contains(&var), "coordinate {j}: {var}");
        }
    }

    #[test]
    fn coverage_and_dimension_mismatch() {
        assert!(matches!(
            init_embeddings(&InitStrategy::External(source()), 4, 2, 0),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            init_embeddings(&InitStrategy::ExternalFrozen(source()), 3, 3, 0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn random_init_is_seeded() {
        let a = init_embeddings(&InitStrategy::Random { scale: 1.0 }, 5, 3, 42).unwrap();
        let b = init_embeddings(&InitStrategy::Random { scale: 1.0 }, 5, 3, 42).unwrap();
        let c = init_embeddings(&InitStrategy::Random { scale: 1.0 }, 5, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
