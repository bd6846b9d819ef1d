//! Closed-form capacity bounds for neural knowledge-graph function classes and
//! a brute-force shattering oracle.
//!
//! Order bounds (`≲`) are evaluated as growth functions with constant 1 and the
//! natural logarithm. Any logarithm whose argument falls below its valid range is
//! clamped and the result is flagged via [`GrowthValue::clamped`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreModel;

/// Leading constant of the capped-weight out-of-sample statistical term.
pub const CAPPED_WEIGHT_CONSTANT: f64 = 22132.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthValue {
    pub value: f64,
    pub clamped: bool,
}

/// `ln(x)` floored at `ln 2` for `x < 2`.
fn clamped_ln(x: f64) -> (f64, bool) {
    if x < 2.0 {
        (2f64.ln(), true)
    } else {
        (x.ln(), false)
    }
}

/// VC dimension bound `4 Σ_k VCdim(H_k)` for a mixture of experts with a
/// designated expert per input.
pub fn moe_vc_bound(vc_dims: &[u64]) -> Result<u64> {
    if vc_dims.is_empty() {
        return Err(Error::Empty("mixture of experts needs at least one expert"));
    }
    Ok(4 * vc_dims.iter().sum::<u64>())
}

/// `Σ_k L_k W_k log W_k` for fixed embeddings.
pub fn pdim_fixed_embedding(layers: &[usize], params: &[usize]) -> Result<GrowthValue> {
    if layers.len() != params.len() {
        return Err(Error::shape(
            "per-relation parameter counts",
            layers.len(),
            params.len(),
        ));
    }
    if layers.is_empty() {
        return Err(Error::Empty("need at least one relation"));
    }
    let mut clamped = false;
    let mut value = 0.0;
    for (&l, &w) in layers.iter().zip(params) {
        let (lw, c) = clamped_ln(w as f64);
        clamped |= c;
        value += l as f64 * w as f64 * lw;
    }
    Ok(GrowthValue { value, clamped })
}

/// `(N D + K W) L log(K W)` for trainable embeddings, `W` the average
/// per-relation parameter count.
pub fn pdim_trainable_embedding(n: usize, d: usize, k: usize, w_avg: f64, l: usize) -> Result<GrowthValue> {
    if n == 0 || d == 0 || k == 0 || l == 0 || !(w_avg > 0.0) {
        return Err(Error::config("pseudo-dimension inputs must be positive"));
    }
    let kw = k as f64 * w_avg;
    let (lkw, clamped) = clamped_ln(kw);
    Ok(GrowthValue {
        value: ((n * d) as f64 + kw) * l as f64 * lkw,
        clamped,
    })
}

/// Piecewise-polynomial activation with `pieces` pieces of degree ≤ `degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub pieces: u32,
    pub degree: u32,
}

impl Activation {
    pub const RELU: Activation = Activation { pieces: 2, degree: 1 };
}

/// Layer bookkeeping of one relation's network(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationShape {
    /// `[H⁽⁰⁾, …, H⁽ᴸ⁾]`
    pub widths: Vec<usize>,
    /// `W_k⁽ℓ⁾` for `ℓ = 1..=L`.
    pub layer_params: Vec<usize>,
}

impl RelationShape {
    /// Fully connected layers with biases.
    pub fn dense(widths: &[usize]) -> Self {
        let layer_params = widths.windows(2).map(|w| w[0] * w[1] + w[1]).collect();
        Self {
            widths: widths.to_vec(),
            layer_params,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn params(&self) -> usize {
        self.layer_params.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::config("relation widths need positive input and output sizes"));
        }
        if self.layer_params.len() != self.depth() {
            return Err(Error::config(format!(
                "width/parameter bookkeeping mismatch: {} layers but {} parameter counts",
                self.depth(),
                self.layer_params.len()
            )));
        }
        if self.layer_params.iter().zip(&self.widths[1..]).any(|(w, h)| w < h) {
            return Err(Error::config(
                "width/parameter bookkeeping mismatch: a layer has fewer parameters than units",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    IpNkg,
    CNkg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n_entities: usize,
    pub dim: usize,
    pub relations: Vec<RelationShape>,
    pub activation: Activation,
    /// `B`, the bound on `|γ|`.
    pub score_bound: f64,
    /// `σ_H²`
    pub harmonic_noise_var: f64,
    pub sample_size: usize,
    pub delta_opt: f64,
}

impl BoundInputs {
    /// Shapes of a C-NKG or IP-NKG model. For IP-NKG each relation's two
    /// networks are stacked side by side.
    pub fn from_model(model: &ScoreModel, n_entities: usize) -> Result<Self> {
        let relations = match model {
            ScoreModel::CNkg { nets, .. } => nets.iter().map(|n| RelationShape::dense(&n.widths())).collect(),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => head_nets
                .iter()
                .zip(tail_nets)
                .map(|(g, h)| {
                    let widths = g.widths().iter().zip(h.widths()).map(|(a, b)| a + b).collect();
                    let layer_params = g
                        .layer_param_counts()
                        .iter()
                        .zip(h.layer_param_counts())
                        .map(|(a, b)| a + b)
                        .collect();
                    RelationShape { widths, layer_params }
                })
                .collect(),
            other => {
                return Err(Error::config(format!(
                    "capacity bounds need a network model, got {}",
                    other.name()
                )))
            }
        };
        Ok(Self {
            n_entities,
            dim: model.embedding_dim(),
            relations,
            activation: Activation::RELU,
            score_bound: 1.0,
            harmonic_noise_var: 1.0,
            sample_size: 1,
            delta_opt: 0.0,
        })
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// `W = (1/K) Σ_k W_k`
    pub fn avg_params(&self) -> f64 {
        self.total_params() as f64 / self.n_relations() as f64
    }

    pub fn total_params(&self) -> usize {
        self.relations.iter().map(RelationShape::params).sum()
    }

    /// `L = max_k L_k`
    pub fn depth(&self) -> usize {
        self.relations.iter().map(RelationShape::depth).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.dim == 0 {
            return Err(Error::config("N and D must be positive"));
        }
        if self.relations.is_empty() {
            return Err(Error::Empty("need at least one relation"));
        }
        if self.activation.pieces == 0 {
            return Err(Error::config("activation needs at least one piece"));
        }
        if !(self.score_bound >= 0.0) || !(self.harmonic_noise_var >= 0.0) {
            return Err(Error::config("B and σ_H² must be nonnegative"));
        }
        self.relations.iter().try_for_each(RelationShape::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionBound {
    /// `3 (L N D + L̄ K W) log(8 e U)`
    pub value: f64,
    pub u: f64,
    pub l_bar: f64,
}

/// VC-dimension bound from counting the sign-pattern partitions of parameter
/// space layer by layer.
///
/// `L̄ K W = Σ_k Σ_{ℓ≤L} Σ_{i≤ℓ} W_k⁽ⁱ⁾` (cumulative per-relation parameters).
/// `U = S Σ_ℓ q_ℓ H_ℓ`, with `q_ℓ = ℓ + 1` for `Q = 1` and `3Q^ℓ` for `Q ≥ 2`,
/// hidden units summed across relations and a single output unit `H_L = 1`;
/// IP-NKG doubles `U`.
pub fn vc_partition_bound(inputs: &BoundInputs, family: ModelFamily) -> Result<PartitionBound> {
    inputs.validate()?;
    let l = inputs.depth();
    let s = inputs.activation.pieces as f64;
    let q = inputs.activation.degree;

    let mut hidden = vec![0usize; l + 1];
    for r in &inputs.relations {
        for (ell, &h) in r.widths.iter().enumerate().take(r.depth()).skip(1) {
            hidden[ell] += h;
        }
    }
    hidden[l] = 1;

    let degree = |ell: usize| -> f64 {
        match q {
            0 => {
                if ell == l {
                    1.0
                } else {
                    0.0
                }
            }
            1 => (ell + 1) as f64,
            q => 3.0 * (q as f64).powi(ell as i32),
        }
    };
    let mut u = s * (1..=l).map(|ell| degree(ell) * hidden[ell] as f64).sum::<f64>();
    if family == ModelFamily::IpNkg {
        u *= 2.0;
    }

    let cumulative: f64 = inputs
        .relations
        .iter()
        .map(|r| {
            let mut acc = 0usize;
            let mut sum = 0usize;
            for ell in 0..l {
                acc += r.layer_params.get(ell).copied().unwrap_or(0);
                sum += acc;
            }
            sum as f64
        })
        .sum();
    let kw = inputs.total_params() as f64;
    let lnd = (l * inputs.n_entities * inputs.dim) as f64;
    Ok(PartitionBound {
        value: 3.0 * (lnd + cumulative) * (8.0 * std::f64::consts::E * u).ln(),
        u,
        l_bar: cumulative / kw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    InSample,
    OutOfSample,
}

/// Statistical error term: `c (ND + KW) L log(KW) / n · log(n / ((ND + KW) L))`
/// with `c = σ_H² + B²` in-sample and `c = B²` out-of-sample. The outer log is
/// clamped at 0 for small `n`.
pub fn delta_stat(inputs: &BoundInputs, regime: Regime) -> Result<GrowthValue> {
    inputs.validate()?;
    if inputs.sample_size == 0 {
        return Err(Error::config("sample size must be positive"));
    }
    let n = inputs.sample_size as f64;
    let kw = inputs.total_params() as f64;
    let p = ((inputs.n_entities * inputs.dim) as f64 + kw) * inputs.depth() as f64;
    let (lkw, c1) = clamped_ln(kw);
    let ratio = (n / p).ln();
    let (outer, c2) = if ratio < 0.0 { (0.0, true) } else { (ratio, false) };
    let b2 = inputs.score_bound * inputs.score_bound;
    let coef = match regime {
        Regime::InSample => inputs.harmonic_noise_var + b2,
        Regime::OutOfSample => b2,
    };
    Ok(GrowthValue {
        value: coef * p * lkw / n * outer,
        clamped: c1 || c2,
    })
}

fn en_over_p(n: usize, p: f64) -> (f64, bool) {
    let r = std::f64::consts::E * n as f64 / p;
    if r < 1.0 {
        (0.0, true)
    } else {
        (r.ln(), false)
    }
}

/// In-sample term under harmonic-mean weights: `4(27σ_H² + B²) p/n · log(en/p)`.
pub fn harmonic_weight_stat_term(harmonic_noise_var: f64, score_bound: f64, pdim: f64, n: usize) -> GrowthValue {
    let (l, clamped) = en_over_p(n, pdim);
    GrowthValue {
        value: 4.0 * (27.0 * harmonic_noise_var + score_bound * score_bound) * pdim / n as f64 * l,
        clamped,
    }
}

/// Out-of-sample term under capped weights: `22132 B² p/n · log(en/p)`.
pub fn capped_weight_stat_term(score_bound: f64, pdim: f64, n: usize) -> GrowthValue {
    let (l, clamped) = en_over_p(n, pdim);
    GrowthValue {
        value: CAPPED_WEIGHT_CONSTANT * score_bound * score_bound * pdim / n as f64 * l,
        clamped,
    }
}

/// Default work budget (subset × hypothesis evaluations) for [`brute_force_vc`].
pub const DEFAULT_VC_BUDGET: u64 = 200_000_000;

/// Largest `m ≤ max_points` such that some `m`-subset of the domain is shattered.
/// Each hypothesis is its labelling of the whole finite domain.
pub fn brute_force_vc(hypotheses: &[Vec<bool>], max_points: usize, budget: u64) -> Result<usize> {
    let Some(first) = hypotheses.first() else {
        return Ok(0);
    };
    let m = first.len();
    if hypotheses.iter().any(|h| h.len() != m) {
        return Err(Error::config("all hypotheses must label the same domain"));
    }
    let mut unique = hypotheses.to_vec();
    unique.sort();
    unique.dedup();

    let mut work: u64 = 0;
    let mut vc = 0;
    let cap = max_points.min(m).min(30);
    for size in 1..=cap {
        if (1u64 << size) > unique.len() as u64 {
            break;
        }
        let mut seen = vec![false; 1 << size];
        let mut subset: Vec<usize> = (0..size).collect();
        let mut shattered = false;
        loop {
            work += unique.len() as u64;
            if work > budget {
                return Err(Error::BudgetExceeded { budget });
            }
            seen.iter_mut().for_each(|s| *s = false);
            let mut distinct = 0usize;
            for h in &unique {
                let pattern = subset
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (b, &i)| acc | (usize::from(h[i]) << b));
                if !seen[pattern] {
                    seen[pattern] = true;
                    distinct += 1;
                }
            }
            if distinct == seen.len() {
                shattered = true;
                break;
            }
            if !next_combination(&mut subset, m) {
                break;
            }
        }
        if !shattered {
            break;
        }
        vc = size;
    }
    Ok(vc)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
