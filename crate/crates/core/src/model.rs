//! Entity embeddings and the per-relation score functions `f(h, r, t) = f_r(z_h, z_t)`.
//!
//! Higher scores mean more plausible triples for every variant.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{axpy, dot, FeedForwardNet};

/// One `(head, relation, tail)` fact with its optional observation `y` and noise scale `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
            label: None,
            noise_scale: None,
        }
    }

    pub fn with_label(mut self, label: f64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_noise_scale(mut self, sigma: f64) -> Self {
        self.noise_scale = Some(sigma);
        self
    }

    /// The `(h, r, t)` key, ignoring label and noise.
    pub fn key(&self) -> (usize, usize, usize) {
        (self.head, self.relation, self.tail)
    }
}

/// `N × D` matrix of entity vectors with per-row freeze flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    frozen: Vec<bool>,
}

impl EmbeddingTable {
    pub fn from_vec(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::config("embedding table needs N >= 1 and D >= 1"));
        }
        if data.len() != n * dim {
            return Err(Error::shape("embedding data", n * dim, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("embedding entries must be finite"));
        }
        Ok(Self {
            n,
            dim,
            data,
            frozen: vec![false; n],
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::shape("embedding row", dim, bad.len()));
        }
        Self::from_vec(rows.len(), dim, rows.concat())
    }

    /// i.i.d. `N(0, scale²)` entries.
    pub fn random<R: Rng + ?Sized>(n: usize, dim: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let data = (0..n * dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        Self::from_vec(n, dim, data)
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, i: usize, frozen: bool) {
        self.frozen[i] = frozen;
    }

    pub fn freeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = true);
    }

    pub fn all_frozen(&self) -> bool {
        self.frozen.iter().all(|&f| f)
    }

    fn check(&self, entity: usize) -> Result<&[f64]> {
        if entity >= self.n {
            return Err(Error::IndexOutOfBounds {
                kind: "entity",
                index: entity,
                len: self.n,
            });
        }
        Ok(self.row(entity))
    }
}

/// Monotone map `ρ` applied to the network output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    #[default]
    Identity,
    Logistic,
}

impl OutputTransform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            OutputTransform::Identity => v,
            OutputTransform::Logistic => logistic(v),
        }
    }

    /// `ρ'(v)` given `ρ(v)`.
    fn derivative(self, out: f64) -> f64 {
        match self {
            OutputTransform::Identity => 1.0,
            OutputTransform::Logistic => out * (1.0 - out),
        }
    }
}

pub fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Score function families, each holding `K` relation-specific parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ScoreModel {
    /// `ρ(g_r([z_h; z_t]))` with a per-relation network of input `2D`, output 1.
    CNkg {
        nets: Vec<FeedForwardNet>,
        transform: OutputTransform,
    },
    /// `ρ(g_r(z_h)ᵀ g'_r(z_t))` with two per-relation networks `D → D'`.
    IpNkg {
        head_nets: Vec<FeedForwardNet>,
        tail_nets: Vec<FeedForwardNet>,
        transform: OutputTransform,
    },
    /// `−‖z_h − z_t + v_r‖²`
    TransE { offsets: Vec<Vec<f64>> },
    /// `σ(z_hᵀ Λ_r z_t + b)` with diagonal `Λ_r`.
    Mip { diagonals: Vec<Vec<f64>>, bias: f64 },
    /// `[z_h; z_t]ᵀ v_r`
    ConcatLinear { weights: Vec<Vec<f64>> },
}

/// Gradients of `upstream · score` for one triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub score: f64,
    /// Flat, in [`ScoreModel::parameters`] layout.
    pub params: Vec<f64>,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

impl ScoreModel {
    /// C-NKG with `hidden` ReLU widths per relation.
    pub fn cnkg<R: Rng + ?Sized>(
        n_relations: usize,
        dim: usize,
        hidden: &[usize],
        transform: OutputTransform,
        rng: &mut R,
    ) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(2 * dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let nets = (0..n_relations)
            .map(|_| FeedForwardNet::random(&widths, rng))
            .collect::<Result<_>>()?;
        Self::CNkg { nets, transform }.validated()
    }

    /// IP-NKG with `hidden` ReLU widths and output width `out_dim` (`D'`).
    pub fn ipnkg<R: Rng + ?Sized>(
        n_relations: usize,
        dim: usize,
        hidden: &[usize],
        out_dim: usize,
        transform: OutputTransform,
        rng: &mut R,
    ) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(out_dim))
            .collect();
        let mut head_nets = Vec::with_capacity(n_relations);
        let mut tail_nets = Vec::with_capacity(n_relations);
        for _ in 0..n_relations {
            head_nets.push(FeedForwardNet::random(&widths, rng)?);
            tail_nets.push(FeedForwardNet::random(&widths, rng)?);
        }
        Self::IpNkg {
            head_nets,
            tail_nets,
            transform,
        }
        .validated()
    }

    pub fn transe<R: Rng + ?Sized>(n_relations: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Self::TransE {
            offsets: gaussian_rows(n_relations, dim, scale, rng),
        }
    }

    pub fn mip<R: Rng + ?Sized>(n_relations: usize, dim: usize, bias: f64, scale: f64, rng: &mut R) -> Self {
        Self::Mip {
            diagonals: gaussian_rows(n_relations, dim, scale, rng),
            bias,
        }
    }

    pub fn concat_linear<R: Rng + ?Sized>(n_relations: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Self::ConcatLinear {
            weights: gaussian_rows(n_relations, 2 * dim, scale, rng),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreModel::CNkg { .. } => "cnkg",
            ScoreModel::IpNkg { .. } => "ipnkg",
            ScoreModel::TransE { .. } => "transe",
            ScoreModel::Mip { .. } => "mip",
            ScoreModel::ConcatLinear { .. } => "concat_linear",
        }
    }

    pub fn n_relations(&self) -> usize {
        match self {
            ScoreModel::CNkg { nets, .. } => nets.len(),
            ScoreModel::IpNkg { head_nets, .. } => head_nets.len(),
            ScoreModel::TransE { offsets } => offsets.len(),
            ScoreModel::Mip { diagonals, .. } => diagonals.len(),
            ScoreModel::ConcatLinear { weights } => weights.len(),
        }
    }

    /// Embedding dimension `D` the model expects.
    pub fn embedding_dim(&self) -> usize {
        match self {
            ScoreModel::CNkg { nets, .. } => nets[0].input_dim() / 2,
            ScoreModel::IpNkg { head_nets, .. } => head_nets[0].input_dim(),
            ScoreModel::TransE { offsets } => offsets[0].len(),
            ScoreModel::Mip { diagonals, .. } => diagonals[0].len(),
            ScoreModel::ConcatLinear { weights } => weights[0].len() / 2,
        }
    }

    /// Checks `K ≥ 1` and that every relation's parameters agree on `D`.
    pub fn validated(self) -> Result<Self> {
        if self.n_relations() == 0 {
            return Err(Error::config("score model needs at least one relation"));
        }
        let d = self.embedding_dim();
        if d == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let consistent = match &self {
            ScoreModel::CNkg { nets, .. } => nets.iter().all(|n| n.input_dim() == 2 * d && n.output_dim() == 1),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => {
                head_nets.len() == tail_nets.len()
                    && head_nets
                        .iter()
                        .zip(tail_nets)
                        .all(|(g, h)| g.input_dim() == d && h.input_dim() == d && g.output_dim() == h.output_dim())
            }
            ScoreModel::TransE { offsets } => offsets.iter().all(|v| v.len() == d),
            ScoreModel::Mip { diagonals, .. } => diagonals.iter().all(|v| v.len() == d),
            ScoreModel::ConcatLinear { weights } => weights.iter().all(|v| v.len() == 2 * d),
        };
        if !consistent {
            return Err(Error::config("relation parameter shapes are inconsistent"));
        }
        Ok(self)
    }

    pub fn num_params(&self) -> usize {
        match self {
            ScoreModel::CNkg { nets, .. } => nets.iter().map(FeedForwardNet::num_params).sum(),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => head_nets.iter().chain(tail_nets).map(FeedForwardNet::num_params).sum(),
            ScoreModel::TransE { offsets } => offsets.iter().map(Vec::len).sum(),
            ScoreModel::Mip { diagonals, .. } => diagonals.iter().map(Vec::len).sum::<usize>() + 1,
            ScoreModel::ConcatLinear { weights } => weights.iter().map(Vec::len).sum(),
        }
    }

    /// Flat-layout range of the parameters owned by relation `k` (excludes the
    /// shared MIP bias, which sits at the very end).
    pub fn relation_param_range(&self, k: usize) -> Range<usize> {
        let sizes: Vec<usize> = match self {
            ScoreModel::CNkg { nets, .. } => nets.iter().map(FeedForwardNet::num_params).collect(),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => head_nets
                .iter()
                .zip(tail_nets)
                .map(|(g, h)| g.num_params() + h.num_params())
                .collect(),
            ScoreModel::TransE { offsets } => offsets.iter().map(Vec::len).collect(),
            ScoreModel::Mip { diagonals, .. } => diagonals.iter().map(Vec::len).collect(),
            ScoreModel::ConcatLinear { weights } => weights.iter().map(Vec::len).collect(),
        };
        let start: usize = sizes[..k].iter().sum();
        start..start + sizes[k]
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        match self {
            ScoreModel::CNkg { nets, .. } => nets.iter().for_each(|n| flat.extend(n.parameters())),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => {
                for (g, h) in head_nets.iter().zip(tail_nets) {
                    flat.extend(g.parameters());
                    flat.extend(h.parameters());
                }
            }
            ScoreModel::TransE { offsets: rows } | ScoreModel::ConcatLinear { weights: rows } => {
                rows.iter().for_each(|r| flat.extend_from_slice(r))
            }
            ScoreModel::Mip { diagonals, bias } => {
                diagonals.iter().for_each(|r| flat.extend_from_slice(r));
                flat.push(*bias);
            }
        }
        flat
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("model parameters", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = &flat[offset..offset + n];
            offset += n;
            s
        };
        match self {
            ScoreModel::CNkg { nets, .. } => {
                for net in nets {
                    let n = net.num_params();
                    net.set_parameters(take(n))?;
                }
            }
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => {
                for (g, h) in head_nets.iter_mut().zip(tail_nets.iter_mut()) {
                    let n = g.num_params();
                    g.set_parameters(take(n))?;
                    let n = h.num_params();
                    h.set_parameters(take(n))?;
                }
            }
            ScoreModel::TransE { offsets: rows } | ScoreModel::ConcatLinear { weights: rows } => {
                for r in rows {
                    let n = r.len();
                    r.copy_from_slice(take(n));
                }
            }
            ScoreModel::Mip { diagonals, bias } => {
                for r in diagonals {
                    let n = r.len();
                    r.copy_from_slice(take(n));
                }
                *bias = take(1)[0];
            }
        }
        Ok(())
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        match self {
            ScoreModel::CNkg { nets, .. } => nets.iter().flat_map(|n| n.trainable_mask()).collect(),
            ScoreModel::IpNkg {
                head_nets, tail_nets, ..
            } => head_nets
                .iter()
                .zip(tail_nets)
                .flat_map(|(g, h)| {
                    let mut m = g.trainable_mask();
                    m.extend(h.trainable_mask());
                    m
                })
                .collect(),
            _ => vec![true; self.num_params()],
        }
    }

    pub fn score(&self, emb: &EmbeddingTable, x: &Triple) -> Result<f64> {
        let (zh, zt) = self.lookup(emb, x)?;
        let r = x.relation;
        Ok(match self {
            ScoreModel::CNkg { nets, transform } => {
                let input = [zh, zt].concat();
                transform.apply(nets[r].forward(&input)?[0])
            }
            ScoreModel::IpNkg {
                head_nets,
                tail_nets,
                transform,
            } => {
                let a = head_nets[r].forward(zh)?;
                let b = tail_nets[r].forward(zt)?;
                transform.apply(dot(&a, &b))
            }
            ScoreModel::TransE { offsets } => -transe_residual(zh, zt, &offsets[r]).iter().map(|u| u * u).sum::<f64>(),
            ScoreModel::Mip { diagonals, bias } => logistic(mip_inner(zh, zt, &diagonals[r]) + bias),
            ScoreModel::ConcatLinear { weights } => {
                let v = &weights[r];
                let d = zh.len();
                dot(zh, &v[..d]) + dot(zt, &v[d..])
            }
        })
    }

    pub fn batch_score(&self, emb: &EmbeddingTable, triples: &[Triple]) -> Result<Vec<f64>> {
        triples.iter().map(|x| self.score(emb, x)).collect()
    }

    /// Gradients of `upstream · score(x)` with respect to all model parameters and
    /// the head and tail rows. Frozen rows still get their gradient reported.
    /// When `head == tail` the two row gradients describe the same row and should
    /// be summed.
    pub fn score_gradients(&self, emb: &EmbeddingTable, x: &Triple, upstream: f64) -> Result<ScoreGradients> {
        let d = emb.dim();
        let mut params = vec![0.0; self.num_params()];
        let mut head = vec![0.0; d];
        let mut tail = vec![0.0; d];
        let score = self.backprop(emb, x, |_| upstream, &mut params, &mut head, &mut tail)?;
        Ok(ScoreGradients {
            score,
            params,
            head,
            tail,
        })
    }

    /// Adds `upstream(score) · ∇score(x)` into a flat parameter gradient and a dense
    /// `N×D` embedding gradient. The upstream factor may depend on the score, which
    /// is computed once. Returns the score.
    pub fn accumulate_gradients(
        &self,
        emb: &EmbeddingTable,
        x: &Triple,
        upstream: impl FnOnce(f64) -> f64,
        param_grad: &mut [f64],
        emb_grad: &mut [f64],
    ) -> Result<f64> {
        if emb_grad.len() != emb.as_slice().len() {
            return Err(Error::shape("embedding gradient", emb.as_slice().len(), emb_grad.len()));
        }
        let d = emb.dim();
        let mut head = vec![0.0; d];
        let mut tail = vec![0.0; d];
        let score = self.backprop(emb, x, upstream, param_grad, &mut head, &mut tail)?;
        axpy(1.0, &head, &mut emb_grad[x.head * d..(x.head + 1) * d]);
        axpy(1.0, &tail, &mut emb_grad[x.tail * d..(x.tail + 1) * d]);
        Ok(score)
    }

    fn backprop(
        &self,
        emb: &EmbeddingTable,
        x: &Triple,
        upstream: impl FnOnce(f64) -> f64,
        params: &mut [f64],
        head: &mut [f64],
        tail: &mut [f64],
    ) -> Result<f64> {
        if params.len() != self.num_params() {
            return Err(Error::shape("parameter gradient", self.num_params(), params.len()));
        }
        let (zh, zt) = self.lookup(emb, x)?;
        let r = x.relation;
        let range = self.relation_param_range(r);
        let d = zh.len();
        let score = match self {
            ScoreModel::CNkg { nets, transform } => {
                let input = [zh, zt].concat();
                let cache = nets[r].forward_cached(&input)?;
                let s = transform.apply(cache.output()[0]);
                let upstream = upstream(s);
                let mut input_grad = vec![0.0; 2 * d];
                let up = [upstream * transform.derivative(s)];
                nets[r].backward_cached(&cache, &up, &mut params[range], &mut input_grad)?;
                axpy(1.0, &input_grad[..d], head);
                axpy(1.0, &input_grad[d..], tail);
                s
            }
            ScoreModel::IpNkg {
                head_nets,
                tail_nets,
                transform,
            } => {
                let (g, h) = (&head_nets[r], &tail_nets[r]);
                let gc = g.forward_cached(zh)?;
                let hc = h.forward_cached(zt)?;
                let s = transform.apply(dot(gc.output(), hc.output()));
                let upstream = upstream(s);
                let scale = upstream * transform.derivative(s);
                let up_g: Vec<f64> = hc.output().iter().map(|v| v * scale).collect();
                let up_h: Vec<f64> = gc.output().iter().map(|v| v * scale).collect();
                let (pg, ph) = params[range].split_at_mut(g.num_params());
                g.backward_cached(&gc, &up_g, pg, head)?;
                h.backward_cached(&hc, &up_h, ph, tail)?;
                s
            }
            ScoreModel::TransE { offsets } => {
                let u = transe_residual(zh, zt, &offsets[r]);
                let s = -u.iter().map(|v| v * v).sum::<f64>();
                let upstream = upstream(s);
                // d(−‖u‖²)/du = −2u; u = z_h − z_t + v
                axpy(-2.0 * upstream, &u, head);
                axpy(2.0 * upstream, &u, tail);
                axpy(-2.0 * upstream, &u, &mut params[range]);
                s
            }
            ScoreModel::Mip { diagonals, bias } => {
                let lam = &diagonals[r];
                let s = logistic(mip_inner(zh, zt, lam) + bias);
                let g = upstream(s) * s * (1.0 - s);
                let pr = &mut params[range];
                for j in 0..d {
                    head[j] += g * lam[j] * zt[j];
                    tail[j] += g * lam[j] * zh[j];
                    pr[j] += g * zh[j] * zt[j];
                }
                let last = params.len() - 1;
                params[last] += g;
                s
            }
            ScoreModel::ConcatLinear { weights } => {
                let v = &weights[r];
                let s = dot(zh, &v[..d]) + dot(zt, &v[d..]);
                let upstream = upstream(s);
                axpy(upstream, &v[..d], head);
                axpy(upstream, &v[d..], tail);
                let pr = &mut params[range];
                axpy(upstream, zh, &mut pr[..d]);
                axpy(upstream, zt, &mut pr[d..]);
                s
            }
        };
        Ok(score)
    }

    fn lookup<'a>(&self, emb: &'a EmbeddingTable, x: &Triple) -> Result<(&'a [f64], &'a [f64])> {
        if x.relation >= self.n_relations() {
            return Err(Error::IndexOutOfBounds {
                kind: "relation",
                index: x.relation,
                len: self.n_relations(),
            });
        }
        if emb.dim() != self.embedding_dim() {
            return Err(Error::shape("embedding dimension", self.embedding_dim(), emb.dim()));
        }
        Ok((emb.check(x.head)?, emb.check(x.tail)?))
    }
}

fn transe_residual(zh: &[f64], zt: &[f64], v: &[f64]) -> Vec<f64> {
    zh.iter().zip(zt).zip(v).map(|((h, t), v)| h - t + v).collect()
}

fn mip_inner(zh: &[f64], zt: &[f64], lam: &[f64]) -> f64 {
    zh.iter().zip(zt).zip(lam).map(|((h, t), l)| h * l * t).sum()
}

fn gaussian_rows<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect::<Vec<f64>>()
        })
        .collect()
}
