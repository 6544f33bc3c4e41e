//! Forward computation and its hand-written reverse pass.
//!
//! Per (user, item) pair:
//! 1. aspect embeddings are projected by the transform and unit-normalized,
//! 2. every user aspect interacts with every item aspect (element-wise product),
//! 3. an aspect-level softmax pools those interactions per user aspect,
//! 4. a user-level softmax, conditioned on the item's aspect summary, pools
//!    the per-aspect vectors into the aspect output,
//! 5. the latent-factor product of user and item is concatenated with it and
//!    a linear layer produces the score.
//!
//! PAD entries never pass through normalization; their vector is constant zero.

use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::{AspectSets, PAD};
use crate::error::{AarmError, Result};
use crate::manifest::KeyValues;
use crate::matrix::{axpy, dot, norm, softmax, softmax_backward, Matrix};
use crate::variants::{AspectPooling, EmbeddingStrategy, UserPooling, Variant, VariantSpec};

pub const NORM_EPSILON: f64 = 1e-12;

/// How PAD entries enter the softmax denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskingMode {
    /// masked entries are removed from every softmax
    #[default]
    SoftmaxExclude,
    /// masked entries keep a zero logit inside the denominator
    Literal,
}

impl MaskingMode {
    pub fn name(self) -> &'static str {
        match self {
            MaskingMode::SoftmaxExclude => "softmax_exclude",
            MaskingMode::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax_exclude" => Some(MaskingMode::SoftmaxExclude),
            "literal" => Some(MaskingMode::Literal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub aspect_dim: usize,
    pub global_dim: usize,
    pub variant: Variant,
    pub strategy: EmbeddingStrategy,
    pub dropout: f64,
    pub masking: MaskingMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            aspect_dim: 128,
            global_dim: 128,
            variant: Variant::Aarm,
            strategy: EmbeddingStrategy::PretrainTransform,
            dropout: 0.5,
            masking: MaskingMode::SoftmaxExclude,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aspect_dim == 0 || self.global_dim == 0 {
            return Err(AarmError::InvalidArgument("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AarmError::InvalidArgument(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> &'static VariantSpec {
        self.variant.spec()
    }

    /// Width of the output layer input: `[global; aspect]` minus absent halves.
    pub fn output_width(&self) -> usize {
        let spec = self.spec();
        let mut w = 0;
        if spec.uses_global {
            w += self.global_dim;
        }
        if spec.uses_aspect {
            w += self.aspect_dim;
        }
        w
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("aspect_dim", self.aspect_dim)
            .set("global_dim", self.global_dim)
            .set("variant", self.variant)
            .set("strategy", self.strategy)
            .set("dropout", self.dropout)
            .set("masking", self.masking.name());
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = ModelConfig::default();
        let cfg = ModelConfig {
            aspect_dim: kv.get("aspect_dim").map_or(Ok(d.aspect_dim), |_| kv.parse_value("aspect_dim"))?,
            global_dim: kv.get("global_dim").map_or(Ok(d.global_dim), |_| kv.parse_value("global_dim"))?,
            variant: kv.get("variant").map_or(Ok(d.variant), str::parse)?,
            strategy: kv.get("strategy").map_or(Ok(d.strategy), str::parse)?,
            dropout: kv.get("dropout").map_or(Ok(d.dropout), |_| kv.parse_value("dropout"))?,
            masking: match kv.get("masking") {
                None => d.masking,
                Some(s) => MaskingMode::parse(s)
                    .ok_or_else(|| AarmError::Schema(format!("bad masking mode {s:?}")))?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter blocks, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamId {
    AspectEmbedding,
    Transform,
    AspectAttention,
    UserAttention,
    UserFactors,
    ItemFactors,
    Output,
}

impl ParamId {
    pub const ALL: [ParamId; 7] = [
        ParamId::AspectEmbedding,
        ParamId::Transform,
        ParamId::AspectAttention,
        ParamId::UserAttention,
        ParamId::UserFactors,
        ParamId::ItemFactors,
        ParamId::Output,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::AspectEmbedding => "aspect_embedding",
            ParamId::Transform => "transform",
            ParamId::AspectAttention => "aspect_attention",
            ParamId::UserAttention => "user_attention",
            ParamId::UserFactors => "user_factors",
            ParamId::ItemFactors => "item_factors",
            ParamId::Output => "output",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ParamId::ALL.into_iter().find(|p| p.name() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Blocks covered by the L2 penalty.
    pub fn regularized(self) -> bool {
        matches!(self, ParamId::UserFactors | ParamId::ItemFactors | ParamId::Output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    blocks: [Matrix; 7],
}

impl ModelParams {
    /// Expected shape of every block for the given dataset sizes.
    pub fn expected_shapes(
        config: &ModelConfig,
        vocab_size: usize,
        num_users: usize,
        num_items: usize,
    ) -> [(usize, usize); 7] {
        let (a, g) = (config.aspect_dim, config.global_dim);
        [
            (vocab_size, a),
            (a, a),
            (1, a),
            (1, a),
            (num_users, g),
            (num_items, g),
            (1, config.output_width()),
        ]
    }

    /// Random initialization. `pretrained` supplies the aspect embedding matrix
    /// for the pre-trained strategies.
    pub fn init<R: Rng>(
        config: ModelConfig,
        vocab_size: usize,
        num_users: usize,
        num_items: usize,
        pretrained: Option<&Matrix>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = Self::expected_shapes(&config, vocab_size, num_users, num_items);
        let a = config.aspect_dim;
        let mut transform = Matrix::identity(a);
        for x in transform.as_mut_slice() {
            *x += rng.gen_range(-0.01..0.01);
        }
        let mut params = ModelParams {
            blocks: [
                Matrix::zeros(shapes[0].0, shapes[0].1),
                transform,
                Matrix::uniform(1, a, 0.05, rng),
                Matrix::uniform(1, a, 0.05, rng),
                Matrix::uniform(num_users, config.global_dim, 0.05, rng),
                Matrix::uniform(num_items, config.global_dim, 0.05, rng),
                Matrix::uniform(1, config.output_width(), 0.05, rng),
            ],
            config: config.clone(),
        };
        if config.spec().uses_aspect {
            crate::variants::apply_embedding_strategy(&mut params, config.strategy, pretrained, rng)?;
        }
        Ok(params)
    }

    pub fn from_blocks(config: ModelConfig, blocks: [Matrix; 7]) -> Result<Self> {
        config.validate()?;
        let p = ModelParams { config, blocks };
        let (_, a) = p.get(ParamId::AspectEmbedding).shape();
        let expect = Self::expected_shapes(
            &p.config,
            p.get(ParamId::AspectEmbedding).rows(),
            p.get(ParamId::UserFactors).rows(),
            p.get(ParamId::ItemFactors).rows(),
        );
        for id in ParamId::ALL {
            if p.get(id).shape() != expect[id.slot()] || a != p.config.aspect_dim {
                return Err(AarmError::Schema(format!(
                    "{} has shape {:?}, expected {:?}",
                    id.name(),
                    p.get(id).shape(),
                    expect[id.slot()]
                )));
            }
        }
        if p.get(ParamId::AspectEmbedding).rows() == 0 {
            return Err(AarmError::Schema("aspect embedding needs a PAD row".into()));
        }
        Ok(p)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.blocks[id.slot()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.blocks[id.slot()]
    }

    pub fn into_blocks(self) -> [Matrix; 7] {
        self.blocks
    }

    pub fn vocab_size(&self) -> usize {
        self.get(ParamId::AspectEmbedding).rows()
    }

    pub fn num_users(&self) -> usize {
        self.get(ParamId::UserFactors).rows()
    }

    pub fn num_items(&self) -> usize {
        self.get(ParamId::ItemFactors).rows()
    }

    /// Whether the block receives gradient updates under the current variant
    /// and embedding strategy.
    pub fn is_trainable(&self, id: ParamId) -> bool {
        let spec = self.config.spec();
        let tune = self.config.strategy.tunes_embeddings();
        match id {
            ParamId::AspectEmbedding => spec.uses_aspect && tune,
            ParamId::Transform => spec.uses_aspect && !tune,
            ParamId::AspectAttention => {
                spec.uses_aspect && spec.aspect_pooling == AspectPooling::Attention
            }
            ParamId::UserAttention => {
                spec.uses_aspect && spec.user_pooling != UserPooling::Sum
            }
            ParamId::UserFactors | ParamId::ItemFactors => spec.uses_global,
            ParamId::Output => true,
        }
    }

    pub fn trainable(&self) -> impl Iterator<Item = ParamId> + '_ {
        ParamId::ALL.into_iter().filter(|&id| self.is_trainable(id))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(Matrix::is_finite)
    }

    /// Checks the blocks against a dataset's sizes.
    pub fn check_dataset(&self, vocab_size: usize, num_users: usize, num_items: usize) -> Result<()> {
        let expect = Self::expected_shapes(&self.config, vocab_size, num_users, num_items);
        for id in ParamId::ALL {
            if self.get(id).shape() != expect[id.slot()] {
                return Err(AarmError::Schema(format!(
                    "checkpoint block {} has shape {:?} but the dataset needs {:?}",
                    id.name(),
                    self.get(id).shape(),
                    expect[id.slot()]
                )));
            }
        }
        Ok(())
    }
}

/// `W f / ||W f||`, refusing near-zero norms.
pub fn transform_normalize(embedding: &[f64], transform: &Matrix) -> Result<Vec<f64>> {
    let mut z = vec![0.0; transform.rows()];
    transform.mul_vec(embedding, &mut z);
    let n = norm(&z);
    if n <= NORM_EPSILON {
        return Err(AarmError::DegenerateNorm { aspect: 0, norm: n });
    }
    z.iter_mut().for_each(|x| *x /= n);
    Ok(z)
}

/// Element-wise product gated by both mask indicators.
pub fn aspect_interaction(ci: &[f64], cj: &[f64], mask_i: bool, mask_j: bool) -> Vec<f64> {
    if !(mask_i && mask_j) {
        return vec![0.0; ci.len()];
    }
    ci.iter().zip(cj).map(|(a, b)| a * b).collect()
}

/// Row-wise softmax of `w^T (c_i ⊙ c_j)` over the given item entries.
pub fn aspect_attention(user: &[&[f64]], item: &[&[f64]], weights: &[f64]) -> Vec<Vec<f64>> {
    user.iter()
        .map(|ci| {
            let logits: Vec<f64> = item.iter().map(|cj| interaction_logit(ci, cj, weights)).collect();
            let mut beta = vec![0.0; logits.len()];
            softmax(&logits, &mut beta);
            beta
        })
        .collect()
}

/// `h_i = Σ_j β_ij (c_i ⊙ c_j)`
pub fn aspect_pool(user: &[&[f64]], item: &[&[f64]], beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    user.iter()
        .zip(beta)
        .map(|(ci, row)| {
            let mut h = vec![0.0; ci.len()];
            for (cj, &b) in item.iter().zip(row) {
                for k in 0..h.len() {
                    h[k] += b * ci[k] * cj[k];
                }
            }
            h
        })
        .collect()
}

/// Softmax of `w^T (g ⊙ c_i)` over the given user entries.
pub fn user_attention(user: &[&[f64]], summary: &[f64], weights: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = user.iter().map(|ci| interaction_logit(summary, ci, weights)).collect();
    let mut alpha = vec![0.0; logits.len()];
    softmax(&logits, &mut alpha);
    alpha
}

/// `y = Σ_i α_i h_i`; zero when there are no entries.
pub fn user_pool(h: &[Vec<f64>], alpha: &[f64], dim: usize) -> Vec<f64> {
    let mut y = vec![0.0; dim];
    for (hi, &a) in h.iter().zip(alpha) {
        axpy(a, hi, &mut y);
    }
    y
}

pub fn global_interaction(params: &ModelParams, user: usize, item: usize) -> Result<Vec<f64>> {
    if user >= params.num_users() {
        return Err(AarmError::UnknownUser(user.to_string()));
    }
    if item >= params.num_items() {
        return Err(AarmError::UnknownItem(item.to_string()));
    }
    let p = params.get(ParamId::UserFactors).row(user);
    let q = params.get(ParamId::ItemFactors).row(item);
    Ok(p.iter().zip(q).map(|(a, b)| a * b).collect())
}

#[inline]
fn interaction_logit(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

#[inline]
fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `out += scale * (a ⊙ b)`
#[inline]
fn add_hadamard(scale: f64, a: &[f64], b: &[f64], out: &mut [f64]) {
    for k in 0..out.len() {
        out[k] += scale * a[k] * b[k];
    }
}

/// Normalized aspect vectors for the rows a computation touches.
#[derive(Debug, Clone)]
pub struct AspectCache {
    normalized: Matrix,
    norms: Vec<f64>,
}

impl AspectCache {
    /// Every aspect row of the vocabulary.
    pub fn build(params: &ModelParams) -> Result<Self> {
        let n = params.vocab_size();
        if !params.config.spec().uses_aspect {
            return Ok(Self::empty(params));
        }
        Self::build_for(params, 1..n)
    }

    fn empty(params: &ModelParams) -> Self {
        AspectCache {
            normalized: Matrix::zeros(params.vocab_size(), params.config.aspect_dim),
            norms: vec![0.0; params.vocab_size()],
        }
    }

    /// Only the listed aspect rows; other rows stay zero.
    pub fn build_for<I: IntoIterator<Item = usize>>(params: &ModelParams, aspects: I) -> Result<Self> {
        let mut cache = Self::empty(params);
        if !params.config.spec().uses_aspect {
            return Ok(cache);
        }
        let embedding = params.get(ParamId::AspectEmbedding);
        let transform = params.get(ParamId::Transform);
        for a in aspects {
            if a == PAD || cache.norms[a] > 0.0 {
                continue;
            }
            let row = cache.normalized.row_mut(a);
            transform.mul_vec(embedding.row(a), row);
            let n = norm(row);
            if n <= NORM_EPSILON {
                return Err(AarmError::DegenerateNorm { aspect: a, norm: n });
            }
            row.iter_mut().for_each(|x| *x /= n);
            cache.norms[a] = n;
        }
        Ok(cache)
    }

    pub fn dim(&self) -> usize {
        self.normalized.cols()
    }

    /// Normalized vector of aspect `a` (zero for PAD).
    pub fn vector(&self, a: usize) -> &[f64] {
        self.normalized.row(a)
    }

    /// Pulls `dc` (gradient w.r.t. the normalized vector of `aspect`) back
    /// through the normalization and the transform.
    pub fn backward(
        &self,
        params: &ModelParams,
        aspect: usize,
        dc: &[f64],
        d_transform: Option<&mut Matrix>,
        d_embedding_row: Option<&mut [f64]>,
    ) {
        let c = self.vector(aspect);
        let n = self.norms[aspect];
        debug_assert!(n > 0.0, "aspect {aspect} was not cached");
        let proj = dot(c, dc);
        let dz: Vec<f64> = dc.iter().zip(c).map(|(d, ci)| (d - ci * proj) / n).collect();
        if let Some(dt) = d_transform {
            dt.add_outer(&dz, params.get(ParamId::AspectEmbedding).row(aspect));
        }
        if let Some(de) = d_embedding_row {
            let mut df = vec![0.0; de.len()];
            params.get(ParamId::Transform).mul_vec_transposed(&dz, &mut df);
            axpy(1.0, &df, de);
        }
    }
}

/// Intermediate values of the aspect part for one (user, item) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectTrace {
    /// vocabulary index of every participating user entry (PAD only in literal mode)
    pub user_aspects: Vec<usize>,
    /// inactive entries (PAD, or non-shared aspects under shared-only pooling)
    /// contribute nothing but may still occupy softmax mass in literal mode
    pub user_active: Vec<bool>,
    pub item_aspects: Vec<usize>,
    /// aspect-level weights, one row per user entry (empty rows when not attended)
    pub beta: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub attention_input: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
    pub alpha: Vec<f64>,
    pub output: Vec<f64>,
}

/// Aspect part for padded sets under the given variant.
pub fn aspect_part(
    spec: &VariantSpec,
    masking: MaskingMode,
    cache: &AspectCache,
    params: &ModelParams,
    user_set: &[usize],
    item_set: &[usize],
) -> AspectTrace {
    let dim = cache.dim();
    let shared_only = spec.aspect_pooling == AspectPooling::SharedOnly;
    let literal = masking == MaskingMode::Literal;
    let is_active = |a: usize| a != PAD && (!shared_only || item_set.contains(&a));
    // shared-only pooling conditions on the intersection, not the whole item set
    let keep_item = |a: usize| if a == PAD { literal } else { !shared_only || user_set.contains(&a) };
    let user_aspects: Vec<usize> = if literal {
        user_set.to_vec()
    } else {
        user_set.iter().copied().filter(|&a| is_active(a)).collect()
    };
    let item_aspects: Vec<usize> = item_set.iter().copied().filter(|&a| keep_item(a)).collect();
    let user_active: Vec<bool> = user_aspects.iter().map(|&a| is_active(a)).collect();
    let cu: Vec<&[f64]> = user_aspects.iter().map(|&a| cache.vector(a)).collect();
    let cv: Vec<&[f64]> = item_aspects.iter().map(|&a| cache.vector(a)).collect();

    let mut item_sum = vec![0.0; dim];
    for c in &cv {
        axpy(1.0, c, &mut item_sum);
    }

    let w1 = params.get(ParamId::AspectAttention).as_slice();
    let mut beta = vec![Vec::new(); cu.len()];
    let mut h = vec![vec![0.0; dim]; cu.len()];
    for i in 0..cu.len() {
        if !user_active[i] {
            continue;
        }
        match spec.aspect_pooling {
            AspectPooling::Attention => {
                let row = aspect_attention(&cu[i..=i], &cv, w1).pop().unwrap_or_default();
                h[i] = aspect_pool(&cu[i..=i], &cv, std::slice::from_ref(&row)).pop().unwrap();
                beta[i] = row;
            }
            AspectPooling::Sum => h[i] = hadamard(cu[i], &item_sum),
            AspectPooling::SharedOnly => h[i] = hadamard(cu[i], cu[i]),
        }
    }

    let (summary, alpha, attention_input) = match spec.user_pooling {
        UserPooling::Sum => {
            let alpha = user_active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            (Vec::new(), alpha, Vec::new())
        }
        pooling => {
            let summary = if pooling == UserPooling::ItemConditioned {
                item_sum
            } else {
                let mut g = vec![0.0; dim];
                for (c, &active) in cu.iter().zip(&user_active) {
                    if active {
                        axpy(1.0, c, &mut g);
                    }
                }
                g
            };
            let inputs: Vec<Vec<f64>> = cu
                .iter()
                .zip(&user_active)
                .map(|(c, &active)| if active { hadamard(&summary, c) } else { vec![0.0; dim] })
                .collect();
            let w2 = params.get(ParamId::UserAttention).as_slice();
            let ones = vec![1.0; dim];
            let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            let alpha = user_attention(&refs, &ones, w2);
            (summary, alpha, inputs)
        }
    };
    let output = user_pool(&h, &alpha, dim);
    AspectTrace {
        user_aspects,
        user_active,
        item_aspects,
        beta,
        h,
        attention_input,
        summary,
        alpha,
        output,
    }
}

/// Sparse gradient accumulator filled by [`backward`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradAccumulator {
    pub output: Vec<f64>,
    pub aspect_attention: Vec<f64>,
    pub user_attention: Vec<f64>,
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    /// gradients w.r.t. normalized aspect vectors
    pub aspect_rows: BTreeMap<usize, Vec<f64>>,
}

impl GradAccumulator {
    pub fn new(params: &ModelParams) -> Self {
        let a = params.config.aspect_dim;
        GradAccumulator {
            output: vec![0.0; params.config.output_width()],
            aspect_attention: vec![0.0; a],
            user_attention: vec![0.0; a],
            ..Default::default()
        }
    }

    pub fn merge(&mut self, other: &GradAccumulator) {
        axpy(1.0, &other.output, &mut self.output);
        axpy(1.0, &other.aspect_attention, &mut self.aspect_attention);
        axpy(1.0, &other.user_attention, &mut self.user_attention);
        for (dst, src) in [
            (&mut self.user_rows, &other.user_rows),
            (&mut self.item_rows, &other.item_rows),
            (&mut self.aspect_rows, &other.aspect_rows),
        ] {
            for (&k, v) in src {
                let d = v.len();
                axpy(1.0, v, dst.entry(k).or_insert_with(|| vec![0.0; d]));
            }
        }
    }
}

fn row_entry(map: &mut BTreeMap<usize, Vec<f64>>, key: usize, dim: usize) -> &mut Vec<f64> {
    map.entry(key).or_insert_with(|| vec![0.0; dim])
}

/// Reverse pass of [`aspect_part`] for upstream gradient `dy`.
pub fn aspect_part_backward(
    spec: &VariantSpec,
    trace: &AspectTrace,
    cache: &AspectCache,
    params: &ModelParams,
    dy: &[f64],
    acc: &mut GradAccumulator,
) {
    let dim = cache.dim();
    let n_u = trace.user_aspects.len();
    let n_v = trace.item_aspects.len();
    if n_u == 0 {
        return;
    }
    let cu: Vec<&[f64]> = trace.user_aspects.iter().map(|&a| cache.vector(a)).collect();
    let cv: Vec<&[f64]> = trace.item_aspects.iter().map(|&a| cache.vector(a)).collect();
    let mut du = vec![vec![0.0; dim]; n_u];
    let mut dv = vec![vec![0.0; dim]; n_v];
    let mut dh = vec![vec![0.0; dim]; n_u];

    match spec.user_pooling {
        UserPooling::Sum => {
            for (i, d) in dh.iter_mut().enumerate() {
                if trace.user_active[i] {
                    d.copy_from_slice(dy);
                }
            }
        }
        pooling => {
            let dalpha: Vec<f64> = trace.h.iter().map(|h| dot(dy, h)).collect();
            for (i, d) in dh.iter_mut().enumerate() {
                axpy(trace.alpha[i], dy, d);
            }
            let mut dlogit = vec![0.0; n_u];
            softmax_backward(&trace.alpha, &dalpha, &mut dlogit);
            let w2 = params.get(ParamId::UserAttention).as_slice();
            let mut dsummary = vec![0.0; dim];
            for i in 0..n_u {
                if !trace.user_active[i] {
                    continue;
                }
                axpy(dlogit[i], &trace.attention_input[i], &mut acc.user_attention);
                // x_i = g ⊙ c_i, dx_i = dlogit_i * w2
                add_hadamard(dlogit[i], w2, cu[i], &mut dsummary);
                add_hadamard(dlogit[i], w2, &trace.summary, &mut du[i]);
            }
            if pooling == UserPooling::ItemConditioned {
                for d in dv.iter_mut() {
                    axpy(1.0, &dsummary, d);
                }
            } else {
                for (i, d) in du.iter_mut().enumerate() {
                    if trace.user_active[i] {
                        axpy(1.0, &dsummary, d);
                    }
                }
            }
        }
    }

    match spec.aspect_pooling {
        AspectPooling::Attention => {
            let w1 = params.get(ParamId::AspectAttention).as_slice();
            for i in 0..n_u {
                if !trace.user_active[i] || n_v == 0 {
                    continue;
                }
                let beta = &trace.beta[i];
                let dbeta: Vec<f64> = cv
                    .iter()
                    .map(|cj| interaction_logit(&dh[i], cu[i], cj))
                    .collect();
                let mut dlogit = vec![0.0; n_v];
                softmax_backward(beta, &dbeta, &mut dlogit);
                for j in 0..n_v {
                    // ds = β_ij dh_i + dlogit_ij w1, s = c_i ⊙ c_j
                    add_hadamard(dlogit[j], cu[i], cv[j], &mut acc.aspect_attention);
                    let ds: Vec<f64> = (0..dim).map(|k| beta[j] * dh[i][k] + dlogit[j] * w1[k]).collect();
                    add_hadamard(1.0, &ds, cv[j], &mut du[i]);
                    add_hadamard(1.0, &ds, cu[i], &mut dv[j]);
                }
            }
        }
        AspectPooling::Sum => {
            let mut item_sum = vec![0.0; dim];
            for c in &cv {
                axpy(1.0, c, &mut item_sum);
            }
            for i in 0..n_u {
                if !trace.user_active[i] {
                    continue;
                }
                add_hadamard(1.0, &dh[i], &item_sum, &mut du[i]);
                for d in dv.iter_mut() {
                    add_hadamard(1.0, &dh[i], cu[i], d);
                }
            }
        }
        AspectPooling::SharedOnly => {
            for i in 0..n_u {
                if trace.user_active[i] {
                    add_hadamard(2.0, &dh[i], cu[i], &mut du[i]);
                }
            }
        }
    }

    for (grad, &a) in du.iter().zip(&trace.user_aspects).chain(dv.iter().zip(&trace.item_aspects)) {
        if a != PAD {
            axpy(1.0, grad, row_entry(&mut acc.aspect_rows, a, dim));
        }
    }
}

/// Multiplicative dropout masks (0 or 1/(1-rate)) for both halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub global: Vec<f64>,
    pub aspect: Vec<f64>,
}

impl Dropout {
    pub fn sample<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let keep = 1.0 - config.dropout;
        let scale = 1.0 / keep;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                .collect()
        };
        let global = draw(config.global_dim);
        let aspect = draw(config.aspect_dim);
        Dropout { global, aspect }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub user: usize,
    pub item: usize,
    pub aspect: Option<AspectTrace>,
    pub y_global: Vec<f64>,
    /// output-layer input after dropout, `[global; aspect]`
    pub features: Vec<f64>,
    pub dropout: Option<Dropout>,
    pub score: f64,
}

impl ForwardTrace {
    pub fn y_aspect(&self) -> &[f64] {
        self.aspect.as_ref().map_or(&[], |a| a.output.as_slice())
    }
}

/// Score of `(user, item)`; `dropout` is `None` in inference mode.
pub fn forward(
    params: &ModelParams,
    cache: &AspectCache,
    sets: &AspectSets,
    user: usize,
    item: usize,
    dropout: Option<&Dropout>,
) -> Result<ForwardTrace> {
    let spec = params.config.spec();
    let y_global = global_interaction(params, user, item)?;
    let mut features = Vec::with_capacity(params.config.output_width());
    if spec.uses_global {
        match dropout {
            Some(d) => features.extend(y_global.iter().zip(&d.global).map(|(y, m)| y * m)),
            None => features.extend_from_slice(&y_global),
        }
    }
    let aspect = if spec.uses_aspect {
        let trace = aspect_part(
            spec,
            params.config.masking,
            cache,
            params,
            sets.user_set(user),
            sets.item_set(item),
        );
        match dropout {
            Some(d) => features.extend(trace.output.iter().zip(&d.aspect).map(|(y, m)| y * m)),
            None => features.extend_from_slice(&trace.output),
        }
        Some(trace)
    } else {
        None
    };
    let score = dot(params.get(ParamId::Output).as_slice(), &features);
    Ok(ForwardTrace {
        user,
        item,
        aspect,
        y_global: if spec.uses_global { y_global } else { Vec::new() },
        features,
        dropout: dropout.cloned(),
        score,
    })
}

/// Inference-mode score.
pub fn score(params: &ModelParams, cache: &AspectCache, sets: &AspectSets, user: usize, item: usize) -> Result<f64> {
    forward(params, cache, sets, user, item, None).map(|t| t.score)
}

/// Accumulates `d_score * ∂score/∂θ` into `acc`.
pub fn backward(
    params: &ModelParams,
    cache: &AspectCache,
    trace: &ForwardTrace,
    d_score: f64,
    acc: &mut GradAccumulator,
) {
    let spec = params.config.spec();
    axpy(d_score, &trace.features, &mut acc.output);
    let w_out = params.get(ParamId::Output).as_slice();
    let mut offset = 0;
    if spec.uses_global {
        let g = params.config.global_dim;
        let mut dy: Vec<f64> = w_out[..g].iter().map(|w| d_score * w).collect();
        if let Some(d) = &trace.dropout {
            dy.iter_mut().zip(&d.global).for_each(|(x, m)| *x *= m);
        }
        let p = params.get(ParamId::UserFactors).row(trace.user);
        let q = params.get(ParamId::ItemFactors).row(trace.item);
        add_hadamard(1.0, &dy, q, row_entry(&mut acc.user_rows, trace.user, g));
        add_hadamard(1.0, &dy, p, row_entry(&mut acc.item_rows, trace.item, g));
        offset = g;
    }
    if let Some(at) = &trace.aspect {
        let mut dy: Vec<f64> = w_out[offset..].iter().map(|w| d_score * w).collect();
        if let Some(d) = &trace.dropout {
            dy.iter_mut().zip(&d.aspect).for_each(|(x, m)| *x *= m);
        }
        aspect_part_backward(spec, at, cache, params, &dy, acc);
    }
}
