//! Pairwise ranking training: BPR loss, L2 penalty, exact gradients, Adam
//! and an early-stopped epoch loop with resumable checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{AspectSets, DatasetBundle, Positives};
use crate::error::{AarmError, Result};
use crate::evaluation::{validation_metrics, Metrics, ModelScorer};
use crate::manifest::KeyValues;
use crate::matrix::Matrix;
use crate::model::{self, AspectCache, Dropout, GradAccumulator, ModelParams, ParamId};
use crate::parallel::Workers;

pub const BEST_CHECKPOINT: &str = "model.ckpt";
pub const STATE_CHECKPOINT: &str = "state.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";

/// Examples per gradient work unit. Fixed so that results do not depend on
/// the thread count.
const CHUNK: usize = 32;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-ln σ(pos - neg)`
pub fn bpr_loss(pos: f64, neg: f64) -> f64 {
    softplus(neg - pos)
}

/// Derivative of [`bpr_loss`] with respect to `pos - neg`.
pub fn bpr_slope(delta: f64) -> f64 {
    -sigmoid(-delta)
}

/// `λ · Σ mean(W²)` over the regularized blocks that are in use.
pub fn l2_penalty(params: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    ParamId::ALL
        .into_iter()
        .filter(|&id| id.regularized() && params.is_trainable(id))
        .map(|id| {
            let m = params.get(id);
            m.squared_norm() / m.len().max(1) as f64
        })
        .sum::<f64>()
        * lambda
}

/// Uniform draw from the items `user` has no train positive with.
pub fn sample_negative<R: Rng>(user: usize, positives: &Positives, num_items: usize, rng: &mut R) -> Result<usize> {
    let owned = positives.items(user);
    if owned.len() >= num_items {
        return Err(AarmError::NoNegativeCandidates(user));
    }
    if owned.len() * 2 <= num_items {
        loop {
            let v = rng.gen_range(0..num_items);
            if !positives.contains(user, v) {
                return Ok(v);
            }
        }
    }
    // dense rows: pick the k-th free item directly
    let mut k = rng.gen_range(0..num_items - owned.len());
    for &taken in owned {
        if taken <= k {
            k += 1;
        } else {
            break;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Dropout masks for the positive and negative forward passes of one example.
pub type ExampleNoise = (Dropout, Dropout);

/// One gradient block per trainable matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientSet {
    blocks: BTreeMap<ParamId, Matrix>,
}

impl GradientSet {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.blocks.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.blocks.iter().map(|(&k, v)| (k, v))
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.blocks.keys().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.values().all(Matrix::is_finite)
    }
}

fn batch_aspects(sets: &AspectSets, batch: &[Triple]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for t in batch {
        out.extend(sets.user_set(t.user));
        out.extend(sets.item_set(t.pos));
        out.extend(sets.item_set(t.neg));
    }
    out
}

fn noise_of(noise: Option<&[ExampleNoise]>, k: usize) -> (Option<&Dropout>, Option<&Dropout>) {
    match noise {
        Some(n) => (Some(&n[k].0), Some(&n[k].1)),
        None => (None, None),
    }
}

/// Mean BPR loss of the batch plus the L2 penalty, without gradients.
pub fn batch_loss(
    params: &ModelParams,
    sets: &AspectSets,
    batch: &[Triple],
    noise: Option<&[ExampleNoise]>,
    lambda: f64,
) -> Result<f64> {
    let cache = AspectCache::build_for(params, batch_aspects(sets, batch))?;
    let mut total = 0.0;
    for (k, t) in batch.iter().enumerate() {
        let (dp, dn) = noise_of(noise, k);
        let pos = model::forward(params, &cache, sets, t.user, t.pos, dp)?.score;
        let neg = model::forward(params, &cache, sets, t.user, t.neg, dn)?.score;
        total += bpr_loss(pos, neg);
    }
    Ok(total / batch.len().max(1) as f64 + l2_penalty(params, lambda))
}

/// Loss and exact gradients of every trainable block for one batch.
pub fn gradients(
    params: &ModelParams,
    sets: &AspectSets,
    batch: &[Triple],
    noise: Option<&[ExampleNoise]>,
    lambda: f64,
    workers: &Workers,
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(AarmError::InvalidArgument("empty batch".into()));
    }
    let cache = AspectCache::build_for(params, batch_aspects(sets, batch))?;
    let scale = 1.0 / batch.len() as f64;
    let chunks = batch.len().div_ceil(CHUNK);
    let parts = workers.map(chunks, |c| -> Result<(f64, GradAccumulator)> {
        let mut acc = GradAccumulator::new(params);
        let mut loss = 0.0;
        let start = c * CHUNK;
        for (k, t) in batch.iter().enumerate().skip(start).take(CHUNK) {
            let (dp, dn) = noise_of(noise, k);
            let pos = model::forward(params, &cache, sets, t.user, t.pos, dp)?;
            let neg = model::forward(params, &cache, sets, t.user, t.neg, dn)?;
            let l = bpr_loss(pos.score, neg.score);
            if !l.is_finite() {
                return Err(AarmError::NonFinite {
                    what: "loss",
                    batch_size: batch.len(),
                    example: k,
                });
            }
            loss += l;
            let g = bpr_slope(pos.score - neg.score) * scale;
            model::backward(params, &cache, &pos, g, &mut acc);
            model::backward(params, &cache, &neg, -g, &mut acc);
        }
        Ok((loss, acc))
    });
    let mut loss = 0.0;
    let mut acc = GradAccumulator::new(params);
    for part in parts {
        let (l, a) = part?;
        loss += l;
        acc.merge(&a);
    }
    let loss = loss * scale + l2_penalty(params, lambda);
    let grads = densify(params, &cache, acc, lambda);
    if !grads.is_finite() || !loss.is_finite() {
        return Err(AarmError::NonFinite {
            what: "gradient",
            batch_size: batch.len(),
            example: 0,
        });
    }
    Ok((loss, grads))
}

fn densify(params: &ModelParams, cache: &AspectCache, acc: GradAccumulator, lambda: f64) -> GradientSet {
    let mut blocks = BTreeMap::new();
    for id in params.trainable() {
        let (rows, cols) = params.get(id).shape();
        let mut m = Matrix::zeros(rows, cols);
        match id {
            ParamId::Output => m.as_mut_slice().copy_from_slice(&acc.output),
            ParamId::AspectAttention => m.as_mut_slice().copy_from_slice(&acc.aspect_attention),
            ParamId::UserAttention => m.as_mut_slice().copy_from_slice(&acc.user_attention),
            ParamId::UserFactors | ParamId::ItemFactors => {
                let rows = if id == ParamId::UserFactors { &acc.user_rows } else { &acc.item_rows };
                for (&r, g) in rows {
                    m.row_mut(r).copy_from_slice(g);
                }
            }
            ParamId::Transform | ParamId::AspectEmbedding => {}
        }
        blocks.insert(id, m);
    }
    let tune = params.config.strategy.tunes_embeddings();
    if params.config.spec().uses_aspect {
        let mut d_transform = blocks.remove(&ParamId::Transform);
        let mut d_embedding = blocks.remove(&ParamId::AspectEmbedding);
        for (&a, dc) in &acc.aspect_rows {
            cache.backward(
                params,
                a,
                dc,
                d_transform.as_mut().filter(|_| !tune),
                d_embedding.as_mut().filter(|_| tune).map(|m| m.row_mut(a)),
            );
        }
        if let Some(m) = d_transform {
            blocks.insert(ParamId::Transform, m);
        }
        if let Some(m) = d_embedding {
            blocks.insert(ParamId::AspectEmbedding, m);
        }
    }
    if lambda != 0.0 {
        for (&id, g) in blocks.iter_mut() {
            if id.regularized() {
                let w = params.get(id);
                let k = 2.0 * lambda / w.len() as f64;
                for (gi, wi) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    *gi += k * wi;
                }
            }
        }
    }
    GradientSet { blocks }
}

/// Largest relative error between analytic and central-difference gradients
/// over every entry of every trainable block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub block: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

pub fn gradient_check(
    params: &ModelParams,
    sets: &AspectSets,
    batch: &[Triple],
    noise: Option<&[ExampleNoise]>,
    lambda: f64,
    step: f64,
) -> Result<Vec<GradientCheck>> {
    let (_, grads) = gradients(params, sets, batch, noise, lambda, &Workers::single())?;
    let mut out = Vec::new();
    let mut probe = params.clone();
    for (id, g) in grads.iter() {
        for index in 0..g.len() {
            let orig = params.get(id).as_slice()[index];
            probe.get_mut(id).as_mut_slice()[index] = orig + step;
            let up = batch_loss(&probe, sets, batch, noise, lambda)?;
            probe.get_mut(id).as_mut_slice()[index] = orig - step;
            let down = batch_loss(&probe, sets, batch, noise, lambda)?;
            probe.get_mut(id).as_mut_slice()[index] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = g.as_slice()[index];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            out.push(GradientCheck {
                block: id,
                index,
                analytic,
                numeric,
                relative_error: (analytic - numeric).abs() / denom,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: BTreeMap<ParamId, Matrix>,
    pub second: BTreeMap<ParamId, Matrix>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Bias-corrected Adam update of the blocks present in `grads`.
pub fn adam_step(params: &mut ModelParams, grads: &GradientSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (id, g) in grads.iter() {
        let (r, c) = g.shape();
        let m = state.first.entry(id).or_insert_with(|| Matrix::zeros(r, c));
        let v = state.second.entry(id).or_insert_with(|| Matrix::zeros(r, c));
        let w = params.get_mut(id);
        for (((wi, &gi), mi), vi) in w
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
        }
    }
}

/// True when at least `min_failing` of the four measures have not exceeded
/// their earlier best for the last `patience` checkpoints.
pub fn should_stop(history: &[Metrics], patience: usize, min_failing: usize) -> bool {
    if patience == 0 || history.len() < patience {
        return false;
    }
    let failing = (0..4)
        .filter(|&k| {
            let values: Vec<f64> = history.iter().map(|m| m.as_array()[k]).collect();
            (values.len() - patience..values.len()).all(|t| {
                let best_before = values[..t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t > 0 && values[t] <= best_before
            })
        })
        .count();
    failing >= min_failing
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub min_failing: usize,
    pub top_n: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            l2: 0.0001,
            batch_size: 512,
            max_epochs: 300,
            eval_every: 10,
            patience: 4,
            min_failing: 2,
            top_n: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) || self.batch_size == 0 || self.eval_every == 0 {
            return Err(AarmError::InvalidArgument(format!(
                "need lr > 0, l2 >= 0, batch >= 1, eval_every >= 1 (got lr={}, l2={}, batch={}, eval_every={})",
                self.learning_rate, self.l2, self.batch_size, self.eval_every
            )));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lr", self.learning_rate)
            .set("l2", self.l2)
            .set("batch", self.batch_size)
            .set("max_epochs", self.max_epochs)
            .set("eval_every", self.eval_every)
            .set("patience", self.patience)
            .set("min_failing", self.min_failing)
            .set("n", self.top_n)
            .set("seed", self.seed);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        fn or<T: std::str::FromStr>(kv: &KeyValues, key: &str, default: T) -> Result<T> {
            if kv.get(key).is_some() {
                kv.parse_value(key)
            } else {
                Ok(default)
            }
        }
        let cfg = TrainConfig {
            learning_rate: or(kv, "lr", d.learning_rate)?,
            l2: or(kv, "l2", d.l2)?,
            batch_size: or(kv, "batch", d.batch_size)?,
            max_epochs: or(kv, "max_epochs", d.max_epochs)?,
            eval_every: or(kv, "eval_every", d.eval_every)?,
            patience: or(kv, "patience", d.patience)?,
            min_failing: or(kv, "min_failing", d.min_failing)?,
            top_n: or(kv, "n", d.top_n)?,
            seed: or(kv, "seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub stopped_epoch: usize,
    pub early_stopped: bool,
    /// index into `checkpoints` of the best validation NDCG
    pub best_checkpoint: Option<usize>,
}

impl TrainHistory {
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_checkpoint.map(|i| self.checkpoints[i].epoch)
    }

    fn metric_history(&self) -> Vec<Metrics> {
        self.checkpoints.iter().map(|c| c.metrics).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    /// directory for checkpoints and the JSON-lines log
    pub out_dir: Option<&'a Path>,
    /// continue from `out_dir/state.ckpt` if present
    pub resume: bool,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub last: ModelParams,
    pub history: TrainHistory,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Samples negatives and dropout masks for one batch.
pub fn prepare_batch<R: Rng>(
    pairs: &[(usize, usize)],
    positives: &Positives,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(Vec<Triple>, Option<Vec<ExampleNoise>>)> {
    let n_items = params.num_items();
    let mut triples = Vec::with_capacity(pairs.len());
    for &(user, pos) in pairs {
        let neg = sample_negative(user, positives, n_items, rng)?;
        triples.push(Triple { user, pos, neg });
    }
    let noise = (params.config.dropout > 0.0).then(|| {
        triples
            .iter()
            .map(|_| (Dropout::sample(&params.config, rng), Dropout::sample(&params.config, rng)))
            .collect()
    });
    Ok((triples, noise))
}

/// Runs one epoch in place and returns its mean batch loss.
pub fn train_epoch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    bundle: &DatasetBundle,
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
    epoch: usize,
    workers: &Workers,
) -> Result<f64> {
    let mut rng = epoch_rng(cfg.seed, epoch);
    let mut order = pairs.to_vec();
    order.shuffle(&mut rng);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let (triples, noise) = prepare_batch(chunk, &bundle.positives, params, &mut rng)?;
        let (loss, grads) = gradients(params, &bundle.sets, &triples, noise.as_deref(), cfg.l2, workers)?;
        adam_step(params, &grads, adam, cfg.learning_rate);
        total += loss * chunk.len() as f64;
    }
    Ok(total / order.len().max(1) as f64)
}

fn state_checkpoint(params: &ModelParams, adam: &AdamState, history: &TrainHistory, epoch: usize, cfg: &TrainConfig) -> Result<Checkpoint> {
    let mut extra = KeyValues::new();
    extra
        .set("kind", "state")
        .set("epoch", epoch)
        .set("adam_step", adam.step)
        .set("history", serde_json::to_string(history)?);
    for (k, v) in cfg.to_key_values().iter() {
        extra.set(format!("train.{k}"), v);
    }
    let mut ck = Checkpoint::from_params(params, &extra);
    for (id, m) in &adam.first {
        ck.matrices.push((format!("adam_m.{}", id.name()), m.clone()));
    }
    for (id, m) in &adam.second {
        ck.matrices.push((format!("adam_v.{}", id.name()), m.clone()));
    }
    Ok(ck)
}

fn restore_state(ck: &Checkpoint) -> Result<(ModelParams, AdamState, TrainHistory, usize)> {
    let params = ck.to_params()?;
    let mut adam = AdamState::new();
    adam.step = ck.meta.parse_value("adam_step")?;
    for (name, m) in &ck.matrices {
        let (slot, rest) = match name.split_once('.') {
            Some(("adam_m", rest)) => (&mut adam.first, rest),
            Some(("adam_v", rest)) => (&mut adam.second, rest),
            _ => continue,
        };
        let id = ParamId::from_name(rest)
            .ok_or_else(|| AarmError::Schema(format!("unknown optimizer block {name}")))?;
        slot.insert(id, m.clone());
    }
    let history: TrainHistory = serde_json::from_str(ck.meta.require("history")?)?;
    let epoch = ck.meta.parse_value("epoch")?;
    Ok((params, adam, history, epoch))
}

fn log_line(out_dir: Option<&Path>, line: &serde_json::Value) -> Result<()> {
    if let Some(dir) = out_dir {
        let path = dir.join(TRAIN_LOG);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| AarmError::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| AarmError::io(&path, e))?;
    }
    Ok(())
}

/// Full training loop with periodic validation and early stopping. Returns
/// the best-validation-NDCG parameters (or the last ones if no checkpoint
/// was evaluated).
pub fn train(bundle: &DatasetBundle, init: ModelParams, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.check_dataset(bundle.vocab.size(), bundle.num_users(), bundle.num_items())?;
    let workers = Workers::new(opts.threads)?;
    let pairs = bundle.training_pairs();
    if pairs.is_empty() {
        return Err(AarmError::InvalidArgument("no training pairs".into()));
    }
    let mut params = init;
    let mut adam = AdamState::new();
    let mut history = TrainHistory::default();
    let mut best: Option<ModelParams> = None;
    let mut start = 1;

    if let Some(dir) = opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| AarmError::io(dir, e))?;
        let state_path = dir.join(STATE_CHECKPOINT);
        if opts.resume && state_path.exists() {
            let ck = Checkpoint::read(&state_path)?;
            if ck.meta.get("train.seed") != Some(&cfg.seed.to_string()) {
                return Err(AarmError::InvalidArgument("resume requires the original seed".into()));
            }
            let (p, a, h, epoch) = restore_state(&ck)?;
            p.check_dataset(bundle.vocab.size(), bundle.num_users(), bundle.num_items())?;
            info!("resuming after epoch {epoch}");
            params = p;
            adam = a;
            history = h;
            start = epoch + 1;
            let best_path = dir.join(BEST_CHECKPOINT);
            if history.best_checkpoint.is_some() && best_path.exists() {
                best = Some(Checkpoint::read(&best_path)?.to_params()?);
            }
            if history.early_stopped {
                start = cfg.max_epochs + 1;
            }
        } else {
            let log = dir.join(TRAIN_LOG);
            if log.exists() {
                fs::remove_file(&log).map_err(|e| AarmError::io(&log, e))?;
            }
        }
    }

    for epoch in start..=cfg.max_epochs {
        let loss = train_epoch(&mut params, &mut adam, bundle, &pairs, cfg, epoch, &workers)?;
        history.epochs.push(EpochRecord { epoch, loss });
        history.stopped_epoch = epoch;
        let mut line = serde_json::json!({ "epoch": epoch, "loss": loss });
        let mut stop = false;
        if epoch % cfg.eval_every == 0 && !bundle.validation.is_empty() {
            let scorer = ModelScorer::new(&params, &bundle.sets)?;
            let metrics = validation_metrics(&scorer, bundle, cfg.top_n, &workers)?;
            let improved = history
                .best_checkpoint
                .map_or(true, |i| metrics.ndcg > history.checkpoints[i].metrics.ndcg);
            history.checkpoints.push(CheckpointRecord { epoch, metrics });
            if improved {
                history.best_checkpoint = Some(history.checkpoints.len() - 1);
                best = Some(params.clone());
                if let Some(dir) = opts.out_dir {
                    let mut extra = KeyValues::new();
                    extra.set("kind", "model").set("epoch", epoch);
                    Checkpoint::from_params(&params, &extra).write(&dir.join(BEST_CHECKPOINT))?;
                }
            }
            line["validation"] = metrics.to_percent_json();
            stop = should_stop(&history.metric_history(), cfg.patience, cfg.min_failing);
            history.early_stopped = stop;
        }
        info!("epoch {epoch} loss {loss:.6}");
        log_line(opts.out_dir, &line)?;
        if let Some(dir) = opts.out_dir {
            state_checkpoint(&params, &adam, &history, epoch, cfg)?.write(&dir.join(STATE_CHECKPOINT))?;
        }
        if stop {
            info!("early stop at epoch {epoch}");
            break;
        }
    }

    let best = best.unwrap_or_else(|| params.clone());
    if let Some(dir) = opts.out_dir {
        if history.best_checkpoint.is_none() {
            let mut extra = KeyValues::new();
            extra.set("kind", "model").set("epoch", history.stopped_epoch);
            Checkpoint::from_params(&best, &extra).write(&dir.join(BEST_CHECKPOINT))?;
        }
        let path = dir.join("history.json");
        fs::write(&path, serde_json::to_string_pretty(&history)?).map_err(|e| AarmError::io(&path, e))?;
    }
    Ok(TrainOutcome {
        best,
        last: params,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::variants::{EmbeddingStrategy, Variant};

    #[test]
    fn bpr_anchors() {
        assert!((bpr_loss(1.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bpr_loss(50.0, 0.0) < 1e-20);
        assert!(bpr_loss(0.0, 1000.0).is_finite());
        assert!((bpr_loss(3f64.ln(), 0.0) - 0.287682).abs() < 1e-6);
        assert!((bpr_loss(3f64.ln(), 0.0) + (0.75f64).ln()).abs() < 1e-15);
    }

    fn small_params(variant: Variant) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ModelConfig {
            aspect_dim: 2,
            global_dim: 2,
            variant,
            strategy: EmbeddingStrategy::RandomTune,
            ..ModelConfig::default()
        };
        ModelParams::init(cfg, 3, 2, 2, None, &mut rng).unwrap()
    }

    #[test]
    fn l2_anchors() {
        let mut p = small_params(Variant::Aarm);
        assert_eq!(l2_penalty(&p, 0.0), 0.0);
        for id in [ParamId::UserFactors, ParamId::ItemFactors, ParamId::Output] {
            p.get_mut(id).as_mut_slice().fill(1.0);
        }
        assert!((l2_penalty(&p, 1.0) - 3.0).abs() < 1e-15);
        for id in [ParamId::ItemFactors, ParamId::Output] {
            p.get_mut(id).as_mut_slice().fill(0.0);
        }
        p.get_mut(ParamId::UserFactors).as_mut_slice().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert!((l2_penalty(&p, 0.1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn negatives_avoid_positives() {
        let pos = Positives::from_lists(vec![vec![0], (0..10).filter(|&v| v != 7).collect()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let v = sample_negative(0, &pos, 3, &mut rng).unwrap();
            counts[v] += 1;
            assert_eq!(sample_negative(1, &pos, 10, &mut rng).unwrap(), 7);
        }
        assert_eq!(counts[0], 0);
        // chi-square with 1 dof, 99.9% critical value 10.83
        let chi = [counts[1], counts[2]]
            .iter()
            .map(|&c| (c as f64 - 5000.0).powi(2) / 5000.0)
            .sum::<f64>();
        assert!(chi < 10.83, "chi2 {chi}");
        let full = Positives::from_lists(vec![vec![0, 1, 2]]);
        assert!(matches!(sample_negative(0, &full, 3, &mut rng), Err(AarmError::NoNegativeCandidates(0))));
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = small_params(Variant::GlobalOnly);
        let before = p.clone();
        let mut grads = GradientSet::default();
        grads.blocks.insert(ParamId::Output, Matrix::from_vec(1, 2, vec![0.3, -2.0]));
        grads.blocks.insert(ParamId::UserFactors, Matrix::zeros(2, 2));
        let mut state = AdamState::new();
        adam_step(&mut p, &grads, &mut state, 0.01);
        let d0 = before.get(ParamId::Output).get(0, 0) - p.get(ParamId::Output).get(0, 0);
        let d1 = before.get(ParamId::Output).get(0, 1) - p.get(ParamId::Output).get(0, 1);
        assert!((d0 - 0.01).abs() < 1e-8 && (d1 + 0.01).abs() < 1e-8);
        assert_eq!(p.get(ParamId::UserFactors), before.get(ParamId::UserFactors));
    }

    fn m(ndcg: f64, recall: f64) -> Metrics {
        Metrics {
            recall,
            precision: recall,
            ndcg,
            hit_ratio: ndcg,
        }
    }

    #[test]
    fn early_stopping_rule() {
        let improving: Vec<Metrics> = (0..8).map(|i| m(i as f64, i as f64)).collect();
        assert!(!should_stop(&improving, 4, 2));
        // ndcg and hit_ratio stall for 4 checkpoints, recall and precision keep improving
        let mut h = vec![m(0.5, 0.1)];
        for i in 0..4 {
            h.push(m(0.4, 0.2 + i as f64 * 0.1));
        }
        assert!(should_stop(&h, 4, 2));
        assert!(!should_stop(&h[..4], 4, 2));
        assert!(!should_stop(&h, 4, 3));
    }

    #[test]
    fn config_round_trip() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            l2: 0.1,
            batch_size: 7,
            seed: 42,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
        let mut bad = cfg.to_key_values();
        bad.set("lr", 0);
        assert!(TrainConfig::from_key_values(&bad).is_err());
    }
}
