//! Top-N recommendation and ranking metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{AspectSets, DatasetBundle};
use crate::error::{AarmError, Result};
use crate::model::{self, AspectCache, ModelParams};
use crate::parallel::Workers;

/// Anything that can score every item for a user.
pub trait Scorer: Sync {
    fn num_items(&self) -> usize;
    fn score_all(&self, user: usize) -> Result<Vec<f64>>;
}

/// Inference-mode model scores.
pub struct ModelScorer<'a> {
    params: &'a ModelParams,
    sets: &'a AspectSets,
    cache: AspectCache,
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ModelParams, sets: &'a AspectSets) -> Result<Self> {
        let cache = AspectCache::build(params)?;
        Ok(ModelScorer { params, sets, cache })
    }
}

impl Scorer for ModelScorer<'_> {
    fn num_items(&self) -> usize {
        self.params.num_items()
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        (0..self.num_items())
            .map(|v| model::score(self.params, &self.cache, self.sets, user, v))
            .collect()
    }
}

/// Uniform random scores, reproducible per (seed, user).
pub struct RandomScorer {
    pub num_items: usize,
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn num_items(&self) -> usize {
        self.num_items
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(user as u64);
        Ok((0..self.num_items).map(|_| rng.gen::<f64>()).collect())
    }
}

/// Highest-scoring items outside `excluded` (sorted ascending); ties go to the
/// lower index.
pub fn top_n(scores: &[f64], excluded: &[usize], n: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|v| excluded.binary_search(v).is_err())
        .collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    candidates.truncate(n);
    candidates
}

/// Top-N list for `user`, excluding the user's train positives.
pub fn recommend_top_n<S: Scorer + ?Sized>(
    scorer: &S,
    bundle: &DatasetBundle,
    user: usize,
    n: usize,
) -> Result<Vec<usize>> {
    if user >= bundle.num_users() {
        return Err(AarmError::UnknownUser(user.to_string()));
    }
    let scores = scorer.score_all(user)?;
    Ok(top_n(&scores, bundle.positives.items(user), n))
}

fn true_positives(list: &[usize], truth: &[usize]) -> usize {
    list.iter().filter(|v| truth.contains(v)).count()
}

pub fn recall(list: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    true_positives(list, truth) as f64 / truth.len() as f64
}

pub fn precision(list: &[usize], truth: &[usize], n: usize) -> f64 {
    true_positives(list, truth) as f64 / n as f64
}

pub fn ndcg(list: &[usize], truth: &[usize], n: usize) -> f64 {
    let dcg: f64 = list
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, v)| truth.contains(v))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..truth.len().min(n)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

pub fn hit_ratio(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
    pub hit: bool,
}

impl UserMetrics {
    pub fn compute(user: usize, list: &[usize], truth: &[usize], n: usize) -> Self {
        UserMetrics {
            user,
            recall: recall(list, truth),
            precision: precision(list, truth, n),
            ndcg: ndcg(list, truth, n),
            hit: true_positives(list, truth) > 0,
        }
    }
}

/// Averages over evaluated users, as fractions in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
    pub hit_ratio: f64,
}

impl Metrics {
    pub fn average(users: &[UserMetrics]) -> Self {
        if users.is_empty() {
            return Metrics::default();
        }
        let n = users.len() as f64;
        let hits: Vec<bool> = users.iter().map(|u| u.hit).collect();
        Metrics {
            recall: users.iter().map(|u| u.recall).sum::<f64>() / n,
            precision: users.iter().map(|u| u.precision).sum::<f64>() / n,
            ndcg: users.iter().map(|u| u.ndcg).sum::<f64>() / n,
            hit_ratio: hit_ratio(&hits),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.recall, self.precision, self.ndcg, self.hit_ratio]
    }

    pub fn to_percent_json(&self) -> Value {
        json!({
            "ndcg": percent(self.ndcg),
            "recall": percent(self.recall),
            "hit_ratio": percent(self.hit_ratio),
            "precision": percent(self.precision),
        })
    }
}

/// Fraction to a percentage rounded to 3 decimals.
pub fn percent(x: f64) -> f64 {
    (x * 100_000.0).round() / 1000.0
}

/// Scores each `(user, truth, excluded)` job and computes its metrics.
pub fn evaluate_users<S: Scorer + ?Sized>(
    scorer: &S,
    jobs: &[(usize, Vec<usize>, Vec<usize>)],
    n: usize,
    workers: &Workers,
) -> Result<Vec<UserMetrics>> {
    workers
        .map(jobs.len(), |k| {
            let (user, truth, excluded) = &jobs[k];
            let scores = scorer.score_all(*user)?;
            let list = top_n(&scores, excluded, n);
            Ok(UserMetrics::compute(*user, &list, truth, n))
        })
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub metrics: Metrics,
    pub per_user: Vec<UserMetrics>,
    pub user_ids: Vec<String>,
}

impl EvalReport {
    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn to_json(&self) -> Value {
        let per_user: Vec<Value> = self
            .per_user
            .iter()
            .zip(&self.user_ids)
            .map(|(m, id)| {
                json!({
                    "user": id,
                    "recall": percent(m.recall),
                    "precision": percent(m.precision),
                    "ndcg": percent(m.ndcg),
                    "hit": m.hit,
                })
            })
            .collect();
        json!({
            "n": self.n,
            "num_users": self.num_users(),
            "units": "percent",
            "metrics": self.metrics.to_percent_json(),
            "per_user": per_user,
        })
    }
}

/// Test-set protocol: every user with at least one test item, candidates are
/// all items not among the user's train positives.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    bundle: &DatasetBundle,
    n: usize,
    workers: &Workers,
) -> Result<EvalReport> {
    let jobs: Vec<(usize, Vec<usize>, Vec<usize>)> = (0..bundle.num_users())
        .filter(|&u| !bundle.test_items(u).is_empty())
        .map(|u| (u, bundle.test_items(u).to_vec(), bundle.positives.items(u).to_vec()))
        .collect();
    if jobs.is_empty() {
        return Err(AarmError::InvalidArgument("test split is empty".into()));
    }
    let per_user = evaluate_users(scorer, &jobs, n, workers)?;
    let user_ids = per_user
        .iter()
        .map(|m| bundle.table.users().id(m.user).to_string())
        .collect();
    Ok(EvalReport {
        n,
        metrics: Metrics::average(&per_user),
        per_user,
        user_ids,
    })
}

/// Validation protocol: one held-out train item per sampled user; the
/// user's other train positives are excluded from the candidates.
pub fn validation_metrics<S: Scorer + ?Sized>(
    scorer: &S,
    bundle: &DatasetBundle,
    n: usize,
    workers: &Workers,
) -> Result<Metrics> {
    let jobs: Vec<(usize, Vec<usize>, Vec<usize>)> = bundle
        .validation
        .entries()
        .iter()
        .map(|&(u, v)| {
            let excluded = bundle.positives.items(u).iter().copied().filter(|&x| x != v).collect();
            (u, vec![v], excluded)
        })
        .collect();
    Ok(Metrics::average(&evaluate_users(scorer, &jobs, n, workers)?))
}
