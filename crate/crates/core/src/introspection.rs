//! Attention dumps for single (user, item) pairs and dataset-level
//! shared-aspect statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::corpus::{DatasetBundle, PAD};
use crate::error::{AarmError, Result};
use crate::model::{self, aspect_part, AspectCache, ModelParams};
use crate::variants::{AspectPooling, UserPooling};

/// Round to 6 decimals for dumps.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectWeight {
    pub aspect: String,
    pub weight: f64,
    pub shared: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_aspect");
        for c in &self.cols {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&self.values) {
            out.push_str(&csv_field(label));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub user_id: String,
    pub item_id: String,
    pub variant: String,
    pub score: f64,
    /// user-level weights over the user's non-PAD aspects
    pub user_attention: Vec<AspectWeight>,
    /// item aspects, PAD omitted
    pub item_aspects: Vec<String>,
    /// aspect-level weights; `None` for variants without aspect-level attention
    pub heatmap: Option<Heatmap>,
}

impl AttentionDump {
    pub fn to_json(&self) -> Value {
        let alpha: Vec<Value> = self
            .user_attention
            .iter()
            .map(|w| json!({ "aspect": w.aspect, "alpha": round6(w.weight), "shared": w.shared }))
            .collect();
        let beta = self.heatmap.as_ref().map(|h| {
            json!({
                "rows": h.rows,
                "cols": h.cols,
                "values": h.values.iter().map(|r| r.iter().map(|&x| round6(x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        });
        json!({
            "user": self.user_id,
            "item": self.item_id,
            "variant": self.variant,
            "score": round6(self.score),
            "user_attention": alpha,
            "item_aspects": self.item_aspects,
            "aspect_attention": beta,
        })
    }
}

fn check_ids(bundle: &DatasetBundle, user: usize, item: usize) -> Result<()> {
    if user >= bundle.num_users() {
        return Err(AarmError::UnknownUser(user.to_string()));
    }
    if item >= bundle.num_items() {
        return Err(AarmError::UnknownItem(item.to_string()));
    }
    Ok(())
}

/// Attention weights of the trained model for `(user, item)`.
pub fn attention_dump(params: &ModelParams, bundle: &DatasetBundle, user: usize, item: usize) -> Result<AttentionDump> {
    check_ids(bundle, user, item)?;
    let spec = params.config.spec();
    if !spec.uses_aspect {
        return Err(AarmError::InvalidArgument(format!(
            "variant {} has no aspect part to inspect",
            spec.name
        )));
    }
    let user_set = bundle.sets.user_set(user);
    let item_set = bundle.sets.item_set(item);
    let cache = AspectCache::build_for(params, user_set.iter().chain(item_set).copied())?;
    let trace = aspect_part(spec, params.config.masking, &cache, params, user_set, item_set);
    let score = model::forward(params, &cache, &bundle.sets, user, item, None)?.score;
    let name = |a: usize| bundle.vocab.aspect(a).to_string();

    let rows: Vec<usize> = (0..trace.user_aspects.len())
        .filter(|&i| trace.user_aspects[i] != PAD)
        .collect();
    let cols: Vec<usize> = (0..trace.item_aspects.len())
        .filter(|&j| trace.item_aspects[j] != PAD)
        .collect();
    let user_attention = rows
        .iter()
        .map(|&i| {
            let a = trace.user_aspects[i];
            let weight = match spec.user_pooling {
                UserPooling::Sum => 1.0,
                _ => trace.alpha[i],
            };
            AspectWeight {
                aspect: name(a),
                weight,
                shared: item_set.contains(&a),
            }
        })
        .collect();
    let heatmap = (spec.aspect_pooling == AspectPooling::Attention).then(|| Heatmap {
        rows: rows.iter().map(|&i| name(trace.user_aspects[i])).collect(),
        cols: cols.iter().map(|&j| name(trace.item_aspects[j])).collect(),
        values: rows
            .iter()
            .map(|&i| cols.iter().map(|&j| trace.beta[i].get(j).copied().unwrap_or(0.0)).collect())
            .collect(),
    });
    Ok(AttentionDump {
        user_id: bundle.table.users().id(user).to_string(),
        item_id: bundle.table.items().id(item).to_string(),
        variant: spec.name.to_string(),
        score,
        user_attention,
        item_aspects: cols.iter().map(|&j| name(trace.item_aspects[j])).collect(),
        heatmap,
    })
}

/// User-level attention part of [`attention_dump`].
pub fn user_attention_trace(params: &ModelParams, bundle: &DatasetBundle, user: usize, item: usize) -> Result<Vec<AspectWeight>> {
    Ok(attention_dump(params, bundle, user, item)?.user_attention)
}

/// Aspect-level attention part of [`attention_dump`].
pub fn aspect_attention_heatmap(params: &ModelParams, bundle: &DatasetBundle, user: usize, item: usize) -> Result<Heatmap> {
    attention_dump(params, bundle, user, item)?
        .heatmap
        .ok_or_else(|| AarmError::InvalidArgument("variant has no aspect-level attention".into()))
}

pub const SHARED_BUCKETS: [&str; 7] = ["0", "1", "2", "3", "4", "5", ">5"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairTraversal {
    Exact,
    Sampled { pairs: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedAspectHistogram {
    pub counts: [u64; 7],
    pub pairs: u64,
    pub traversal: PairTraversal,
    pub truncated: bool,
}

impl SharedAspectHistogram {
    pub fn ratios(&self) -> [f64; 7] {
        let n = self.pairs.max(1) as f64;
        self.counts.map(|c| c as f64 / n)
    }

    pub fn to_json(&self) -> Value {
        let ratios = self.ratios();
        let buckets: serde_json::Map<String, Value> = SHARED_BUCKETS
            .iter()
            .zip(ratios)
            .map(|(b, r)| (b.to_string(), json!((r * 100_000.0).round() / 1000.0)))
            .collect();
        let (mode, sample) = match self.traversal {
            PairTraversal::Exact => ("exact", None),
            PairTraversal::Sampled { pairs, seed } => ("sampled", Some(json!({ "pairs": pairs, "seed": seed }))),
        };
        json!({
            "units": "percent",
            "buckets": buckets,
            "pairs": self.pairs,
            "mode": mode,
            "sample": sample,
            "truncated": self.truncated,
        })
    }
}

fn shared_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn sorted_sets<'a>(sets: impl Iterator<Item = &'a [usize]>) -> Vec<Vec<usize>> {
    sets.map(|s| {
        let mut v: Vec<usize> = s.iter().copied().filter(|&a| a != PAD).collect();
        v.sort_unstable();
        v
    })
    .collect()
}

/// Histogram of shared-aspect counts over user × item pairs. Raw
/// (untruncated) sets unless `truncated` is set.
pub fn shared_aspect_distribution(bundle: &DatasetBundle, traversal: PairTraversal, truncated: bool) -> SharedAspectHistogram {
    let sets = &bundle.sets;
    let users = sorted_sets((0..sets.num_users()).map(|u| {
        if truncated {
            sets.user_set(u)
        } else {
            sets.raw_user_set(u)
        }
    }));
    let items = sorted_sets((0..sets.num_items()).map(|v| {
        if truncated {
            sets.item_set(v)
        } else {
            sets.raw_item_set(v)
        }
    }));
    let mut counts = [0u64; 7];
    let mut pairs = 0u64;
    let mut bump = |u: usize, v: usize| {
        counts[shared_count(&users[u], &items[v]).min(6)] += 1;
        pairs += 1;
    };
    match traversal {
        PairTraversal::Exact => {
            for u in 0..users.len() {
                for v in 0..items.len() {
                    bump(u, v);
                }
            }
        }
        PairTraversal::Sampled { pairs: n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if !users.is_empty() && !items.is_empty() {
                for _ in 0..n {
                    bump(rng.gen_range(0..users.len()), rng.gen_range(0..items.len()));
                }
            }
        }
    }
    SharedAspectHistogram {
        counts,
        pairs,
        traversal,
        truncated,
    }
}
