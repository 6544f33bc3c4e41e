//! Generator for small datasets with a planted aspect-driven preference.
//!
//! Aspects fall into topic groups. Every user and item gets an aspect profile
//! concentrated on one topic. A user's purchases are drawn with probability
//! proportional to the number of profile aspects shared with the item, and
//! each review mentions the shared aspects plus one aspect of each side.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::InteractionRecord;
use crate::error::{AarmError, Result};
use crate::manifest::KeyValues;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub aspects: usize,
    pub topics: usize,
    /// profile aspects per user or item, most from its own topic
    pub profile_size: usize,
    pub min_purchases: usize,
    pub max_purchases: usize,
    /// weight of a pair that shares no aspect
    pub background_weight: f64,
    pub filler_tokens: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 200,
            items: 200,
            aspects: 30,
            topics: 5,
            profile_size: 5,
            min_purchases: 8,
            max_purchases: 14,
            background_weight: 0.0,
            filler_tokens: 6,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("users", self.users)
            .set("items", self.items)
            .set("aspects", self.aspects)
            .set("topics", self.topics)
            .set("profile_size", self.profile_size)
            .set("min_purchases", self.min_purchases)
            .set("max_purchases", self.max_purchases)
            .set("background_weight", self.background_weight)
            .set("filler_tokens", self.filler_tokens)
            .set("seed", self.seed);
        kv
    }

    fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items < 2 || self.aspects == 0 || self.topics == 0 || self.topics > self.aspects {
            return Err(AarmError::InvalidArgument("synthetic sizes must be positive, topics <= aspects".into()));
        }
        if self.min_purchases == 0 || self.min_purchases > self.max_purchases || self.max_purchases >= self.items {
            return Err(AarmError::InvalidArgument("need 1 <= min_purchases <= max_purchases < items".into()));
        }
        if self.profile_size == 0 || self.profile_size > self.aspects {
            return Err(AarmError::InvalidArgument("profile_size must lie in 1..=aspects".into()));
        }
        Ok(())
    }
}

pub fn aspect_name(k: usize) -> String {
    format!("feature {k:02}")
}

fn topic_of(aspect: usize, cfg: &SyntheticConfig) -> usize {
    aspect * cfg.topics / cfg.aspects
}

/// Profile: all but one aspect from `topic`, the rest anywhere.
fn profile<R: Rng>(topic: usize, cfg: &SyntheticConfig, rng: &mut R) -> Vec<usize> {
    let mut own: Vec<usize> = (0..cfg.aspects).filter(|&a| topic_of(a, cfg) == topic).collect();
    own.shuffle(rng);
    let take = (cfg.profile_size.saturating_sub(1)).min(own.len()).max(1);
    let mut out: Vec<usize> = own[..take].to_vec();
    while out.len() < cfg.profile_size {
        let a = rng.gen_range(0..cfg.aspects);
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out.sort_unstable();
    out
}

fn shared(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

/// Generated records plus each user's and item's aspect profile.
pub struct SyntheticData {
    pub records: Vec<InteractionRecord>,
    pub user_profiles: Vec<Vec<usize>>,
    pub item_profiles: Vec<Vec<usize>>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user_profiles: Vec<Vec<usize>> = (0..cfg.users)
        .map(|_| {
            let t = rng.gen_range(0..cfg.topics);
            profile(t, cfg, &mut rng)
        })
        .collect();
    let item_profiles: Vec<Vec<usize>> = (0..cfg.items)
        .map(|_| {
            let t = rng.gen_range(0..cfg.topics);
            profile(t, cfg, &mut rng)
        })
        .collect();

    let mut records = Vec::new();
    for (u, up) in user_profiles.iter().enumerate() {
        let mut weights: Vec<f64> = item_profiles
            .iter()
            .map(|ip| shared(up, ip).len() as f64 + cfg.background_weight)
            .collect();
        let available = weights.iter().filter(|&&w| w > 0.0).count();
        let want = rng.gen_range(cfg.min_purchases..=cfg.max_purchases).min(available);
        let mut chosen = Vec::with_capacity(want);
        for _ in 0..want {
            let total: f64 = weights.iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (v, &w) in weights.iter().enumerate() {
                if w > 0.0 && x < w {
                    pick = v;
                    break;
                }
                x -= w;
            }
            while weights[pick] == 0.0 {
                pick -= 1;
            }
            weights[pick] = 0.0;
            chosen.push(pick);
        }
        for v in chosen {
            let ip = &item_profiles[v];
            let mut mentioned = shared(up, ip);
            for side in [up, ip] {
                let a = *side.choose(&mut rng).expect("non-empty profile");
                if !mentioned.contains(&a) {
                    mentioned.push(a);
                }
            }
            mentioned.sort_unstable();
            let mut tokens = Vec::new();
            for &a in &mentioned {
                let t = topic_of(a, cfg);
                for _ in 0..cfg.filler_tokens / 2 {
                    tokens.push(format!("topic{t}w{}", rng.gen_range(0..4)));
                }
                tokens.extend(aspect_name(a).split(' ').map(String::from));
                tokens.push(["is", "was", "felt"][rng.gen_range(0..3)].to_string());
                for _ in 0..cfg.filler_tokens - cfg.filler_tokens / 2 {
                    tokens.push(format!("topic{t}w{}", rng.gen_range(0..4)));
                }
            }
            records.push(InteractionRecord {
                user_id: format!("u{u:04}"),
                item_id: format!("i{v:04}"),
                rating: rng.gen_range(1..=5) as f64,
                review_tokens: Some(tokens),
                aspects: mentioned.iter().map(|&a| aspect_name(a)).collect(),
            });
        }
    }
    Ok(SyntheticData {
        records,
        user_profiles,
        item_profiles,
    })
}

pub fn to_jsonl(records: &[InteractionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
