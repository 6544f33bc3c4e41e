//! Aspect vocabulary, TF-IDF truncation and padded per-user / per-item aspect sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::{InteractionTable, Split};
use crate::error::{AarmError, Result};

pub const PAD: usize = 0;
pub const PAD_TOKEN: &str = "<PAD>";

/// Which reviews feed the aspect vocabulary and the per-entity aspect sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AspectSource {
    #[default]
    Train,
    All,
}

impl AspectSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AspectSource::Train => "train",
            AspectSource::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(AspectSource::Train),
            "all" => Some(AspectSource::All),
            _ => None,
        }
    }

    fn includes(self, split: Split) -> bool {
        matches!(self, AspectSource::All) || split == Split::Train
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectVocabulary {
    aspects: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl AspectVocabulary {
    /// Builds a vocabulary from sorted distinct aspect strings. Index 0 is PAD.
    pub fn from_aspects<I: IntoIterator<Item = String>>(aspects: I) -> Result<Self> {
        let distinct: BTreeSet<String> = aspects.into_iter().collect();
        let mut list = Vec::with_capacity(distinct.len() + 1);
        list.push(PAD_TOKEN.to_string());
        for a in distinct {
            if a == PAD_TOKEN {
                return Err(AarmError::InvalidArgument(format!(
                    "{PAD_TOKEN} is reserved"
                )));
            }
            list.push(a);
        }
        Ok(Self::from_list(list))
    }

    /// `list[0]` must be the PAD token.
    pub(crate) fn from_list(list: Vec<String>) -> Self {
        let lookup = list
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, a)| (a.clone(), i))
            .collect();
        AspectVocabulary {
            aspects: list,
            lookup,
        }
    }

    pub fn build(table: &InteractionTable, source: AspectSource) -> Result<Self> {
        let aspects = (0..table.num_records())
            .filter(|&r| source.includes(table.split_of(r)))
            .flat_map(|r| table.records()[r].aspects.iter().cloned());
        Self::from_aspects(aspects)
    }

    pub fn lookup(&self, aspect: &str) -> Option<usize> {
        self.lookup.get(aspect).copied()
    }

    pub fn aspect(&self, index: usize) -> &str {
        &self.aspects[index]
    }

    /// |A| + 1, PAD included.
    pub fn size(&self) -> usize {
        self.aspects.len()
    }

    pub fn num_aspects(&self) -> usize {
        self.aspects.len() - 1
    }

    pub fn entries(&self) -> &[String] {
        &self.aspects
    }
}

/// Term and document frequencies of aspects over users (or items).
#[derive(Debug, Clone)]
pub struct AspectStats {
    tf: Vec<BTreeMap<usize, u32>>,
    df: Vec<u32>,
    num_entities: usize,
}

impl AspectStats {
    pub fn new(tf: Vec<BTreeMap<usize, u32>>, vocab_size: usize) -> Self {
        let mut df = vec![0u32; vocab_size];
        for counts in &tf {
            for &a in counts.keys() {
                df[a] += 1;
            }
        }
        let num_entities = tf.len();
        AspectStats {
            tf,
            df,
            num_entities,
        }
    }

    fn collect(
        table: &InteractionTable,
        vocab: &AspectVocabulary,
        source: AspectSource,
        by_item: bool,
    ) -> Self {
        let n = if by_item {
            table.num_items()
        } else {
            table.num_users()
        };
        let mut tf = vec![BTreeMap::new(); n];
        for r in 0..table.num_records() {
            if !source.includes(table.split_of(r)) {
                continue;
            }
            let e = if by_item {
                table.record_item(r)
            } else {
                table.record_user(r)
            };
            for a in &table.records()[r].aspects {
                if let Some(idx) = vocab.lookup(a) {
                    *tf[e].entry(idx).or_insert(0) += 1;
                }
            }
        }
        Self::new(tf, vocab.size())
    }

    pub fn for_users(table: &InteractionTable, vocab: &AspectVocabulary, source: AspectSource) -> Self {
        Self::collect(table, vocab, source, false)
    }

    pub fn for_items(table: &InteractionTable, vocab: &AspectVocabulary, source: AspectSource) -> Self {
        Self::collect(table, vocab, source, true)
    }

    pub fn term_counts(&self, entity: usize) -> &BTreeMap<usize, u32> {
        &self.tf[entity]
    }

    pub fn document_frequency(&self, aspect: usize) -> u32 {
        self.df[aspect]
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }
}

/// `(tf / tf_total) * ln(n_entities / (df + 1))`.
pub fn tfidf(tf: u32, tf_total: u32, n_entities: usize, df: u32) -> f64 {
    (tf as f64 / tf_total as f64) * (n_entities as f64 / (df as f64 + 1.0)).ln()
}

pub fn tfidf_score(aspect: usize, entity: usize, stats: &AspectStats) -> f64 {
    let counts = stats.term_counts(entity);
    let total: u32 = counts.values().sum();
    let tf = counts.get(&aspect).copied().unwrap_or(0);
    tfidf(tf, total.max(1), stats.num_entities(), stats.document_frequency(aspect))
}

/// Smallest size whose cumulative fraction reaches `q`. Never below 1.
pub fn nearest_rank_quantile(sizes: &[usize], q: f64) -> usize {
    if sizes.is_empty() {
        return 1;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1].max(1)
}

/// Padded aspect sets for every user and item.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectSets {
    user_len: usize,
    item_len: usize,
    user_sets: Vec<Vec<usize>>,
    item_sets: Vec<Vec<usize>>,
    raw_user_sets: Vec<Vec<usize>>,
    raw_item_sets: Vec<Vec<usize>>,
}

impl AspectSets {
    pub fn from_parts(
        user_len: usize,
        item_len: usize,
        user_sets: Vec<Vec<usize>>,
        item_sets: Vec<Vec<usize>>,
        raw_user_sets: Vec<Vec<usize>>,
        raw_item_sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        for (label, sets, len) in [("user", &user_sets, user_len), ("item", &item_sets, item_len)] {
            for (i, s) in sets.iter().enumerate() {
                if s.len() != len {
                    return Err(AarmError::Schema(format!(
                        "{label} set {i} has length {} instead of {len}",
                        s.len()
                    )));
                }
                let real: BTreeSet<_> = s.iter().filter(|&&a| a != PAD).collect();
                if real.len() != s.iter().filter(|&&a| a != PAD).count() {
                    return Err(AarmError::Schema(format!("{label} set {i} repeats an aspect")));
                }
            }
        }
        Ok(AspectSets {
            user_len,
            item_len,
            user_sets,
            item_sets,
            raw_user_sets,
            raw_item_sets,
        })
    }

    pub fn user_len(&self) -> usize {
        self.user_len
    }

    pub fn item_len(&self) -> usize {
        self.item_len
    }

    pub fn user_set(&self, u: usize) -> &[usize] {
        &self.user_sets[u]
    }

    pub fn item_set(&self, v: usize) -> &[usize] {
        &self.item_sets[v]
    }

    pub fn user_mask(&self, u: usize) -> Vec<bool> {
        self.user_sets[u].iter().map(|&a| a != PAD).collect()
    }

    pub fn item_mask(&self, v: usize) -> Vec<bool> {
        self.item_sets[v].iter().map(|&a| a != PAD).collect()
    }

    pub fn raw_user_set(&self, u: usize) -> &[usize] {
        &self.raw_user_sets[u]
    }

    pub fn raw_item_set(&self, v: usize) -> &[usize] {
        &self.raw_item_sets[v]
    }

    pub fn num_users(&self) -> usize {
        self.user_sets.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_sets.len()
    }
}

/// Keeps the `len` highest TF-IDF aspects (ties: lower index first), sorted
/// ascending by index and padded to `len`.
fn truncate_and_pad(raw: &[usize], len: usize, entity: usize, stats: &AspectStats) -> Vec<usize> {
    let mut kept: Vec<usize> = if raw.len() > len {
        let mut scored: Vec<(f64, usize)> = raw
            .iter()
            .map(|&a| (tfidf_score(a, entity, stats), a))
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.truncate(len);
        scored.into_iter().map(|(_, a)| a).collect()
    } else {
        raw.to_vec()
    };
    kept.sort_unstable();
    kept.resize(len, PAD);
    kept
}

pub fn build_aspect_sets(
    table: &InteractionTable,
    vocab: &AspectVocabulary,
    quantile: f64,
    source: AspectSource,
) -> Result<AspectSets> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(AarmError::InvalidArgument(format!(
            "quantile must lie in (0,1], got {quantile}"
        )));
    }
    let user_stats = AspectStats::for_users(table, vocab, source);
    let item_stats = AspectStats::for_items(table, vocab, source);
    let raw = |stats: &AspectStats| -> Vec<Vec<usize>> {
        (0..stats.num_entities())
            .map(|e| stats.term_counts(e).keys().copied().collect())
            .collect()
    };
    let raw_users = raw(&user_stats);
    let raw_items = raw(&item_stats);
    let user_len = nearest_rank_quantile(&raw_users.iter().map(Vec::len).collect::<Vec<_>>(), quantile);
    let item_len = nearest_rank_quantile(&raw_items.iter().map(Vec::len).collect::<Vec<_>>(), quantile);
    let user_sets = raw_users
        .iter()
        .enumerate()
        .map(|(u, s)| truncate_and_pad(s, user_len, u, &user_stats))
        .collect();
    let item_sets = raw_items
        .iter()
        .enumerate()
        .map(|(v, s)| truncate_and_pad(s, item_len, v, &item_stats))
        .collect();
    AspectSets::from_parts(user_len, item_len, user_sets, item_sets, raw_users, raw_items)
}
