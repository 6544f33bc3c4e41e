//! Interaction ingestion, train/test splitting and positive-pair extraction.

mod aspects;
mod bundle;
mod validation;

pub use aspects::{
    build_aspect_sets, nearest_rank_quantile, tfidf, tfidf_score, AspectSets, AspectSource,
    AspectStats, AspectVocabulary, PAD, PAD_TOKEN,
};
pub use bundle::{DatasetBundle, PrepareConfig, DATA_FORMAT};
pub use validation::{build_validation, ValidationSet};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AarmError, Result};

/// One review line of the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    #[serde(default)]
    pub rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_tokens: Option<Vec<String>>,
    #[serde(default)]
    pub aspects: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Bidirectional map between opaque string ids and contiguous indices,
/// in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    records: Vec<InteractionRecord>,
    split: Vec<Split>,
    record_user: Vec<usize>,
    record_item: Vec<usize>,
    users: IdMap,
    items: IdMap,
}

impl InteractionTable {
    /// Builds a table with every record labelled as train.
    pub fn from_records(records: Vec<InteractionRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(AarmError::NoRecords);
        }
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut record_user = Vec::with_capacity(records.len());
        let mut record_item = Vec::with_capacity(records.len());
        for (line, r) in records.iter().enumerate() {
            validate_record(r, line + 1)?;
            record_user.push(users.intern(&r.user_id));
            record_item.push(items.intern(&r.item_id));
        }
        let split = vec![Split::Train; records.len()];
        Ok(InteractionTable {
            records,
            split,
            record_user,
            record_item,
            users,
            items,
        })
    }

    pub(crate) fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.records.len() {
            return Err(AarmError::Schema(format!(
                "split has {} labels for {} records",
                split.len(),
                self.records.len()
            )));
        }
        self.split = split;
        Ok(self)
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn split_labels(&self) -> &[Split] {
        &self.split
    }

    pub fn split_of(&self, record: usize) -> Split {
        self.split[record]
    }

    pub fn record_user(&self, record: usize) -> usize {
        self.record_user[record]
    }

    pub fn record_item(&self, record: usize) -> usize {
        self.record_item[record]
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    /// Record indices grouped by user, in file order.
    pub fn records_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users()];
        for (r, &u) in self.record_user.iter().enumerate() {
            out[u].push(r);
        }
        out
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = usize> + '_ {
        (0..self.records.len()).filter(move |&r| self.split[r] == split)
    }

    /// Checks that every user has at least one train record.
    pub fn validate_split(&self) -> Result<()> {
        let mut has_train = vec![false; self.num_users()];
        for r in self.iter_split(Split::Train) {
            has_train[self.record_user[r]] = true;
        }
        match has_train.iter().position(|t| !t) {
            Some(u) => Err(AarmError::Schema(format!(
                "user {} has no train records",
                self.users.id(u)
            ))),
            None => Ok(()),
        }
    }

    /// Distinct item indices per user for the given split, sorted ascending.
    pub fn items_per_user(&self, split: Split) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users()];
        for r in self.iter_split(split) {
            out[self.record_user[r]].push(self.record_item[r]);
        }
        for items in &mut out {
            items.sort_unstable();
            items.dedup();
        }
        out
    }
}

fn validate_record(r: &InteractionRecord, line: usize) -> Result<()> {
    if r.user_id.is_empty() {
        return Err(AarmError::InvalidRecord {
            line,
            message: "empty user_id".into(),
        });
    }
    if r.item_id.is_empty() {
        return Err(AarmError::InvalidRecord {
            line,
            message: "empty item_id".into(),
        });
    }
    for a in &r.aspects {
        if a.trim().is_empty() || a.contains('\n') {
            return Err(AarmError::InvalidRecord {
                line,
                message: format!("invalid aspect {a:?}"),
            });
        }
        if a == PAD_TOKEN {
            return Err(AarmError::InvalidRecord {
                line,
                message: format!("reserved aspect {PAD_TOKEN}"),
            });
        }
    }
    Ok(())
}

/// Parses JSON-lines interaction records. Blank lines are skipped.
pub fn parse_interactions<R: BufRead>(reader: R) -> Result<InteractionTable> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| AarmError::Parse {
            context: "interactions".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InteractionRecord =
            serde_json::from_str(&line).map_err(|e| AarmError::Parse {
                context: "interactions".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        validate_record(&record, i + 1)?;
        records.push(record);
    }
    InteractionTable::from_records(records)
}

pub fn load_interactions(path: &Path) -> Result<InteractionTable> {
    let file = File::open(path).map_err(|e| AarmError::io(path, e))?;
    parse_interactions(BufReader::new(file))
}

/// Number of train records for a user with `n` records.
pub fn train_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let mut k = (ratio * n as f64).round() as usize;
    k = k.max(1);
    if n >= 2 {
        k = k.min(n - 1);
    }
    k.min(n)
}

/// Per-user random split. Deterministic given `seed`.
pub fn split_train_test(table: InteractionTable, ratio: f64, seed: u64) -> Result<InteractionTable> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(AarmError::InvalidArgument(format!(
            "split ratio must lie in (0,1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Test; table.num_records()];
    for mut recs in table.records_by_user() {
        let k = train_count(recs.len(), ratio);
        recs.shuffle(&mut rng);
        for &r in &recs[..k] {
            split[r] = Split::Train;
        }
    }
    table.with_split(split)
}

/// Binarized positive pairs: every distinct (user, item) with a train record.
#[derive(Debug, Clone, PartialEq)]
pub struct Positives {
    per_user: Vec<Vec<usize>>,
}

impl Positives {
    pub fn from_lists(per_user: Vec<Vec<usize>>) -> Self {
        let per_user = per_user
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Positives { per_user }
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.per_user[user].binary_search(&item).is_ok()
    }

    pub fn items(&self, user: usize) -> &[usize] {
        &self.per_user[user]
    }

    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn len(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.per_user
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&v| (u, v)))
    }
}

pub fn binarize(table: &InteractionTable) -> Positives {
    Positives::from_lists(table.items_per_user(Split::Train))
}
