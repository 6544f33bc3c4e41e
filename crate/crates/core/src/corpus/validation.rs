use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Positives;

/// Held-out (user, item) pairs taken from the train positives for model selection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationSet {
    entries: Vec<(usize, usize)>,
}

impl ValidationSet {
    pub fn from_entries(mut entries: Vec<(usize, usize)>) -> Self {
        entries.sort_unstable();
        ValidationSet { entries }
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.entries.binary_search(&(user, item)).is_ok()
    }

    /// Held-out item for `user`, if the user was sampled.
    pub fn held_out(&self, user: usize) -> Option<usize> {
        let i = self.entries.partition_point(|&(u, _)| u < user);
        self.entries.get(i).filter(|(u, _)| *u == user).map(|&(_, v)| v)
    }
}

/// Samples up to `n_users` users without replacement and holds out one of
/// each user's train items. Users with a single distinct train item are not
/// eligible, so every user keeps at least one training positive.
pub fn build_validation(positives: &Positives, n_users: usize, seed: u64) -> ValidationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible: Vec<usize> = (0..positives.num_users())
        .filter(|&u| positives.items(u).len() >= 2)
        .collect();
    let take = n_users.min(eligible.len());
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), take)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();
    let entries = chosen
        .into_iter()
        .map(|u| (u, *positives.items(u).choose(&mut rng).expect("eligible user")))
        .collect();
    ValidationSet::from_entries(entries)
}
