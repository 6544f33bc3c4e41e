#![allow(dead_code)]

use aarm::corpus::{AspectSets, PAD};
use aarm::matrix::Matrix;
use aarm::model::{Dropout, MaskingMode, ModelConfig, ModelParams, ParamId};
use aarm::training::{ExampleNoise, Triple};
use aarm::variants::{EmbeddingStrategy, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NUM_ASPECTS: usize = 8;

pub struct Instance {
    pub params: ModelParams,
    pub sets: AspectSets,
    pub batch: Vec<Triple>,
    pub noise: Option<Vec<ExampleNoise>>,
}

fn random_set<R: Rng>(len: usize, min_real: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (1..=NUM_ASPECTS).collect();
    pool.shuffle(rng);
    let real = rng.gen_range(min_real..=len);
    let mut set: Vec<usize> = pool[..real].to_vec();
    set.resize(len, PAD);
    set.shuffle(rng);
    set
}

pub fn random_sets<R: Rng>(users: usize, items: usize, m_u: usize, m_v: usize, rng: &mut R) -> AspectSets {
    let user_sets: Vec<Vec<usize>> = (0..users).map(|_| random_set(m_u, 1, rng)).collect();
    let item_sets: Vec<Vec<usize>> = (0..items).map(|_| random_set(m_v, 1, rng)).collect();
    AspectSets::from_parts(m_u, m_v, user_sets.clone(), item_sets.clone(), user_sets, item_sets).unwrap()
}

/// Random parameters with entries large enough that every block matters.
pub fn random_params<R: Rng>(
    variant: Variant,
    strategy: EmbeddingStrategy,
    masking: MaskingMode,
    dims: (usize, usize),
    users: usize,
    items: usize,
    rng: &mut R,
) -> ModelParams {
    let config = ModelConfig {
        aspect_dim: dims.0,
        global_dim: dims.1,
        variant,
        strategy,
        masking,
        ..ModelConfig::default()
    };
    let pretrained = Matrix::uniform(NUM_ASPECTS + 1, dims.0, 1.0, rng);
    let mut p = ModelParams::init(config, NUM_ASPECTS + 1, users, items, Some(&pretrained), rng).unwrap();
    for id in [
        ParamId::AspectAttention,
        ParamId::UserAttention,
        ParamId::UserFactors,
        ParamId::ItemFactors,
        ParamId::Output,
    ] {
        let (r, c) = p.get(id).shape();
        *p.get_mut(id) = Matrix::uniform(r, c, 1.0, rng);
    }
    if !strategy.tunes_embeddings() {
        for x in p.get_mut(ParamId::Transform).as_mut_slice() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    p
}

pub fn random_instance(seed: u64, variant: Variant, strategy: EmbeddingStrategy, masking: MaskingMode) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (users, items) = (3, 5);
    let params = random_params(variant, strategy, masking, (4, 4), users, items, &mut rng);
    let sets = random_sets(users, items, 3, 4, &mut rng);
    let batch: Vec<Triple> = (0..3)
        .map(|_| {
            let user = rng.gen_range(0..users);
            let pos = rng.gen_range(0..items);
            let neg = (pos + rng.gen_range(1..items)) % items;
            Triple { user, pos, neg }
        })
        .collect();
    let noise = rng.gen_bool(0.5).then(|| {
        batch
            .iter()
            .map(|_| (Dropout::sample(&params.config, &mut rng), Dropout::sample(&params.config, &mut rng)))
            .collect()
    });
    Instance {
        params,
        sets,
        batch,
        noise,
    }
}
