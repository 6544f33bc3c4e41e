mod common;

use aarm::checkpoint::Checkpoint;
use aarm::corpus::{AspectSets, PAD};
use aarm::evaluation::{ndcg, precision, recall, top_n};
use aarm::manifest::KeyValues;
use aarm::model::{score, AspectCache, MaskingMode, ParamId};
use aarm::variants::{EmbeddingStrategy, Variant};
use common::random_instance;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variant() -> impl Strategy<Value = Variant> {
    (0..Variant::ALL.len()).prop_map(|i| Variant::ALL[i])
}

fn all_scores(p: &aarm::model::ModelParams, sets: &AspectSets) -> Vec<f64> {
    let cache = AspectCache::build(p).unwrap();
    let mut out = Vec::new();
    for u in 0..sets.num_users() {
        for v in 0..sets.num_items() {
            out.push(score(p, &cache, sets, u, v).unwrap());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_order_does_not_matter(seed in 0u64..10_000, v in variant()) {
        let inst = random_instance(seed, v, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users: Vec<Vec<usize>> = (0..inst.sets.num_users()).map(|u| {
            let mut s = inst.sets.user_set(u).to_vec();
            s.shuffle(&mut rng);
            s
        }).collect();
        let items: Vec<Vec<usize>> = (0..inst.sets.num_items()).map(|i| {
            let mut s = inst.sets.item_set(i).to_vec();
            s.shuffle(&mut rng);
            s
        }).collect();
        let shuffled = AspectSets::from_parts(inst.sets.user_len(), inst.sets.item_len(), users.clone(), items.clone(), users, items).unwrap();
        for (a, b) in all_scores(&inst.params, &inst.sets).iter().zip(all_scores(&inst.params, &shuffled)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn embedding_scale_is_irrelevant(seed in 0u64..10_000, v in variant(), factor in 0.01f64..100.0) {
        let inst = random_instance(seed, v, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
        let mut scaled = inst.params.clone();
        for x in scaled.get_mut(ParamId::AspectEmbedding).as_mut_slice() {
            *x *= factor;
        }
        for (a, b) in all_scores(&inst.params, &inst.sets).iter().zip(all_scores(&scaled, &inst.sets)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn literal_masking_matches_on_full_sets(seed in 0u64..10_000, v in variant()) {
        let inst = random_instance(seed, v, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
        let full = |s: &[usize]| s.iter().all(|&a| a != PAD);
        let mut literal = inst.params.clone();
        literal.config.masking = MaskingMode::Literal;
        let a = AspectCache::build(&inst.params).unwrap();
        let b = AspectCache::build(&literal).unwrap();
        for u in 0..inst.sets.num_users() {
            for i in 0..inst.sets.num_items() {
                if full(inst.sets.user_set(u)) && full(inst.sets.item_set(i)) && v.spec().aspect_pooling != aarm::variants::AspectPooling::SharedOnly {
                    let x = score(&inst.params, &a, &inst.sets, u, i).unwrap();
                    let y = score(&literal, &b, &inst.sets, u, i).unwrap();
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in 0u64..10_000, v in variant()) {
        let inst = random_instance(seed, v, EmbeddingStrategy::RandomTune, MaskingMode::Literal);
        let ck = Checkpoint::from_params(&inst.params, &KeyValues::new());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap().to_params().unwrap();
        prop_assert_eq!(back, inst.params);
    }

    #[test]
    fn ranking_metrics_are_bounded(
        scores in prop::collection::vec(-5.0f64..5.0, 1..80),
        n in 1usize..20,
        truth_bits in prop::collection::vec(any::<bool>(), 80),
    ) {
        let truth: Vec<usize> = (0..scores.len()).filter(|&i| truth_bits[i]).collect();
        prop_assume!(!truth.is_empty());
        let list = top_n(&scores, &[], n);
        prop_assert_eq!(list.len(), n.min(scores.len()));
        for w in list.windows(2) {
            prop_assert!(scores[w[0]] >= scores[w[1]]);
        }
        for m in [recall(&list, &truth), precision(&list, &truth, n), ndcg(&list, &truth, n)] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        }
        let perfect: Vec<usize> = truth.iter().copied().take(n).collect();
        prop_assert!((ndcg(&perfect, &truth, n) - 1.0).abs() <= 1e-12);
    }
}
