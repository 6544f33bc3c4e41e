mod common;

use aarm::model::{MaskingMode, ParamId};
use aarm::parallel::Workers;
use aarm::training::{gradient_check, gradients};
use aarm::variants::{EmbeddingStrategy, Variant};
use common::random_instance;

const STRATEGIES: [EmbeddingStrategy; 3] = [
    EmbeddingStrategy::PretrainTransform,
    EmbeddingStrategy::PretrainTune,
    EmbeddingStrategy::RandomTune,
];

#[test]
fn finite_differences_every_variant_strategy_and_mode() {
    for variant in Variant::ALL {
        for (s, strategy) in STRATEGIES.into_iter().enumerate() {
            for masking in [MaskingMode::SoftmaxExclude, MaskingMode::Literal] {
                let seed = 1000 + s as u64 * 7 + variant as u64 * 31 + masking as u64;
                let inst = random_instance(seed, variant, strategy, masking);
                let checks = gradient_check(&inst.params, &inst.sets, &inst.batch, inst.noise.as_deref(), 0.01, 1e-5).unwrap();
                let expected: Vec<ParamId> = inst.params.trainable().collect();
                let mut seen: Vec<ParamId> = checks.iter().map(|c| c.block).collect();
                seen.dedup();
                assert_eq!(seen, expected, "{variant} {strategy}");
                for c in checks {
                    assert!(
                        c.relative_error <= 1e-4,
                        "{variant} {strategy} {masking:?}: {:?}",
                        c
                    );
                }
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_gradients() {
    let inst = random_instance(5, Variant::Aarm, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
    let batch: Vec<_> = inst.batch.iter().cycle().take(100).copied().collect();
    let single = gradients(&inst.params, &inst.sets, &batch, None, 0.1, &Workers::single()).unwrap();
    let multi = gradients(&inst.params, &inst.sets, &batch, None, 0.1, &Workers::new(4).unwrap()).unwrap();
    assert_eq!(single, multi);
}

#[test]
fn fixed_blocks_have_no_gradient() {
    let inst = random_instance(6, Variant::Aarm, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
    let (_, g) = gradients(&inst.params, &inst.sets, &inst.batch, None, 0.0, &Workers::single()).unwrap();
    assert!(g.get(ParamId::AspectEmbedding).is_none());
    assert!(g.get(ParamId::Transform).is_some());
    let inst = random_instance(6, Variant::NoUserAtt, EmbeddingStrategy::PretrainTune, MaskingMode::SoftmaxExclude);
    let (_, g) = gradients(&inst.params, &inst.sets, &inst.batch, None, 0.0, &Workers::single()).unwrap();
    assert!(g.get(ParamId::Transform).is_none());
    assert!(g.get(ParamId::UserAttention).is_none());
    assert!(g.get(ParamId::AspectEmbedding).is_some());
}
