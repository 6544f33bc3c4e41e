//! Ablated model variants and aspect-embedding strategies.
//!
//! Every variant is assembled from the same building blocks in
//! [`crate::model`]; a [`VariantSpec`] only selects how item aspects are pooled
//! per user aspect, how user aspects are pooled, and which halves of the
//! output layer exist.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::corpus::AspectSets;
use crate::error::{AarmError, Result};
use crate::matrix::Matrix;
use crate::model::{aspect_part, AspectCache, ModelParams, ParamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Aarm,
    AInter,
    NoAspectAtt,
    AStatic,
    NoUserAtt,
    GlobalOnly,
    AspectOnly,
}

/// How the interactions of one user aspect with the item's aspects are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AspectPooling {
    /// softmax attention over item aspects (`w_att1`)
    Attention,
    /// unweighted sum over item aspects
    Sum,
    /// only aspects shared by user and item, self-interaction
    SharedOnly,
}

/// How the per-aspect vectors of the user are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPooling {
    /// attention conditioned on the candidate item's aspects (`w_att2`)
    ItemConditioned,
    /// attention conditioned on the user's own aspects only
    UserOnly,
    /// unweighted sum
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub variant: Variant,
    pub name: &'static str,
    pub aspect_pooling: AspectPooling,
    pub user_pooling: UserPooling,
    pub uses_global: bool,
    pub uses_aspect: bool,
}

pub const REGISTRY: [VariantSpec; 7] = [
    VariantSpec {
        variant: Variant::Aarm,
        name: "aarm",
        aspect_pooling: AspectPooling::Attention,
        user_pooling: UserPooling::ItemConditioned,
        uses_global: true,
        uses_aspect: true,
    },
    VariantSpec {
        variant: Variant::AInter,
        name: "a_inter",
        aspect_pooling: AspectPooling::SharedOnly,
        user_pooling: UserPooling::ItemConditioned,
        uses_global: true,
        uses_aspect: true,
    },
    VariantSpec {
        variant: Variant::NoAspectAtt,
        name: "no_aspect_att",
        aspect_pooling: AspectPooling::Sum,
        user_pooling: UserPooling::ItemConditioned,
        uses_global: true,
        uses_aspect: true,
    },
    VariantSpec {
        variant: Variant::AStatic,
        name: "a_static",
        aspect_pooling: AspectPooling::Attention,
        user_pooling: UserPooling::UserOnly,
        uses_global: true,
        uses_aspect: true,
    },
    VariantSpec {
        variant: Variant::NoUserAtt,
        name: "no_user_att",
        aspect_pooling: AspectPooling::Attention,
        user_pooling: UserPooling::Sum,
        uses_global: true,
        uses_aspect: true,
    },
    VariantSpec {
        variant: Variant::GlobalOnly,
        name: "global_only",
        aspect_pooling: AspectPooling::Attention,
        user_pooling: UserPooling::ItemConditioned,
        uses_global: true,
        uses_aspect: false,
    },
    VariantSpec {
        variant: Variant::AspectOnly,
        name: "aspect_only",
        aspect_pooling: AspectPooling::Attention,
        user_pooling: UserPooling::ItemConditioned,
        uses_global: false,
        uses_aspect: true,
    },
];

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Aarm,
        Variant::AInter,
        Variant::NoAspectAtt,
        Variant::AStatic,
        Variant::NoUserAtt,
        Variant::GlobalOnly,
        Variant::AspectOnly,
    ];

    pub fn spec(self) -> &'static VariantSpec {
        REGISTRY
            .iter()
            .find(|s| s.variant == self)
            .expect("every variant is registered")
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = AarmError;

    fn from_str(s: &str) -> Result<Self> {
        REGISTRY
            .iter()
            .find(|spec| spec.name == s)
            .map(|spec| spec.variant)
            .ok_or_else(|| AarmError::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EmbeddingStrategy {
    /// fixed pre-trained aspect embeddings, trainable transform
    #[default]
    PretrainTransform,
    /// pre-trained aspect embeddings tuned directly, identity transform
    PretrainTune,
    /// randomly initialised aspect embeddings tuned directly, identity transform
    RandomTune,
}

impl EmbeddingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingStrategy::PretrainTransform => "pretrain_transform",
            EmbeddingStrategy::PretrainTune => "pretrain_tune",
            EmbeddingStrategy::RandomTune => "random_tune",
        }
    }

    pub fn needs_pretrained(self) -> bool {
        !matches!(self, EmbeddingStrategy::RandomTune)
    }

    pub fn tunes_embeddings(self) -> bool {
        !matches!(self, EmbeddingStrategy::PretrainTransform)
    }
}

impl fmt::Display for EmbeddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingStrategy {
    type Err = AarmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain_transform" => Ok(EmbeddingStrategy::PretrainTransform),
            "pretrain_tune" => Ok(EmbeddingStrategy::PretrainTune),
            "random_tune" => Ok(EmbeddingStrategy::RandomTune),
            _ => Err(AarmError::InvalidArgument(format!("unknown strategy {s:?}"))),
        }
    }
}

/// Installs the aspect embedding matrix and transform for `strategy`.
/// Trainability then follows from the strategy recorded in the config.
pub fn apply_embedding_strategy<R: Rng>(
    params: &mut ModelParams,
    strategy: EmbeddingStrategy,
    pretrained: Option<&Matrix>,
    rng: &mut R,
) -> Result<()> {
    let (vocab_size, d_a) = params.get(ParamId::AspectEmbedding).shape();
    let embedding = match (strategy, pretrained) {
        (EmbeddingStrategy::RandomTune, _) => {
            let mut m = Matrix::uniform(vocab_size, d_a, 0.05, rng);
            m.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
            m
        }
        (_, Some(p)) => {
            if p.shape() != (vocab_size, d_a) {
                return Err(AarmError::Schema(format!(
                    "pre-trained embeddings have shape {:?}, expected {:?}",
                    p.shape(),
                    (vocab_size, d_a)
                )));
            }
            let mut m = p.clone();
            m.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
            m
        }
        (_, None) => {
            return Err(AarmError::InvalidArgument(format!(
                "strategy {strategy} requires a pre-trained embedding file"
            )))
        }
    };
    *params.get_mut(ParamId::AspectEmbedding) = embedding;
    if strategy.tunes_embeddings() {
        *params.get_mut(ParamId::Transform) = Matrix::identity(d_a);
    }
    params.config.strategy = strategy;
    Ok(())
}

fn aspect_output_of(
    variant: Variant,
    params: &ModelParams,
    cache: &AspectCache,
    sets: &AspectSets,
    user: usize,
    item: usize,
) -> Vec<f64> {
    aspect_part(
        variant.spec(),
        params.config.masking,
        cache,
        params,
        sets.user_set(user),
        sets.item_set(item),
    )
    .output
}

/// Aspect-part output when only shared aspects interact.
pub fn forward_a_inter(params: &ModelParams, cache: &AspectCache, sets: &AspectSets, user: usize, item: usize) -> Vec<f64> {
    aspect_output_of(Variant::AInter, params, cache, sets, user, item)
}

/// Aspect-part output with the aspect-level attention replaced by a sum.
pub fn forward_no_aspect_att(params: &ModelParams, cache: &AspectCache, sets: &AspectSets, user: usize, item: usize) -> Vec<f64> {
    aspect_output_of(Variant::NoAspectAtt, params, cache, sets, user, item)
}

/// Aspect-part output with item-independent user-level attention.
pub fn forward_a_static(params: &ModelParams, cache: &AspectCache, sets: &AspectSets, user: usize, item: usize) -> Vec<f64> {
    aspect_output_of(Variant::AStatic, params, cache, sets, user, item)
}

/// Aspect-part output with the user-level attention replaced by a sum.
pub fn forward_no_user_att(params: &ModelParams, cache: &AspectCache, sets: &AspectSets, user: usize, item: usize) -> Vec<f64> {
    aspect_output_of(Variant::NoUserAtt, params, cache, sets, user, item)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
        for s in ["pretrain_transform", "pretrain_tune", "random_tune"] {
            assert_eq!(s.parse::<EmbeddingStrategy>().unwrap().name(), s);
        }
    }

    #[test]
    fn registry_is_complete_and_unique() {
        let mut names: Vec<_> = REGISTRY.iter().map(|s| s.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), Variant::ALL.len());
        assert!(REGISTRY.iter().all(|s| s.uses_aspect || s.uses_global));
    }
}
