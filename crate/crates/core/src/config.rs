//! Run configuration: one flat `key=value` file with section prefixes
//! (`prepare.`, `pretrain.`, `model.`, `train.`, `eval.`, `paths.`) and an
//! optional top-level `seed` and `threads`.

use std::path::{Path, PathBuf};

use crate::corpus::PrepareConfig;
use crate::error::Result;
use crate::manifest::KeyValues;
use crate::model::ModelConfig;
use crate::pretrain::SgnsConfig;
use crate::training::TrainConfig;

pub const SECTIONS: [&str; 6] = ["prepare", "pretrain", "model", "train", "eval", "paths"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    kv: KeyValues,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_key_values(kv: KeyValues) -> Self {
        RunConfig { kv }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Ok(RunConfig { kv: KeyValues::read(p)? }),
            None => Ok(Self::new()),
        }
    }

    pub fn key_values(&self) -> &KeyValues {
        &self.kv
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.kv.set(key, value);
        self
    }

    /// Overrides `section.key` when `value` is present.
    pub fn set_opt<T: ToString>(&mut self, section: &str, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.kv.set(format!("{section}.{key}"), v);
        }
        self
    }

    /// Section entries with the top-level seed as fallback.
    pub fn section(&self, name: &str) -> KeyValues {
        let mut out = KeyValues::new();
        if let Some(seed) = self.kv.get("seed") {
            out.set("seed", seed);
        }
        out.extend(&self.kv.section(name));
        out
    }

    pub fn prepare(&self) -> Result<PrepareConfig> {
        PrepareConfig::from_key_values(&self.section("prepare"))
    }

    pub fn pretrain(&self) -> Result<SgnsConfig> {
        SgnsConfig::from_key_values(&self.section("pretrain"))
    }

    pub fn model(&self) -> Result<ModelConfig> {
        ModelConfig::from_key_values(&self.kv.section("model"))
    }

    pub fn train(&self) -> Result<TrainConfig> {
        TrainConfig::from_key_values(&self.section("train"))
    }

    pub fn eval_n(&self) -> Result<usize> {
        self.kv.section("eval").parse_or("n", 10)
    }

    pub fn threads(&self) -> Result<usize> {
        self.kv.parse_or("threads", 1)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.kv.get(&format!("paths.{key}")).map(PathBuf::from)
    }

    /// Effective settings of the given sections, defaults filled in.
    pub fn resolved(&self, sections: &[&str]) -> Result<KeyValues> {
        let mut out = KeyValues::new();
        for &s in sections {
            let kv = match s {
                "prepare" => self.prepare()?.to_key_values(),
                "pretrain" => self.pretrain()?.to_key_values(),
                "model" => self.model()?.to_key_values(),
                "train" => self.train()?.to_key_values(),
                "eval" => {
                    let mut kv = KeyValues::new();
                    kv.set("n", self.eval_n()?);
                    kv
                }
                other => self.kv.section(other),
            };
            for (k, v) in kv.iter() {
                out.set(format!("{s}.{k}"), v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_seed_falls_through() {
        let kv = KeyValues::parse("seed=5\ntrain.lr=0.01\ntrain.batch=64\nmodel.variant=a_static\n").unwrap();
        let mut cfg = RunConfig::from_key_values(kv);
        cfg.set_opt("train", "lr", Some(0.001)).set_opt::<usize>("train", "batch", None);
        let t = cfg.train().unwrap();
        assert_eq!(t.learning_rate, 0.001);
        assert_eq!(t.batch_size, 64);
        assert_eq!(t.seed, 5);
        assert_eq!(cfg.prepare().unwrap().seed, 5);
        assert_eq!(cfg.model().unwrap().variant.name(), "a_static");
    }

    #[test]
    fn resolved_round_trips() {
        let mut cfg = RunConfig::new();
        cfg.set("seed", 3).set("pretrain.dim", 16);
        let resolved = cfg.resolved(&SECTIONS).unwrap();
        let again = RunConfig::from_key_values(KeyValues::parse(&resolved.render()).unwrap());
        assert_eq!(again.resolved(&SECTIONS).unwrap(), resolved);
        assert_eq!(again.pretrain().unwrap().dim, 16);
    }
}
