//! Binary checkpoint container.
//!
//! Layout (little endian):
//! ```text
//! "AARM-CKPT v1\n"
//! u32 meta length, meta bytes (key=value lines, includes the model config)
//! u32 matrix count
//! per matrix: u16 name length, name, u32 rows, u32 cols, u8 element width, values
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::DatasetBundle;
use crate::error::{AarmError, Result};
use crate::manifest::{KeyValues, VERSION};
use crate::matrix::Matrix;
use crate::model::{ModelConfig, ModelParams, ParamId};

pub const CKPT_MAGIC: &str = "AARM-CKPT v1";
const ELEMENT_WIDTH: u8 = 8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: KeyValues,
    pub matrices: Vec<(String, Matrix)>,
}

fn schema(msg: impl Into<String>) -> AarmError {
    AarmError::Schema(msg.into())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| schema("truncated checkpoint"))?;
    Ok(buf)
}

fn read_vec(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| schema("truncated checkpoint"))?;
    Ok(buf)
}

impl Checkpoint {
    pub fn matrix(&self, name: &str) -> Option<&Matrix> {
        self.matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC.as_bytes());
        out.push(b'\n');
        let meta = self.meta.render();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.matrices.len() as u32).to_le_bytes());
        for (name, m) in &self.matrices {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            out.push(ELEMENT_WIDTH);
            for x in m.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let header = read_vec(&mut r, CKPT_MAGIC.len() + 1)?;
        if &header[..CKPT_MAGIC.len()] != CKPT_MAGIC.as_bytes() || header[CKPT_MAGIC.len()] != b'\n' {
            return Err(schema(format!("not an {CKPT_MAGIC} file")));
        }
        let meta_len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let meta_text = String::from_utf8(read_vec(&mut r, meta_len)?)
            .map_err(|_| schema("checkpoint metadata is not UTF-8"))?;
        let meta = KeyValues::parse(&meta_text)?;
        let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut matrices = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
            let name = String::from_utf8(read_vec(&mut r, name_len)?)
                .map_err(|_| schema("matrix name is not UTF-8"))?;
            let rows = u32::from_le_bytes(read_exact(&mut r)?) as usize;
            let cols = u32::from_le_bytes(read_exact(&mut r)?) as usize;
            let [width] = read_exact::<1>(&mut r)?;
            if width != ELEMENT_WIDTH {
                return Err(schema(format!("{name}: unsupported element width {width}")));
            }
            let raw = read_vec(&mut r, rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            matrices.push((name, Matrix::from_vec(rows, cols, data)));
        }
        if !r.is_empty() {
            return Err(schema("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint { meta, matrices })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| AarmError::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| AarmError::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| AarmError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| AarmError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Container for model parameters; `extra` lands in the metadata block.
    pub fn from_params(params: &ModelParams, extra: &KeyValues) -> Self {
        let mut meta = KeyValues::new();
        meta.set("version", VERSION);
        for (k, v) in params.config.to_key_values().iter() {
            meta.set(format!("model.{k}"), v);
        }
        meta.extend(extra);
        let matrices = ParamId::ALL
            .into_iter()
            .map(|id| (id.name().to_string(), params.get(id).clone()))
            .collect();
        Checkpoint { meta, matrices }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let config = ModelConfig::from_key_values(&self.meta.section("model"))?;
        let mut blocks = Vec::with_capacity(ParamId::ALL.len());
        for id in ParamId::ALL {
            let m = self
                .matrix(id.name())
                .ok_or_else(|| schema(format!("checkpoint lacks matrix {}", id.name())))?;
            blocks.push(m.clone());
        }
        let blocks: [Matrix; 7] = blocks.try_into().expect("seven blocks");
        ModelParams::from_blocks(config, blocks)
    }
}

pub fn save_model(path: &Path, params: &ModelParams, extra: &KeyValues) -> Result<()> {
    Checkpoint::from_params(params, extra).write(path)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    Checkpoint::read(path)?.to_params()
}

/// Loads a model and checks its shapes against the bundle.
pub fn load_model_for(path: &Path, bundle: &DatasetBundle) -> Result<ModelParams> {
    let params = load_model(path)?;
    params.check_dataset(bundle.vocab.size(), bundle.num_users(), bundle.num_items())?;
    Ok(params)
}
