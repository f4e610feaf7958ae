//! On-disk checkpoints.
//!
//! A checkpoint is a directory holding `config.json` (model configuration,
//! format version and the tensor manifest), `weights.bin` (little-endian
//! `f64`s concatenated in manifest order) and `vocab.json` (token → id).
//! Weight deltas reuse the same layout with `"delta": true` and a manifest
//! that lists only the edited tensors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelBundle, ModelConfig, Vocab};
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub delta: bool,
    #[serde(flatten)]
    pub config: ModelConfig,
    pub manifest: Vec<ManifestEntry>,
}

pub fn write_tensors(dir: &Path, config: &ModelConfig, delta: bool, tensors: &[(String, &Tensor)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        delta,
        config: config.clone(),
        manifest: tensors.iter().map(|(n, t)| ManifestEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&header)? + "\n")?;
    let total: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut bytes = Vec::with_capacity(total * 8);
    for (_, t) in tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join("weights.bin"), bytes)?;
    Ok(())
}

pub fn read_tensors(dir: &Path) -> Result<(CheckpointHeader, Vec<(String, Tensor)>)> {
    let header: CheckpointHeader = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", header.format_version)));
    }
    let bytes = fs::read(dir.join("weights.bin"))?;
    let total: usize = header.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Checkpoint(format!("weights.bin has {} bytes, manifest needs {}", bytes.len(), total * 8)));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut out = Vec::with_capacity(header.manifest.len());
    for e in &header.manifest {
        let n = e.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    Ok((header, out))
}

pub fn save_checkpoint(dir: &Path, model: &ModelBundle, vocab: &Vocab) -> Result<()> {
    write_tensors(dir, &model.config, false, &model.named_tensors())?;
    fs::write(dir.join("vocab.json"), serde_json::to_string_pretty(&vocab.to_map())? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelBundle, Vocab)> {
    let (header, tensors) = read_tensors(dir)?;
    if header.delta {
        return Err(Error::Checkpoint("directory holds a weight delta, not a model".into()));
    }
    let mut model = ModelBundle::init(header.config)?;
    let expected: Vec<(String, Vec<usize>)> =
        model.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    let found: Vec<(String, Vec<usize>)> = tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
    if expected != found {
        return Err(Error::Checkpoint("manifest does not match the configuration".into()));
    }
    for (dst, (_, src)) in model.tensors_mut().into_iter().zip(tensors) {
        *dst = src;
    }
    let map: BTreeMap<String, u32> = serde_json::from_str(&fs::read_to_string(dir.join("vocab.json"))?)?;
    let vocab = Vocab::from_map(&map)?;
    if vocab.len() != model.config.vocab_size {
        return Err(Error::Checkpoint("vocab size does not match the configuration".into()));
    }
    Ok((model, vocab))
}
