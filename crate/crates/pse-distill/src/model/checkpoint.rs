//! Checkpoint container: a JSON header (tensor names, shapes, offsets, config
//! echo, RNG seed) followed by raw little-endian f64 arrays.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

use super::layers::TensorRef;
use super::{PseConfig, PseModel, PvadConfig, PvadModel};

const MAGIC: &[u8; 8] = b"PSECKPT1";

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements from the start of the payload.
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub dtype: String,
    pub tensors: Vec<TensorMeta>,
}

pub fn save_checkpoint(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    seed: u64,
    tensors: &[(String, TensorRef<'_>)],
) -> Result<()> {
    let mut metas = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        let len = t.len() as u64;
        metas.push(TensorMeta {
            name: name.clone(),
            shape: t.shape_vec(),
            offset,
            len,
        });
        offset += len;
    }
    let header = CheckpointHeader {
        version: 1,
        kind: kind.to_string(),
        config,
        seed,
        dtype: "f64le".to_string(),
        tensors: metas,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    let mut flat = Vec::new();
    for (_, t) in tensors {
        t.extend_flat(&mut flat);
    }
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, HashMap<String, Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic, not a checkpoint",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    if header.dtype != "f64le" {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", header.dtype)));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: u64 = header.tensors.iter().map(|t| t.len).sum();
    if payload.len() != total as usize * 8 {
        return Err(Error::Checkpoint(format!(
            "payload size {} != expected {}",
            payload.len(),
            total * 8
        )));
    }
    let mut map = HashMap::new();
    for meta in &header.tensors {
        let start = meta.offset as usize * 8;
        let end = start + meta.len as usize * 8;
        let values: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        map.insert(meta.name.clone(), values);
    }
    Ok((header, map))
}

fn fill_from_map(
    tensors: &mut [(String, super::layers::TensorMut<'_>)],
    map: &HashMap<String, Vec<f64>>,
    path: &Path,
) -> Result<()> {
    for (name, t) in tensors.iter_mut() {
        let data = map.get(name).ok_or_else(|| {
            Error::Checkpoint(format!("{}: missing tensor '{name}'", path.display()))
        })?;
        if data.len() != t.len() {
            return Err(Error::Checkpoint(format!(
                "{}: tensor '{name}' has {} values, model expects {}",
                path.display(),
                data.len(),
                t.len()
            )));
        }
        t.copy_from_flat(data);
    }
    Ok(())
}

impl PseModel {
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        save_checkpoint(
            path,
            "pse",
            serde_json::to_value(&self.cfg)?,
            seed,
            &self.tensors(),
        )
    }

    pub fn load(path: &Path, stft: &StftConfig) -> Result<(PseModel, u64)> {
        let (header, map) = load_checkpoint(path)?;
        if header.kind != "pse" {
            return Err(Error::Checkpoint(format!(
                "{}: expected a pse checkpoint, found '{}'",
                path.display(),
                header.kind
            )));
        }
        let cfg: PseConfig = serde_json::from_value(header.config.clone())?;
        let mut model = PseModel::init(&cfg, stft)?;
        fill_from_map(&mut model.tensors_mut(), &map, path)?;
        Ok((model, header.seed))
    }
}

impl PvadModel {
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        save_checkpoint(
            path,
            "pvad",
            serde_json::to_value(&self.cfg)?,
            seed,
            &self.tensors(),
        )
    }

    pub fn load(path: &Path, stft: &StftConfig) -> Result<(PvadModel, u64)> {
        let (header, map) = load_checkpoint(path)?;
        if header.kind != "pvad" {
            return Err(Error::Checkpoint(format!(
                "{}: expected a pvad checkpoint, found '{}'",
                path.display(),
                header.kind
            )));
        }
        let cfg: PvadConfig = serde_json::from_value(header.config.clone())?;
        let mut model = PvadModel::init(&cfg, stft)?;
        fill_from_map(&mut model.tensors_mut(), &map, path)?;
        Ok((model, header.seed))
    }
}
