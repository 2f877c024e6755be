//! Checkpoint persistence: a JSON header (format version, model config,
//! baseline reference, target statistics, parameter manifest) followed by
//! little-endian f32 parameter payloads.

use crate::config::ModelConfig;
use crate::model::Model;
use crate::params::ParamStore;
use crate::scalar::to_f64;
use crate::{ModelError, Result};
use mmresgnn_core::baseline::BaselineModel;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Mean/std of raw path loss on the training split; present for
/// direct-regression variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTargetStats {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    baseline: Option<BaselineModel>,
    raw_stats: Option<RawTargetStats>,
    params: Vec<ParamMeta>,
}

/// A trained model together with the references needed for evaluation.
pub struct Checkpoint {
    pub model: Model<f32>,
    pub baseline: Option<BaselineModel>,
    pub raw_stats: Option<RawTargetStats>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model<f32>,
    baseline: Option<&BaselineModel>,
    raw_stats: Option<RawTargetStats>,
) -> Result<()> {
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        baseline: baseline.cloned(),
        raw_stats,
        params: model
            .store
            .entries()
            .iter()
            .map(|e| ParamMeta {
                name: e.name.clone(),
                rows: e.data.nrows(),
                cols: e.data.ncols(),
            })
            .collect(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for entry in model.store.entries() {
            for &v in entry.data.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad checkpoint magic".into()));
    }
    let mut word = [0u8; 4];
    f.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| ModelError::Checkpoint(format!("bad checkpoint header: {e}")))?;

    let mut model: Model<f32> = Model::new(header.config)?;
    if header.params.len() != model.store.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            header.params.len(),
            model.store.len()
        )));
    }
    for (meta, entry) in header.params.iter().zip(fill_order(&mut model.store)) {
        if meta.name != entry.name || meta.rows != entry.data.nrows() || meta.cols != entry.data.ncols() {
            return Err(ModelError::Checkpoint(format!(
                "tensor mismatch: checkpoint {} {}x{} vs model {} {}x{}",
                meta.name,
                meta.rows,
                meta.cols,
                entry.name,
                entry.data.nrows(),
                entry.data.ncols()
            )));
        }
        for v in entry.data.iter_mut() {
            let mut b = [0u8; 4];
            f.read_exact(&mut b)?;
            *v = f32::from_le_bytes(b);
        }
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(ModelError::Checkpoint("trailing bytes in checkpoint".into()));
    }

    Ok(Checkpoint {
        model,
        baseline: header.baseline,
        raw_stats: header.raw_stats,
    })
}

fn fill_order(store: &mut ParamStore<f32>) -> impl Iterator<Item = &mut crate::params::ParamEntry<f32>> {
    store.entries_mut().iter_mut()
}

/// Convenience used by tests: maximum absolute difference between two
/// parameter stores with identical layout.
pub fn max_param_diff(a: &ParamStore<f32>, b: &ParamStore<f32>) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries().iter())
        .flat_map(|(x, y)| x.data.iter().zip(y.data.iter()))
        .map(|(&x, &y)| (to_f64(x) - to_f64(y)).abs())
        .fold(0.0, f64::max)
}
