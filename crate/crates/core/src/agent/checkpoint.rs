//! Versioned JSON checkpoints: metadata plus every parameter matrix in
//! row-major order. `load(save(p))` is the identity on values and metadata.

use super::{AgentArch, AgentError, AgentParams};
use crate::instance::ProblemKind;
use crate::nn::{ParamStore, Tensor2};
use serde::{Deserialize, Serialize};
use std::path::Path;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ProblemKind,
    pub arch: AgentArch,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_destroy: usize,
    pub num_repair: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    meta: CheckpointMeta,
    params: Vec<ParamDump>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamDump {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Serializes parameters and metadata to pretty JSON at `path`.
pub fn save_checkpoint(params: &AgentParams, path: &Path) -> Result<(), AgentError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        meta: params.meta,
        params: params
            .store
            .export()
            .into_iter()
            .map(|(name, t)| ParamDump {
                name,
                rows: t.rows,
                cols: t.cols,
                values: t.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| AgentError::CorruptCheckpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| AgentError::CorruptCheckpoint(e.to_string()))
}

/// Reads a checkpoint back; parameter insertion order is preserved so the
/// restored store is bit-identical to the saved one.
pub fn load_checkpoint(path: &Path) -> Result<AgentParams, AgentError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| AgentError::CorruptCheckpoint(e.to_string()))?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| AgentError::CorruptCheckpoint(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(AgentError::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut store = ParamStore::new();
    for p in file.params {
        let tensor = Tensor2::from_vec(p.rows, p.cols, p.values)
            .map_err(|e| AgentError::CorruptCheckpoint(e.to_string()))?;
        store.add_param(&p.name, tensor);
    }
    Ok(AgentParams {
        store,
        meta: file.meta,
    })
}
