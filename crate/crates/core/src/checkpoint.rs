//! Versioned checkpoint files with training provenance, written atomically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ScoreScale;
use crate::error::{Error, Result};
use crate::model::{HeadConfig, HeadParams};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a checkpoint came from: paradigm, data digests, seeds, lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// idt | ft_stage1 | ft | jt
    pub paradigm: String,
    pub sap_dimension: Option<String>,
    pub quali_dimension: Option<String>,
    /// Scale the head's targets live on.
    pub target_scale: ScoreScale,
    pub train_manifest_digest: Option<String>,
    pub quali_manifest_digest: Option<String>,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_validation_mse: Option<f64>,
    /// Digest of the stage-1 parameters this checkpoint was fine-tuned from.
    pub parent_params_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub encoder_id: String,
    pub head_config: HeadConfig,
    pub params: HeadParams,
    pub params_digest: String,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn new(
        encoder_id: String,
        head_config: HeadConfig,
        params: HeadParams,
        provenance: Provenance,
    ) -> Self {
        let params_digest = params.digest();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            encoder_id,
            head_config,
            params,
            params_digest,
            provenance,
        }
    }

    /// Write to `path` atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("serialize: {e}"),
        })?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("parse: {e}"),
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!("unsupported version {}", ckpt.version),
            });
        }
        if ckpt.params.digest() != ckpt.params_digest {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: "parameter digest mismatch; file is corrupt or edited".into(),
            });
        }
        Ok(ckpt)
    }
}
