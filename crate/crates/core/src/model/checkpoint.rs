//! Self-describing JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{NamedTensor, Network};
use super::pipeline::{DiscModel, Flags};
use super::profile::Profile;
use super::sr::SrMap;
use crate::error::{DiscError, Result};
use crate::losses::LossConfig;
use crate::slci::SlciConfig;

pub const CHECKPOINT_FORMAT: &str = "disc-ckpt-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    profile: Profile,
    flags: Flags,
    slci: SlciConfig,
    loss: LossConfig,
    sr_map: SrMap,
    coarse: Vec<NamedTensor>,
    fine: Vec<NamedTensor>,
    /// Free-form record of the run configuration.
    config: serde_json::Value,
}

pub fn save_checkpoint(model: &DiscModel, config: &serde_json::Value, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        profile: model.profile,
        flags: model.flags,
        slci: model.slci,
        loss: model.loss,
        sr_map: model.sr_map.clone(),
        coarse: model.coarse.params().to_vec(),
        fine: model.fine.params().to_vec(),
        config: config.clone(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DiscError::io(dir, e))?;
    }
    let text = serde_json::to_string(&file)?;
    fs::write(path, text).map_err(|e| DiscError::io(path, e))
}

/// Loads a model and the configuration echo stored with it.
pub fn load_checkpoint(path: &Path) -> Result<(DiscModel, serde_json::Value)> {
    let text = fs::read_to_string(path).map_err(|e| DiscError::io(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| DiscError::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(DiscError::Checkpoint(format!("unsupported format {:?}", file.format)));
    }
    let coarse = Network::from_parts(file.profile.coarse_spec(file.flags.coarse_channels()), file.coarse)?;
    let fine = Network::from_parts(file.profile.fine_spec(file.flags.fine_channels()), file.fine)?;
    let model = DiscModel::from_parts(file.profile, file.flags, file.slci, file.loss, file.sr_map, coarse, fine)?;
    Ok((model, file.config))
}
