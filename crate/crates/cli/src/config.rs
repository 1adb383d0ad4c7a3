//! JSON run configuration with per-profile defaults.

use std::path::{Path, PathBuf};

use disc::losses::LossConfig;
use disc::model::{FineTuneConfig, Flags, Init, Profile, SgdConfig};
use disc::slci::SlciConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Epochs {
    pub coarse_stage1: usize,
    pub coarse_stage2: usize,
    pub fine: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerNetwork<T> {
    pub coarse: T,
    pub fine: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub images: PathBuf,
    pub masks: PathBuf,
    /// Required by the fine phase.
    pub coarse_checkpoint: Option<PathBuf>,
    /// Defaults to the output checkpoint path with a `.log.jsonl` extension.
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub epochs: Epochs,
    pub learning_rate: PerNetwork<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: PerNetwork<usize>,
    pub slci: SlciConfig,
    pub loss: LossConfig,
    pub flags: Flags,
    pub init: Init,
    pub paths: Paths,
}

impl RunConfig {
    pub fn defaults(profile: Profile) -> Self {
        let (epochs, lr, batch) = match profile {
            Profile::Full => (
                Epochs { coarse_stage1: 60, coarse_stage2: 30, fine: 55 },
                PerNetwork { coarse: 1e-6, fine: 1e-7 },
                PerNetwork { coarse: 32, fine: 2 },
            ),
            Profile::Desk => (
                Epochs { coarse_stage1: 40, coarse_stage2: 20, fine: 30 },
                PerNetwork { coarse: 1e-5, fine: 3e-6 },
                PerNetwork { coarse: 8, fine: 2 },
            ),
        };
        RunConfig {
            profile,
            seed: 0,
            epochs,
            learning_rate: lr,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: batch,
            slci: SlciConfig {
                n_target: profile.default_superpixels(),
                ..SlciConfig::default()
            },
            loss: LossConfig::default(),
            flags: Flags::default(),
            init: Init::FanIn,
            paths: Paths {
                images: "data/images".into(),
                masks: "data/masks".into(),
                coarse_checkpoint: None,
                log: None,
            },
        }
    }

    /// Overlays `text` on the defaults of the profile it names (desk when absent).
    /// Relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let user: Value = serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        if !user.is_object() {
            return Err(CliError::usage("config must be a JSON object"));
        }
        let profile = match user.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| CliError::usage(format!("profile: {e}")))?,
            None => Profile::Desk,
        };
        let mut merged = serde_json::to_value(Self::defaults(profile)).expect("defaults serialize");
        merge(&mut merged, user);
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::usage(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.paths.images);
        resolve(&mut cfg.paths.masks);
        if let Some(p) = cfg.paths.coarse_checkpoint.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.paths.log.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::usage(format!("config: {what}")));
        let rates = [self.learning_rate.coarse, self.learning_rate.fine, self.weight_decay];
        if rates.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("learning rates and weight decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size.coarse == 0 || self.batch_size.fine == 0 {
            return bad("batch sizes must be positive");
        }
        if self.slci.n_target == 0 || !(self.slci.compactness > 0.0) || !(0.0..=1.0).contains(&self.slci.lambda) {
            return bad("slci needs n_target > 0, compactness > 0 and lambda in [0, 1]");
        }
        if self.slci.bins.color == 0 || self.slci.bins.gradient == 0 {
            return bad("histogram bin counts must be positive");
        }
        if !(self.loss.c_reg > 0.0) {
            return bad("loss.c_reg must be positive");
        }
        if let Init::Gaussian { std } = self.init {
            if !(std > 0.0) {
                return bad("init std must be positive");
            }
        }
        self.profile
            .validate(self.flags.coarse_channels(), self.flags.fine_channels())
            .map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn coarse_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate.coarse,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size.coarse,
        }
    }

    pub fn fine_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate.fine,
            batch_size: self.batch_size.fine,
            ..self.coarse_sgd()
        }
    }

    /// Coarse fine-tuning runs for both coarse stage budgets combined.
    pub fn fine_tune(&self) -> FineTuneConfig {
        FineTuneConfig {
            coarse_epochs: self.epochs.coarse_stage1 + self.epochs.coarse_stage2,
            fine_epochs: self.epochs.fine,
            coarse: self.coarse_sgd(),
            fine: self.fine_sgd(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_keeps_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 5, "learning_rate": {"fine": 0.5}}"#, Path::new("/x")).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.learning_rate.fine, 0.5);
        assert_eq!(cfg.learning_rate.coarse, 1e-5);
        assert_eq!(cfg.paths.images, Path::new("/x/data/images"));
        assert_eq!(cfg.slci.n_target, 20);
    }

    #[test]
    fn full_defaults() {
        let cfg = RunConfig::from_json(r#"{"profile": "full"}"#, Path::new(".")).unwrap();
        assert_eq!(cfg.batch_size.coarse, 32);
        assert_eq!(cfg.learning_rate.coarse, 1e-6);
        assert_eq!(cfg.learning_rate.fine, 1e-7);
        assert_eq!(cfg.epochs.coarse_stage1 + cfg.epochs.coarse_stage2, 90);
        assert_eq!(cfg.slci.n_target, 200);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            r#"{"batch_size": {"coarse": 0}}"#,
            r#"{"momentum": 1.5}"#,
            r#"{"slci": {"lambda": 2.0}}"#,
            r#"{"unknown": 1}"#,
            r#"{"learning_rate": {"coarse": -1}}"#,
            "[1]",
        ] {
            assert!(RunConfig::from_json(text, Path::new(".")).is_err(), "{text}");
        }
    }
}
