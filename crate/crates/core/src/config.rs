//! Run configuration: one TOML file with sections, every hyperparameter
//! defaulting to the published training recipe. Flag overrides use dotted
//! keys (`train.epochs=3`) with precedence flag > file > default.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, PerceptualBackend};
use crate::networks::{ClassifierConfig, DiscriminatorConfig, GeneratorConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            out_dir: "runs/mcr".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: u64,
    pub lr_init: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub label_smooth_lo: f64,
    pub label_smooth_hi: f64,
    /// Initial variance of the instance noise on generated images.
    pub noise_sigma0: f64,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 500,
            lr_init: 2e-4,
            batch_size: 2,
            beta1: 0.5,
            beta2: 0.999,
            weight_decay: 1e-4,
            label_smooth_lo: 0.9,
            label_smooth_hi: 1.0,
            noise_sigma0: 0.1,
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainSection {
    pub epochs: u64,
    pub lr_init: f64,
    /// Exponential decay factor per epoch.
    pub gamma: f64,
    pub batch_size: usize,
    pub augment: bool,
}

impl Default for ClassifierTrainSection {
    fn default() -> Self {
        ClassifierTrainSection {
            epochs: 200,
            lr_init: 2e-4,
            gamma: 0.98,
            batch_size: 8,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SliceSet {
    /// All central-band slices 76..=176.
    Central100,
    /// The 14 training-selection slices.
    Train14,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub slice_set: SliceSet,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            slice_set: SliceSet::Central100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Manifest CSV with subject_id, diagnosis, mri_path, pet_path.
    pub manifest: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub train: TrainSection,
    pub loss: LossWeights,
    pub perceptual: PerceptualBackend,
    pub classifier: ClassifierConfig,
    pub classifier_train: ClassifierTrainSection,
    pub eval: EvalSection,
    pub data: DataSection,
}

impl RunConfig {
    /// Desk-scale configuration: tiny networks, few epochs.
    pub fn tiny() -> Self {
        RunConfig {
            model: GeneratorConfig::tiny(),
            disc: DiscriminatorConfig::tiny(),
            classifier: ClassifierConfig::tiny(),
            train: TrainSection {
                epochs: 2,
                batch_size: 2,
                checkpoint_every: 1,
                ..Default::default()
            },
            classifier_train: ClassifierTrainSection {
                epochs: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.disc.validate()?;
        self.classifier.validate()?;
        self.loss.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        if !(self.train.label_smooth_lo <= self.train.label_smooth_hi
            && self.train.label_smooth_lo >= 0.0
            && self.train.label_smooth_hi <= 1.0)
        {
            return Err(Error::Config(format!(
                "label smoothing range [{}, {}] must sit inside [0, 1]",
                self.train.label_smooth_lo, self.train.label_smooth_hi
            )));
        }
        if self.train.lr_init <= 0.0 || self.classifier_train.lr_init <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0 < self.classifier_train.gamma && self.classifier_train.gamma < 1.0) {
            return Err(Error::Config(format!(
                "classifier_train.gamma must lie in (0, 1), got {}",
                self.classifier_train.gamma
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hash binding GAN checkpoints to the architecture they were trained
    /// with (generator + discriminator sections).
    pub fn model_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(toml::to_string(&self.model).unwrap().as_bytes());
        h.update(toml::to_string(&self.disc).unwrap().as_bytes());
        h.finalize().into()
    }

    /// Hash binding classifier checkpoints to the classifier architecture.
    pub fn classifier_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(toml::to_string(&self.classifier).unwrap().as_bytes());
        h.finalize().into()
    }

    /// Apply a dotted-key override, e.g. `train.epochs=3`.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut doc: toml::Value =
            toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key '{key}'")));
        }
        let mut cur = &mut doc;
        for part in &parts[..parts.len() - 1] {
            cur = cur
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown config section '{part}' in '{key}'")))?;
        }
        let last = parts[parts.len() - 1];
        if cur.get(last).is_none() {
            // optional fields are absent from the serialized document; insert
            // with an inferred type and let deserialization validate the key
            let table = cur
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{key}' does not address a config table")))?;
            let inferred = if let Ok(i) = value.parse::<i64>() {
                toml::Value::Integer(i)
            } else if let Ok(f) = value.parse::<f64>() {
                toml::Value::Float(f)
            } else if let Ok(b) = value.parse::<bool>() {
                toml::Value::Boolean(b)
            } else {
                toml::Value::String(value.to_string())
            };
            table.insert(last.to_string(), inferred);
            let next: RunConfig = doc
                .try_into()
                .map_err(|e| Error::Config(format!("unknown or invalid config key '{key}': {e}")))?;
            next.validate()?;
            *self = next;
            return Ok(());
        }
        let slot = cur.get_mut(last).unwrap();
        let parsed: toml::Value = match slot {
            toml::Value::Integer(_) => toml::Value::Integer(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("'{value}' is not an integer for '{key}'")))?,
            ),
            toml::Value::Float(_) => toml::Value::Float(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("'{value}' is not a number for '{key}'")))?,
            ),
            toml::Value::Boolean(_) => toml::Value::Boolean(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("'{value}' is not a bool for '{key}'")))?,
            ),
            toml::Value::String(_) => toml::Value::String(value.to_string()),
            toml::Value::Array(prev) => {
                let items: std::result::Result<Vec<i64>, _> =
                    value.split(',').map(|s| s.trim().parse::<i64>()).collect();
                let items = items
                    .map_err(|_| Error::Config(format!("'{value}' is not an integer list for '{key}'")))?;
                if !prev.is_empty() && !matches!(prev[0], toml::Value::Integer(_)) {
                    return Err(Error::Config(format!("cannot override array '{key}'")));
                }
                toml::Value::Array(items.into_iter().map(toml::Value::Integer).collect())
            }
            _ => return Err(Error::Config(format!("cannot override '{key}'"))),
        };
        *slot = parsed;
        let next: RunConfig = doc
            .try_into()
            .map_err(|e| Error::Config(format!("override '{key}': {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_recipe() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.epochs, 500);
        assert_eq!(cfg.train.lr_init, 2e-4);
        assert_eq!(cfg.train.batch_size, 2);
        assert_eq!(cfg.train.beta1, 0.5);
        assert_eq!(cfg.train.beta2, 0.999);
        assert_eq!(cfg.loss.lambda_adv, 1.0);
        assert_eq!(cfg.loss.lambda_rec, 10.0);
        assert_eq!(cfg.loss.lambda_perc, 10.0);
        assert_eq!(cfg.loss.lambda_vq, 5.0);
        assert_eq!(cfg.loss.r1_gamma, 10.0);
        assert_eq!(cfg.loss.focal_alpha, 0.25);
        assert_eq!(cfg.loss.focal_gamma, 2.0);
        assert_eq!(cfg.classifier_train.epochs, 200);
        assert_eq!(cfg.classifier_train.gamma, 0.98);
        assert_eq!(cfg.classifier_train.batch_size, 8);
        assert_eq!(cfg.model.codebook_k, 1024);
        assert_eq!(cfg.model.codebook_d, 512);
        assert_eq!(cfg.model.channel_ladder, vec![64, 128, 256, 512]);
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::tiny();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_named_in_error() {
        let err = RunConfig::from_toml("[train]\nnot_a_key = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not_a_key"), "error should name the key: {msg}");
    }

    #[test]
    fn overrides_apply_with_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("train.epochs", "7").unwrap();
        assert_eq!(cfg.train.epochs, 7);
        cfg.apply_override("run.out_dir", "elsewhere").unwrap();
        assert_eq!(cfg.run.out_dir, "elsewhere");
        cfg.apply_override("model.channel_ladder", "4,8,16,32").unwrap();
        assert_eq!(cfg.model.channel_ladder, vec![4, 8, 16, 32]);
        let err = cfg.apply_override("train.epochz", "3").unwrap_err();
        assert!(err.to_string().contains("epochz"));
    }

    #[test]
    fn model_hash_tracks_architecture_only() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.run.seed = 999;
        assert_eq!(a.model_hash(), b.model_hash());
        b.model.codebook_k = 2048;
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
