//! Experiment configuration.
//!
//! A whole experiment — benchmark geometry, network width, loss weights,
//! memory budget, and the optimization schedule — is described by one
//! [`ExperimentConfig`]. Configs round-trip through TOML, can be patched
//! with dotted `key=value` overrides, and hash to a short fingerprint that
//! is embedded in every artifact so results stay traceable to the exact
//! settings that produced them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Named training strategy. Presets differ in which knowledge-transfer
/// terms are active and in how replay memory is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Fine-tune on each new session; no replay, no transfer terms.
    Ft,
    /// Retrain from scratch on all data seen so far (upper bound).
    Joint,
    /// Replay of whole videos plus fused feature-map and classifier transfer.
    Fused,
    /// Decomposed transfer with pooled spatial/temporal components.
    DecomposedPool,
    /// Decomposed transfer along estimated motion trajectories.
    DecomposedTraj,
    /// Fused transfer with keyframe-compressed replay memory.
    DualGra,
    /// Trajectory-decomposed transfer with keyframe-compressed memory.
    Full,
}

/// Which feature-level transfer loss an incremental session uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// No teacher at all (plain fine-tuning or joint retraining).
    None,
    /// Single squared distance over the whole feature map.
    Fused,
    /// Spatial + temporal components via axis pooling.
    Pool,
    /// Spatial + temporal components via motion trajectories.
    Traj,
}

impl Preset {
    pub fn all() -> [Preset; 7] {
        [
            Preset::Ft,
            Preset::Joint,
            Preset::Fused,
            Preset::DecomposedPool,
            Preset::DecomposedTraj,
            Preset::DualGra,
            Preset::Full,
        ]
    }

    pub fn transfer_mode(self) -> TransferMode {
        match self {
            Preset::Ft | Preset::Joint => TransferMode::None,
            Preset::Fused | Preset::DualGra => TransferMode::Fused,
            Preset::DecomposedPool => TransferMode::Pool,
            Preset::DecomposedTraj | Preset::Full => TransferMode::Traj,
        }
    }

    /// Does the preset keep a replay memory of past-class exemplars?
    pub fn uses_memory(self) -> bool {
        !matches!(self, Preset::Ft | Preset::Joint)
    }

    /// Does the preset compress stored exemplars down to keyframes?
    /// When `false`, exemplars are stored at full length (threshold zero).
    pub fn compresses_memory(self) -> bool {
        matches!(self, Preset::DualGra | Preset::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ft => "ft",
            Preset::Joint => "joint",
            Preset::Fused => "fused",
            Preset::DecomposedPool => "decomposed-pool",
            Preset::DecomposedTraj => "decomposed-traj",
            Preset::DualGra => "dual-gra",
            Preset::Full => "full",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// How the keyframe admission threshold is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdForm {
    /// Threshold = beta x mean consecutive-frame distance (scale-free).
    Mean,
    /// Threshold = beta x summed consecutive-frame distance.
    Sum,
}

/// Synthetic benchmark geometry and class layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Total classes in the stream. Classes come in motion-reversal pairs,
    /// so this must be even; the generator's table currently holds 32.
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Square frame edge in pixels.
    pub frame_size: usize,
    /// Frames rendered per video before segment sampling.
    pub raw_frames: usize,
    /// Per-frame uniform pixel noise amplitude in [0, 1).
    pub noise_level: f64,
    /// Probability that a frame-to-frame transition actually moves.
    pub motion_duty: f64,
    /// Classes in the first (base) session.
    pub base_classes: usize,
    /// Classes added by every later session.
    pub classes_per_session: usize,
    /// Shuffle which classes land in which session (seeded).
    pub shuffle_classes: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_classes: 8,
            train_per_class: 30,
            test_per_class: 10,
            frame_size: 16,
            raw_frames: 16,
            noise_level: 0.2,
            motion_duty: 0.6,
            base_classes: 2,
            classes_per_session: 2,
            shuffle_classes: false,
        }
    }
}

/// Feature extractor shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Output channels of the four conv layers. The first three must be
    /// divisible by four: a quarter of their channels is shifted one step
    /// forward / backward in time before the next convolution.
    pub conv_channels: [usize; 4],
    /// Temporal length of a sampled clip (and of the feature map).
    pub segments: usize,
    /// Motion search radius in feature cells.
    pub search_radius: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_channels: [8, 16, 32, 32],
            segments: 8,
            search_radius: 2,
        }
    }
}

/// Loss weights and knowledge-transfer shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the classifier-transfer term inside the transfer loss.
    pub alpha: f64,
    /// Weight of the whole transfer loss against cross-entropy.
    pub gamma: f64,
    /// Weight of the temporal component inside decomposed transfer.
    pub lambda: f64,
    /// Softening temperature for classifier transfer.
    pub temperature: f64,
    /// Trajectory window half-width: the temporal filter spans
    /// `2 * half_window + 1` steps.
    pub half_window: usize,
    /// Rows of the fixed random projection applied to motion descriptors.
    pub traj_feature_dim: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            temperature: 2.0,
            half_window: 1,
            traj_feature_dim: 8,
        }
    }
}

/// Replay memory budget and keyframe selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Exemplar videos kept per past class.
    pub exemplars_per_class: usize,
    /// Keyframe admission threshold scale. Zero keeps every frame.
    pub beta: f64,
    pub threshold_form: ThresholdForm,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            exemplars_per_class: 10,
            beta: 0.9,
            threshold_form: ThresholdForm::Mean,
        }
    }
}

/// Optimization schedule. Learning-rate milestones are epoch indices at
/// which the rate is multiplied by 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Preset,
    pub seed: u64,
    pub base_epochs: usize,
    pub base_lr: f64,
    pub base_lr_milestones: Vec<usize>,
    pub incremental_epochs: usize,
    pub incremental_lr: f64,
    pub incremental_lr_milestones: Vec<usize>,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Preset::Full,
            seed: 0,
            base_epochs: 50,
            base_lr: 0.02,
            base_lr_milestones: vec![35, 45],
            incremental_epochs: 25,
            incremental_lr: 0.01,
            incremental_lr_milestones: vec![17, 22],
            batch_size: 16,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Top-level experiment description. See module docs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataio: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub memory: MemoryConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Parse a TOML document. Missing keys fall back to defaults; unknown
    /// keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Apply one `key=value` override with a dotted key path, e.g.
    /// `train.base_lr=0.01` or `memory.beta=1.05`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("override `{assignment}` is not of the form key=value"))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{assignment}` has an empty key")));
        }

        // Parse the value as TOML when possible so numbers and booleans keep
        // their types; anything else is treated as a string.
        let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").unwrap(),
            Err(_) => toml::Value::String(value.to_string()),
        };

        let mut root =
            toml::Value::try_from(&*self).map_err(|e| Error::Serialization(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(*part))
                .ok_or_else(|| Error::Config(format!("unknown config section `{part}` in `{key}`")))?;
        }
        let leaf = parts[parts.len() - 1];
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not address a config field")))?;
        if !table.contains_key(leaf) {
            return Err(Error::Config(format!("unknown config field `{key}`")));
        }
        table.insert(leaf.to_string(), parsed);

        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{key}`: {e}")))?;
        Ok(())
    }

    /// Short hex fingerprint of the fully resolved config.
    pub fn hash(&self) -> String {
        let canon = self.to_toml_string().expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in &digest[..8] {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Number of sessions the stream splits into.
    pub fn num_sessions(&self) -> usize {
        1 + (self.dataio.num_classes - self.dataio.base_classes) / self.dataio.classes_per_session
    }

    /// Check cross-field invariants. Called by every entry point that
    /// consumes a config.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataio;
        if d.num_classes == 0 || d.num_classes % 2 != 0 {
            return Err(Error::Config(
                "dataio.num_classes must be a positive even number (classes form reversal pairs)".into(),
            ));
        }
        if d.num_classes > 32 {
            return Err(Error::Config(
                "dataio.num_classes exceeds the 32 shape/motion combinations the generator defines".into(),
            ));
        }
        if d.base_classes == 0 || d.base_classes > d.num_classes {
            return Err(Error::Config("dataio.base_classes must be in 1..=num_classes".into()));
        }
        if d.classes_per_session == 0 {
            return Err(Error::Config("dataio.classes_per_session must be positive".into()));
        }
        if (d.num_classes - d.base_classes) % d.classes_per_session != 0 {
            return Err(Error::Config(format!(
                "{} remaining classes do not divide into sessions of {}",
                d.num_classes - d.base_classes,
                d.classes_per_session
            )));
        }
        if d.train_per_class == 0 || d.test_per_class == 0 {
            return Err(Error::Config("dataio needs at least one train and one test video per class".into()));
        }
        if d.frame_size < 8 || d.frame_size % 4 != 0 {
            return Err(Error::Config(
                "dataio.frame_size must be >= 8 and divisible by 4 (two stride-2 convolutions)".into(),
            ));
        }
        if d.raw_frames < 2 {
            return Err(Error::Config("dataio.raw_frames must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&d.noise_level) {
            return Err(Error::Config("dataio.noise_level must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&d.motion_duty) {
            return Err(Error::Config("dataio.motion_duty must lie in [0, 1]".into()));
        }

        let m = &self.model;
        if m.segments < 2 {
            return Err(Error::Config("model.segments must be at least 2".into()));
        }
        for (i, &c) in m.conv_channels.iter().enumerate() {
            if c == 0 {
                return Err(Error::Config(format!("model.conv_channels[{i}] must be positive")));
            }
        }
        for (i, &c) in m.conv_channels[..3].iter().enumerate() {
            if c % 4 != 0 {
                return Err(Error::Config(format!(
                    "model.conv_channels[{i}] must be divisible by 4 for the temporal shift"
                )));
            }
        }
        let feat_hw = d.frame_size / 4;
        if m.search_radius == 0 || m.search_radius >= feat_hw {
            return Err(Error::Config(format!(
                "model.search_radius must be in 1..{feat_hw} (feature grid is {feat_hw}x{feat_hw})"
            )));
        }

        let l = &self.loss;
        if l.alpha < 0.0 || l.gamma < 0.0 || l.lambda < 0.0 {
            return Err(Error::Config("loss weights alpha/gamma/lambda must be non-negative".into()));
        }
        if l.temperature <= 0.0 {
            return Err(Error::Config("loss.temperature must be positive".into()));
        }
        if l.half_window == 0 {
            return Err(Error::Config("loss.half_window must be at least 1".into()));
        }
        if l.traj_feature_dim == 0 {
            return Err(Error::Config("loss.traj_feature_dim must be positive".into()));
        }

        let mem = &self.memory;
        if mem.exemplars_per_class == 0 {
            return Err(Error::Config("memory.exemplars_per_class must be positive".into()));
        }
        if mem.beta < 0.0 {
            return Err(Error::Config("memory.beta must be non-negative".into()));
        }

        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if t.base_epochs == 0 || t.incremental_epochs == 0 {
            return Err(Error::Config("epoch counts must be positive".into()));
        }
        if t.base_lr <= 0.0 || t.incremental_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::Config("train.momentum must lie in [0, 1)".into()));
        }
        if t.weight_decay < 0.0 {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        check_milestones(&t.base_lr_milestones, t.base_epochs, "train.base_lr_milestones")?;
        check_milestones(
            &t.incremental_lr_milestones,
            t.incremental_epochs,
            "train.incremental_lr_milestones",
        )?;
        Ok(())
    }
}

fn check_milestones(milestones: &[usize], epochs: usize, what: &str) -> Result<()> {
    for w in milestones.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(format!("{what} must be strictly increasing")));
        }
    }
    if milestones.iter().any(|&m| m == 0 || m >= epochs) {
        return Err(Error::Config(format!("{what} entries must lie in 1..epochs")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_preserves_config() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[train]\nseed = 7\n").unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.dataio, DataConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[optimizer]\nlr = 0.1\n").is_err());
    }

    #[test]
    fn overrides_patch_fields_and_catch_typos() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_override("train.method=fused").unwrap();
        cfg.apply_override("loss.gamma = 2.5").unwrap();
        cfg.apply_override("memory.threshold_form=sum").unwrap();
        assert_eq!(cfg.train.method, Preset::Fused);
        assert_eq!(cfg.loss.gamma, 2.5);
        assert_eq!(cfg.memory.threshold_form, ThresholdForm::Sum);
        assert!(cfg.apply_override("train.learning_rate=0.1").is_err());
        assert!(cfg.apply_override("loss.gamma=fast").is_err());
        assert!(cfg.apply_override("nonsense").is_err());
    }

    #[test]
    fn hash_tracks_content_not_identity() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.apply_override("train.seed=99").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn preset_table_is_consistent() {
        assert_eq!(Preset::Full.transfer_mode(), TransferMode::Traj);
        assert_eq!(Preset::DualGra.transfer_mode(), TransferMode::Fused);
        assert!(!Preset::Ft.uses_memory());
        assert!(!Preset::Joint.uses_memory());
        assert!(Preset::Fused.uses_memory());
        assert!(!Preset::Fused.compresses_memory());
        assert!(Preset::Full.compresses_memory());
        for p in Preset::all() {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataio.num_classes = 7;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.dataio.base_classes = 3; // leaves 5 classes for sessions of 2
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.model.conv_channels = [6, 16, 32, 32];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.model.search_radius = 4; // feature grid is 4x4
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.train.base_lr_milestones = vec![35, 35];
        assert!(cfg.validate().is_err());
    }
}
