//! Backbone and retrofit configuration, plus the JSON run-config file.
//!
//! The on-disk format is documented in `docs/SCHEMAS.md`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::injection::{InjectionMode, DEFAULT_EPSILON};
use crate::retrieval::{head_slopes, FgtbParams, RetrievalMode};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    /// Prefix tokens per observation (S).
    pub prefix_tokens: usize,
    /// Hidden width of the gated MLP as a multiple of the model width.
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default = "default_action_dim")]
    pub action_dim: usize,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_mlp_ratio() -> usize {
    8
}

fn default_action_dim() -> usize {
    7
}

fn default_rope_base() -> f64 {
    crate::numerics::RopeParams::DEFAULT_BASE
}

impl BackboneConfig {
    pub fn new(num_layers: usize, num_heads: usize, head_dim: usize, prefix_tokens: usize) -> Self {
        Self {
            num_layers,
            num_heads,
            head_dim,
            prefix_tokens,
            mlp_ratio: default_mlp_ratio(),
            action_dim: default_action_dim(),
            rope_base: default_rope_base(),
            seed: 0,
        }
    }

    /// L=6, H=4, d=16, S=16: the shape used by the efficiency benchmark.
    pub fn desk() -> Self {
        Self::new(6, 4, 16, 16)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn mlp_dim(&self) -> usize {
        self.mlp_ratio * self.model_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("prefix_tokens", self.prefix_tokens),
            ("mlp_ratio", self.mlp_ratio),
            ("action_dim", self.action_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.head_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "head_dim must be even for rotary embeddings, got {}",
                self.head_dim
            )));
        }
        if !(self.rope_base > 0.0 && self.rope_base.is_finite()) {
            return Err(Error::Config("rope_base must be positive".into()));
        }
        Ok(())
    }
}

/// Named layer subsets used by the layer-selection ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSubset {
    All,
    /// First half of the stack (closest to the input).
    Bottom,
    /// Second half of the stack.
    Top,
    /// Middle third.
    Intermediate,
}

impl LayerSubset {
    pub fn indices(self, num_layers: usize) -> BTreeSet<usize> {
        let half = num_layers / 2;
        match self {
            LayerSubset::All => (0..num_layers).collect(),
            LayerSubset::Bottom => (0..half.max(1)).collect(),
            LayerSubset::Top => (half..num_layers).collect(),
            LayerSubset::Intermediate => {
                let (lo, hi) = (num_layers / 3, 2 * num_layers / 3);
                if lo < hi {
                    (lo..hi).collect()
                } else {
                    BTreeSet::from([half.min(num_layers.saturating_sub(1))])
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerSubset::All => "all",
            LayerSubset::Bottom => "bottom",
            LayerSubset::Top => "top",
            LayerSubset::Intermediate => "intermediate",
        }
    }
}

/// Retrofit hyperparameters for one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempoFitConfig {
    pub enabled: bool,
    pub mem_layers: BTreeSet<usize>,
    pub capacity: usize,
    pub beta: f64,
    /// Frame-gap to token scale; `None` means the prefix length S.
    pub alpha_s: Option<f64>,
    /// Per-head slopes; `None` means the geometric schedule.
    pub slopes: Option<Vec<f64>>,
    pub retrieval_mode: RetrievalMode,
    pub injection_mode: InjectionMode,
    pub epsilon: f64,
    /// Store fused instead of raw projections (experimental; off by default).
    pub write_fused: bool,
    /// Compute per-layer retrieval summaries (recency mass, entropy, norm drift).
    pub diagnostics: bool,
    /// Keep full retrieval weight matrices in step diagnostics.
    pub record_weights: bool,
}

impl TempoFitConfig {
    pub const DEFAULT_CAPACITY: usize = 8;
    pub const DEFAULT_BETA: f64 = 1.0;

    pub fn for_backbone(backbone: &BackboneConfig) -> Self {
        Self {
            enabled: true,
            mem_layers: LayerSubset::Intermediate.indices(backbone.num_layers),
            capacity: Self::DEFAULT_CAPACITY,
            beta: Self::DEFAULT_BETA,
            alpha_s: None,
            slopes: None,
            retrieval_mode: RetrievalMode::KToK,
            injection_mode: InjectionMode::ResidualNormPreserving,
            epsilon: DEFAULT_EPSILON,
            write_fused: false,
            diagnostics: true,
            record_weights: false,
        }
    }

    pub fn disabled(backbone: &BackboneConfig) -> Self {
        Self {
            enabled: false,
            ..Self::for_backbone(backbone)
        }
    }

    pub fn validate(&self, backbone: &BackboneConfig) -> Result<()> {
        if self.capacity < 1 {
            return Err(Error::Config("capacity must be >= 1".into()));
        }
        if let Some(&l) = self.mem_layers.iter().find(|&&l| l >= backbone.num_layers) {
            return Err(Error::Config(format!(
                "memory layer {l} out of range for {} layers",
                backbone.num_layers
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        self.fgtb_params(backbone).map(|_| ())
    }

    pub fn fgtb_params(&self, backbone: &BackboneConfig) -> Result<FgtbParams> {
        let slopes = match &self.slopes {
            Some(s) if s.len() != backbone.num_heads => {
                return Err(Error::Config(format!(
                    "{} slopes for {} heads",
                    s.len(),
                    backbone.num_heads
                )))
            }
            Some(s) => s.clone(),
            None => head_slopes(backbone.num_heads),
        };
        let alpha_s = self.alpha_s.unwrap_or(backbone.prefix_tokens as f64);
        FgtbParams::new(self.beta, alpha_s, slopes)
    }

    /// Buffer scalars held at steady state: `|L_mem| * C * 2 * B * H * S * d`.
    pub fn state_scalars(&self, backbone: &BackboneConfig, batch: usize) -> usize {
        if !self.enabled {
            return 0;
        }
        self.mem_layers.len()
            * self.capacity
            * 2
            * batch
            * backbone.num_heads
            * backbone.prefix_tokens
            * backbone.head_dim
    }
}

/// Retrofit overrides as they appear in a config file; unset fields take the
/// defaults of [`TempoFitConfig::for_backbone`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TempoFitSettings {
    pub enabled: Option<bool>,
    pub mem_layers: Option<BTreeSet<usize>>,
    pub capacity: Option<usize>,
    pub beta: Option<f64>,
    pub alpha_s: Option<f64>,
    pub slopes: Option<Vec<f64>>,
    pub retrieval_mode: Option<RetrievalMode>,
    pub injection_mode: Option<InjectionMode>,
    pub epsilon: Option<f64>,
    pub write_fused: Option<bool>,
    pub diagnostics: Option<bool>,
    pub record_weights: Option<bool>,
}

impl TempoFitSettings {
    pub fn resolve(&self, backbone: &BackboneConfig) -> Result<TempoFitConfig> {
        let mut cfg = TempoFitConfig::for_backbone(backbone);
        if let Some(v) = self.enabled {
            cfg.enabled = v;
        }
        if let Some(v) = &self.mem_layers {
            cfg.mem_layers = v.clone();
        }
        if let Some(v) = self.capacity {
            cfg.capacity = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if self.alpha_s.is_some() {
            cfg.alpha_s = self.alpha_s;
        }
        if self.slopes.is_some() {
            cfg.slopes = self.slopes.clone();
        }
        if let Some(v) = self.retrieval_mode {
            cfg.retrieval_mode = v;
        }
        if let Some(v) = self.injection_mode {
            cfg.injection_mode = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.write_fused {
            cfg.write_fused = v;
        }
        if let Some(v) = self.diagnostics {
            cfg.diagnostics = v;
        }
        if let Some(v) = self.record_weights {
            cfg.record_weights = v;
        }
        cfg.validate(backbone)?;
        Ok(cfg)
    }
}

/// Top-level JSON config: backbone definition plus retrofit settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub tempofit: TempoFitSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            backbone: BackboneConfig::desk(),
            tempofit: TempoFitSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.backbone.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self) -> Result<(BackboneConfig, TempoFitConfig)> {
        let tempofit = self.tempofit.resolve(&self.backbone)?;
        Ok((self.backbone.clone(), tempofit))
    }
}
