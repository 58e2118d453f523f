//! Experiment configuration: JSON file, CLI overrides, canonical hashing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ropescope_core::analysis::MaskStrategy;
use ropescope_core::model::ModelConfig;
use ropescope_core::rope::ScalingMethod;

use crate::errors::CliError;

/// Where analysis inputs come from: prompt text/files run through the toy
/// model, or an activation dump from an external model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub prompt_paths: Vec<PathBuf>,
    pub prompt_text: Option<String>,
    pub dump: Option<FilePair>,
}

/// A manifest + container pair on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilePair {
    pub manifest: PathBuf,
    pub container: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub train_len: usize,
    pub norm_eps: f64,
    pub rope_base: f64,
    pub weight_seed: u64,
    /// Load weights from a store instead of seeding them.
    pub weights: Option<FilePair>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 4,
            d_model: 32,
            head_dim: 8,
            ffn_dim: 64,
            vocab_size: 256,
            train_len: 64,
            norm_eps: 1e-5,
            rope_base: 10_000.0,
            weight_seed: 0,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// Random pairs per token for heatmap-style sampling.
    pub rate: usize,
    /// Top-attention keys kept per query.
    pub per_query_k: usize,
    pub seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            rate: 100,
            per_query_k: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    None,
    Top,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub strategy: MaskMode,
    pub fraction: f64,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            strategy: MaskMode::None,
            fraction: 0.0,
            seed: 0,
        }
    }
}

impl MaskSection {
    pub fn strategy_for_selection(&self) -> Option<MaskStrategy> {
        match self.strategy {
            MaskMode::None => None,
            MaskMode::Top => Some(MaskStrategy::Top),
            MaskMode::Random => Some(MaskStrategy::Random),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// How many top contributing dimensions feed each heatmap cell.
    pub top_k: usize,
    /// Rank heads by |rho| instead of signed rho.
    pub rank_by_abs: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            top_k: 5,
            rank_by_abs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrigSection {
    pub distances: Vec<u64>,
}

impl Default for TrigSection {
    fn default() -> Self {
        Self {
            distances: vec![1, 16, 256, 4096, 65_536],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeSection {
    pub layer: usize,
    pub head: usize,
    /// How many sampled pairs to decompose.
    pub pairs: usize,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        Self {
            layer: 0,
            head: 0,
            pairs: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PasskeySection {
    pub context_len: usize,
    pub key_digits: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PasskeySection {
    fn default() -> Self {
        Self {
            context_len: 512,
            key_digits: 5,
            trials: 4,
            seed: 0,
        }
    }
}

/// The full experiment configuration. Every field has a default; a config
/// file overrides defaults and CLI flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputConfig,
    pub model: ModelSection,
    pub scaling: ScalingMethod,
    pub sampling: SamplingSection,
    pub mask: MaskSection,
    pub analysis: AnalysisSection,
    pub trig: TrigSection,
    pub decompose: DecomposeSection,
    pub passkey: PasskeySection,
    pub disable_query_rotation: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            model: ModelSection::default(),
            scaling: ScalingMethod::None,
            sampling: SamplingSection::default(),
            mask: MaskSection::default(),
            analysis: AnalysisSection::default(),
            trig: TrigSection::default(),
            decompose: DecomposeSection::default(),
            passkey: PasskeySection::default(),
            disable_query_rotation: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.mask.fraction) {
            return Err(CliError::Config(format!(
                "mask fraction {} outside [0, 1]",
                self.mask.fraction
            )));
        }
        if self.sampling.rate == 0 || self.sampling.per_query_k == 0 {
            return Err(CliError::Config(
                "sampling rate and per_query_k must be >= 1".into(),
            ));
        }
        if self.analysis.top_k == 0 {
            return Err(CliError::Config("analysis top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// The toy-model config implied by this experiment config.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            d_model: self.model.d_model,
            head_dim: self.model.head_dim,
            ffn_dim: self.model.ffn_dim,
            vocab_size: self.model.vocab_size,
            train_len: self.model.train_len,
            norm_eps: self.model.norm_eps,
            rope_base: self.model.rope_base,
            scaling: self.scaling,
        }
    }

    /// Hash of the canonicalized config (out_dir excluded) and the command
    /// name. Stable across whitespace and key order; changes whenever a
    /// semantically relevant field changes.
    pub fn hash_for(&self, command: &str) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("out_dir");
        }
        let mut canonical = String::new();
        canonical_json(&value, &mut canonical);
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(b"\0");
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic JSON rendering: objects sorted by key, no whitespace.
fn canonical_json(value: &serde_json::Value, out: &mut String) {
    match value {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<&String, &serde_json::Value> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                canonical_json(v, out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).unwrap()),
    }
}

/// Parse the `--mask` flag: `top:<fraction>`, `random:<fraction>`, `none`.
pub fn parse_mask_flag(s: &str) -> Result<MaskSection, CliError> {
    let bad = |msg: &str| CliError::Config(format!("invalid --mask {s:?}: {msg}"));
    if s == "none" {
        return Ok(MaskSection::default());
    }
    let (kind, frac) = s
        .split_once(':')
        .ok_or_else(|| bad("expected top:<fraction>, random:<fraction>, or none"))?;
    let fraction: f64 = frac.parse().map_err(|_| bad("fraction is not a number"))?;
    let strategy = match kind {
        "top" => MaskMode::Top,
        "random" => MaskMode::Random,
        _ => return Err(bad("strategy must be top or random")),
    };
    Ok(MaskSection {
        strategy,
        fraction,
        seed: 0,
    })
}

/// Parse the `--scaling` flag:
/// `none | pi:<s> | yarn:<s>[,alpha,beta] | base:<b> | selfextend:<G>,<w>`.
pub fn parse_scaling_flag(s: &str) -> Result<ScalingMethod, CliError> {
    let bad = |msg: &str| CliError::Config(format!("invalid --scaling {s:?}: {msg}"));
    if s == "none" {
        return Ok(ScalingMethod::None);
    }
    let (kind, args) = s.split_once(':').ok_or_else(|| {
        bad("expected none, pi:<s>, yarn:<s>[,alpha,beta], base:<b>, or selfextend:<G>,<w>")
    })?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("arguments must be numbers"))?;
    let method = match (kind, nums.as_slice()) {
        ("pi", [scale]) => ScalingMethod::LinearInterpolation { scale: *scale },
        ("yarn", [scale]) => ScalingMethod::yarn(*scale),
        ("yarn", [scale, alpha, beta]) => ScalingMethod::Yarn {
            scale: *scale,
            low_rotations: *alpha,
            high_rotations: *beta,
            temperature: true,
        },
        ("base", [new_base]) => ScalingMethod::BaseScale { new_base: *new_base },
        ("selfextend", [group, window]) => {
            if group.fract() != 0.0 || window.fract() != 0.0 || *group < 1.0 || *window < 0.0 {
                return Err(bad("selfextend takes nonnegative integers G >= 1 and w"));
            }
            ScalingMethod::SelfExtend {
                group_size: *group as u64,
                neighbor_window: *window as u64,
            }
        }
        _ => return Err(bad("wrong number of arguments")),
    };
    method
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(method)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_whitespace_and_key_order() {
        let a: ExperimentConfig =
            serde_json::from_str(r#"{"sampling": {"rate": 7, "seed": 1}}"#).unwrap();
        let b: ExperimentConfig =
            serde_json::from_str("{\n  \"sampling\": {\"seed\": 1,   \"rate\": 7}\n}").unwrap();
        assert_eq!(a.hash_for("corr"), b.hash_for("corr"));
    }

    #[test]
    fn hash_changes_on_field_and_command() {
        let base = ExperimentConfig::default();
        let mut changed = base.clone();
        changed.sampling.seed = 1;
        assert_ne!(base.hash_for("corr"), changed.hash_for("corr"));
        assert_ne!(base.hash_for("corr"), base.hash_for("heatmap"));
    }

    #[test]
    fn hash_ignores_out_dir() {
        let base = ExperimentConfig::default();
        let mut moved = base.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(base.hash_for("freqs"), moved.hash_for("freqs"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"no_such_field": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn mask_flag_parsing() {
        assert_eq!(parse_mask_flag("none").unwrap().strategy, MaskMode::None);
        let top = parse_mask_flag("top:0.05").unwrap();
        assert_eq!(top.strategy, MaskMode::Top);
        assert_eq!(top.fraction, 0.05);
        let random = parse_mask_flag("random:0.1").unwrap();
        assert_eq!(random.strategy, MaskMode::Random);
        assert!(parse_mask_flag("bottom:0.1").is_err());
        assert!(parse_mask_flag("top").is_err());
    }

    #[test]
    fn scaling_flag_parsing() {
        assert_eq!(parse_scaling_flag("none").unwrap(), ScalingMethod::None);
        assert_eq!(
            parse_scaling_flag("pi:4").unwrap(),
            ScalingMethod::LinearInterpolation { scale: 4.0 }
        );
        assert_eq!(parse_scaling_flag("yarn:16").unwrap(), ScalingMethod::yarn(16.0));
        assert_eq!(
            parse_scaling_flag("yarn:16,2,64").unwrap(),
            ScalingMethod::Yarn {
                scale: 16.0,
                low_rotations: 2.0,
                high_rotations: 64.0,
                temperature: true,
            }
        );
        assert_eq!(
            parse_scaling_flag("base:500000").unwrap(),
            ScalingMethod::BaseScale { new_base: 500_000.0 }
        );
        assert_eq!(
            parse_scaling_flag("selfextend:16,1024").unwrap(),
            ScalingMethod::SelfExtend {
                group_size: 16,
                neighbor_window: 1024,
            }
        );
        assert!(parse_scaling_flag("pi:1").is_err());
        assert!(parse_scaling_flag("selfextend:1.5,2").is_err());
        assert!(parse_scaling_flag("warp:2").is_err());
    }
}
