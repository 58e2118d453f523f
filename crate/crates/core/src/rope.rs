//! Rotary position embedding primitives.
//!
//! Frequencies follow the inverse-exponential schedule
//! `theta_i = base^(-2i/d)` for pair index `i = 0..d/2`. Each consecutive
//! pair of vector dimensions `(2i, 2i+1)` is rotated by `position * theta_i`
//! (interleaved pair layout). Length-extrapolation methods either rescale
//! the frequency vector (linear interpolation, YaRN, base change) or remap
//! relative distances (grouped/neighbor attention).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency schedule parameters for one attention head.
///
/// The single source of `theta_i` values: head dimension, exponential base,
/// and the pretraining context length used by scaling methods that need to
/// know how many rotations fit in the training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqSpec {
    /// Head dimension `d`; must be even and >= 2.
    pub head_dim: usize,
    /// Exponential base; must be > 1. Common default is 10000.
    pub base: f64,
    /// Pretraining context length.
    pub train_len: usize,
}

impl FreqSpec {
    pub const DEFAULT_BASE: f64 = 10_000.0;

    pub fn new(head_dim: usize, base: f64, train_len: usize) -> Result<Self> {
        let spec = Self {
            head_dim,
            base,
            train_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim < 2 || self.head_dim % 2 != 0 {
            return Err(Error::InvalidFreqSpec(format!(
                "head_dim must be even and >= 2, got {}",
                self.head_dim
            )));
        }
        if !(self.base > 1.0) || !self.base.is_finite() {
            return Err(Error::InvalidFreqSpec(format!(
                "base must be a finite value > 1, got {}",
                self.base
            )));
        }
        if self.train_len == 0 {
            return Err(Error::InvalidFreqSpec("train_len must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of frequency pairs, `d/2`.
    pub fn num_pairs(&self) -> usize {
        self.head_dim / 2
    }
}

/// Length-extrapolation method applied on top of a [`FreqSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ScalingMethod {
    /// No scaling; frequencies used as-is.
    None,
    /// Position interpolation: every frequency divided by `scale`.
    #[serde(rename = "pi")]
    LinearInterpolation { scale: f64 },
    /// Per-dimension blend between interpolated and unchanged frequencies,
    /// ramped by how many rotations a dimension completes over the training
    /// window. Optionally reports an attention temperature.
    Yarn {
        scale: f64,
        #[serde(default = "default_low_rotations")]
        low_rotations: f64,
        #[serde(default = "default_high_rotations")]
        high_rotations: f64,
        #[serde(default = "default_true")]
        temperature: bool,
    },
    /// Recompute the schedule with a different exponential base.
    #[serde(rename = "base")]
    BaseScale { new_base: f64 },
    /// Relative-distance remap: distances beyond `neighbor_window` are
    /// floor-divided into groups of `group_size`. Leaves frequencies alone.
    #[serde(rename = "selfextend")]
    SelfExtend { group_size: u64, neighbor_window: u64 },
}

fn default_low_rotations() -> f64 {
    1.0
}

fn default_high_rotations() -> f64 {
    32.0
}

fn default_true() -> bool {
    true
}

impl ScalingMethod {
    /// YaRN with the default rotation band (1, 32) and temperature enabled.
    pub fn yarn(scale: f64) -> Self {
        Self::Yarn {
            scale,
            low_rotations: default_low_rotations(),
            high_rotations: default_high_rotations(),
            temperature: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::LinearInterpolation { scale } => {
                if scale > 1.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidScaling(format!(
                        "interpolation scale must be > 1, got {scale}"
                    )))
                }
            }
            Self::Yarn {
                scale,
                low_rotations,
                high_rotations,
                ..
            } => {
                if !(scale > 1.0) || !scale.is_finite() {
                    return Err(Error::InvalidScaling(format!(
                        "yarn scale must be > 1, got {scale}"
                    )));
                }
                if !(low_rotations > 0.0) || !(low_rotations < high_rotations) {
                    return Err(Error::InvalidScaling(format!(
                        "yarn rotation band requires 0 < low < high, got ({low_rotations}, {high_rotations})"
                    )));
                }
                Ok(())
            }
            Self::BaseScale { new_base } => {
                if new_base > 1.0 && new_base.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidScaling(format!(
                        "new_base must be > 1, got {new_base}"
                    )))
                }
            }
            Self::SelfExtend {
                group_size,
                neighbor_window: _,
            } => {
                if group_size >= 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidScaling("group_size must be >= 1".into()))
                }
            }
        }
    }
}

/// A raw query or key vector bound to a token position.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadVector {
    pub values: Vec<f64>,
    pub position: u64,
}

impl HeadVector {
    pub fn new(values: Vec<f64>, position: u64) -> Self {
        Self { values, position }
    }
}

/// A frequency vector after scaling, with the optional attention temperature
/// some methods prescribe.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFrequencies {
    pub theta: Vec<f64>,
    pub temperature: Option<f64>,
}

/// Compute `theta_i = base^(-2i/d)` for `i = 0..d/2`.
///
/// The result is strictly decreasing with `theta_0 = 1` exactly.
pub fn frequencies(spec: &FreqSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let d = spec.head_dim as f64;
    Ok((0..spec.num_pairs())
        .map(|i| spec.base.powf(-2.0 * i as f64 / d))
        .collect())
}

/// Rotate each pair `(v[2i], v[2i+1])` by the angle `position * theta[i]`.
///
/// Preserves the Euclidean norm; position 0 is the identity.
pub fn apply_rotation(v: &HeadVector, theta: &[f64]) -> Result<Vec<f64>> {
    if v.values.len() != 2 * theta.len() {
        return Err(Error::LengthMismatch {
            expected: 2 * theta.len(),
            got: v.values.len(),
        });
    }
    let pos = v.position as f64;
    let mut out = Vec::with_capacity(v.values.len());
    for (i, &t) in theta.iter().enumerate() {
        let angle = pos * t;
        let (sin, cos) = angle.sin_cos();
        let x = v.values[2 * i];
        let y = v.values[2 * i + 1];
        out.push(x * cos - y * sin);
        out.push(x * sin + y * cos);
    }
    Ok(out)
}

/// Dot product of the rotated query and key, `q_m . k_n`.
///
/// For fixed raw vectors the result depends only on the relative position
/// `m - n`.
pub fn rotary_dot(q: &HeadVector, k: &HeadVector, theta: &[f64]) -> Result<f64> {
    if q.values.len() != k.values.len() {
        return Err(Error::LengthMismatch {
            expected: q.values.len(),
            got: k.values.len(),
        });
    }
    let q_rot = apply_rotation(q, theta)?;
    let k_rot = apply_rotation(k, theta)?;
    Ok(q_rot.iter().zip(&k_rot).map(|(a, b)| a * b).sum())
}

/// Apply a frequency-rescaling method to the schedule.
///
/// `SelfExtend` is rejected here: it remaps distances, not frequencies
/// (see [`remap_distance`]). Use [`effective_frequencies`] when any method
/// must yield a usable schedule.
pub fn transform_frequencies(spec: &FreqSpec, method: &ScalingMethod) -> Result<ScaledFrequencies> {
    method.validate()?;
    let theta = frequencies(spec)?;
    match *method {
        ScalingMethod::None => Ok(ScaledFrequencies {
            theta,
            temperature: None,
        }),
        ScalingMethod::LinearInterpolation { scale } => Ok(ScaledFrequencies {
            theta: theta.iter().map(|t| t / scale).collect(),
            temperature: None,
        }),
        ScalingMethod::BaseScale { new_base } => {
            let rebased = FreqSpec {
                base: new_base,
                ..*spec
            };
            Ok(ScaledFrequencies {
                theta: frequencies(&rebased)?,
                temperature: None,
            })
        }
        ScalingMethod::Yarn {
            scale,
            low_rotations,
            high_rotations,
            temperature,
        } => {
            let train_len = spec.train_len as f64;
            let blended = theta
                .iter()
                .map(|&t| {
                    // Rotations this dimension completes over the training window.
                    let rotations = train_len * t / (2.0 * PI);
                    let gamma =
                        ((rotations - low_rotations) / (high_rotations - low_rotations)).clamp(0.0, 1.0);
                    (1.0 - gamma) * (t / scale) + gamma * t
                })
                .collect();
            Ok(ScaledFrequencies {
                theta: blended,
                temperature: temperature.then(|| 0.1 * scale.ln() + 1.0),
            })
        }
        ScalingMethod::SelfExtend { .. } => Err(Error::InvalidScaling(
            "selfextend remaps distances, not frequencies; use remap_distance".into(),
        )),
    }
}

/// Like [`transform_frequencies`], but total over every method: distance
/// remapping leaves the schedule unchanged.
pub fn effective_frequencies(spec: &FreqSpec, method: &ScalingMethod) -> Result<ScaledFrequencies> {
    match method {
        ScalingMethod::SelfExtend { .. } => {
            method.validate()?;
            Ok(ScaledFrequencies {
                theta: frequencies(spec)?,
                temperature: None,
            })
        }
        _ => transform_frequencies(spec, method),
    }
}

/// Remap a relative distance through the grouped/neighbor-attention rule.
///
/// Distances inside the neighbor window pass through; beyond it the excess
/// is floor-divided by the group size. Monotone nondecreasing in `rel`.
pub fn remap_distance(rel: u64, group_size: u64, neighbor_window: u64) -> u64 {
    debug_assert!(group_size >= 1);
    if rel <= neighbor_window {
        rel
    } else {
        neighbor_window + (rel - neighbor_window) / group_size
    }
}

/// Per-dimension trigonometric values at one relative distance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigProfile {
    /// `distance * theta_i` for each pair index.
    pub phases: Vec<f64>,
    /// `cos(distance * theta_i)` for each pair index.
    pub cosines: Vec<f64>,
    /// Smallest pair index whose phase is <= pi (`d/2` when none is).
    /// Dimensions below this index have wrapped, alias-prone phases.
    pub wrap_boundary: usize,
}

/// Evaluate `cos(distance * theta_i)` per dimension and locate the wrap
/// boundary separating wrapped high-frequency dims from stable low-frequency
/// ones.
pub fn trig_profile(distance: u64, theta: &[f64]) -> TrigProfile {
    let d = distance as f64;
    let phases: Vec<f64> = theta.iter().map(|t| d * t).collect();
    let cosines = phases.iter().map(|p| p.cos()).collect();
    let wrap_boundary = phases
        .iter()
        .position(|&p| p <= PI)
        .unwrap_or(theta.len());
    TrigProfile {
        phases,
        cosines,
        wrap_boundary,
    }
}
