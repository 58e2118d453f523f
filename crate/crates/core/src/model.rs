//! Forward-only decoder with rotary attention, for end-to-end masking and
//! extrapolation experiments at toy scale.
//!
//! Architecture: pre-norm blocks of RMS normalization, multi-head causal
//! attention with rotary position embedding, and a gated (SiLU) MLP, with a
//! final norm and an untied output projection. Weights are stored in f32;
//! the forward computation runs in f64 so tight tolerances on masking and
//! shift-invariance checks hold. There is no training, batching, or KV
//! cache; a model instance is immutable after construction and every
//! forward pass is single-threaded and bitwise deterministic.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::MaskSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rope::{effective_frequencies, remap_distance, FreqSpec, ScalingMethod};
use crate::rstn::{
    read_container_file, write_container_file, Manifest, RotaryLayout, Tensor, TensorData,
};
use crate::trace::{ActivationTrace, HeadTrace};

/// Architecture and rotary-schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub train_len: usize,
    pub norm_eps: f64,
    pub rope_base: f64,
    pub scaling: ScalingMethod,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model != self.n_heads * self.head_dim {
            return Err(Error::InvalidModelConfig(format!(
                "d_model {} != n_heads {} * head_dim {}",
                self.d_model, self.n_heads, self.head_dim
            )));
        }
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidModelConfig(format!("{name} must be positive")));
            }
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::InvalidModelConfig("norm_eps must be positive".into()));
        }
        self.freq_spec().validate()?;
        self.scaling.validate()?;
        Ok(())
    }

    /// The rotary frequency spec shared by all layers.
    pub fn freq_spec(&self) -> FreqSpec {
        FreqSpec {
            head_dim: self.head_dim,
            base: self.rope_base,
            train_len: self.train_len,
        }
    }
}

/// Per-forward behavior switches.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Heads whose attention output is zeroed.
    pub mask: MaskSet,
    /// Skip the rotation of queries only; keys are still rotated.
    pub disable_query_rotation: bool,
    /// Capture rotated q/k and attention matrices for every head.
    pub capture_trace: bool,
}

impl ForwardOptions {
    pub fn with_mask(mask: MaskSet) -> Self {
        Self {
            mask,
            ..Self::default()
        }
    }
}

/// One block's f32 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    /// `[d_model, d_model]` row-major, output dim first.
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ffn_norm: Vec<f32>,
    /// `[ffn_dim, d_model]`.
    pub w_gate: Vec<f32>,
    /// `[ffn_dim, d_model]`.
    pub w_up: Vec<f32>,
    /// `[d_model, ffn_dim]`.
    pub w_down: Vec<f32>,
}

/// Full f32 weight set matching a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    /// `[vocab_size, d_model]`.
    pub tok_embed: Vec<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    /// `[vocab_size, d_model]`.
    pub lm_head: Vec<f32>,
}

impl ModelWeights {
    /// Seeded Gaussian initialization; norm weights are ones. Projections
    /// are scaled by `1/sqrt(fan_in)` so activations stay O(1).
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let f = config.ffn_dim;
        let v = config.vocab_size;
        let mut gauss = |n: usize, std: f64| -> Vec<f32> {
            (0..n)
                .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
                .collect()
        };
        let tok_embed = gauss(v * d, 1.0);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerWeights {
                attn_norm: vec![1.0; d],
                wq: gauss(d * d, 1.0 / (d as f64).sqrt()),
                wk: gauss(d * d, 1.0 / (d as f64).sqrt()),
                wv: gauss(d * d, 1.0 / (d as f64).sqrt()),
                wo: gauss(d * d, 1.0 / (d as f64).sqrt()),
                ffn_norm: vec![1.0; d],
                w_gate: gauss(f * d, 1.0 / (d as f64).sqrt()),
                w_up: gauss(f * d, 1.0 / (d as f64).sqrt()),
                w_down: gauss(d * f, 1.0 / (f as f64).sqrt()),
            });
        }
        Ok(Self {
            tok_embed,
            layers,
            final_norm: vec![1.0; d],
            lm_head: gauss(v * d, 1.0 / (d as f64).sqrt()),
        })
    }

    fn tensor_specs(config: &ModelConfig) -> Vec<(String, Vec<u64>)> {
        let d = config.d_model as u64;
        let f = config.ffn_dim as u64;
        let v = config.vocab_size as u64;
        let mut specs = vec![("tok_embed".to_string(), vec![v, d])];
        for l in 0..config.n_layers {
            specs.push((format!("L{l}.attn_norm"), vec![d]));
            specs.push((format!("L{l}.wq"), vec![d, d]));
            specs.push((format!("L{l}.wk"), vec![d, d]));
            specs.push((format!("L{l}.wv"), vec![d, d]));
            specs.push((format!("L{l}.wo"), vec![d, d]));
            specs.push((format!("L{l}.ffn_norm"), vec![d]));
            specs.push((format!("L{l}.w_gate"), vec![f, d]));
            specs.push((format!("L{l}.w_up"), vec![f, d]));
            specs.push((format!("L{l}.w_down"), vec![d, f]));
        }
        specs.push(("final_norm".to_string(), vec![d]));
        specs.push(("lm_head".to_string(), vec![v, d]));
        specs
    }

    fn field(&self, name: &str) -> &[f32] {
        if let Some(rest) = name.strip_prefix('L') {
            let (idx, field) = rest.split_once('.').expect("layer tensor name");
            let layer = &self.layers[idx.parse::<usize>().expect("layer index")];
            match field {
                "attn_norm" => &layer.attn_norm,
                "wq" => &layer.wq,
                "wk" => &layer.wk,
                "wv" => &layer.wv,
                "wo" => &layer.wo,
                "ffn_norm" => &layer.ffn_norm,
                "w_gate" => &layer.w_gate,
                "w_up" => &layer.w_up,
                "w_down" => &layer.w_down,
                other => unreachable!("unknown layer field {other}"),
            }
        } else {
            match name {
                "tok_embed" => &self.tok_embed,
                "final_norm" => &self.final_norm,
                "lm_head" => &self.lm_head,
                other => unreachable!("unknown tensor {other}"),
            }
        }
    }

    /// Write the weight store as a manifest + container pair (interleaved
    /// rotary layout).
    pub fn save(
        &self,
        config: &ModelConfig,
        manifest_path: impl AsRef<std::path::Path>,
        container_path: impl AsRef<std::path::Path>,
    ) -> Result<()> {
        let tensors: Vec<Tensor> = Self::tensor_specs(config)
            .into_iter()
            .map(|(name, dims)| {
                let data = self.field(&name).to_vec();
                Tensor::f32(name, dims, data)
            })
            .collect::<Result<_>>()?;
        Manifest::describe(RotaryLayout::Interleaved, &tensors).save(manifest_path)?;
        write_container_file(container_path, &tensors)
    }

    /// Load and shape-check a weight store. Half-split stores get their q/k
    /// projection output dims permuted into interleaved order.
    pub fn load(
        config: &ModelConfig,
        manifest_path: impl AsRef<std::path::Path>,
        container_path: impl AsRef<std::path::Path>,
    ) -> Result<Self> {
        config.validate()?;
        let manifest = Manifest::load(manifest_path)?;
        let tensors = read_container_file(container_path)?;
        manifest.check(&tensors)?;

        let take = |name: &str, dims: &[u64]| -> Result<Vec<f32>> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
            if t.dims != dims {
                return Err(Error::WeightShape {
                    name: name.to_string(),
                    expected: dims.iter().map(|&d| d as usize).collect(),
                    got: t.dims.iter().map(|&d| d as usize).collect(),
                });
            }
            match &t.data {
                TensorData::F32(v) => Ok(v.clone()),
                TensorData::F64(v) => Ok(v.iter().map(|&x| x as f32).collect()),
            }
        };

        let specs = Self::tensor_specs(config);
        let mut by_name = std::collections::HashMap::new();
        for (name, dims) in &specs {
            let mut data = take(name, dims)?;
            if manifest.layout == RotaryLayout::HalfSplit
                && (name.ends_with(".wq") || name.ends_with(".wk"))
            {
                data = interleave_projection_rows(&data, config.n_heads, config.head_dim);
            }
            by_name.insert(name.clone(), data);
        }
        let mut grab = |name: String| by_name.remove(&name).unwrap();

        let layers = (0..config.n_layers)
            .map(|l| LayerWeights {
                attn_norm: grab(format!("L{l}.attn_norm")),
                wq: grab(format!("L{l}.wq")),
                wk: grab(format!("L{l}.wk")),
                wv: grab(format!("L{l}.wv")),
                wo: grab(format!("L{l}.wo")),
                ffn_norm: grab(format!("L{l}.ffn_norm")),
                w_gate: grab(format!("L{l}.w_gate")),
                w_up: grab(format!("L{l}.w_up")),
                w_down: grab(format!("L{l}.w_down")),
            })
            .collect();
        Ok(Self {
            tok_embed: grab("tok_embed".into()),
            layers,
            final_norm: grab("final_norm".into()),
            lm_head: grab("lm_head".into()),
        })
    }
}

/// Reorder the output rows of a q/k projection from half-split to
/// interleaved pairing, per head block.
fn interleave_projection_rows(w: &[f32], n_heads: usize, head_dim: usize) -> Vec<f32> {
    let d_in = w.len() / (n_heads * head_dim);
    let half = head_dim / 2;
    let mut out = vec![0.0; w.len()];
    for h in 0..n_heads {
        for i in 0..half {
            let src_a = (h * head_dim + i) * d_in;
            let src_b = (h * head_dim + i + half) * d_in;
            let dst_a = (h * head_dim + 2 * i) * d_in;
            let dst_b = (h * head_dim + 2 * i + 1) * d_in;
            out[dst_a..dst_a + d_in].copy_from_slice(&w[src_a..src_a + d_in]);
            out[dst_b..dst_b + d_in].copy_from_slice(&w[src_b..src_b + d_in]);
        }
    }
    out
}

struct LayerF64 {
    attn_norm: Vec<f64>,
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    wo: Vec<f64>,
    ffn_norm: Vec<f64>,
    w_gate: Vec<f64>,
    w_up: Vec<f64>,
    w_down: Vec<f64>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Output of one forward pass.
pub struct ForwardOutput {
    /// `[seq_len, vocab_size]` next-token logits.
    pub logits: Matrix,
    pub trace: Option<ActivationTrace>,
}

/// An immutable, loaded model. Safe to share across threads; forward calls
/// take `&self`.
pub struct Model {
    config: ModelConfig,
    tok_embed: Vec<f64>,
    layers: Vec<LayerF64>,
    final_norm: Vec<f64>,
    lm_head: Vec<f64>,
    theta: Vec<f64>,
    attn_temperature: Option<f64>,
}

fn check_len(name: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::WeightShape {
            name: name.to_string(),
            expected: vec![expected],
            got: vec![got],
        });
    }
    Ok(())
}

impl Model {
    pub fn new(config: ModelConfig, weights: &ModelWeights) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.ffn_dim;
        let v = config.vocab_size;
        check_len("tok_embed", weights.tok_embed.len(), v * d)?;
        check_len("lm_head", weights.lm_head.len(), v * d)?;
        check_len("final_norm", weights.final_norm.len(), d)?;
        check_len("layers", weights.layers.len(), config.n_layers)?;
        for (l, lw) in weights.layers.iter().enumerate() {
            check_len(&format!("L{l}.attn_norm"), lw.attn_norm.len(), d)?;
            check_len(&format!("L{l}.wq"), lw.wq.len(), d * d)?;
            check_len(&format!("L{l}.wk"), lw.wk.len(), d * d)?;
            check_len(&format!("L{l}.wv"), lw.wv.len(), d * d)?;
            check_len(&format!("L{l}.wo"), lw.wo.len(), d * d)?;
            check_len(&format!("L{l}.ffn_norm"), lw.ffn_norm.len(), d)?;
            check_len(&format!("L{l}.w_gate"), lw.w_gate.len(), f * d)?;
            check_len(&format!("L{l}.w_up"), lw.w_up.len(), f * d)?;
            check_len(&format!("L{l}.w_down"), lw.w_down.len(), d * f)?;
        }

        let scaled = effective_frequencies(&config.freq_spec(), &config.scaling)?;
        Ok(Self {
            config,
            tok_embed: widen(&weights.tok_embed),
            layers: weights
                .layers
                .iter()
                .map(|lw| LayerF64 {
                    attn_norm: widen(&lw.attn_norm),
                    wq: widen(&lw.wq),
                    wk: widen(&lw.wk),
                    wv: widen(&lw.wv),
                    wo: widen(&lw.wo),
                    ffn_norm: widen(&lw.ffn_norm),
                    w_gate: widen(&lw.w_gate),
                    w_up: widen(&lw.w_up),
                    w_down: widen(&lw.w_down),
                })
                .collect(),
            final_norm: widen(&weights.final_norm),
            lm_head: widen(&weights.lm_head),
            theta: scaled.theta,
            attn_temperature: scaled.temperature,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Run the decoder over a token sequence.
    ///
    /// Masked heads contribute exactly zero to the attention output
    /// projection input. With `disable_query_rotation`, queries stay raw
    /// while keys are still rotated. Two calls with identical inputs
    /// produce bitwise-identical logits.
    pub fn forward(&self, tokens: &[u32], options: &ForwardOptions) -> Result<ForwardOutput> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("token sequence"));
        }
        for &id in tokens {
            if id as usize >= self.config.vocab_size {
                return Err(Error::UnknownTokenId {
                    id,
                    vocab_size: self.config.vocab_size,
                });
            }
        }
        options
            .mask
            .validate_bounds(self.config.n_layers, self.config.n_heads)?;
        let selfextend = matches!(self.config.scaling, ScalingMethod::SelfExtend { .. });
        if selfextend && options.disable_query_rotation {
            return Err(Error::UnsupportedForward(
                "disable_query_rotation is incompatible with selfextend distance remapping".into(),
            ));
        }

        let t_len = tokens.len();
        let d = self.config.d_model;
        let hd = self.config.head_dim;
        let n_heads = self.config.n_heads;
        let half = hd / 2;

        // Pair rotation tables per absolute position; for distance remapping,
        // per relative distance instead.
        let pos_tables: Vec<Vec<(f64, f64)>> = (0..t_len)
            .map(|p| {
                self.theta
                    .iter()
                    .map(|&th| (p as f64 * th).sin_cos())
                    .collect()
            })
            .collect();
        let dist_tables: Option<Vec<Vec<(f64, f64)>>> = match self.config.scaling {
            ScalingMethod::SelfExtend {
                group_size,
                neighbor_window,
            } => Some(
                (0..t_len as u64)
                    .map(|rel| {
                        let mapped = remap_distance(rel, group_size, neighbor_window) as f64;
                        self.theta.iter().map(|&th| (mapped * th).sin_cos()).collect()
                    })
                    .collect(),
            ),
            _ => None,
        };

        let score_scale = {
            let temp = self.attn_temperature.unwrap_or(1.0);
            1.0 / ((hd as f64).sqrt() * temp)
        };

        let mut x: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&id| self.tok_embed[id as usize * d..(id as usize + 1) * d].to_vec())
            .collect();

        let mut traced_heads: Vec<HeadTrace> = Vec::new();

        for (l, layer) in self.layers.iter().enumerate() {
            // Attention block.
            let normed: Vec<Vec<f64>> = x
                .iter()
                .map(|row| rmsnorm(row, &layer.attn_norm, self.config.norm_eps))
                .collect();
            let q_all: Vec<Vec<f64>> = normed.iter().map(|h| matvec(&layer.wq, h, d)).collect();
            let k_all: Vec<Vec<f64>> = normed.iter().map(|h| matvec(&layer.wk, h, d)).collect();
            let v_all: Vec<Vec<f64>> = normed.iter().map(|h| matvec(&layer.wv, h, d)).collect();

            let mut attn_in = vec![vec![0.0; d]; t_len];
            for h in 0..n_heads {
                let span = h * hd..(h + 1) * hd;
                let raw_q: Vec<&[f64]> = q_all.iter().map(|r| &r[span.clone()]).collect();
                let raw_k: Vec<&[f64]> = k_all.iter().map(|r| &r[span.clone()]).collect();

                let rotate_rows = |rows: &[&[f64]], enabled: bool| -> Vec<Vec<f64>> {
                    rows.iter()
                        .enumerate()
                        .map(|(pos, row)| {
                            if enabled {
                                rotate_pairs(row, &pos_tables[pos])
                            } else {
                                row.to_vec()
                            }
                        })
                        .collect()
                };
                let q_rot = rotate_rows(&raw_q, !options.disable_query_rotation);
                let k_rot = rotate_rows(&raw_k, true);

                let mut scores = Matrix::zeros(t_len, t_len);
                for m in 0..t_len {
                    for n in 0..=m {
                        let s = match &dist_tables {
                            Some(tables) => {
                                pair_score(raw_q[m], raw_k[n], &tables[m - n], half)
                            }
                            None => dot(&q_rot[m], &k_rot[n]),
                        };
                        scores.set(m, n, s * score_scale);
                    }
                }

                let mut probs = Matrix::zeros(t_len, t_len);
                for m in 0..t_len {
                    let row = scores.row(m)[..=m].to_vec();
                    let soft = softmax(&row);
                    probs.row_mut(m)[..=m].copy_from_slice(&soft);
                }

                let masked = options.mask.contains(l, h);
                if !masked {
                    for m in 0..t_len {
                        let out = &mut attn_in[m][span.clone()];
                        for n in 0..=m {
                            let p = probs.get(m, n);
                            let v_row = &v_all[n][span.clone()];
                            for (o, &vv) in out.iter_mut().zip(v_row) {
                                *o += p * vv;
                            }
                        }
                    }
                }

                if options.capture_trace {
                    traced_heads.push(HeadTrace {
                        q_rot: rows_to_matrix(&q_rot),
                        k_rot: rows_to_matrix(&k_rot),
                        scores,
                        probs: Some(probs),
                    });
                }
            }
            for (row, a) in x.iter_mut().zip(&attn_in) {
                let proj = matvec(&layer.wo, a, d);
                for (xi, pi) in row.iter_mut().zip(&proj) {
                    *xi += pi;
                }
            }

            // MLP block.
            for row in x.iter_mut() {
                let h = rmsnorm(row, &layer.ffn_norm, self.config.norm_eps);
                let gate = matvec(&layer.w_gate, &h, d);
                let up = matvec(&layer.w_up, &h, d);
                let act: Vec<f64> = gate.iter().zip(&up).map(|(&g, &u)| silu(g) * u).collect();
                let down = matvec(&layer.w_down, &act, self.config.ffn_dim);
                for (xi, di) in row.iter_mut().zip(&down) {
                    *xi += di;
                }
            }
        }

        let mut logits = Matrix::zeros(t_len, self.config.vocab_size);
        for (t, row) in x.iter().enumerate() {
            let h = rmsnorm(row, &self.final_norm, self.config.norm_eps);
            let out = matvec(&self.lm_head, &h, d);
            logits.row_mut(t).copy_from_slice(&out);
        }

        let trace = if options.capture_trace {
            Some(ActivationTrace::from_heads(
                self.config.n_layers,
                n_heads,
                t_len,
                hd,
                traced_heads,
            )?)
        } else {
            None
        };
        Ok(ForwardOutput { logits, trace })
    }

    /// Exponential of the mean next-token negative log-likelihood.
    pub fn perplexity(&self, tokens: &[u32], options: &ForwardOptions) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::SequenceTooShort {
                need: 2,
                got: tokens.len(),
            });
        }
        let out = self.forward(tokens, options)?;
        perplexity_of_logits(&out.logits, tokens)
    }

    /// Greedy decoding: repeatedly append the argmax next token. Ties go to
    /// the lowest token id. Returns only the generated tokens.
    pub fn greedy_generate(
        &self,
        prompt: &[u32],
        max_new_tokens: usize,
        options: &ForwardOptions,
    ) -> Result<Vec<u32>> {
        let mut tokens = prompt.to_vec();
        let mut generated = Vec::with_capacity(max_new_tokens);
        for _ in 0..max_new_tokens {
            let out = self.forward(&tokens, options)?;
            let last = out.logits.row(out.logits.rows() - 1);
            let mut best = 0usize;
            for (i, &v) in last.iter().enumerate() {
                if v > last[best] {
                    best = i;
                }
            }
            tokens.push(best as u32);
            generated.push(best as u32);
        }
        Ok(generated)
    }
}

/// Perplexity from precomputed logits: positions `1..T-1` are scored
/// against the logits of the preceding position.
pub fn perplexity_of_logits(logits: &Matrix, tokens: &[u32]) -> Result<f64> {
    if tokens.len() < 2 {
        return Err(Error::SequenceTooShort {
            need: 2,
            got: tokens.len(),
        });
    }
    if logits.rows() != tokens.len() {
        return Err(Error::ShapeInconsistency(format!(
            "logits rows {} != token count {}",
            logits.rows(),
            tokens.len()
        )));
    }
    let mut nll = 0.0;
    for t in 1..tokens.len() {
        let row = logits.row(t - 1);
        let target = tokens[t] as usize;
        if target >= row.len() {
            return Err(Error::UnknownTokenId {
                id: tokens[t],
                vocab_size: row.len(),
            });
        }
        nll -= row[target] - log_sum_exp(row);
    }
    Ok((nll / (tokens.len() - 1) as f64).exp())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Matrix::from_vec(rows.len(), cols, data).expect("consistent row widths")
}

fn matvec(w: &[f64], x: &[f64], d_in: usize) -> Vec<f64> {
    w.chunks_exact(d_in)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rmsnorm(x: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (mean_sq + eps).sqrt();
    x.iter().zip(w).map(|(v, g)| v * inv * g).collect()
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn rotate_pairs(row: &[f64], table: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    for (i, &(sin, cos)) in table.iter().enumerate() {
        let a = row[2 * i];
        let b = row[2 * i + 1];
        out.push(a * cos - b * sin);
        out.push(a * sin + b * cos);
    }
    out
}

/// Relative-rotation score: the closed-form per-pair sum evaluated with a
/// precomputed (sin, cos) table for the (possibly remapped) distance.
fn pair_score(q: &[f64], k: &[f64], table: &[(f64, f64)], half: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..half {
        let (sin, cos) = table[i];
        let q0 = q[2 * i];
        let q1 = q[2 * i + 1];
        let k0 = k[2 * i];
        let k1 = k[2 * i + 1];
        total += (q0 * k0 + q1 * k1) * cos + (q0 * k1 - q1 * k0) * sin;
    }
    total
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
