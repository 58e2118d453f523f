//! In-memory activation traces: per-head rotated query/key tensors and
//! attention score matrices, the substrate every analysis pipeline samples
//! from.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Captured tensors of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    /// Rotated queries, `[seq_len, head_dim]`.
    pub q_rot: Matrix,
    /// Rotated keys, `[seq_len, head_dim]`.
    pub k_rot: Matrix,
    /// Pre-softmax attention scores, `[seq_len, seq_len]`, causal lower
    /// triangle populated.
    pub scores: Matrix,
    /// Post-softmax attention weights, when captured.
    pub probs: Option<Matrix>,
}

/// Per-(layer, head) activation tensors for one forward pass or one
/// external dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    n_layers: usize,
    n_heads: usize,
    seq_len: usize,
    head_dim: usize,
    heads: Vec<HeadTrace>,
}

impl ActivationTrace {
    /// Assemble a trace from per-head tensors in layer-major order,
    /// validating every shape against the declared geometry.
    pub fn from_heads(
        n_layers: usize,
        n_heads: usize,
        seq_len: usize,
        head_dim: usize,
        heads: Vec<HeadTrace>,
    ) -> Result<Self> {
        if heads.len() != n_layers * n_heads {
            return Err(Error::ShapeInconsistency(format!(
                "expected {} head traces, got {}",
                n_layers * n_heads,
                heads.len()
            )));
        }
        for (idx, h) in heads.iter().enumerate() {
            let check = |name: &str, m: &Matrix, rows: usize, cols: usize| {
                if m.rows() != rows || m.cols() != cols {
                    return Err(Error::ShapeInconsistency(format!(
                        "head {idx} tensor {name}: expected {rows}x{cols}, got {}x{}",
                        m.rows(),
                        m.cols()
                    )));
                }
                Ok(())
            };
            check("q", &h.q_rot, seq_len, head_dim)?;
            check("k", &h.k_rot, seq_len, head_dim)?;
            check("score", &h.scores, seq_len, seq_len)?;
            if let Some(p) = &h.probs {
                check("prob", p, seq_len, seq_len)?;
            }
        }
        Ok(Self {
            n_layers,
            n_heads,
            seq_len,
            head_dim,
            heads,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn head(&self, layer: usize, head: usize) -> &HeadTrace {
        &self.heads[layer * self.n_heads + head]
    }

    /// Iterate heads in deterministic (layer, head) order.
    pub fn iter_heads(&self) -> impl Iterator<Item = (usize, usize, &HeadTrace)> {
        self.heads
            .iter()
            .enumerate()
            .map(move |(i, h)| (i / self.n_heads, i % self.n_heads, h))
    }
}
