//! Seeded synthetic activation traces with known ground truth.
//!
//! Planted heads are rotary "distance band" encoders: frequency pair `i`
//! rotates at `omega_i = c / D_i` with the raw key pre-rotated by the phase
//! offset `c`, so its contribution `A_i * cos(omega_i * dist - c)` peaks
//! exactly at the designated distance `D_i`. The `D_i` are geometrically
//! spaced over the sequence length and the amplitudes `A_i` ramp upward, so
//! the softmax-dominant pair index climbs with log distance: a strong,
//! monotone distance-dimension correlation by construction. Noise heads are
//! unstructured Gaussian rows with no distance preference. Together they
//! give head-scoring pipelines a trace with known positive and null cases.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::rope::{apply_rotation, HeadVector};
use crate::trace::{ActivationTrace, HeadTrace};

/// Peak energy of planted heads; sets the softmax contrast.
const PLANTED_ENERGY: f64 = 9.0;
/// Low-dimension energy floor, as a fraction of the peak.
const ENERGY_FLOOR: f64 = 0.6;
/// Phase offset: each band peaks at `dist = c / omega_i`.
const PHASE_OFFSET: f64 = 2.2;
/// Relative jitter applied to planted raw vectors per position.
const PLANTED_JITTER: f64 = 0.03;

/// Build a single-layer trace with `n_planted` distance-correlated heads
/// (heads `0..n_planted`) followed by `n_noise` unstructured heads.
pub fn synthetic_trace(
    n_planted: usize,
    n_noise: usize,
    seq_len: usize,
    head_dim: usize,
    seed: u64,
) -> Result<ActivationTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heads = Vec::with_capacity(n_planted + n_noise);
    for _ in 0..n_planted {
        heads.push(planted_head(seq_len, head_dim, &mut rng));
    }
    for _ in 0..n_noise {
        heads.push(noise_head(seq_len, head_dim, &mut rng));
    }
    ActivationTrace::from_heads(1, n_planted + n_noise, seq_len, head_dim, heads)
}

fn causal_scores(q_rot: &Matrix, k_rot: &Matrix) -> Matrix {
    let t = q_rot.rows();
    let scale = 1.0 / (q_rot.cols() as f64).sqrt();
    let mut scores = Matrix::zeros(t, t);
    for m in 0..t {
        let q = q_rot.row(m);
        for n in 0..=m {
            let dot: f64 = q.iter().zip(k_rot.row(n)).map(|(a, b)| a * b).sum();
            scores.set(m, n, dot * scale);
        }
    }
    scores
}

fn planted_head(seq_len: usize, head_dim: usize, rng: &mut ChaCha8Rng) -> HeadTrace {
    let pairs = head_dim / 2;
    let span = (pairs.max(2) - 1) as f64;
    let d_max = seq_len.max(4) as f64;
    // Band peak distances 1..seq_len, geometric; omega_i = c / D_i.
    let omega: Vec<f64> = (0..pairs)
        .map(|i| PHASE_OFFSET / d_max.powf(i as f64 / span))
        .collect();
    let amp: Vec<f64> = (0..pairs)
        .map(|i| {
            (PLANTED_ENERGY * (ENERGY_FLOOR + (1.0 - ENERGY_FLOOR) * i as f64 / span)).sqrt()
        })
        .collect();
    let (sin_c, cos_c) = PHASE_OFFSET.sin_cos();

    let mut build = |pos: usize, key_side: bool| -> Vec<f64> {
        let values: Vec<f64> = (0..pairs)
            .flat_map(|i| {
                let (x, y) = if key_side {
                    (amp[i] * cos_c, amp[i] * sin_c)
                } else {
                    (amp[i], 0.0)
                };
                let jitter = amp[i] * PLANTED_JITTER;
                [
                    x + jitter * rng.sample::<f64, _>(StandardNormal),
                    y + jitter * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect();
        apply_rotation(&HeadVector::new(values, pos as u64), &omega).unwrap()
    };

    let mut q_data = Vec::with_capacity(seq_len * head_dim);
    let mut k_data = Vec::with_capacity(seq_len * head_dim);
    for pos in 0..seq_len {
        q_data.extend(build(pos, false));
        k_data.extend(build(pos, true));
    }
    let q_rot = Matrix::from_vec(seq_len, head_dim, q_data).unwrap();
    let k_rot = Matrix::from_vec(seq_len, head_dim, k_data).unwrap();
    let scores = causal_scores(&q_rot, &k_rot);
    HeadTrace {
        q_rot,
        k_rot,
        scores,
        probs: None,
    }
}

fn noise_head(seq_len: usize, head_dim: usize, rng: &mut ChaCha8Rng) -> HeadTrace {
    let mut gaussian = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let q_rot = Matrix::from_vec(seq_len, head_dim, gaussian(seq_len * head_dim)).unwrap();
    let k_rot = Matrix::from_vec(seq_len, head_dim, gaussian(seq_len * head_dim)).unwrap();
    let scores = causal_scores(&q_rot, &k_rot);
    HeadTrace {
        q_rot,
        k_rot,
        scores,
        probs: None,
    }
}
