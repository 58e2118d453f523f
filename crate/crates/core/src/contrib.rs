//! Per-frequency decomposition of a rotary attention dot product.
//!
//! The dot product of a rotated query/key pair splits exactly into `d/2`
//! per-frequency terms: multiply the rotated vectors elementwise, then sum
//! each `(2i, 2i+1)` slot pair. The same vector has a closed form in the raw
//! (unrotated) vectors and the relative distance,
//!
//! ```text
//! g_i = (q_2i k_2i + q_2i+1 k_2i+1) cos((m-n) theta_i)
//!     + (q_2i k_2i+1 - q_2i+1 k_2i) sin((m-n) theta_i)
//! ```
//!
//! and the two routes must agree. The dominant dimension compresses `g`
//! into a single softmax-weighted mean pair index.

use crate::error::{Error, Result};
use crate::rope::{apply_rotation, HeadVector};

/// Per-frequency contributions of one query/key pair to its attention score.
///
/// `values[i]` is the share of the rotary dot product carried by frequency
/// pair `i`; the entries sum to the full dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    pub values: Vec<f64>,
    pub query_pos: u64,
    pub key_pos: u64,
}

impl ContributionVector {
    /// Sum of all contributions in ascending index order.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Relative distance `m - n` of the source pair (saturating at 0).
    pub fn distance(&self) -> u64 {
        self.query_pos.saturating_sub(self.key_pos)
    }
}

/// Elementwise product of two rotated vectors.
///
/// Summed in input order, the result equals their dot product exactly.
pub fn hadamard_contrib(q_rot: &[f64], k_rot: &[f64]) -> Result<Vec<f64>> {
    if q_rot.len() != k_rot.len() {
        return Err(Error::LengthMismatch {
            expected: q_rot.len(),
            got: k_rot.len(),
        });
    }
    Ok(q_rot.iter().zip(k_rot).map(|(a, b)| a * b).collect())
}

/// Collapse an elementwise product into per-frequency contributions:
/// `g_i = h_2i + h_2i+1`.
pub fn pair_contributions(h: &[f64], query_pos: u64, key_pos: u64) -> Result<ContributionVector> {
    if h.len() % 2 != 0 {
        return Err(Error::OddLength(h.len()));
    }
    let values = h.chunks_exact(2).map(|c| c[0] + c[1]).collect();
    Ok(ContributionVector {
        values,
        query_pos,
        key_pos,
    })
}

/// Contributions computed directly from the raw vectors and the relative
/// distance, without materializing rotations.
///
/// Agrees with `pair_contributions(hadamard_contrib(rotate(q), rotate(k)))`
/// to within floating-point error.
pub fn closed_form_contributions(
    q: &HeadVector,
    k: &HeadVector,
    theta: &[f64],
) -> Result<ContributionVector> {
    if q.values.len() != k.values.len() {
        return Err(Error::LengthMismatch {
            expected: q.values.len(),
            got: k.values.len(),
        });
    }
    if q.values.len() != 2 * theta.len() {
        return Err(Error::LengthMismatch {
            expected: 2 * theta.len(),
            got: q.values.len(),
        });
    }
    let delta = q.position as i64 - k.position as i64;
    let delta = delta as f64;
    let values = theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (sin, cos) = (delta * t).sin_cos();
            let q0 = q.values[2 * i];
            let q1 = q.values[2 * i + 1];
            let k0 = k.values[2 * i];
            let k1 = k.values[2 * i + 1];
            (q0 * k0 + q1 * k1) * cos + (q0 * k1 - q1 * k0) * sin
        })
        .collect();
    Ok(ContributionVector {
        values,
        query_pos: q.position,
        key_pos: k.position,
    })
}

/// Contributions via the rotate-multiply-pair route.
///
/// Convenience composition of [`apply_rotation`], [`hadamard_contrib`], and
/// [`pair_contributions`]; the independent counterpart of
/// [`closed_form_contributions`].
pub fn rotated_contributions(
    q: &HeadVector,
    k: &HeadVector,
    theta: &[f64],
) -> Result<ContributionVector> {
    let q_rot = apply_rotation(q, theta)?;
    let k_rot = apply_rotation(k, theta)?;
    let h = hadamard_contrib(&q_rot, &k_rot)?;
    pair_contributions(&h, q.position, k.position)
}

/// Softmax-weighted mean pair index of a contribution vector.
///
/// Lies in `[0, d/2 - 1]` for any finite input and is invariant under adding
/// a constant to every entry. Softmax uses max-subtraction, so entries of
/// extreme magnitude do not overflow.
pub fn dominant_dimension(g: &[f64]) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::EmptyInput("dominant_dimension"));
    }
    if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    let mut weighted = 0.0;
    for (i, &v) in g.iter().enumerate() {
        let e = (v - max).exp();
        denom += e;
        weighted += i as f64 * e;
    }
    Ok(weighted / denom)
}

/// Indices of the `count` largest contributions, descending by value, ties
/// broken by the lower index.
pub fn top_contributing_dims(g: &[f64], count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > g.len() {
        return Err(Error::CountOutOfRange {
            count,
            max: g.len(),
        });
    }
    let mut indices: Vec<usize> = (0..g.len()).collect();
    indices.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    indices.truncate(count);
    Ok(indices)
}
