//! Sampling, distance-dimension curves, head scoring, and mask selection.
//!
//! The pipeline this module supports: sample query/key pairs from attention
//! traces, record (relative distance, dominant dimension) observations,
//! average them per distance, score each head by the Spearman rank
//! correlation of its curve, and pick the top-scored (or random) heads to
//! mask. Everything is deterministic given the seed.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrib::{dominant_dimension, hadamard_contrib, pair_contributions, top_contributing_dims};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trace::ActivationTrace;

/// One sampled query/key pair in a specific head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub layer: usize,
    pub head: usize,
    pub query_pos: usize,
    pub key_pos: usize,
    pub attention_score: f64,
}

/// One (relative distance, dominant dimension) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceDimRecord {
    pub distance: u64,
    pub dominant_dim: f64,
}

/// Per-head distance-dimension correlation. `rho` is `None` when the head's
/// curve has too few distinct distances or no variance to rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadScore {
    pub layer: usize,
    pub head: usize,
    pub rho: Option<f64>,
    pub n_points: usize,
}

/// Aggregated distance curve of one head.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCurve {
    pub layer: usize,
    pub head: usize,
    /// `(distance, mean dominant dimension)`, ascending by distance.
    pub points: Vec<(u64, f64)>,
}

/// Top contributing dimensions of one sampled pair, for heatmap cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTopDims {
    pub layer: usize,
    pub head: usize,
    pub dims: Vec<usize>,
}

/// How heads are ordered when ranking by score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadRanking {
    /// Descending signed rho (positive correlation first).
    #[default]
    Signed,
    /// Descending |rho|.
    Absolute,
}

/// Mask selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    Top,
    Random,
}

/// How a mask set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MaskProvenance {
    TopFraction { fraction: f64 },
    RandomFraction { fraction: f64, seed: u64 },
    Explicit,
}

/// Set of (layer, head) pairs whose outputs are zeroed during ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub entries: BTreeSet<(usize, usize)>,
    pub provenance: MaskProvenance,
}

impl Default for MaskSet {
    fn default() -> Self {
        Self::empty()
    }
}

impl MaskSet {
    pub fn empty() -> Self {
        Self {
            entries: BTreeSet::new(),
            provenance: MaskProvenance::Explicit,
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
            provenance: MaskProvenance::Explicit,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, layer: usize, head: usize) -> bool {
        self.entries.contains(&(layer, head))
    }

    pub fn validate_bounds(&self, n_layers: usize, n_heads: usize) -> Result<()> {
        for &(layer, head) in &self.entries {
            if layer >= n_layers || head >= n_heads {
                return Err(Error::MaskOutOfBounds { layer, head });
            }
        }
        Ok(())
    }
}

/// Draw `rate * token_count` pairs `(m, n)` with `n <= m` uniformly from the
/// causal lower triangle. Reproducible for a given seed.
pub fn sample_random_pairs(
    token_count: usize,
    rate: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if token_count < 2 {
        return Err(Error::TooFewTokens {
            need: 2,
            got: token_count,
        });
    }
    if rate == 0 {
        return Err(Error::EmptyInput("sampling rate must be >= 1"));
    }
    let t = token_count as u64;
    let triangle = t * (t + 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pairs = rate * token_count;
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u = rand::Rng::random_range(&mut rng, 0..triangle);
        // Invert the triangular index: m is the largest row whose triangle
        // number does not exceed u.
        let m = ((8 * u + 1).isqrt() - 1) / 2;
        let n = u - m * (m + 1) / 2;
        pairs.push((m as usize, n as usize));
    }
    Ok(pairs)
}

/// For each query row, keep the `per_query_k` keys with the highest scores
/// (all of them when fewer exist). Ties go to the lower key index. Only the
/// causal triangle `n <= m` is read.
pub fn sample_top_attention_pairs(
    scores: &Matrix,
    layer: usize,
    head: usize,
    per_query_k: usize,
) -> Result<Vec<PairSample>> {
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(Error::EmptyInput("attention score matrix"));
    }
    if scores.rows() != scores.cols() {
        return Err(Error::ShapeInconsistency(format!(
            "attention matrix must be square, got {}x{}",
            scores.rows(),
            scores.cols()
        )));
    }
    let mut out = Vec::new();
    for m in 0..scores.rows() {
        let row = scores.row(m);
        let mut keys: Vec<usize> = (0..=m).collect();
        keys.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        keys.truncate(per_query_k.min(m + 1));
        for n in keys {
            out.push(PairSample {
                layer,
                head,
                query_pos: m,
                key_pos: n,
                attention_score: row[n],
            });
        }
    }
    Ok(out)
}

/// Average dominant dimensions per distinct distance, ascending by distance.
pub fn aggregate_by_distance(records: &[DistanceDimRecord]) -> Result<Vec<(u64, f64)>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("distance records"));
    }
    let mut acc: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.distance).or_insert((0.0, 0));
        e.0 += r.dominant_dim;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(d, (sum, count))| (d, sum / count as f64))
        .collect())
}

/// Fractional (average) ranks, 1-based; ties share the mean of their
/// positions.
fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i+1..=j+1 share the average rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let da = a - mx;
        let db = b - my;
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with fractional ranks for ties.
///
/// Returns an explicit error (not 0) for constant input, where the
/// coefficient is undefined.
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 points"));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Score every head by the Spearman correlation of its distance curve and
/// rank the result. Heads whose curve cannot be ranked get `rho: None` and
/// sort last; ties and the undefined tail are ordered by (layer, head).
pub fn score_heads(curves: &[DistanceCurve], ranking: HeadRanking) -> Vec<HeadScore> {
    let mut scores: Vec<HeadScore> = curves
        .iter()
        .map(|c| {
            let xs: Vec<f64> = c.points.iter().map(|&(d, _)| d as f64).collect();
            let ys: Vec<f64> = c.points.iter().map(|&(_, v)| v).collect();
            let rho = spearman_correlation(&xs, &ys).ok();
            HeadScore {
                layer: c.layer,
                head: c.head,
                rho,
                n_points: c.points.len(),
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        let key = |s: &HeadScore| {
            s.rho.map(|r| match ranking {
                HeadRanking::Signed => r,
                HeadRanking::Absolute => r.abs(),
            })
        };
        match (key(a), key(b)) {
            (Some(ra), Some(rb)) => rb
                .total_cmp(&ra)
                .then((a.layer, a.head).cmp(&(b.layer, b.head))),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => (a.layer, a.head).cmp(&(b.layer, b.head)),
        }
    });
    scores
}

/// Round half up, with a floor of one head whenever the fraction is positive.
fn mask_size(fraction: f64, total: usize) -> usize {
    let size = (fraction * total as f64 + 0.5).floor() as usize;
    if size == 0 && fraction > 0.0 && total > 0 {
        1
    } else {
        size.min(total)
    }
}

/// Select a mask of `round(fraction * len)` heads, either the top of the
/// given ranking or a seeded uniform draw without replacement.
///
/// `scores` must already be in ranked order (as returned by
/// [`score_heads`]); the top strategy takes a prefix of it.
pub fn select_mask(
    scores: &[HeadScore],
    strategy: MaskStrategy,
    fraction: f64,
    seed: u64,
) -> Result<MaskSet> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let size = mask_size(fraction, scores.len());
    let entries: BTreeSet<(usize, usize)> = match strategy {
        MaskStrategy::Top => scores[..size].iter().map(|s| (s.layer, s.head)).collect(),
        MaskStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, scores.len(), size)
                .iter()
                .map(|i| (scores[i].layer, scores[i].head))
                .collect()
        }
    };
    let provenance = match strategy {
        MaskStrategy::Top => MaskProvenance::TopFraction { fraction },
        MaskStrategy::Random => MaskProvenance::RandomFraction { fraction, seed },
    };
    Ok(MaskSet {
        entries,
        provenance,
    })
}

/// A sampled pair together with its dominant dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantRecord {
    pub sample: PairSample,
    pub dominant_dim: f64,
}

fn pair_contribution_values(
    trace: &ActivationTrace,
    layer: usize,
    head: usize,
    query_pos: usize,
    key_pos: usize,
) -> Result<Vec<f64>> {
    let ht = trace.head(layer, head);
    let h = hadamard_contrib(ht.q_rot.row(query_pos), ht.k_rot.row(key_pos))?;
    Ok(pair_contributions(&h, query_pos as u64, key_pos as u64)?.values)
}

/// Dominant dimension of every top-attention pair of one head.
pub fn head_dominant_records(
    trace: &ActivationTrace,
    layer: usize,
    head: usize,
    per_query_k: usize,
) -> Result<Vec<DominantRecord>> {
    let samples =
        sample_top_attention_pairs(&trace.head(layer, head).scores, layer, head, per_query_k)?;
    samples
        .into_iter()
        .map(|sample| {
            let g = pair_contribution_values(trace, layer, head, sample.query_pos, sample.key_pos)?;
            Ok(DominantRecord {
                sample,
                dominant_dim: dominant_dimension(&g)?,
            })
        })
        .collect()
}

/// Aggregated distance curve of one head, from its top-attention pairs.
pub fn head_distance_curve(
    trace: &ActivationTrace,
    layer: usize,
    head: usize,
    per_query_k: usize,
) -> Result<DistanceCurve> {
    let records: Vec<DistanceDimRecord> = head_dominant_records(trace, layer, head, per_query_k)?
        .into_iter()
        .map(|r| DistanceDimRecord {
            distance: (r.sample.query_pos - r.sample.key_pos) as u64,
            dominant_dim: r.dominant_dim,
        })
        .collect();
    Ok(DistanceCurve {
        layer,
        head,
        points: aggregate_by_distance(&records)?,
    })
}

/// Distance curves for every head of a trace, in (layer, head) order.
pub fn trace_distance_curves(
    trace: &ActivationTrace,
    per_query_k: usize,
) -> Result<Vec<DistanceCurve>> {
    (0..trace.n_layers())
        .flat_map(|l| (0..trace.n_heads()).map(move |h| (l, h)))
        .map(|(l, h)| head_distance_curve(trace, l, h, per_query_k))
        .collect()
}

/// Top contributing dimensions of one head at the given shared position
/// pairs (as drawn by [`sample_random_pairs`]).
pub fn head_top_dims(
    trace: &ActivationTrace,
    layer: usize,
    head: usize,
    pairs: &[(usize, usize)],
    top_k: usize,
) -> Result<Vec<PairTopDims>> {
    pairs
        .iter()
        .map(|&(m, n)| {
            let g = pair_contribution_values(trace, layer, head, m, n)?;
            Ok(PairTopDims {
                layer,
                head,
                dims: top_contributing_dims(&g, top_k.min(g.len()))?,
            })
        })
        .collect()
}

/// Layer-by-head grid of the mean top-k contributing dimension index.
///
/// Each record holds one sampled pair's top dimensions; the cell value is
/// the mean over pairs of each pair's mean index. Heads without data stay
/// `None` rather than zero.
pub fn dimension_heatmap(
    records: &[PairTopDims],
    n_layers: usize,
    n_heads: usize,
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut sums = vec![vec![(0.0f64, 0u64); n_heads]; n_layers];
    for r in records {
        if r.layer >= n_layers || r.head >= n_heads {
            return Err(Error::ShapeInconsistency(format!(
                "heatmap record (layer {}, head {}) outside {}x{} grid",
                r.layer, r.head, n_layers, n_heads
            )));
        }
        if r.dims.is_empty() {
            return Err(Error::EmptyInput("top-dims record"));
        }
        let mean = r.dims.iter().map(|&d| d as f64).sum::<f64>() / r.dims.len() as f64;
        let cell = &mut sums[r.layer][r.head];
        cell.0 += mean;
        cell.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(sum, count)| (count > 0).then(|| sum / count as f64))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_pairs_respect_causal_triangle() {
        let pairs = sample_random_pairs(1000, 100, 7).unwrap();
        assert_eq!(pairs.len(), 100_000);
        assert!(pairs.iter().all(|&(m, n)| n <= m && m < 1000));
    }

    #[test]
    fn random_pairs_smallest_domain() {
        let pairs = sample_random_pairs(2, 1, 3).unwrap();
        assert_eq!(pairs.len(), 2);
        for p in pairs {
            assert!([(0, 0), (1, 0), (1, 1)].contains(&p));
        }
    }

    #[test]
    fn random_pairs_deterministic() {
        let a = sample_random_pairs(64, 10, 42).unwrap();
        let b = sample_random_pairs(64, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_random_pairs(64, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_pairs_reject_tiny_inputs() {
        assert!(sample_random_pairs(1, 100, 0).is_err());
        assert!(sample_random_pairs(10, 0, 0).is_err());
    }

    #[test]
    fn top_pairs_argmax_row() {
        let mut m = Matrix::zeros(3, 3);
        m.set(2, 0, 0.2);
        m.set(2, 1, 0.7);
        m.set(2, 2, 0.1);
        let pairs = sample_top_attention_pairs(&m, 0, 0, 1).unwrap();
        let row2: Vec<_> = pairs.iter().filter(|p| p.query_pos == 2).collect();
        assert_eq!(row2.len(), 1);
        assert_eq!(row2[0].key_pos, 1);
        assert_eq!(row2[0].attention_score, 0.7);
    }

    #[test]
    fn top_pairs_saturate_and_tie_break() {
        let m = Matrix::zeros(6, 6);
        let pairs = sample_top_attention_pairs(&m, 0, 0, 100).unwrap();
        assert_eq!(pairs.len(), 6 * 7 / 2);

        let pairs = sample_top_attention_pairs(&m, 0, 0, 2).unwrap();
        let row5: Vec<usize> = pairs
            .iter()
            .filter(|p| p.query_pos == 5)
            .map(|p| p.key_pos)
            .collect();
        assert_eq!(row5, vec![0, 1]);
    }

    #[test]
    fn aggregate_means_and_order() {
        let records = [
            DistanceDimRecord {
                distance: 5,
                dominant_dim: 10.0,
            },
            DistanceDimRecord {
                distance: 7,
                dominant_dim: 4.0,
            },
            DistanceDimRecord {
                distance: 5,
                dominant_dim: 20.0,
            },
        ];
        assert_eq!(
            aggregate_by_distance(&records).unwrap(),
            vec![(5, 15.0), (7, 4.0)]
        );
        let one = [DistanceDimRecord {
            distance: 3,
            dominant_dim: 2.5,
        }];
        assert_eq!(aggregate_by_distance(&one).unwrap(), vec![(3, 2.5)]);
        assert!(aggregate_by_distance(&[]).is_err());
    }

    #[test]
    fn spearman_hand_checked_cases() {
        let rho = spearman_correlation(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert!((rho - (-0.5)).abs() < 1e-15);

        let up = spearman_correlation(&[1.0, 2.0, 5.0, 9.0], &[0.1, 0.2, 0.5, 3.0]).unwrap();
        assert!((up - 1.0).abs() < 1e-15);

        let down = spearman_correlation(&[1.0, 2.0, 5.0], &[4.0, 2.0, 1.0]).unwrap();
        assert!((down + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_undefined_and_errors() {
        assert!(matches!(
            spearman_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman_correlation(&[1.0], &[1.0]).is_err());
        assert!(spearman_correlation(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_symmetric_and_monotone_invariant() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0];
        let a = spearman_correlation(&x, &y).unwrap();
        let b = spearman_correlation(&y, &x).unwrap();
        assert_eq!(a, b);

        let ex: Vec<f64> = x.iter().map(|v| v.exp() / 10.0).collect();
        let c = spearman_correlation(&ex, &y).unwrap();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn fractional_ranks_average_ties() {
        assert_eq!(
            fractional_ranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(fractional_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn score_heads_orders_defined_first() {
        let curves = vec![
            DistanceCurve {
                layer: 0,
                head: 0,
                points: vec![(1, 3.0), (2, 2.0), (4, 1.0)],
            },
            DistanceCurve {
                layer: 0,
                head: 1,
                points: vec![(1, 1.0), (2, 2.0), (4, 3.0)],
            },
            DistanceCurve {
                layer: 1,
                head: 0,
                points: vec![(1, 2.0), (2, 2.0), (4, 2.0)],
            },
        ];
        let scores = score_heads(&curves, HeadRanking::Signed);
        assert_eq!((scores[0].layer, scores[0].head), (0, 1));
        assert!((scores[0].rho.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!((scores[1].layer, scores[1].head), (0, 0));
        assert!((scores[1].rho.unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(scores[2].rho, None);

        let by_abs = score_heads(&curves, HeadRanking::Absolute);
        // Signed +1 and -1 tie under |rho|; (0,0) precedes (0,1).
        assert_eq!((by_abs[0].layer, by_abs[0].head), (0, 0));
    }

    #[test]
    fn identical_heads_score_identically() {
        let points = vec![(1, 1.0), (3, 1.5), (9, 2.5)];
        let curves = vec![
            DistanceCurve {
                layer: 1,
                head: 1,
                points: points.clone(),
            },
            DistanceCurve {
                layer: 0,
                head: 2,
                points,
            },
        ];
        let scores = score_heads(&curves, HeadRanking::Signed);
        assert_eq!(scores[0].rho, scores[1].rho);
        assert_eq!((scores[0].layer, scores[0].head), (0, 2));
    }

    fn dummy_scores(n: usize) -> Vec<HeadScore> {
        (0..n)
            .map(|i| HeadScore {
                layer: i / 32,
                head: i % 32,
                rho: Some(1.0 - i as f64 / n as f64),
                n_points: 10,
            })
            .collect()
    }

    #[test]
    fn mask_sizes_round_half_up() {
        let scores = dummy_scores(1024);
        let mask = select_mask(&scores, MaskStrategy::Top, 0.05, 0).unwrap();
        assert_eq!(mask.entries.len(), 51);
        // The 51 highest-rho heads are the first 51 in ranked order.
        let expected: BTreeSet<_> = scores[..51].iter().map(|s| (s.layer, s.head)).collect();
        assert_eq!(mask.entries, expected);

        assert!(select_mask(&scores, MaskStrategy::Top, 0.0, 0)
            .unwrap()
            .is_empty());
        assert_eq!(
            select_mask(&scores, MaskStrategy::Top, 0.0001, 0)
                .unwrap()
                .entries
                .len(),
            1
        );
        assert!(select_mask(&scores, MaskStrategy::Top, 1.5, 0).is_err());
    }

    #[test]
    fn random_mask_deterministic_per_seed() {
        let scores = dummy_scores(64);
        let a = select_mask(&scores, MaskStrategy::Random, 0.25, 9).unwrap();
        let b = select_mask(&scores, MaskStrategy::Random, 0.25, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries.len(), 16);
        let c = select_mask(&scores, MaskStrategy::Random, 0.25, 10).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn top_mask_prefix_property() {
        let scores = dummy_scores(100);
        let small = select_mask(&scores, MaskStrategy::Top, 0.1, 0).unwrap();
        let large = select_mask(&scores, MaskStrategy::Top, 0.3, 0).unwrap();
        assert!(small.entries.is_subset(&large.entries));
    }

    #[test]
    fn heatmap_means_and_absent_cells() {
        let records = vec![
            PairTopDims {
                layer: 0,
                head: 0,
                dims: vec![59, 60, 61, 62, 63],
            },
            PairTopDims {
                layer: 0,
                head: 0,
                dims: vec![59, 60, 61, 62, 63],
            },
            PairTopDims {
                layer: 1,
                head: 1,
                dims: vec![12],
            },
        ];
        let grid = dimension_heatmap(&records, 2, 2).unwrap();
        assert_eq!(grid[0][0], Some(61.0));
        assert_eq!(grid[0][1], None);
        assert_eq!(grid[1][1], Some(12.0));

        let oob = [PairTopDims {
            layer: 5,
            head: 0,
            dims: vec![1],
        }];
        assert!(dimension_heatmap(&oob, 2, 2).is_err());
    }
}
